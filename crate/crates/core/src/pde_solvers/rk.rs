//! Adaptive Dormand–Prince 5(4) integration of a method-of-lines system.

use crate::error::{Error, Result};

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rtol: 1e-8, atol: 1e-10 }
    }
}

/// Integrates `y' = f(t, y)` from `times[0]`, returning the state at every entry of `times`.
///
/// Steps are clipped so each output time is hit exactly.
pub fn integrate<F>(f: F, y0: &[f64], times: &[f64], tol: Tolerances) -> Result<Vec<Vec<f64>>>
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut out = Vec::with_capacity(times.len());
    out.push(y0.to_vec());
    let mut y = y0.to_vec();
    let mut t = times[0];
    let span = (times[times.len() - 1] - times[0]).abs().max(1.0);
    let mut h = span * 1e-4;
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
    let mut tmp = vec![0.0; n];
    let mut y5 = vec![0.0; n];
    f(t, &y, &mut k[0]);

    for &t_target in &times[1..] {
        while t < t_target {
            let remaining = t_target - t;
            let hs = h.min(remaining);
            for s in 1..7 {
                for i in 0..n {
                    let mut acc = y[i];
                    for j in 0..s {
                        acc += hs * A[s][j] * k[j][i];
                    }
                    tmp[i] = acc;
                }
                f(t + C[s] * hs, &tmp, &mut k[s]);
            }
            let mut err = 0.0;
            for i in 0..n {
                let mut s5 = y[i];
                let mut e = 0.0;
                for s in 0..7 {
                    s5 += hs * B5[s] * k[s][i];
                    e += hs * (B5[s] - B4[s]) * k[s][i];
                }
                y5[i] = s5;
                let sc = tol.atol + tol.rtol * y[i].abs().max(s5.abs());
                err += (e / sc).powi(2);
            }
            let err = (err / n as f64).sqrt();
            if err.is_finite() && err <= 1.0 {
                t = if hs >= remaining { t_target } else { t + hs };
                std::mem::swap(&mut y, &mut y5);
                // FSAL: the last stage is the derivative at the new point.
                let (first, rest) = k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                if hs == h {
                    let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                    h *= fac;
                }
            } else {
                let fac = if err.is_finite() { (0.9 * err.powf(-0.2)).clamp(0.1, 0.9) } else { 0.25 };
                h = hs * fac;
                if h < 1e-14 * span {
                    return Err(Error::Stiffness { last_stable_t: t });
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
