//! Preprocessing denoisers applied along one grid axis (time by default), one
//! slice at a time.
//!
//! The moving average trims its edges; Savitzky–Golay and the zero-phase
//! Butterworth filter return full-length output.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::differentiation::{polyfit_values, savgol_weights, GridAxis};
use crate::error::{invalid, Error, Result};
use crate::field::{Region, SpatioTemporalField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterKind {
    MovingAverage { window: usize },
    SavitzkyGolay { window: usize, polyorder: usize },
    /// `cutoff` is a fraction of the Nyquist frequency.
    ZeroPhaseLowpass { cutoff: f64, order: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub kind: FilterKind,
    #[serde(default = "time_axis")]
    pub axis: GridAxis,
}

fn time_axis() -> GridAxis {
    GridAxis::Time
}

pub const DEFAULT_POLYORDER: usize = 3;
pub const DEFAULT_BUTTERWORTH_ORDER: usize = 2;

impl FilterSpec {
    pub fn moving_average(window: usize) -> Self {
        Self { kind: FilterKind::MovingAverage { window }, axis: GridAxis::Time }
    }

    pub fn savitzky_golay(window: usize) -> Self {
        Self { kind: FilterKind::SavitzkyGolay { window, polyorder: DEFAULT_POLYORDER }, axis: GridAxis::Time }
    }

    pub fn lowpass(cutoff: f64) -> Self {
        Self { kind: FilterKind::ZeroPhaseLowpass { cutoff, order: DEFAULT_BUTTERWORTH_ORDER }, axis: GridAxis::Time }
    }

    pub fn along(mut self, axis: GridAxis) -> Self {
        self.axis = axis;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let odd_window = |w: usize| {
            if w < 3 || w % 2 == 0 {
                invalid(format!("filter window must be odd and >= 3, got {w}"))
            } else {
                Ok(())
            }
        };
        match self.kind {
            FilterKind::MovingAverage { window } => odd_window(window),
            FilterKind::SavitzkyGolay { window, polyorder } => {
                odd_window(window)?;
                if polyorder >= window {
                    return invalid(format!("polyorder {polyorder} must be below window {window}"));
                }
                Ok(())
            }
            FilterKind::ZeroPhaseLowpass { cutoff, order } => {
                if !(cutoff > 0.0 && cutoff < 1.0) {
                    return invalid(format!("cutoff must lie in (0, 1), got {cutoff}"));
                }
                if order == 0 {
                    return invalid("butterworth order must be positive");
                }
                Ok(())
            }
        }
    }

    /// Shortest slice the filter accepts.
    pub fn min_length(&self) -> usize {
        match self.kind {
            FilterKind::MovingAverage { window } | FilterKind::SavitzkyGolay { window, .. } => window,
            FilterKind::ZeroPhaseLowpass { order, .. } => padlen(order) + 1,
        }
    }

    /// Trimmed cells at each end of the filtered axis.
    pub fn edge_trim(&self) -> usize {
        match self.kind {
            FilterKind::MovingAverage { window } => window / 2,
            _ => 0,
        }
    }

    pub fn label(&self) -> String {
        match self.kind {
            FilterKind::MovingAverage { window } => format!("moving_average(window={window})"),
            FilterKind::SavitzkyGolay { window, polyorder } => format!("savitzky_golay(window={window}, polyorder={polyorder})"),
            FilterKind::ZeroPhaseLowpass { cutoff, order } => format!("zero_phase_lowpass(cutoff={cutoff}, order={order})"),
        }
    }
}

fn padlen(order: usize) -> usize {
    3 * (order + 1)
}

/// Filter a single 1-D signal. Moving-average output is shorter by `window - 1`.
pub fn filter_signal(y: &[f64], kind: FilterKind) -> Result<Vec<f64>> {
    match kind {
        FilterKind::MovingAverage { window } => Ok(y.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()),
        FilterKind::SavitzkyGolay { window, polyorder } => savgol(y, window, polyorder),
        FilterKind::ZeroPhaseLowpass { cutoff, order } => {
            let (b, a) = butter_lowpass(order, cutoff)?;
            filtfilt(&b, &a, y)
        }
    }
}

fn savgol(y: &[f64], window: usize, polyorder: usize) -> Result<Vec<f64>> {
    let w = savgol_weights(window, polyorder, 0)?;
    let r = window / 2;
    let n = y.len();
    let mut out = vec![0.0; n];
    for i in r..n - r {
        out[i] = w.iter().zip(&y[i - r..=i + r]).map(|(a, b)| a * b).sum();
    }
    // Edges: evaluate one polynomial fitted to the first (last) full window.
    let edge = |seg: &[f64], positions: std::ops::Range<usize>| -> Result<Vec<f64>> {
        let coef = polyfit_values(seg, polyorder)?;
        let c = (window as f64 - 1.0) / 2.0;
        let s = c.max(1.0);
        Ok(positions
            .map(|k| {
                let u = (k as f64 - c) / s;
                coef.iter().rev().fold(0.0, |acc, &p| acc * u + p)
            })
            .collect())
    };
    let head = edge(&y[..window], 0..r)?;
    let tail = edge(&y[n - window..], window - r..window)?;
    out[..r].copy_from_slice(&head);
    out[n - r..].copy_from_slice(&tail);
    Ok(out)
}

/// Digital Butterworth low-pass as transfer-function coefficients `(b, a)`,
/// via the bilinear transform of the pre-warped analog prototype.
pub fn butter_lowpass(order: usize, cutoff: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    if !(cutoff > 0.0 && cutoff < 1.0) || order == 0 {
        return invalid(format!("bad butterworth design: order {order}, cutoff {cutoff}"));
    }
    let n = order as f64;
    let fs2 = 4.0;
    let warped = fs2 * (std::f64::consts::PI * cutoff / 2.0).tan();
    let poles: Vec<Complex64> = (0..order)
        .map(|k| {
            let theta = std::f64::consts::PI * (2.0 * k as f64 + n + 1.0) / (2.0 * n);
            Complex64::from_polar(1.0, theta) * warped
        })
        .collect();
    let z_poles: Vec<Complex64> = poles.iter().map(|p| (fs2 + p) / (fs2 - p)).collect();
    let denom: Complex64 = poles.iter().map(|p| fs2 - p).product();
    let gain = warped.powi(order as i32) / denom.re;
    let b: Vec<f64> = poly(&vec![Complex64::new(-1.0, 0.0); order]).iter().map(|c| c.re * gain).collect();
    let a: Vec<f64> = poly(&z_poles).iter().map(|c| c.re).collect();
    Ok((b, a))
}

/// Monic polynomial with the given roots, highest power first.
fn poly(roots: &[Complex64]) -> Vec<Complex64> {
    let mut c = vec![Complex64::new(1.0, 0.0)];
    for r in roots {
        let mut next = c.clone();
        next.push(Complex64::new(0.0, 0.0));
        for (k, v) in c.iter().enumerate() {
            next[k + 1] -= v * r;
        }
        c = next;
    }
    c
}

/// Direct-form II transposed IIR filter with initial state `zi`.
fn lfilter(b: &[f64], a: &[f64], x: &[f64], zi: &[f64]) -> Vec<f64> {
    let n = a.len();
    let mut z = zi.to_vec();
    let mut y = Vec::with_capacity(x.len());
    for &xv in x {
        let yv = b[0] * xv + z.first().copied().unwrap_or(0.0);
        for k in 1..n {
            let next = if k < n - 1 { z[k] } else { 0.0 };
            z[k - 1] = next + b[k] * xv - a[k] * yv;
        }
        y.push(yv);
    }
    y
}

/// Steady-state initial conditions for a unit step input.
fn lfilter_zi(b: &[f64], a: &[f64]) -> Result<Vec<f64>> {
    let n = a.len();
    let m = n - 1;
    let mut lhs = DMatrix::<f64>::identity(m, m);
    for i in 0..m {
        lhs[(i, 0)] += a[i + 1];
        if i + 1 < m {
            lhs[(i, i + 1)] -= 1.0;
        }
    }
    let rhs = DVector::from_fn(m, |i, _| b[i + 1] - a[i + 1] * b[0]);
    lhs.lu()
        .solve(&rhs)
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::Numerical("singular system for filter initial state".into()))
}

/// Forward-backward filtering with odd-reflection padding.
pub fn filtfilt(b: &[f64], a: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let pad = 3 * a.len().max(b.len());
    let n = x.len();
    if n <= pad {
        return Err(Error::GridTooSmall(format!("zero-phase filter needs more than {pad} samples, got {n}")));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|k| 2.0 * x[0] - x[k]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|k| 2.0 * x[n - 1] - x[n - 1 - k]));
    let zi = lfilter_zi(b, a)?;
    let scaled = |v: f64| zi.iter().map(|z| z * v).collect::<Vec<_>>();
    let mut y = lfilter(b, a, &ext, &scaled(ext[0]));
    y.reverse();
    let mut y = lfilter(b, a, &y, &scaled(y[0]));
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}

/// Filter every slice of `field` along `spec.axis`. Moving-average output
/// drops `window / 2` cells at each end of that axis.
pub fn apply_filter(field: &SpatioTemporalField, spec: &FilterSpec) -> Result<SpatioTemporalField> {
    spec.validate()?;
    let (nx, nt) = (field.nx(), field.nt());
    let len = match spec.axis {
        GridAxis::Space => nx,
        GridAxis::Time => nt,
    };
    if len < spec.min_length() {
        return Err(Error::GridTooSmall(format!("{} needs {} samples along the axis, got {len}", spec.label(), spec.min_length())));
    }
    let v = field.values();
    let trim = spec.edge_trim();
    let out_len = len - 2 * trim;
    let slices: Vec<Vec<f64>> = match spec.axis {
        GridAxis::Space => (0..nt).map(|j| v.column(j).iter().copied().collect()).collect(),
        GridAxis::Time => (0..nx).map(|i| v.row(i).iter().copied().collect()).collect(),
    };
    let filtered: Vec<Vec<f64>> = slices.par_iter().map(|s| filter_signal(s, spec.kind)).collect::<Result<_>>()?;
    let region = match spec.axis {
        GridAxis::Space => Region { x_start: trim, x_end: nx - trim, t_start: 0, t_end: nt },
        GridAxis::Time => Region { x_start: 0, x_end: nx, t_start: trim, t_end: nt - trim },
    };
    let values = match spec.axis {
        GridAxis::Space => DMatrix::from_fn(out_len, nt, |i, j| filtered[j][i]),
        GridAxis::Time => DMatrix::from_fn(nx, out_len, |i, j| filtered[i][j]),
    };
    field.restrict(&region)?.with_values(values)
}

/// Mean squared difference over the common grid region of the two fields.
pub fn data_mse(processed: &SpatioTemporalField, clean: &SpatioTemporalField) -> Result<f64> {
    let (p, c) = SpatioTemporalField::common_region(processed, clean)
        .ok_or_else(|| Error::Shape("fields share no grid region".into()))?;
    let n = p.values().len() as f64;
    Ok(p.values().iter().zip(c.values().iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / n)
}

/// Sweepable filter parameter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFamily {
    MovingAverage,
    SavitzkyGolay,
    ZeroPhaseLowpass,
}

impl FilterFamily {
    pub fn name(self) -> &'static str {
        match self {
            FilterFamily::MovingAverage => "moving_average",
            FilterFamily::SavitzkyGolay => "savitzky_golay",
            FilterFamily::ZeroPhaseLowpass => "zero_phase_lowpass",
        }
    }

    /// Spec at parameter `p`: a window for the first two, a cutoff for the lowpass.
    pub fn spec(self, p: f64, axis: GridAxis) -> FilterSpec {
        match self {
            FilterFamily::MovingAverage => FilterSpec::moving_average(p.round() as usize),
            FilterFamily::SavitzkyGolay => FilterSpec::savitzky_golay(p.round() as usize),
            FilterFamily::ZeroPhaseLowpass => FilterSpec::lowpass(p),
        }
        .along(axis)
    }

    /// Grids used when none is given.
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            FilterFamily::MovingAverage => (5..=21).step_by(2).map(|w| w as f64).collect(),
            FilterFamily::SavitzkyGolay => (5..=61).step_by(4).map(|w| w as f64).collect(),
            FilterFamily::ZeroPhaseLowpass => (0..=40).map(|k| 0.03 + 0.0025 * k as f64).collect(),
        }
    }
}

impl std::str::FromStr for FilterFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moving_average" | "ma" => Ok(Self::MovingAverage),
            "savitzky_golay" | "savgol" | "sg" => Ok(Self::SavitzkyGolay),
            "zero_phase_lowpass" | "lowpass" | "filtfilt" => Ok(Self::ZeroPhaseLowpass),
            _ => invalid(format!("unknown filter '{s}'")),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterSweepPoint {
    pub parameter: f64,
    pub data_mse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterCurve {
    pub family: FilterFamily,
    pub axis: GridAxis,
    pub points: Vec<FilterSweepPoint>,
    pub argmin: Option<f64>,
    pub min_mse: Option<f64>,
    /// MSE of the unfiltered input against the clean field.
    pub unfiltered_mse: f64,
}

impl FilterCurve {
    pub fn write_csv(&self, path: &std::path::Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["parameter", "data_mse", "error"])?;
        for p in &self.points {
            w.write_record([
                format!("{:?}", p.parameter),
                p.data_mse.map(|v| format!("{v:?}")).unwrap_or_default(),
                p.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn filter_sweep(noisy: &SpatioTemporalField, clean: &SpatioTemporalField, family: FilterFamily, grid: &[f64], axis: GridAxis) -> Result<FilterCurve> {
    if grid.is_empty() {
        return invalid("filter sweep grid is empty");
    }
    let points: Vec<FilterSweepPoint> = grid
        .par_iter()
        .map(|&p| match apply_filter(noisy, &family.spec(p, axis)).and_then(|f| data_mse(&f, clean)) {
            Ok(m) => FilterSweepPoint { parameter: p, data_mse: Some(m), error: None },
            Err(e) => FilterSweepPoint { parameter: p, data_mse: None, error: Some(e.to_string()) },
        })
        .collect();
    let best = points
        .iter()
        .filter_map(|p| p.data_mse.map(|m| (p.parameter, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1));
    Ok(FilterCurve {
        family,
        axis,
        argmin: best.map(|b| b.0),
        min_mse: best.map(|b| b.1),
        unfiltered_mse: data_mse(noisy, clean)?,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::linspace;

    #[test]
    fn moving_average_interior() {
        let y = filter_signal(&[0.0, 3.0, 0.0, 3.0, 0.0], FilterKind::MovingAverage { window: 3 }).unwrap();
        assert_eq!(y, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn savgol_reproduces_cubics_including_edges() {
        let y: Vec<f64> = (0..40).map(|i| {
            let x = i as f64 * 0.1;
            1.0 - 2.0 * x + 0.5 * x * x - 0.3 * x * x * x
        }).collect();
        let s = filter_signal(&y, FilterKind::SavitzkyGolay { window: 11, polyorder: 3 }).unwrap();
        for (a, b) in s.iter().zip(&y) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn butterworth_matches_reference_design() {
        // Second-order design at a quarter of Nyquist, checked against the closed form.
        let (b, a) = butter_lowpass(2, 0.5).unwrap();
        let k = (std::f64::consts::PI / 4.0).tan();
        let norm = 1.0 + std::f64::consts::SQRT_2 * k + k * k;
        let want_b = [k * k / norm, 2.0 * k * k / norm, k * k / norm];
        let want_a = [1.0, 2.0 * (k * k - 1.0) / norm, (1.0 - std::f64::consts::SQRT_2 * k + k * k) / norm];
        for (x, y) in b.iter().zip(&want_b).chain(a.iter().zip(&want_a)) {
            assert!((x - y).abs() < 1e-12, "{x} vs {y}");
        }
        // Unit DC gain.
        assert!((b.iter().sum::<f64>() / a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn filtfilt_keeps_constants() {
        let (b, a) = butter_lowpass(4, 0.1).unwrap();
        let y = filtfilt(&b, &a, &[2.5; 64]).unwrap();
        assert!(y.iter().all(|v| (v - 2.5).abs() < 1e-10));
    }

    #[test]
    fn moving_average_trims_space_axis() {
        let f = SpatioTemporalField::from_fn(linspace(0.0, 1.0, 20), linspace(0.0, 1.0, 4), |x, t| x + t).unwrap();
        let g = apply_filter(&f, &FilterSpec::moving_average(5).along(GridAxis::Space)).unwrap();
        assert_eq!((g.nx(), g.nt()), (16, 4));
        assert!((g.x()[0] - f.x()[2]).abs() < 1e-15);
        assert!((g.get(0, 1) - f.get(2, 1)).abs() < 1e-12);
    }

    #[test]
    fn offset_mse() {
        let f = SpatioTemporalField::from_fn(linspace(0.0, 1.0, 8), linspace(0.0, 1.0, 8), |x, t| x * t).unwrap();
        let g = f.with_values(f.values().map(|v| v + 0.3)).unwrap();
        assert!((data_mse(&g, &f).unwrap() - 0.09).abs() < 1e-12);
    }
}
