//! Fourier pseudo-spectral derivatives on a periodic grid.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

pub(crate) struct Spectral {
    n: usize,
    /// Angular wavenumbers in FFT order.
    k: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Spectral {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let k = (0..n)
            .map(|j| {
                let m = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
                2.0 * PI * m / length
            })
            .collect();
        Self { n, k, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn wavenumbers(&self) -> &[f64] {
        &self.k
    }

    pub fn fft(&self, u: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = u.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    pub fn fft_complex(&self, mut buf: Vec<Complex64>) -> Vec<Complex64> {
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform, returning the real part (normalized).
    pub fn ifft_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Multiplier `(ik)^order` with the Nyquist mode zeroed for odd orders.
    pub fn multiplier(&self, j: usize, order: u32) -> Complex64 {
        let k = self.k[j];
        if order % 2 == 1 && self.n % 2 == 0 && j == self.n / 2 {
            return Complex64::new(0.0, 0.0);
        }
        Complex64::new(0.0, k).powu(order)
    }

    pub fn derivative_hat(&self, u_hat: &[Complex64], order: u32) -> Vec<Complex64> {
        u_hat.iter().enumerate().map(|(j, &c)| c * self.multiplier(j, order)).collect()
    }

    pub fn derivative(&self, u_hat: &[Complex64], order: u32) -> Vec<f64> {
        self.ifft_real(self.derivative_hat(u_hat, order))
    }
}
