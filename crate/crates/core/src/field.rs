//! Scalar fields sampled on a uniform rectangular (x, t) grid.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Relative tolerance for the uniform-spacing check on axis coordinates.
pub const SPACING_RTOL: f64 = 1e-9;

/// A scalar field `u(x_i, t_j)`; rows index space, columns index time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatioTemporalField {
    values: DMatrix<f64>,
    x: Vec<f64>,
    t: Vec<f64>,
}

/// Half-open index ranges of a sub-region of some parent grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x_start: usize,
    pub x_end: usize,
    pub t_start: usize,
    pub t_end: usize,
}

impl Region {
    pub fn nx(&self) -> usize {
        self.x_end - self.x_start
    }

    pub fn nt(&self) -> usize {
        self.t_end - self.t_start
    }

    pub fn intersect(&self, other: &Region) -> Option<Region> {
        let r = Region {
            x_start: self.x_start.max(other.x_start),
            x_end: self.x_end.min(other.x_end),
            t_start: self.t_start.max(other.t_start),
            t_end: self.t_end.min(other.t_end),
        };
        (r.x_start < r.x_end && r.t_start < r.t_end).then_some(r)
    }
}

fn check_axis(name: &str, c: &[f64]) -> Result<()> {
    if c.is_empty() {
        return invalid(format!("{name} axis is empty"));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return invalid(format!("{name} axis has non-finite coordinates"));
    }
    if c.len() >= 2 {
        let h = (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64;
        if h <= 0.0 {
            return invalid(format!("{name} axis is not strictly increasing"));
        }
        for (k, w) in c.windows(2).enumerate() {
            let d = w[1] - w[0];
            if d <= 0.0 {
                return invalid(format!("{name} axis is not strictly increasing at index {k}"));
            }
            if ((d - h) / h).abs() > SPACING_RTOL {
                return invalid(format!("{name} axis is not uniformly spaced at index {k}"));
            }
        }
    }
    Ok(())
}

/// `n` evenly spaced points on `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let h = (hi - lo) / (n - 1) as f64;
            (0..n).map(|i| lo + h * i as f64).collect()
        }
    }
}

impl SpatioTemporalField {
    pub fn new(values: DMatrix<f64>, x: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if values.nrows() != x.len() || values.ncols() != t.len() {
            return Err(Error::Shape(format!(
                "values are {}x{} but axes have {} x and {} t coordinates",
                values.nrows(),
                values.ncols(),
                x.len(),
                t.len()
            )));
        }
        check_axis("x", &x)?;
        check_axis("t", &t)?;
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            let (i, j) = (k % x.len(), k / x.len());
            return invalid(format!("non-finite value at x = {}, t = {}", x[i], t[j]));
        }
        Ok(Self { values, x, t })
    }

    /// Builds a field by evaluating `f(x, t)` on the grid.
    pub fn from_fn(x: Vec<f64>, t: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let values = DMatrix::from_fn(x.len(), t.len(), |i, j| f(x[i], t[j]));
        Self::new(values, x, t)
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn t(&self) -> &[f64] {
        &self.t
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn nt(&self) -> usize {
        self.t.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    /// Grid spacing in x (zero for a single point).
    pub fn dx(&self) -> f64 {
        spacing(&self.x)
    }

    pub fn dt(&self) -> f64 {
        spacing(&self.t)
    }

    /// Population standard deviation of all values.
    pub fn std(&self) -> f64 {
        let n = self.values.len() as f64;
        let mean = self.values.sum() / n;
        (self.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
    }

    /// Restricts to a sub-region given in this field's own indices.
    pub fn restrict(&self, r: &Region) -> Result<Self> {
        if r.x_end > self.nx() || r.t_end > self.nt() || r.nx() == 0 || r.nt() == 0 {
            return Err(Error::Shape(format!("region {r:?} outside {}x{} grid", self.nx(), self.nt())));
        }
        let values = self.values.view((r.x_start, r.t_start), (r.nx(), r.nt())).into_owned();
        Ok(Self {
            values,
            x: self.x[r.x_start..r.x_end].to_vec(),
            t: self.t[r.t_start..r.t_end].to_vec(),
        })
    }

    /// Keeps time columns with `t >= t_min`.
    pub fn time_window(&self, t_min: f64) -> Result<Self> {
        let start = self
            .t
            .iter()
            .position(|&t| t >= t_min - 1e-12 * t_min.abs().max(1.0))
            .ok_or_else(|| Error::InvalidArgument(format!("no time points at or after {t_min}")))?;
        self.restrict(&Region { x_start: 0, x_end: self.nx(), t_start: start, t_end: self.nt() })
    }

    /// Same grid, new values.
    pub fn with_values(&self, values: DMatrix<f64>) -> Result<Self> {
        Self::new(values, self.x.clone(), self.t.clone())
    }

    /// Locates `other`'s grid inside this one, returning the region of `self` it covers.
    pub fn locate(&self, other: &SpatioTemporalField) -> Option<Region> {
        let xs = find_offset(&self.x, &other.x)?;
        let ts = find_offset(&self.t, &other.t)?;
        Some(Region { x_start: xs, x_end: xs + other.nx(), t_start: ts, t_end: ts + other.nt() })
    }

    /// Largest common sub-grid of two fields that live on the same parent grid.
    pub fn common_region(a: &Self, b: &Self) -> Option<(Self, Self)> {
        let x_lo = a.x[0].max(b.x[0]);
        let x_hi = a.x[a.nx() - 1].min(b.x[b.nx() - 1]);
        let t_lo = a.t[0].max(b.t[0]);
        let t_hi = a.t[a.nt() - 1].min(b.t[b.nt() - 1]);
        let sub = |f: &Self| -> Option<Self> {
            let r = Region {
                x_start: index_of(&f.x, x_lo)?,
                x_end: index_of(&f.x, x_hi)? + 1,
                t_start: index_of(&f.t, t_lo)?,
                t_end: index_of(&f.t, t_hi)? + 1,
            };
            if r.x_end <= r.x_start || r.t_end <= r.t_start {
                return None;
            }
            f.restrict(&r).ok()
        };
        let (sa, sb) = (sub(a)?, sub(b)?);
        (sa.nx() == sb.nx() && sa.nt() == sb.nt()).then_some((sa, sb))
    }

    /// Swaps the roles of x and t (rows become time).
    pub fn transposed_values(&self) -> DMatrix<f64> {
        self.values.transpose()
    }
}

fn spacing(c: &[f64]) -> f64 {
    if c.len() < 2 {
        0.0
    } else {
        (c[c.len() - 1] - c[0]) / (c.len() - 1) as f64
    }
}

fn coord_tol(c: &[f64]) -> f64 {
    let h = spacing(c);
    if h > 0.0 {
        1e-6 * h
    } else {
        1e-12
    }
}

fn index_of(c: &[f64], v: f64) -> Option<usize> {
    let tol = coord_tol(c);
    c.iter().position(|&a| (a - v).abs() <= tol)
}

fn find_offset(parent: &[f64], child: &[f64]) -> Option<usize> {
    let start = index_of(parent, child[0])?;
    if start + child.len() > parent.len() {
        return None;
    }
    let tol = coord_tol(parent);
    child
        .iter()
        .zip(&parent[start..])
        .all(|(a, b)| (a - b).abs() <= tol)
        .then_some(start)
}
