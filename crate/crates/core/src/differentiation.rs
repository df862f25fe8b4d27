//! Derivative estimation on uniform grids: centered finite differences for
//! clean data, sliding local polynomial fits for noisy data.
//!
//! Both methods are linear stencils. Outputs keep only the interior where the
//! full stencil fits; nothing is extrapolated at the edges.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{Region, SpatioTemporalField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridAxis {
    Space,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffMethod {
    /// Second-order centered differences.
    FiniteDifference,
    /// Least-squares polynomial of `degree` over `width` points, differentiated at the centre.
    PolyFit { width: usize, degree: usize },
}

/// A derivative estimate restricted to its valid region.
#[derive(Debug, Clone)]
pub struct Derivative {
    pub field: SpatioTemporalField,
    /// Index ranges of `field` inside the source grid.
    pub region: Region,
}

/// A discrete derivative as a symmetric stencil `Σ_s w_s f(i+s) / h^order`.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    pub weights: Vec<f64>,
    pub order: u32,
}

impl Stencil {
    pub fn radius(&self) -> usize {
        self.weights.len() / 2
    }

    /// Centered second-order finite-difference stencil for `order` 1..=4.
    pub fn finite_difference(order: u32) -> Result<Self> {
        let weights = match order {
            0 => vec![1.0],
            1 => vec![-0.5, 0.0, 0.5],
            2 => vec![1.0, -2.0, 1.0],
            3 => vec![-0.5, 1.0, 0.0, -1.0, 0.5],
            4 => vec![1.0, -4.0, 6.0, -4.0, 1.0],
            _ => return invalid(format!("derivative order {order} is not supported (max 4)")),
        };
        Ok(Self { weights, order })
    }

    /// Savitzky–Golay style weights: fit a degree-`degree` polynomial over
    /// `width` points and differentiate `order` times at the centre.
    pub fn poly_fit(width: usize, degree: usize, order: u32) -> Result<Self> {
        if width % 2 == 0 {
            return invalid(format!("poly_fit width {width} must be odd"));
        }
        if width <= degree {
            return invalid(format!("poly_fit width {width} must exceed degree {degree}"));
        }
        if (degree as u32) < order {
            return invalid(format!("poly_fit degree {degree} is below derivative order {order}"));
        }
        let r = (width / 2) as f64;
        let scale = if r > 0.0 { r } else { 1.0 };
        // Scaled local coordinates keep the Vandermonde matrix well conditioned.
        let v = DMatrix::from_fn(width, degree + 1, |i, p| ((i as f64 - r) / scale).powi(p as i32));
        let svd = v.clone().svd(true, true);
        let pinv = svd
            .pseudo_inverse(1e-13)
            .map_err(|e| Error::InvalidArgument(format!("poly_fit pseudo-inverse failed: {e}")))?;
        let k = order as usize;
        let fact: f64 = (1..=k).map(|v| v as f64).product();
        let row = pinv.row(k);
        let weights = row.iter().map(|w| w * fact / scale.powi(order as i32)).collect();
        Ok(Self { weights, order })
    }

    pub fn for_method(method: DiffMethod, order: u32) -> Result<Self> {
        match method {
            DiffMethod::FiniteDifference => Self::finite_difference(order),
            DiffMethod::PolyFit { width, degree } => Self::poly_fit(width, degree, order),
        }
    }

    /// Applies along one axis, returning the interior values.
    pub fn apply(&self, values: &DMatrix<f64>, axis: GridAxis, h: f64) -> Result<DMatrix<f64>> {
        let r = self.radius();
        let n = match axis {
            GridAxis::Space => values.nrows(),
            GridAxis::Time => values.ncols(),
        };
        if n < 2 * r + 1 {
            return Err(Error::GridTooSmall(format!("{n} points along {axis:?} but stencil needs {}", 2 * r + 1)));
        }
        if self.order > 0 && !(h > 0.0) {
            return invalid("grid spacing must be positive");
        }
        let inv = 1.0 / h.powi(self.order as i32);
        let w = &self.weights;
        Ok(match axis {
            GridAxis::Space => DMatrix::from_fn(n - 2 * r, values.ncols(), |i, j| {
                w.iter().enumerate().map(|(s, ws)| ws * values[(i + s, j)]).sum::<f64>() * inv
            }),
            GridAxis::Time => DMatrix::from_fn(values.nrows(), n - 2 * r, |i, j| {
                w.iter().enumerate().map(|(s, ws)| ws * values[(i, j + s)]).sum::<f64>() * inv
            }),
        })
    }
}

/// Differentiates `field` along `axis`. The result covers the valid region only.
pub fn differentiate(field: &SpatioTemporalField, axis: GridAxis, order: u32, method: DiffMethod) -> Result<Derivative> {
    if order > 4 {
        return invalid(format!("derivative order {order} exceeds 4"));
    }
    let stencil = Stencil::for_method(method, order)?;
    let r = stencil.radius();
    let h = match axis {
        GridAxis::Space => field.dx(),
        GridAxis::Time => field.dt(),
    };
    let values = stencil.apply(field.values(), axis, h)?;
    let region = match axis {
        GridAxis::Space => Region { x_start: r, x_end: field.nx() - r, t_start: 0, t_end: field.nt() },
        GridAxis::Time => Region { x_start: 0, x_end: field.nx(), t_start: r, t_end: field.nt() - r },
    };
    let sub = field.restrict(&region)?;
    Ok(Derivative { field: sub.with_values(values)?, region })
}

/// Per-axis differentiation settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffConfig {
    pub space: DiffMethod,
    pub time: DiffMethod,
}

impl DiffConfig {
    /// Finite differences on both axes.
    pub fn clean() -> Self {
        Self { space: DiffMethod::FiniteDifference, time: DiffMethod::FiniteDifference }
    }

    /// Degree-4 fits over 9 points in space, degree-3 over 5 in time.
    pub fn noisy() -> Self {
        Self {
            space: DiffMethod::PolyFit { width: 9, degree: 4 },
            time: DiffMethod::PolyFit { width: 5, degree: 3 },
        }
    }

    /// Degree-6 fits over 31 points in space, degree-3 over 11 in time.
    pub fn wide() -> Self {
        Self {
            space: DiffMethod::PolyFit { width: 31, degree: 6 },
            time: DiffMethod::PolyFit { width: 11, degree: 3 },
        }
    }
}

impl Default for DiffConfig {
    fn default() -> Self {
        Self::clean()
    }
}

/// `u`, `u_t` and `∂^q u/∂x^q` for `q = 1..=max_space_order`, all trimmed to a common region.
#[derive(Debug, Clone)]
pub struct DerivativeStack {
    /// Common valid region, in source-grid indices.
    pub region: Region,
    pub u: SpatioTemporalField,
    pub u_t: SpatioTemporalField,
    /// `space[q - 1]` is the `q`-th spatial derivative.
    pub space: Vec<SpatioTemporalField>,
    pub config: DiffConfig,
}

impl DerivativeStack {
    pub fn max_space_order(&self) -> usize {
        self.space.len()
    }

    /// `q`-th spatial derivative; `q = 0` returns `u` itself.
    pub fn spatial(&self, q: usize) -> Option<&SpatioTemporalField> {
        if q == 0 {
            Some(&self.u)
        } else {
            self.space.get(q - 1)
        }
    }
}

pub fn build_derivative_stack(field: &SpatioTemporalField, max_space_order: usize, config: DiffConfig) -> Result<DerivativeStack> {
    if max_space_order > 4 {
        return invalid(format!("max spatial order {max_space_order} exceeds 4"));
    }
    let u_t = differentiate(field, GridAxis::Time, 1, config.time)?;
    let space: Vec<Derivative> = (1..=max_space_order as u32)
        .map(|q| differentiate(field, GridAxis::Space, q, config.space))
        .collect::<Result<_>>()?;
    let mut region = u_t.region;
    for d in &space {
        region = region
            .intersect(&d.region)
            .ok_or_else(|| Error::GridTooSmall("derivative valid regions do not overlap".into()))?;
    }
    let trim = |d: &Derivative| -> Result<SpatioTemporalField> {
        let local = Region {
            x_start: region.x_start - d.region.x_start,
            x_end: region.x_end - d.region.x_start,
            t_start: region.t_start - d.region.t_start,
            t_end: region.t_end - d.region.t_start,
        };
        d.field.restrict(&local)
    };
    Ok(DerivativeStack {
        region,
        u: field.restrict(&region)?,
        u_t: trim(&u_t)?,
        space: space.iter().map(trim).collect::<Result<_>>()?,
        config,
    })
}

/// Convenience for tests and filters: poly-fit weights as a plain vector.
pub fn savgol_weights(window: usize, degree: usize, deriv: u32) -> Result<Vec<f64>> {
    Ok(Stencil::poly_fit(window, degree, deriv)?.weights)
}

/// Least-squares polynomial coefficients (ascending powers of the raw offset) for points `0..n`.
pub(crate) fn polyfit_values(y: &[f64], degree: usize) -> Result<DVector<f64>> {
    let n = y.len();
    let c = (n as f64 - 1.0) / 2.0;
    let s = c.max(1.0);
    let v = DMatrix::from_fn(n, degree + 1, |i, p| ((i as f64 - c) / s).powi(p as i32));
    let svd = v.svd(true, true);
    svd.solve(&DVector::from_column_slice(y), 1e-13)
        .map_err(|e| Error::InvalidArgument(format!("polynomial fit failed: {e}")))
}
