//! Synthetic ground-truth data: three variable-coefficient PDE families on
//! periodic domains, plus white-noise injection.
//!
//! | family | equation | varying axis |
//! |---|---|---|
//! | Burgers | `u_t = -μ(t) u u_x + ν u_xx` | time |
//! | advection–diffusion | `u_t = (μ(x) u)_x + ν u_xx` | space |
//! | Kuramoto–Sivashinsky | `u_t = α(x) u u_x + β(x) u_xx + γ(x) u_xxxx` | space |
//!
//! Spatial derivatives are Fourier pseudo-spectral. Burgers and
//! advection–diffusion integrate with adaptive Dormand–Prince 5(4); KS uses
//! ETDRK4 with the constant part of the stiff linear operator treated exactly.

mod etdrk4;
pub mod rk;
mod spectral;

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{linspace, SpatioTemporalField};
use crate::library::{Axis, Term};

use etdrk4::Etdrk4;
use spectral::Spectral;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Burgers,
    AdvectionDiffusion,
    KuramotoSivashinsky,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Burgers => "burgers",
            Family::AdvectionDiffusion => "advection_diffusion",
            Family::KuramotoSivashinsky => "kuramoto_sivashinsky",
        })
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "burgers" => Ok(Family::Burgers),
            "advection_diffusion" | "ad" => Ok(Family::AdvectionDiffusion),
            "kuramoto_sivashinsky" | "ks" => Ok(Family::KuramotoSivashinsky),
            other => invalid(format!("unknown PDE family `{other}`")),
        }
    }
}

/// A closed-form scalar function with a human-readable formula.
#[derive(Clone)]
pub struct CoefFn {
    formula: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
}

impl CoefFn {
    pub fn new(formula: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { formula: formula.into(), f: Arc::new(f) }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(format!("{c}"), move |_| c)
    }

    pub fn eval(&self, v: f64) -> f64 {
        (self.f)(v)
    }

    pub fn formula(&self) -> &str {
        &self.formula
    }
}

impl fmt::Debug for CoefFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CoefFn({})", self.formula)
    }
}

/// Coefficient functions per family; the enum shape enforces the arity.
#[derive(Debug, Clone)]
pub enum FamilyCoefficients {
    /// `μ` is a function of `t`.
    Burgers { mu: CoefFn, nu: f64 },
    /// `μ` and its derivative `μ_x` are functions of `x`.
    AdvectionDiffusion { mu: CoefFn, mu_x: CoefFn, nu: f64 },
    KuramotoSivashinsky { alpha: CoefFn, beta: CoefFn, gamma: CoefFn },
}

/// A fully specified simulation problem.
#[derive(Debug, Clone)]
pub struct PdeScenario {
    pub coefficients: FamilyCoefficients,
    /// Periodic domain `[lo, hi)`.
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
    pub nx: usize,
    pub nt: usize,
    pub initial: CoefFn,
    /// Only `t >= retained_t_min` feeds discovery (KS).
    pub retained_t_min: Option<f64>,
    /// Largest internal ETDRK4 step (KS only).
    pub ks_max_step: f64,
    /// Name of the preset this scenario came from, if unmodified.
    pub preset: Option<String>,
}

/// Serializable description of a scenario, stored in dataset metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMeta {
    pub family: Family,
    pub preset: Option<String>,
    pub formulas: BTreeMap<String, String>,
    pub x_range: (f64, f64),
    pub t_range: (f64, f64),
    pub nx: usize,
    pub nt: usize,
    pub boundary: String,
    pub retained_t_min: Option<f64>,
}

/// Closed-form coefficient trajectories on the varying-axis grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueCoefficients {
    pub terms: Vec<Term>,
    pub axis: Axis,
    pub steps: Vec<f64>,
    /// `values[g][i]`: coefficient of `terms[g]` at `steps[i]`.
    pub values: Vec<Vec<f64>>,
}

impl TrueCoefficients {
    pub fn support(&self) -> Vec<Term> {
        self.terms
            .iter()
            .zip(&self.values)
            .filter(|(_, v)| v.iter().any(|&c| c != 0.0))
            .map(|(t, _)| t.clone())
            .collect()
    }
}

impl PdeScenario {
    /// `u_t + (1 + sin t / 4) u u_x = 0.1 u_xx`, `u(x,0) = exp(-(x+1)^2)` on
    /// `[-8, 8) × [0, 10]`, 256×256.
    pub fn burgers() -> Self {
        Self {
            coefficients: FamilyCoefficients::Burgers {
                mu: CoefFn::new("1 + sin(t)/4", |t| 1.0 + t.sin() / 4.0),
                nu: 0.1,
            },
            x_range: (-8.0, 8.0),
            t_range: (0.0, 10.0),
            nx: 256,
            nt: 256,
            initial: CoefFn::new("exp(-(x+1)^2)", |x| (-(x + 1.0) * (x + 1.0)).exp()),
            retained_t_min: None,
            ks_max_step: 0.025,
            preset: Some("burgers".into()),
        }
    }

    /// `u_t = (μ u)_x + 0.1 u_xx`, `μ = -1.5 + cos(0.4πx)`, `u(x,0) = cos(0.4πx)`
    /// on `[-5, 5) × [0, 5]`, 256×256.
    pub fn advection_diffusion() -> Self {
        let w = 0.4 * PI;
        Self {
            coefficients: FamilyCoefficients::AdvectionDiffusion {
                mu: CoefFn::new("-1.5 + cos(0.4*pi*x)", move |x| -1.5 + (w * x).cos()),
                mu_x: CoefFn::new("-0.4*pi*sin(0.4*pi*x)", move |x| -w * (w * x).sin()),
                nu: 0.1,
            },
            x_range: (-5.0, 5.0),
            t_range: (0.0, 5.0),
            nx: 256,
            nt: 256,
            initial: CoefFn::new("cos(0.4*pi*x)", move |x| (w * x).cos()),
            retained_t_min: None,
            ks_max_step: 0.025,
            preset: Some("advection_diffusion".into()),
        }
    }

    /// KS with `α = 1 + 0.25 sin(0.1πx)`, `β = -1 + 0.25 exp(-(x-2)^2/5)`,
    /// `γ = -1 - 0.25 exp(-(x+2)^2/5)`, `u(x,0) = exp(-x^2)` on
    /// `[-20, 20) × [0, 200]`; discovery uses `t >= 100`.
    pub fn kuramoto_sivashinsky() -> Self {
        Self {
            coefficients: FamilyCoefficients::KuramotoSivashinsky {
                alpha: CoefFn::new("1 + 0.25*sin(0.1*pi*x)", |x| 1.0 + 0.25 * (0.1 * PI * x).sin()),
                beta: CoefFn::new("-1 + 0.25*exp(-(x-2)^2/5)", |x| -1.0 + 0.25 * (-(x - 2.0).powi(2) / 5.0).exp()),
                gamma: CoefFn::new("-1 - 0.25*exp(-(x+2)^2/5)", |x| -1.0 - 0.25 * (-(x + 2.0).powi(2) / 5.0).exp()),
            },
            x_range: (-20.0, 20.0),
            t_range: (0.0, 200.0),
            nx: 256,
            nt: 256,
            initial: CoefFn::new("exp(-x^2)", |x| (-x * x).exp()),
            retained_t_min: Some(100.0),
            ks_max_step: 0.025,
            preset: Some("kuramoto_sivashinsky".into()),
        }
    }

    pub fn preset(family: Family) -> Self {
        match family {
            Family::Burgers => Self::burgers(),
            Family::AdvectionDiffusion => Self::advection_diffusion(),
            Family::KuramotoSivashinsky => Self::kuramoto_sivashinsky(),
        }
    }

    /// Rebuilds a preset scenario from dataset metadata.
    pub fn from_meta(meta: &ScenarioMeta) -> Result<Self> {
        let preset = meta
            .preset
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("dataset scenario is not a named preset".into()))?;
        let mut s = Self::preset(preset.parse()?);
        s.x_range = meta.x_range;
        s.t_range = meta.t_range;
        s.nx = meta.nx;
        s.nt = meta.nt;
        s.retained_t_min = meta.retained_t_min;
        Ok(s)
    }

    pub fn family(&self) -> Family {
        match self.coefficients {
            FamilyCoefficients::Burgers { .. } => Family::Burgers,
            FamilyCoefficients::AdvectionDiffusion { .. } => Family::AdvectionDiffusion,
            FamilyCoefficients::KuramotoSivashinsky { .. } => Family::KuramotoSivashinsky,
        }
    }

    /// Axis along which the coefficients vary.
    pub fn varying_axis(&self) -> Axis {
        match self.family() {
            Family::Burgers => Axis::Time,
            _ => Axis::Space,
        }
    }

    pub fn with_grid(mut self, nx: usize, nt: usize) -> Self {
        self.nx = nx;
        self.nt = nt;
        self
    }

    pub fn with_initial(mut self, initial: CoefFn) -> Self {
        self.initial = initial;
        self.preset = None;
        self
    }

    pub fn with_coefficients(mut self, c: FamilyCoefficients) -> Self {
        self.coefficients = c;
        self.preset = None;
        self
    }

    /// Periodic spatial grid (right endpoint excluded).
    pub fn x_grid(&self) -> Vec<f64> {
        let (lo, hi) = self.x_range;
        let h = (hi - lo) / self.nx as f64;
        (0..self.nx).map(|i| lo + h * i as f64).collect()
    }

    pub fn t_grid(&self) -> Vec<f64> {
        linspace(self.t_range.0, self.t_range.1, self.nt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nx < 8 || self.nt < 8 {
            return invalid(format!("grid {}x{} is smaller than 8x8", self.nx, self.nt));
        }
        if !(self.x_range.1 > self.x_range.0) || !(self.t_range.1 > self.t_range.0) {
            return invalid("empty domain");
        }
        if !(self.ks_max_step > 0.0) {
            return invalid("KS step must be positive");
        }
        Ok(())
    }

    pub fn meta(&self) -> ScenarioMeta {
        let mut formulas = BTreeMap::new();
        formulas.insert("u0".to_string(), self.initial.formula().to_string());
        match &self.coefficients {
            FamilyCoefficients::Burgers { mu, nu } => {
                formulas.insert("mu(t)".into(), mu.formula().into());
                formulas.insert("nu".into(), nu.to_string());
            }
            FamilyCoefficients::AdvectionDiffusion { mu, mu_x, nu } => {
                formulas.insert("mu(x)".into(), mu.formula().into());
                formulas.insert("mu_x(x)".into(), mu_x.formula().into());
                formulas.insert("nu".into(), nu.to_string());
            }
            FamilyCoefficients::KuramotoSivashinsky { alpha, beta, gamma } => {
                formulas.insert("alpha(x)".into(), alpha.formula().into());
                formulas.insert("beta(x)".into(), beta.formula().into());
                formulas.insert("gamma(x)".into(), gamma.formula().into());
            }
        }
        ScenarioMeta {
            family: self.family(),
            preset: self.preset.clone(),
            formulas,
            x_range: self.x_range,
            t_range: self.t_range,
            nx: self.nx,
            nt: self.nt,
            boundary: "periodic".into(),
            retained_t_min: self.retained_t_min,
        }
    }

    /// The part of a solution that feeds discovery.
    pub fn retained(&self, field: &SpatioTemporalField) -> Result<SpatioTemporalField> {
        match self.retained_t_min {
            Some(t0) => field.time_window(t0),
            None => Ok(field.clone()),
        }
    }

    /// Solves whichever family this scenario describes.
    pub fn solve(&self) -> Result<SpatioTemporalField> {
        match self.family() {
            Family::Burgers => solve_burgers(self),
            Family::AdvectionDiffusion => solve_advection_diffusion(self),
            Family::KuramotoSivashinsky => solve_ks(self),
        }
    }

    /// True (term, coefficient function) pairs on the right-hand side of `u_t = f`.
    fn true_terms(&self) -> Vec<(Term, Box<dyn Fn(f64) -> f64 + '_>)> {
        let uux = Term::power_derivative(1, 1);
        let u = Term::power_derivative(1, 0);
        let ux = Term::power_derivative(0, 1);
        let uxx = Term::power_derivative(0, 2);
        let uxxxx = Term::power_derivative(0, 4);
        match &self.coefficients {
            FamilyCoefficients::Burgers { mu, nu } => {
                let nu = *nu;
                vec![(uux, Box::new(move |t| -mu.eval(t))), (uxx, Box::new(move |_| nu))]
            }
            FamilyCoefficients::AdvectionDiffusion { mu, mu_x, nu } => {
                let nu = *nu;
                vec![
                    (u, Box::new(move |x| mu_x.eval(x))),
                    (ux, Box::new(move |x| mu.eval(x))),
                    (uxx, Box::new(move |_| nu)),
                ]
            }
            FamilyCoefficients::KuramotoSivashinsky { alpha, beta, gamma } => vec![
                (uux, Box::new(move |x| alpha.eval(x))),
                (uxx, Box::new(move |x| beta.eval(x))),
                (uxxxx, Box::new(move |x| gamma.eval(x))),
            ],
        }
    }
}

fn check_finite(
    states: &[Vec<f64>],
    x: &[f64],
    t: &[f64],
) -> Result<DMatrix<f64>> {
    let mut values = DMatrix::zeros(x.len(), t.len());
    for (j, s) in states.iter().enumerate() {
        for (i, &v) in s.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::SolverBlowUp { x: x[i], t: t[j] });
            }
            values[(i, j)] = v;
        }
    }
    Ok(values)
}

fn initial_state(s: &PdeScenario, x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| s.initial.eval(v)).collect()
}

fn map_integration_error(e: Error, x: &[f64]) -> Error {
    match e {
        // A step-size collapse in an explicit scheme means the state went non-finite.
        Error::Stiffness { last_stable_t } => Error::SolverBlowUp { x: x[0], t: last_stable_t },
        other => other,
    }
}

/// `u_t + μ(t) u u_x = ν u_xx`.
pub fn solve_burgers(s: &PdeScenario) -> Result<SpatioTemporalField> {
    s.validate()?;
    let FamilyCoefficients::Burgers { mu, nu } = &s.coefficients else {
        return invalid("solve_burgers needs a Burgers scenario");
    };
    let (x, t) = (s.x_grid(), s.t_grid());
    let sp = Spectral::new(s.nx, s.x_range.1 - s.x_range.0);
    let nu = *nu;
    let rhs = |time: f64, u: &[f64], du: &mut [f64]| {
        let u_hat = sp.fft(u);
        let ux = sp.derivative(&u_hat, 1);
        let uxx = sp.derivative(&u_hat, 2);
        let m = mu.eval(time);
        for i in 0..u.len() {
            du[i] = -m * u[i] * ux[i] + nu * uxx[i];
        }
    };
    let states = rk::integrate(rhs, &initial_state(s, &x), &t, rk::Tolerances::default())
        .map_err(|e| map_integration_error(e, &x))?;
    let values = check_finite(&states, &x, &t)?;
    SpatioTemporalField::new(values, x, t)
}

/// `u_t = (μ(x) u)_x + ν u_xx`.
pub fn solve_advection_diffusion(s: &PdeScenario) -> Result<SpatioTemporalField> {
    s.validate()?;
    let FamilyCoefficients::AdvectionDiffusion { mu, nu, .. } = &s.coefficients else {
        return invalid("solve_advection_diffusion needs an advection-diffusion scenario");
    };
    let (x, t) = (s.x_grid(), s.t_grid());
    let sp = Spectral::new(s.nx, s.x_range.1 - s.x_range.0);
    let mu_x: Vec<f64> = x.iter().map(|&v| mu.eval(v)).collect();
    let nu = *nu;
    let rhs = |_t: f64, u: &[f64], du: &mut [f64]| {
        let flux: Vec<f64> = u.iter().zip(&mu_x).map(|(a, b)| a * b).collect();
        let flux_x = sp.derivative(&sp.fft(&flux), 1);
        let uxx = sp.derivative(&sp.fft(u), 2);
        for i in 0..u.len() {
            du[i] = flux_x[i] + nu * uxx[i];
        }
    };
    let states = rk::integrate(rhs, &initial_state(s, &x), &t, rk::Tolerances::default())
        .map_err(|e| map_integration_error(e, &x))?;
    let values = check_finite(&states, &x, &t)?;
    SpatioTemporalField::new(values, x, t)
}

/// `u_t = α(x) u u_x + β(x) u_xx + γ(x) u_xxxx`, integrated with ETDRK4.
///
/// The linear operator `β₀ ∂² + γ₀ ∂⁴` with `β₀, γ₀` the mid-range values of
/// `β, γ` is handled exactly; the variable remainder goes in the nonlinear part.
pub fn solve_ks(s: &PdeScenario) -> Result<SpatioTemporalField> {
    s.validate()?;
    let FamilyCoefficients::KuramotoSivashinsky { alpha, beta, gamma } = &s.coefficients else {
        return invalid("solve_ks needs a Kuramoto-Sivashinsky scenario");
    };
    let (x, t) = (s.x_grid(), s.t_grid());
    let sp = Spectral::new(s.nx, s.x_range.1 - s.x_range.0);
    let a: Vec<f64> = x.iter().map(|&v| alpha.eval(v)).collect();
    let b: Vec<f64> = x.iter().map(|&v| beta.eval(v)).collect();
    let g: Vec<f64> = x.iter().map(|&v| gamma.eval(v)).collect();
    let mid = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    };
    let (b0, g0) = (mid(&b), mid(&g));
    if g0 >= 0.0 {
        return invalid("KS fourth-order coefficient must be negative (dissipative)");
    }
    let db: Vec<f64> = b.iter().map(|v| v - b0).collect();
    let dg: Vec<f64> = g.iter().map(|v| v - g0).collect();
    let lin: Vec<f64> = sp.wavenumbers().iter().map(|&k| -b0 * k * k + g0 * k.powi(4)).collect();
    let nonlinear = |v: &[Complex64]| -> Vec<Complex64> {
        let u = sp.ifft_real(v.to_vec());
        let ux = sp.derivative(v, 1);
        let uxx = sp.derivative(v, 2);
        let uxxxx = sp.derivative(v, 4);
        let n: Vec<Complex64> = (0..u.len())
            .map(|i| Complex64::new(a[i] * u[i] * ux[i] + db[i] * uxx[i] + dg[i] * uxxxx[i], 0.0))
            .collect();
        sp.fft_complex(n)
    };

    let mut states = Vec::with_capacity(t.len());
    let u0 = initial_state(s, &x);
    let mut v = sp.fft(&u0);
    states.push(u0);
    let mut schemes: Vec<(f64, Etdrk4)> = Vec::new();
    for j in 1..t.len() {
        let interval = t[j] - t[j - 1];
        let n_sub = (interval / s.ks_max_step).ceil().max(1.0) as usize;
        let h = interval / n_sub as f64;
        let idx = match schemes.iter().position(|(hh, _)| (hh - h).abs() <= 1e-12 * h) {
            Some(i) => i,
            None => {
                schemes.push((h, Etdrk4::new(&lin, h)));
                schemes.len() - 1
            }
        };
        let scheme = &schemes[idx].1;
        for sub in 0..n_sub {
            scheme.step(&mut v, &nonlinear);
            let bad = v.iter().any(|c| !c.re.is_finite() || !c.im.is_finite() || c.norm() > 1e12);
            if bad {
                return Err(Error::Stiffness { last_stable_t: t[j - 1] + h * sub as f64 });
            }
        }
        states.push(sp.ifft_real(v.clone()));
    }
    let values = check_finite(&states, &x, &t)?;
    SpatioTemporalField::new(values, x, t)
}

/// Adds `level · σ_u · Z`, `Z` i.i.d. standard normal from a seeded ChaCha8 stream.
pub fn add_noise(field: &SpatioTemporalField, level: f64, seed: u64) -> Result<SpatioTemporalField> {
    if !(level >= 0.0) || !level.is_finite() {
        return invalid(format!("noise level must be non-negative, got {level}"));
    }
    if level == 0.0 {
        return Ok(field.clone());
    }
    let scale = level * field.std();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = field.values().map(|v| {
        let z: f64 = StandardNormal.sample(&mut rng);
        v + scale * z
    });
    field.with_values(values)
}

/// Evaluates the scenario's closed-form coefficients at `steps` for every term;
/// terms absent from the PDE get zero trajectories.
pub fn true_coefficients(s: &PdeScenario, terms: &[Term], steps: &[f64]) -> Result<TrueCoefficients> {
    let truth = s.true_terms();
    for (t, _) in &truth {
        if !terms.contains(t) {
            return Err(Error::MissingTerm(t.to_string()));
        }
    }
    let values = terms
        .iter()
        .map(|term| match truth.iter().find(|(t, _)| t == term) {
            Some((_, f)) => steps.iter().map(|&v| f(v)).collect(),
            None => vec![0.0; steps.len()],
        })
        .collect();
    Ok(TrueCoefficients { terms: terms.to_vec(), axis: s.varying_axis(), steps: steps.to_vec(), values })
}
