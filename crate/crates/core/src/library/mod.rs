//! Candidate library evaluation and the grouped block-diagonal regression
//! system `u_t = Θ ξ`.
//!
//! Step `i` of the varying axis contributes one block `Θ(u^(i))` of size
//! `n × G` (rows run over the other axis). Group `g` collects column `g`
//! of every block, so each group has exactly `m` members. The design is
//! never stored densely: everything works block by block.

mod terms;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::differentiation::{build_derivative_stack, DerivativeStack, DiffConfig};
use crate::error::{invalid, Error, Result};
use crate::field::SpatioTemporalField;

pub use terms::{LibrarySpec, Term};

/// Which grid axis indexes the regression steps (the axis the coefficients vary along).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Time,
    Space,
}

impl std::str::FromStr for Axis {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" | "t" => Ok(Axis::Time),
            "space" | "x" => Ok(Axis::Space),
            other => invalid(format!("unknown axis `{other}`")),
        }
    }
}

/// Every library term evaluated on the common valid region.
#[derive(Debug, Clone)]
pub struct TermEvaluations {
    pub terms: Vec<Term>,
    /// `values[g]` is `terms[g]` on the (x, t) grid of `x`, `t`.
    pub values: Vec<DMatrix<f64>>,
    pub x: Vec<f64>,
    pub t: Vec<f64>,
}

/// Evaluates each library term from the derivative stack.
pub fn evaluate_terms(stack: &DerivativeStack, terms: &[Term]) -> Result<TermEvaluations> {
    let (nx, nt) = (stack.u.nx(), stack.u.nt());
    let mut values = Vec::with_capacity(terms.len());
    for term in terms {
        let mut m = DMatrix::from_element(nx, nt, 1.0);
        for (q, &e) in term.exponents().iter().enumerate() {
            if e == 0 {
                continue;
            }
            let f = stack.spatial(q).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "term `{term}` needs derivative order {q} but the stack stops at {}",
                    stack.max_space_order()
                ))
            })?;
            m.zip_apply(f.values(), |a, b| *a *= b.powi(e as i32));
        }
        values.push(m);
    }
    Ok(TermEvaluations { terms: terms.to_vec(), values, x: stack.u.x().to_vec(), t: stack.u.t().to_vec() })
}

/// Per-step sufficient statistics `ΘᵀΘ`, `Θᵀy`, `yᵀy`.
#[derive(Debug, Clone)]
pub struct StepGram {
    pub gram: DMatrix<f64>,
    pub xty: DVector<f64>,
    pub yty: f64,
}

/// The block-diagonal grouped regression system.
#[derive(Debug, Clone)]
pub struct GroupedLinearSystem {
    terms: Vec<Term>,
    axis: Axis,
    steps: Vec<f64>,
    rows: Vec<f64>,
    blocks: Vec<DMatrix<f64>>,
    targets: Vec<DVector<f64>>,
    /// `scales[i][g]`: norm divided out of column `g` at step `i` (1 when unnormalized).
    scales: Vec<Vec<f64>>,
    normalized: bool,
}

/// Builds the grouped system from term evaluations and the time derivative.
pub fn assemble_grouped_system(evals: &TermEvaluations, u_t: &SpatioTemporalField, axis: Axis) -> Result<GroupedLinearSystem> {
    let (nx, nt) = (u_t.nx(), u_t.nt());
    for (term, v) in evals.terms.iter().zip(&evals.values) {
        if v.nrows() != nx || v.ncols() != nt {
            return Err(Error::Shape(format!(
                "term `{term}` is {}x{} but u_t is {nx}x{nt}",
                v.nrows(),
                v.ncols()
            )));
        }
    }
    if evals.x.len() != nx || evals.t.len() != nt {
        return Err(Error::Shape("term grid and u_t grid differ".into()));
    }
    let g = evals.terms.len();
    if g == 0 {
        return invalid("empty library");
    }
    let (m, n, steps, rows) = match axis {
        Axis::Time => (nt, nx, evals.t.clone(), evals.x.clone()),
        Axis::Space => (nx, nt, evals.x.clone(), evals.t.clone()),
    };
    let at = |v: &DMatrix<f64>, step: usize, row: usize| match axis {
        Axis::Time => v[(row, step)],
        Axis::Space => v[(step, row)],
    };
    let mut blocks = Vec::with_capacity(m);
    let mut targets = Vec::with_capacity(m);
    for i in 0..m {
        blocks.push(DMatrix::from_fn(n, g, |r, c| at(&evals.values[c], i, r)));
        targets.push(DVector::from_fn(n, |r, _| at(u_t.values(), i, r)));
    }
    Ok(GroupedLinearSystem {
        terms: evals.terms.clone(),
        axis,
        steps,
        rows,
        blocks,
        targets,
        scales: vec![vec![1.0; g]; m],
        normalized: false,
    })
}

/// Differentiates, evaluates the library and assembles the system in one go.
pub fn build_system(field: &SpatioTemporalField, diff: DiffConfig, spec: &LibrarySpec, axis: Axis) -> Result<GroupedLinearSystem> {
    let stack = build_derivative_stack(field, spec.max_deriv_order(), diff)?;
    let evals = evaluate_terms(&stack, &spec.terms())?;
    assemble_grouped_system(&evals, &stack.u_t, axis)
}

impl GroupedLinearSystem {
    /// Builds directly from per-step blocks (each `n × G`) and targets.
    pub fn from_blocks(
        terms: Vec<Term>,
        axis: Axis,
        steps: Vec<f64>,
        blocks: Vec<DMatrix<f64>>,
        targets: Vec<DVector<f64>>,
    ) -> Result<Self> {
        let m = blocks.len();
        if m == 0 || steps.len() != m || targets.len() != m {
            return Err(Error::Shape(format!("{m} blocks, {} steps, {} targets", steps.len(), targets.len())));
        }
        let (n, g) = blocks[0].shape();
        if g != terms.len() {
            return Err(Error::Shape(format!("blocks have {g} columns but {} terms", terms.len())));
        }
        for (b, y) in blocks.iter().zip(&targets) {
            if b.shape() != (n, g) || y.len() != n {
                return Err(Error::Shape("blocks must share one shape and match their targets".into()));
            }
        }
        Ok(Self {
            terms,
            axis,
            steps,
            rows: (0..n).map(|r| r as f64).collect(),
            blocks,
            targets,
            scales: vec![vec![1.0; g]; m],
            normalized: false,
        })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn steps(&self) -> &[f64] {
        &self.steps
    }

    pub fn row_coords(&self) -> &[f64] {
        &self.rows
    }

    /// Number of groups `G`.
    pub fn n_groups(&self) -> usize {
        self.terms.len()
    }

    /// Number of steps `m` (also every group's size).
    pub fn n_steps(&self) -> usize {
        self.blocks.len()
    }

    /// Rows per step `n`.
    pub fn rows_per_step(&self) -> usize {
        self.blocks[0].nrows()
    }

    /// Total rows `N = n·m`.
    pub fn n_rows(&self) -> usize {
        self.rows_per_step() * self.n_steps()
    }

    pub fn n_columns(&self) -> usize {
        self.n_groups() * self.n_steps()
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        vec![self.n_steps(); self.n_groups()]
    }

    pub fn block(&self, step: usize) -> &DMatrix<f64> {
        &self.blocks[step]
    }

    pub fn target(&self, step: usize) -> &DVector<f64> {
        &self.targets[step]
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn scales(&self) -> &[Vec<f64>] {
        &self.scales
    }

    /// Global column index of (step, group): `step·G + group`.
    pub fn column_index(&self, step: usize, group: usize) -> usize {
        step * self.n_groups() + group
    }

    /// Inverse of [`column_index`](Self::column_index): `(step, group)`.
    pub fn column_location(&self, column: usize) -> (usize, usize) {
        (column / self.n_groups(), column % self.n_groups())
    }

    /// Global column indices of a group, in step order.
    pub fn group_columns(&self, group: usize) -> Vec<usize> {
        (0..self.n_steps()).map(|i| self.column_index(i, group)).collect()
    }

    /// `Θ v` computed blockwise; `v` uses the global column order.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let g = self.n_groups();
        let mut out = Vec::with_capacity(self.n_rows());
        for (i, b) in self.blocks.iter().enumerate() {
            let vi = DVector::from_column_slice(&v[i * g..(i + 1) * g]);
            out.extend((b * vi).iter());
        }
        out
    }

    /// Stacked target vector.
    pub fn target_vector(&self) -> Vec<f64> {
        self.targets.iter().flat_map(|y| y.iter().copied()).collect()
    }

    /// Dense design matrix; for tests and debugging on small systems.
    pub fn dense_design(&self) -> DMatrix<f64> {
        let (n, g) = (self.rows_per_step(), self.n_groups());
        let mut d = DMatrix::zeros(self.n_rows(), self.n_columns());
        for (i, b) in self.blocks.iter().enumerate() {
            d.view_mut((i * n, i * g), (n, g)).copy_from(b);
        }
        d
    }

    pub fn grams(&self) -> Vec<StepGram> {
        self.blocks
            .iter()
            .zip(&self.targets)
            .map(|(b, y)| StepGram { gram: b.transpose() * b, xty: b.transpose() * y, yty: y.norm_squared() })
            .collect()
    }

    /// Residual sum of squares for coefficients `beta[g][i]`.
    pub fn rss(&self, beta: &[Vec<f64>]) -> f64 {
        let g = self.n_groups();
        self.blocks
            .iter()
            .zip(&self.targets)
            .enumerate()
            .map(|(i, (b, y))| {
                let bi = DVector::from_fn(g, |k, _| beta[k][i]);
                (y - b * bi).norm_squared()
            })
            .sum()
    }

    pub fn target_norm_squared(&self) -> f64 {
        self.targets.iter().map(|y| y.norm_squared()).sum()
    }

    /// Divides every column by its L2 norm and stores the norms.
    pub fn normalize_columns(&self) -> Result<Self> {
        let mut out = self.clone();
        for (i, b) in out.blocks.iter_mut().enumerate() {
            for (c, mut col) in b.column_iter_mut().enumerate() {
                let norm = col.norm();
                if !(norm > 0.0) || !norm.is_finite() {
                    return Err(Error::ZeroColumn { term: self.terms[c].to_string(), step: i });
                }
                col /= norm;
                out.scales[i][c] = self.scales[i][c] * norm;
            }
        }
        out.normalized = true;
        Ok(out)
    }

    /// Maps coefficients of this system's columns back to the unnormalized columns.
    pub fn denormalize(&self, beta: &[Vec<f64>]) -> Vec<Vec<f64>> {
        beta.iter()
            .enumerate()
            .map(|(g, b)| b.iter().enumerate().map(|(i, v)| v / self.scales[i][g]).collect())
            .collect()
    }

    /// Inverse of [`denormalize`](Self::denormalize).
    pub fn renormalize(&self, xi: &[Vec<f64>]) -> Vec<Vec<f64>> {
        xi.iter()
            .enumerate()
            .map(|(g, b)| b.iter().enumerate().map(|(i, v)| v * self.scales[i][g]).collect())
            .collect()
    }

    /// Sub-system keeping only `groups` (in the given order).
    pub fn select_groups(&self, groups: &[usize]) -> Result<Self> {
        if let Some(&bad) = groups.iter().find(|&&g| g >= self.n_groups()) {
            return invalid(format!("group {bad} out of range"));
        }
        let blocks = self.blocks.iter().map(|b| b.select_columns(groups)).collect();
        let scales = self.scales.iter().map(|s| groups.iter().map(|&g| s[g]).collect()).collect();
        Ok(Self {
            terms: groups.iter().map(|&g| self.terms[g].clone()).collect(),
            axis: self.axis,
            steps: self.steps.clone(),
            rows: self.rows.clone(),
            blocks,
            targets: self.targets.clone(),
            scales,
            normalized: self.normalized,
        })
    }

    /// Index of a term in this system.
    pub fn term_index(&self, term: &Term) -> Option<usize> {
        self.terms.iter().position(|t| t == term)
    }

    /// Unregularized per-step least squares on the given groups; other groups get zero.
    pub fn least_squares(&self, groups: &[usize]) -> Result<Vec<Vec<f64>>> {
        let m = self.n_steps();
        let mut beta = vec![vec![0.0; m]; self.n_groups()];
        if groups.is_empty() {
            return Ok(beta);
        }
        for (i, (b, y)) in self.blocks.iter().zip(&self.targets).enumerate() {
            let sub = b.select_columns(groups);
            let sol = sub
                .svd(true, true)
                .solve(y, 1e-12)
                .map_err(|e| Error::InvalidArgument(format!("least squares failed at step {i}: {e}")))?;
            for (k, &g) in groups.iter().enumerate() {
                beta[g][i] = sol[k];
            }
        }
        Ok(beta)
    }

    /// Writes per-step CSV blocks (`step_XXXX.csv`, target first) and a JSON group map.
    pub fn export(&self, dir: &std::path::Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (i, (b, y)) in self.blocks.iter().zip(&self.targets).enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("step_{i:04}.csv")))?;
            let mut header = vec!["u_t".to_string()];
            header.extend(self.terms.iter().map(|t| t.to_string()));
            w.write_record(&header)?;
            for r in 0..b.nrows() {
                let mut rec = vec![format!("{:e}", y[r])];
                rec.extend(b.row(r).iter().map(|v| format!("{v:e}")));
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        let map = serde_json::json!({
            "axis": self.axis,
            "steps": self.steps,
            "rows_per_step": self.rows_per_step(),
            "normalized": self.normalized,
            "groups": self.terms.iter().enumerate().map(|(g, t)| serde_json::json!({
                "group": g,
                "term": t.to_string(),
                "columns": self.group_columns(g),
            })).collect::<Vec<_>>(),
        });
        std::fs::write(dir.join("groups.json"), serde_json::to_string_pretty(&map)?)?;
        Ok(())
    }
}

/// Per-group coefficient trajectories in physical units, with the group sparsity mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientTrajectories {
    pub terms: Vec<Term>,
    pub axis: Axis,
    pub steps: Vec<f64>,
    /// `values[g][i]`.
    pub values: Vec<Vec<f64>>,
    pub active: Vec<bool>,
}

impl CoefficientTrajectories {
    /// Trajectories from normalized-scale coefficients of `system`; a group is
    /// active unless every coefficient is exactly zero.
    pub fn from_normalized(system: &GroupedLinearSystem, beta: &[Vec<f64>]) -> Self {
        let values = system.denormalize(beta);
        let active = values.iter().map(|v| v.iter().any(|&c| c != 0.0)).collect();
        Self { terms: system.terms().to_vec(), axis: system.axis(), steps: system.steps().to_vec(), values, active }
    }

    /// Re-expresses these trajectories over a larger term list, zero-filling missing terms.
    pub fn expand_to(&self, terms: &[Term]) -> Self {
        let m = self.steps.len();
        let mut values = Vec::with_capacity(terms.len());
        let mut active = Vec::with_capacity(terms.len());
        for t in terms {
            match self.terms.iter().position(|s| s == t) {
                Some(g) => {
                    values.push(self.values[g].clone());
                    active.push(self.active[g]);
                }
                None => {
                    values.push(vec![0.0; m]);
                    active.push(false);
                }
            }
        }
        Self { terms: terms.to_vec(), axis: self.axis, steps: self.steps.clone(), values, active }
    }

    pub fn support(&self) -> Vec<Term> {
        self.terms.iter().zip(&self.active).filter(|(_, &a)| a).map(|(t, _)| t.clone()).collect()
    }

    pub fn n_active(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn trajectory(&self, term: &Term) -> Option<&[f64]> {
        self.terms.iter().position(|t| t == term).map(|g| self.values[g].as_slice())
    }

    /// Renders the selected model as `u_t = a(t)*u*u_x + b(t)*u_xx`.
    pub fn render(&self) -> String {
        let var = match self.axis {
            Axis::Time => "t",
            Axis::Space => "x",
        };
        let names = ["a", "b", "c", "d", "e", "f", "g", "h", "k", "p", "q", "r", "s", "w", "y", "z"];
        let parts: Vec<String> = self
            .support()
            .iter()
            .enumerate()
            .map(|(k, t)| {
                let coef = names.get(k).map(|s| s.to_string()).unwrap_or_else(|| format!("c{k}"));
                if t.is_constant() {
                    format!("{coef}({var})")
                } else {
                    format!("{coef}({var})*{t}")
                }
            })
            .collect();
        if parts.is_empty() {
            "u_t = 0 (no terms selected)".into()
        } else {
            format!("u_t = {}", parts.join(" + "))
        }
    }
}
