//! Candidate terms: products of powers of `u` and its spatial derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// A monomial `Π_q (∂^q u/∂x^q)^{e_q}`; `exponents[q]` is the power of the
/// `q`-th derivative (`q = 0` is `u` itself). Trailing zeros are trimmed.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct Term {
    exponents: Vec<u32>,
}

impl Term {
    pub fn new(mut exponents: Vec<u32>) -> Self {
        while exponents.last() == Some(&0) {
            exponents.pop();
        }
        Self { exponents }
    }

    pub fn one() -> Self {
        Self::new(vec![])
    }

    /// `u^p · ∂^q u` for `q ≥ 1`, or `u^p` for `q = 0`.
    pub fn power_derivative(p: u32, q: usize) -> Self {
        let mut e = vec![0; q + 1];
        e[0] = p;
        if q > 0 {
            e[q] += 1;
        }
        Self::new(e)
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exponents
    }

    pub fn is_constant(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Highest derivative order appearing in the term.
    pub fn max_derivative(&self) -> usize {
        self.exponents.len().saturating_sub(1)
    }

    pub fn degree(&self) -> u32 {
        self.exponents.iter().sum()
    }
}

fn factor_name(q: usize) -> String {
    if q == 0 {
        "u".to_string()
    } else {
        format!("u_{}", "x".repeat(q))
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_constant() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .exponents
            .iter()
            .enumerate()
            .filter(|(_, &e)| e > 0)
            .map(|(q, &e)| if e == 1 { factor_name(q) } else { format!("{}^{}", factor_name(q), e) })
            .collect();
        write!(f, "{}", parts.join("*"))
    }
}

impl FromStr for Term {
    type Err = Error;

    /// Parses the `Display` form, e.g. `1`, `u^2*u_xxxx`, `u_x^2`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "1" {
            return Ok(Term::one());
        }
        let mut exps: Vec<u32> = Vec::new();
        for part in s.split(['*', '·']) {
            let part = part.trim();
            let (base, pow) = match part.split_once('^') {
                Some((b, p)) => {
                    let p: u32 = p.parse().map_err(|_| Error::InvalidArgument(format!("bad power in `{s}`")))?;
                    (b, p)
                }
                None => (part, 1),
            };
            let q = if base == "u" {
                0
            } else if let Some(xs) = base.strip_prefix("u_") {
                if xs.is_empty() || xs.chars().any(|c| c != 'x') {
                    return invalid(format!("bad factor `{base}` in `{s}`"));
                }
                xs.len()
            } else {
                return invalid(format!("bad factor `{base}` in `{s}`"));
            };
            if exps.len() <= q {
                exps.resize(q + 1, 0);
            }
            exps[q] += pow;
        }
        Ok(Term::new(exps))
    }
}

impl From<Term> for String {
    fn from(t: Term) -> String {
        t.to_string()
    }
}

impl TryFrom<String> for Term {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// How the candidate term list is generated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LibrarySpec {
    /// All `u^p · ∂^q u` for `p ≤ max_poly_power`, `q ≤ max_deriv_order`.
    PowerTimesDerivative { max_poly_power: u32, max_deriv_order: usize, include_constant: bool },
    /// All monomials in `{u, u_x, …, ∂^Q u}` of total degree at most `max_degree`.
    Monomials { max_deriv_order: usize, max_degree: u32, include_constant: bool },
}

impl Default for LibrarySpec {
    fn default() -> Self {
        LibrarySpec::PowerTimesDerivative { max_poly_power: 3, max_deriv_order: 4, include_constant: true }
    }
}

impl LibrarySpec {
    pub fn max_deriv_order(&self) -> usize {
        match *self {
            LibrarySpec::PowerTimesDerivative { max_deriv_order, .. }
            | LibrarySpec::Monomials { max_deriv_order, .. } => max_deriv_order,
        }
    }

    /// Ordered, duplicate-free term list. Derivative order is the outer loop.
    pub fn terms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        match *self {
            LibrarySpec::PowerTimesDerivative { max_poly_power, max_deriv_order, include_constant } => {
                for q in 0..=max_deriv_order {
                    for p in 0..=max_poly_power {
                        let t = Term::power_derivative(p, q);
                        if t.is_constant() && !include_constant {
                            continue;
                        }
                        out.push(t);
                    }
                }
            }
            LibrarySpec::Monomials { max_deriv_order, max_degree, include_constant } => {
                let nfac = max_deriv_order + 1;
                let mut exps = vec![0u32; nfac];
                fn rec(k: usize, left: u32, exps: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
                    if k == exps.len() {
                        out.push(exps.clone());
                        return;
                    }
                    for e in 0..=left {
                        exps[k] = e;
                        rec(k + 1, left - e, exps, out);
                    }
                    exps[k] = 0;
                }
                let mut all = Vec::new();
                rec(0, max_degree, &mut exps, &mut all);
                let mut terms: Vec<Term> = all.into_iter().map(Term::new).collect();
                // Degree first, then lower derivative factors first.
                terms.sort_by_key(|t| {
                    let mut key: Vec<u32> = t.exponents().to_vec();
                    key.resize(nfac, 0);
                    key.reverse();
                    (t.degree(), key)
                });
                for t in terms {
                    if t.is_constant() && !include_constant {
                        continue;
                    }
                    out.push(t);
                }
            }
        }
        out
    }
}
