//! Discovery of partial differential equations with time- or space-varying
//! coefficients from gridded field data.
//!
//! The pipeline: simulate or load a [`SpatioTemporalField`], optionally
//! denoise it ([`filters`]), estimate derivatives ([`differentiation`]),
//! build the grouped candidate-term system ([`library`]), and select terms
//! with threshold Bayesian group lasso ([`tbglss`]) or one of the
//! [`baselines`]. [`selection`] compares fitted models and runs parameter
//! sweeps; [`uncertainty`] turns posterior draws into error bands and
//! bootstrap intervals.

pub mod baselines;
pub mod differentiation;
pub mod error;
pub mod field;
pub mod filters;
pub mod gibbs;
pub mod io;
pub mod library;
pub mod pde_solvers;
pub mod pipeline;
pub mod seeds;
pub mod selection;
pub mod tbglss;
pub mod uncertainty;

pub use error::{Error, Result};
pub use field::SpatioTemporalField;
