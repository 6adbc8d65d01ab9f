//! A numerical laboratory for geometric-tempered Langevin dynamics.
//!
//! The crate simulates Langevin dynamics whose drift follows the geometric
//! path `μ_λ ∝ ν^{1−λ} π^λ` under a tempering schedule, evaluates the
//! continuous- and discrete-time KL convergence bounds for such schemes,
//! computes the schedule-quality functional `G_t` and its optimal schedule,
//! and probes Poincaré / log-Sobolev behaviour of the path by quadrature.

pub mod bounds;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod inequalities;
pub mod metrics;
pub mod plot;
pub mod quadrature;
pub mod sampler;
pub mod schedules;
pub mod special;

pub use error::{Error, Result};
