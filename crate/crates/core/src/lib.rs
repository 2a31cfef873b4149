//! Nonautonomous Kolmogorov evolution operators `G(t,s)`, their evolution
//! systems of measures `{μ_t}`, and numerical checks of the gradient,
//! log-Sobolev, Poincaré, hypercontractivity and decay estimates they satisfy.
//!
//! Linear (Ornstein–Uhlenbeck) models are handled in closed form by [`ou`];
//! general drifts go through the Euler–Maruyama engine in [`sde`]. Both feed
//! the measure constructions in [`measures`] and the evaluators in [`ineq`].

// `!(x > 0.0)` is used on purpose so that NaN fails validation; quadrature
// tables carry full published precision.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod coeff;
pub mod engine;
pub mod error;
pub mod ineq;
pub mod linalg;
pub mod measures;
pub mod model;
pub mod ode;
pub mod ou;
pub mod quad;
pub mod report;
pub mod sde;
pub mod testfn;

pub use coeff::{MatrixFn, VectorFn};
pub use engine::{Constants, Coupling, EvolutionEngine, GaussianEngine, MonteCarloEngine, Propagation};
pub use error::{Error, Result};
pub use ineq::{Check, DecaySide, HyperCheck, RateFit};
pub use measures::{EmpiricalMeasure, Evaluator, Measure};
pub use model::catalog::CatalogModel;
pub use model::{AuditGrid, Drift, ProblemSpec};
pub use ou::{GaussianMeasure, OUModel, OmegaFit};
pub use report::{Row, Verdict};
pub use sde::{Scheme, SimConfig};
pub use testfn::TestFunction;
