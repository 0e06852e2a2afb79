//! Decide local minimality of bivariate polynomial functions (smooth or
//! absolute value of a polynomial) at a point, and measure the sharp growth
//! order, by following the tangency variety of the function at that point.
//!
//! The pipeline is: [`tangency`] builds the tangency polynomial and slices it
//! against circles, [`branchtrack`] follows the slice points down a ladder of
//! radii, [`expansion`] fits `f_k(t) - f(x̄) ≈ a_k t^{α_k}` on every branch,
//! and [`classify`] turns the fitted coefficients into a verdict. The
//! [`oracle`] and [`verify`] modules are independent numerical cross-checks,
//! and [`report`] ties everything into one deterministic run.

pub mod branchtrack;
pub mod classify;
pub mod expansion;
pub mod oracle;
pub mod polynomial;
pub mod realroots;
pub mod report;
pub mod tangency;
pub mod verify;

pub use classify::Verdict;
pub use report::{run, AnalysisReport, RunConfig, RunError};
pub use tangency::{FunctionModel, ModelKind};
