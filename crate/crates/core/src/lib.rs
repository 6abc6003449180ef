//! Envelope and constrained-mean estimation for multivariate linear
//! regression with longitudinal responses.
//!
//! The crate fits the unrestricted (`um`), constrained (`cm`), envelope
//! (`em`), envelope-constrained (`ecm`) and scaled envelope-constrained
//! (`secm`) estimators, provides their asymptotic covariances, likelihood
//! ratio tests and dimension selection, and a seeded simulation harness.

pub mod error;
pub mod estimators;
pub mod fixtures;
pub mod inference;
pub mod linalg;
pub mod model;
pub mod sim;
mod serde_mat;

pub use error::{EnvError, Result};
pub use estimators::{fit_cm, fit_ecm, fit_em, fit_secm, fit_um, EnvelopeFit, FitOptions, Method};
pub use linalg::{SemiOrthBasis, StiefelOptions, SymMatrix};
pub use model::{Dataset, InterceptMode};
