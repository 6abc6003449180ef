//! Data containers, the response transformation `Y -> (Y_D, Y_S)`, sample
//! moments and the conditional decomposition of a response covariance.

mod data;
mod decomposition;
mod moments;
mod transform;

pub use data::Dataset;
pub use decomposition::{assemble_sigma, ConditionalDecomposition};
pub use moments::{compute_full_moments, compute_moments, regression_residual_cov, resid_cov, FullMoments, Moments};
pub use transform::{transform_responses, TransformedData};

use serde::{Deserialize, Serialize};

/// How intercepts enter the constrained model.
///
/// `Model2`: only `Y_D` has an intercept; `Y_S` has mean zero, so its
/// marginal moment is the uncentered `T_S`.
/// `Model3`: both parts have free intercepts; the marginal moment of `Y_S`
/// is the centered `S_S`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InterceptMode {
    Model2,
    Model3,
}

impl std::str::FromStr for InterceptMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "model2" | "2" => Ok(InterceptMode::Model2),
            "model3" | "3" => Ok(InterceptMode::Model3),
            other => Err(format!("unknown intercept mode `{other}` (use model2 or model3)")),
        }
    }
}
