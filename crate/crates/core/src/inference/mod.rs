//! Dimension selection by BIC, the likelihood-ratio test on trailing rows
//! of `alpha`, column-contrast envelopes, profile means and Wald p-values.

mod contrast;
mod row_test;
mod select;
mod wald;

pub use contrast::{estimate_profile, fit_contrast, fit_contrast_with_completion, ContrastFit, ProfileEstimate};
pub use row_test::test_rows;
pub use select::{select_dimension, DimensionScore, EnvelopeKind, Selection};
pub use wald::{wald_pvalues, WaldResult};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    RowTest,
    Wald,
    Contrast,
}

/// Likelihood-ratio test outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    /// `2 (loglik_alt - loglik_null)`, clipped at 0.
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub loglik_null: f64,
    pub loglik_alt: f64,
}

impl TestResult {
    pub(crate) fn from_logliks(kind: TestKind, loglik_null: f64, loglik_alt: f64, df: usize) -> Self {
        let raw = 2.0 * (loglik_alt - loglik_null);
        if raw < 0.0 {
            log::info!("likelihood ratio statistic {raw:e} clipped to 0");
        }
        let statistic = raw.max(0.0);
        TestResult { kind, statistic, df, p_value: chi2_sf(statistic, df), loglik_null, loglik_alt }
    }
}

/// Upper tail of the chi-squared distribution; `df = 0` is a point mass at 0.
pub fn chi2_sf(x: f64, df: usize) -> f64 {
    if df == 0 {
        return if x > 0.0 { 0.0 } else { 1.0 };
    }
    let d = ChiSquared::new(df as f64).expect("positive degrees of freedom");
    d.sf(x).clamp(0.0, 1.0)
}

/// Lower tail of the chi-squared distribution.
pub fn chi2_cdf(x: f64, df: usize) -> f64 {
    1.0 - chi2_sf(x, df)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn chi2_tail_at_known_quantile() {
        assert_relative_eq!(chi2_sf(3.841458820694124, 1), 0.05, epsilon = 1e-9);
        assert_relative_eq!(chi2_sf(5.991464547107979, 2), 0.05, epsilon = 1e-9);
        assert_eq!(chi2_sf(0.0, 0), 1.0);
    }

    #[test]
    fn negative_statistic_is_clipped() {
        let t = TestResult::from_logliks(TestKind::RowTest, -10.0, -10.0 - 1e-9, 2);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
    }
}
