use crate::error::{EnvError, Result};
use nalgebra::DMatrix;

/// Responses `Y` (`n x r`, one row per subject) and predictors `X` (`n x p`).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DMatrix<f64>,
    x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.nrows() != x.nrows() {
            return Err(EnvError::DimensionMismatch {
                context: "dataset rows".into(),
                expected: format!("{} rows in X", y.nrows()),
                found: x.nrows().to_string(),
            });
        }
        if y.ncols() == 0 || x.ncols() == 0 {
            return Err(EnvError::InvalidData("need at least one response and one predictor".into()));
        }
        if y.nrows() < 2 {
            return Err(EnvError::InvalidData(format!("need at least 2 observations, got {}", y.nrows())));
        }
        for (name, m) in [("Y", &y), ("X", &x)] {
            if let Some(pos) = m.iter().position(|v| !v.is_finite()) {
                let (row, col) = (pos % m.nrows(), pos / m.nrows());
                return Err(EnvError::InvalidData(format!(
                    "non-finite value in {name} at row {row}, column {col}"
                )));
            }
        }
        Ok(Dataset { y, x })
    }

    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.nrows()
    }

    pub fn r(&self) -> usize {
        self.y.ncols()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}
