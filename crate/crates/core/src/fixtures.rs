//! Bundled data sets.

use crate::error::{EnvError, Result};
use crate::model::Dataset;
use nalgebra::DMatrix;

/// Dental growth measurements, all 27 subjects.
pub const DENTAL_CSV: &str = include_str!("../data/dental.csv");
/// Description of [`DENTAL_CSV`], including the case removed from analyses.
pub const DENTAL_META_JSON: &str = include_str!("../data/dental.meta.json");
/// Subject excluded from the analysis set.
pub const DENTAL_REMOVED_ID: &str = "M13";
/// Measurement ages.
pub const DENTAL_TIMES: [f64; 4] = [8.0, 10.0, 12.0, 14.0];

/// The 26-subject analysis set: responses at the four ages and a boy
/// indicator as the single predictor.
pub fn dental() -> Dataset {
    dental_rows(true).expect("bundled dental data parses")
}

/// All 27 subjects, including the removed case.
pub fn dental_with_outlier() -> Dataset {
    dental_rows(false).expect("bundled dental data parses")
}

fn dental_rows(drop_removed: bool) -> Result<Dataset> {
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for (line_no, line) in DENTAL_CSV.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(EnvError::InvalidData(format!("dental.csv line {}: expected 6 fields", line_no + 1)));
        }
        if drop_removed && fields[0] == DENTAL_REMOVED_ID {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| EnvError::InvalidData(format!("dental.csv line {}: bad number `{s}`", line_no + 1)))
        };
        xs.push(parse(fields[1])?);
        for f in &fields[2..] {
            ys.push(parse(f)?);
        }
    }
    let n = xs.len();
    Dataset::new(DMatrix::from_row_slice(n, 4, &ys), DMatrix::from_column_slice(n, 1, &xs))
}

/// Linear growth design `U = (1, t)` at the dental ages.
pub fn dental_linear_design() -> DMatrix<f64> {
    DMatrix::from_fn(4, 2, |i, j| if j == 0 { 1.0 } else { DENTAL_TIMES[i] })
}
