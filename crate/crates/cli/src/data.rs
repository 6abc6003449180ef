use crate::error::{CliError, CliResult};
use envcore::fixtures::{dental, DENTAL_META_JSON, DENTAL_TIMES};
use envcore::Dataset;
use nalgebra::DMatrix;
use serde::Serialize;
use std::f64::consts::PI;
use std::path::Path;

/// Data set plus the column names it came from.
#[derive(Debug, Clone)]
pub struct LoadedData {
    pub source: String,
    pub data: Dataset,
    pub responses: Vec<String>,
    pub predictors: Vec<String>,
    /// Measurement times of the responses, used by the `poly` and `trig` designs.
    pub times: Vec<f64>,
    pub metadata: Option<serde_json::Value>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataSummary {
    pub source: String,
    pub n: usize,
    pub r: usize,
    pub p: usize,
    pub responses: Vec<String>,
    pub predictors: Vec<String>,
    pub times: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metadata: Option<serde_json::Value>,
}

impl LoadedData {
    pub fn summary(&self) -> DataSummary {
        DataSummary {
            source: self.source.clone(),
            n: self.data.n(),
            r: self.data.r(),
            p: self.data.p(),
            responses: self.responses.clone(),
            predictors: self.predictors.clone(),
            times: self.times.clone(),
            metadata: self.metadata.clone(),
        }
    }
}

pub struct ColumnChoice<'a> {
    pub responses: Option<&'a [String]>,
    pub response_prefix: Option<&'a str>,
    pub predictors: Option<&'a [String]>,
    pub times: Option<&'a [f64]>,
}

/// Loads `@dental` or a CSV file with a header row.
pub fn load_data(spec: &str, cols: &ColumnChoice) -> CliResult<LoadedData> {
    if spec == "@dental" {
        let meta: serde_json::Value = serde_json::from_str(DENTAL_META_JSON).expect("bundled metadata parses");
        return Ok(LoadedData {
            source: "@dental".into(),
            data: dental(),
            responses: ["age8", "age10", "age12", "age14"].map(String::from).to_vec(),
            predictors: vec!["sex".into()],
            times: cols.times.map(|t| t.to_vec()).unwrap_or_else(|| DENTAL_TIMES.to_vec()),
            metadata: Some(meta),
        });
    }
    if spec.starts_with('@') {
        return Err(CliError::data(format!("{spec}: unknown bundled data set (available: @dental)")));
    }
    load_csv(Path::new(spec), cols)
}

fn load_csv(path: &Path, cols: &ColumnChoice) -> CliResult<LoadedData> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{name}: {e}")))?;
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::data(format!("{name}: header row: {e}")))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |c: &str| {
        headers
            .iter()
            .position(|h| h == c)
            .ok_or_else(|| CliError::data(format!("{name}: no column named '{c}' in the header")))
    };
    let resp_idx: Vec<usize> = match (cols.responses, cols.response_prefix) {
        (Some(list), _) => list.iter().map(|c| find(c)).collect::<CliResult<_>>()?,
        (None, Some(prefix)) => headers.iter().enumerate().filter(|(_, h)| h.starts_with(prefix)).map(|(i, _)| i).collect(),
        (None, None) => {
            return Err(CliError::data(format!("{name}: choose responses with --responses or --response-prefix")))
        }
    };
    if resp_idx.is_empty() {
        return Err(CliError::data(format!("{name}: no response columns selected")));
    }
    let pred_idx: Vec<usize> = match cols.predictors {
        Some(list) => list.iter().map(|c| find(c)).collect::<CliResult<_>>()?,
        None => (0..headers.len())
            .filter(|i| !resp_idx.contains(i) && !headers[*i].eq_ignore_ascii_case("id"))
            .collect(),
    };
    if pred_idx.is_empty() {
        return Err(CliError::data(format!("{name}: no predictor columns selected")));
    }
    let mut ys = Vec::new();
    let mut xs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| CliError::data(format!("{name}: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let get = |i: usize| -> CliResult<f64> {
            let raw = rec.get(i).ok_or_else(|| {
                CliError::data(format!("{name}: row {line}, column '{}': missing field", headers[i]))
            })?;
            let v: f64 = raw.trim().parse().map_err(|_| {
                CliError::data(format!("{name}: row {line}, column '{}': cannot parse '{raw}' as a number", headers[i]))
            })?;
            if !v.is_finite() {
                return Err(CliError::data(format!("{name}: row {line}, column '{}': non-finite value", headers[i])));
            }
            Ok(v)
        };
        for &i in &resp_idx {
            ys.push(get(i)?);
        }
        for &i in &pred_idx {
            xs.push(get(i)?);
        }
    }
    let (r, p) = (resp_idx.len(), pred_idx.len());
    let n = ys.len() / r;
    let data = Dataset::new(DMatrix::from_row_slice(n, r, &ys), DMatrix::from_row_slice(n, p, &xs))
        .map_err(|e| CliError::data(format!("{name}: {e}")))?;
    let responses: Vec<String> = resp_idx.iter().map(|&i| headers[i].clone()).collect();
    let times = match cols.times {
        Some(t) => t.to_vec(),
        None => times_from_names(&responses),
    };
    Ok(LoadedData {
        source: name,
        data,
        responses,
        predictors: pred_idx.iter().map(|&i| headers[i].clone()).collect(),
        times,
        metadata: None,
    })
}

/// Trailing numbers of the response names (`age8` gives 8), or `1..=r`
/// when any name lacks one.
fn times_from_names(names: &[String]) -> Vec<f64> {
    let parsed: Option<Vec<f64>> = names
        .iter()
        .map(|n| {
            let start = n.rfind(|c: char| !(c.is_ascii_digit() || c == '.')).map_or(0, |i| i + 1);
            n[start..].parse().ok()
        })
        .collect();
    parsed.unwrap_or_else(|| (1..=names.len()).map(|i| i as f64).collect())
}

/// How the within-subject design `U` is obtained.
#[derive(Debug, Clone, PartialEq)]
pub enum DesignSpec {
    File(String),
    /// Columns `1, t, .., t^d`.
    Poly(usize),
    /// Columns `1, t/T, (t/T)^2, cos(2 pi t/T), sin(2 pi t/T)`.
    Trig(f64),
    Identity,
}

impl std::str::FromStr for DesignSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s == "identity" {
            return Ok(DesignSpec::Identity);
        }
        if let Some(d) = s.strip_prefix("poly:") {
            return d.parse().map(DesignSpec::Poly).map_err(|_| format!("bad polynomial degree in '{s}'"));
        }
        if let Some(t) = s.strip_prefix("trig:") {
            return match t.parse::<f64>() {
                Ok(v) if v > 0.0 => Ok(DesignSpec::Trig(v)),
                _ => Err(format!("bad period in '{s}'")),
            };
        }
        Ok(DesignSpec::File(s.to_string()))
    }
}

impl DesignSpec {
    pub fn label(&self) -> String {
        match self {
            DesignSpec::File(p) => p.clone(),
            DesignSpec::Poly(d) => format!("poly:{d}"),
            DesignSpec::Trig(t) => format!("trig:{t}"),
            DesignSpec::Identity => "identity".into(),
        }
    }

    pub fn build(&self, r: usize, times: &[f64]) -> CliResult<DMatrix<f64>> {
        let u = match self {
            DesignSpec::Identity => DMatrix::identity(r, r),
            DesignSpec::Poly(d) => {
                check_times(times, r)?;
                DMatrix::from_fn(r, d + 1, |i, j| times[i].powi(j as i32))
            }
            DesignSpec::Trig(period) => {
                check_times(times, r)?;
                DMatrix::from_fn(r, 5, |i, j| {
                    let s = times[i] / period;
                    match j {
                        0 => 1.0,
                        1 => s,
                        2 => s * s,
                        3 => (2.0 * PI * s).cos(),
                        _ => (2.0 * PI * s).sin(),
                    }
                })
            }
            DesignSpec::File(path) => read_numeric_csv(Path::new(path))?,
        };
        if u.nrows() != r {
            return Err(CliError::data(format!("{}: U has {} rows but there are {r} responses", self.label(), u.nrows())));
        }
        if u.ncols() > r {
            return Err(CliError::data(format!("{}: U has {} columns, more than r = {r}", self.label(), u.ncols())));
        }
        Ok(u)
    }
}

fn check_times(times: &[f64], r: usize) -> CliResult<()> {
    if times.len() != r {
        return Err(CliError::data(format!("{} measurement times given for {r} responses", times.len())));
    }
    Ok(())
}

/// Reads a numeric matrix from CSV. A first row that does not parse is
/// taken as a header.
pub fn read_numeric_csv(path: &Path) -> CliResult<DMatrix<f64>> {
    let name = path.display().to_string();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::data(format!("{name}: {e}")))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::data(format!("{name}: {e}")))?;
        let line = rec.position().map(|p| p.line()).unwrap_or(idx as u64 + 1);
        let parsed: Vec<std::result::Result<f64, String>> = rec
            .iter()
            .enumerate()
            .map(|(j, f)| {
                f.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format!("{name}: row {line}, column {}: cannot parse '{f}' as a number", j + 1))
            })
            .collect();
        if idx == 0 && parsed.iter().any(|p| p.is_err()) {
            continue;
        }
        let row = parsed.into_iter().collect::<std::result::Result<Vec<f64>, String>>().map_err(CliError::Data)?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(CliError::data(format!(
                    "{name}: row {line} has {} columns, expected {}",
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::data(format!("{name}: no numeric rows")));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_row_iterator(nr, nc, rows.into_iter().flatten()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn design_specs_parse() {
        assert_eq!("identity".parse::<DesignSpec>().unwrap(), DesignSpec::Identity);
        assert_eq!("poly:1".parse::<DesignSpec>().unwrap(), DesignSpec::Poly(1));
        assert_eq!("trig:6".parse::<DesignSpec>().unwrap(), DesignSpec::Trig(6.0));
        assert!("poly:x".parse::<DesignSpec>().is_err());
        assert_eq!("u.csv".parse::<DesignSpec>().unwrap(), DesignSpec::File("u.csv".into()));
    }

    #[test]
    fn poly_design_matches_linear_growth() {
        let u = DesignSpec::Poly(1).build(4, &DENTAL_TIMES).unwrap();
        assert_eq!(u, envcore::fixtures::dental_linear_design());
    }

    #[test]
    fn times_come_from_names() {
        let names = ["age8", "age10"].map(String::from);
        assert_eq!(times_from_names(&names), vec![8.0, 10.0]);
        let names = ["a", "b"].map(String::from);
        assert_eq!(times_from_names(&names), vec![1.0, 2.0]);
    }
}
