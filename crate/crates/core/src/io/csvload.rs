//! CSV ingestion.

use std::io::Read;
use std::path::Path;

use crate::model::{validate_dataset, Dataset, RawDataset};
use crate::{Error, Result};

use super::config::{OrdinalColumn, RunConfig};

/// Which columns to read and how.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSpec {
    pub responses: Vec<OrdinalColumn>,
    pub ordinal_covariates: Vec<OrdinalColumn>,
    pub covariates: Vec<String>,
}

impl From<&RunConfig> for DataSpec {
    fn from(c: &RunConfig) -> Self {
        Self {
            responses: c.responses.clone(),
            ordinal_covariates: c.ordinal_covariates.clone(),
            covariates: c.covariates.clone(),
        }
    }
}

pub fn load_csv(path: &Path, spec: &DataSpec) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_csv(file, spec)
}

/// Parses UTF-8 CSV with a header row. Row and column numbers in errors are
/// 1-based positions in the file's data rows and header.
pub fn parse_csv<R: Read>(reader: R, spec: &DataSpec) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let find = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::invalid(format!("column '{name}' not found in the header")))
    };
    let ordinal: Vec<(usize, u32)> = spec
        .responses
        .iter()
        .chain(&spec.ordinal_covariates)
        .map(|c| Ok((find(&c.column)?, c.categories)))
        .collect::<Result<_>>()?;
    let continuous: Vec<usize> = spec.covariates.iter().map(|c| find(c)).collect::<Result<_>>()?;
    if ordinal.is_empty() {
        return Err(Error::invalid("at least one response column is required"));
    }

    let mut raw = RawDataset {
        category_counts: ordinal.iter().map(|o| o.1).collect(),
        ordinal_covariate_flags: (0..ordinal.len()).map(|j| j >= spec.responses.len()).collect(),
        ..RawDataset::default()
    };
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let cell = |col: usize| -> Result<&str> {
            match rec.get(col) {
                Some(s) if !s.is_empty() => Ok(s),
                _ => Err(Error::Data {
                    row,
                    col: col + 1,
                    msg: format!("missing value in column '{}'", &header[col]),
                }),
            }
        };
        let mut y = Vec::with_capacity(ordinal.len());
        for &(col, cats) in &ordinal {
            let s = cell(col)?;
            let code: i64 = s.parse().map_err(|_| Error::Data {
                row,
                col: col + 1,
                msg: format!("'{s}' is not an integer code"),
            })?;
            if code < 1 || code > cats as i64 {
                return Err(Error::Data {
                    row,
                    col: col + 1,
                    msg: format!("code {code} outside 1..={cats}"),
                });
            }
            y.push(code as u32);
        }
        let mut x = Vec::with_capacity(continuous.len());
        for &col in &continuous {
            let s = cell(col)?;
            let v: f64 = s.parse().map_err(|_| Error::Data {
                row,
                col: col + 1,
                msg: format!("'{s}' is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    col: col + 1,
                    msg: format!("non-finite value '{s}'"),
                });
            }
            x.push(v);
        }
        raw.y.push(y);
        raw.x.push(x);
    }
    validate_dataset(raw)
}
