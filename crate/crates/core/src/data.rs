use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// One site's private subject-level data: the unit that never leaves a site.
///
/// Rows are `(Y, A, X)` with a binary outcome `Y`, binary treatment `A`, and
/// real covariates `X`. The propensity design matrix prepends a constant
/// column unless the input declares that one is already present, so the
/// propensity dimension is `p_γ = d + 1` for `d` raw covariates (or `p_γ = d`
/// when `includes_intercept` is set).
#[derive(Debug, Clone, PartialEq)]
pub struct SiteDataset {
    site_id: String,
    outcome: Vec<u8>,
    treatment: Vec<u8>,
    covariates: DMatrix<f64>,
    design: DMatrix<f64>,
    includes_intercept: bool,
}

impl SiteDataset {
    pub fn new(
        site_id: impl Into<String>,
        outcome: Vec<u8>,
        treatment: Vec<u8>,
        covariates: DMatrix<f64>,
        includes_intercept: bool,
    ) -> Result<Self> {
        let site_id = site_id.into();
        let n = outcome.len();
        if n == 0 {
            return Err(Error::EmptyDataset(site_id));
        }
        if treatment.len() != n {
            return Err(Error::DimensionMismatch {
                context: "SiteDataset treatment length",
                expected: n,
                actual: treatment.len(),
            });
        }
        if covariates.nrows() != n {
            return Err(Error::DimensionMismatch {
                context: "SiteDataset covariate rows",
                expected: n,
                actual: covariates.nrows(),
            });
        }
        for (i, &y) in outcome.iter().enumerate() {
            if y > 1 {
                return Err(Error::InvalidCell {
                    row: i + 1,
                    column: 1,
                    message: format!("outcome must be 0 or 1, got {y}"),
                });
            }
        }
        for (i, &a) in treatment.iter().enumerate() {
            if a > 1 {
                return Err(Error::InvalidCell {
                    row: i + 1,
                    column: 2,
                    message: format!("treatment must be 0 or 1, got {a}"),
                });
            }
        }
        for i in 0..n {
            for c in 0..covariates.ncols() {
                let v = covariates[(i, c)];
                if !v.is_finite() {
                    return Err(Error::InvalidCell {
                        row: i + 1,
                        column: c + 3,
                        message: format!("covariate must be finite, got {v}"),
                    });
                }
            }
        }
        if includes_intercept {
            for i in 0..n {
                if covariates[(i, 0)] != 1.0 {
                    return Err(Error::InvalidCell {
                        row: i + 1,
                        column: 3,
                        message: "declared intercept column is not identically 1".into(),
                    });
                }
            }
        }
        let design = if includes_intercept {
            covariates.clone()
        } else {
            let mut design = DMatrix::zeros(n, covariates.ncols() + 1);
            for i in 0..n {
                design[(i, 0)] = 1.0;
                for c in 0..covariates.ncols() {
                    design[(i, c + 1)] = covariates[(i, c)];
                }
            }
            design
        };
        Ok(Self {
            site_id,
            outcome,
            treatment,
            covariates,
            design,
            includes_intercept,
        })
    }

    pub fn site_id(&self) -> &str {
        &self.site_id
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    /// Propensity-model dimension (intercept included).
    pub fn p_gamma(&self) -> usize {
        self.design.ncols()
    }

    pub fn outcome(&self) -> &[u8] {
        &self.outcome
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    /// Raw covariates exactly as supplied (no intercept prepended).
    pub fn covariates(&self) -> &DMatrix<f64> {
        &self.covariates
    }

    /// Propensity design matrix: a leading constant-1 column followed by the
    /// covariates (or the covariates as-is when they already carry one).
    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    pub fn includes_intercept(&self) -> bool {
        self.includes_intercept
    }

    /// Concatenates several sites into one pooled dataset (row order is the
    /// site order, then row order within each site).
    pub fn pooled(sites: &[SiteDataset]) -> Result<SiteDataset> {
        let first = sites
            .first()
            .ok_or_else(|| Error::EmptyDataset("pooled".into()))?;
        let d = first.covariates.ncols();
        let mut outcome = Vec::new();
        let mut treatment = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for site in sites {
            if site.covariates.ncols() != d || site.includes_intercept != first.includes_intercept {
                return Err(Error::DimensionMismatch {
                    context: "pooled covariate columns",
                    expected: d,
                    actual: site.covariates.ncols(),
                });
            }
            outcome.extend_from_slice(&site.outcome);
            treatment.extend_from_slice(&site.treatment);
            for i in 0..site.n() {
                for c in 0..d {
                    rows.push(site.covariates[(i, c)]);
                }
            }
        }
        let n = outcome.len();
        let covariates = DMatrix::from_row_slice(n, d, &rows);
        SiteDataset::new(
            "pooled",
            outcome,
            treatment,
            covariates,
            first.includes_intercept,
        )
    }

    /// Reads the CSV interchange format: header `Y,A,X1,...,Xd`, `Y` and `A`
    /// integers in `{0,1}`, covariates as decimal floats, no missing values.
    /// Row/column coordinates in errors are 1-based over data rows.
    pub fn from_csv_reader(reader: impl Read, site_id: impl Into<String>) -> Result<Self> {
        let site_id = site_id.into();
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "Y" || &headers[1] != "A" {
            return Err(Error::InvalidCell {
                row: 0,
                column: 1,
                message: format!(
                    "header must be Y,A,X1,...,Xd with at least one covariate; got {:?}",
                    headers.iter().collect::<Vec<_>>()
                ),
            });
        }
        let d = headers.len() - 2;
        let mut outcome = Vec::new();
        let mut treatment = Vec::new();
        let mut rows: Vec<f64> = Vec::new();
        for (idx, record) in rdr.records().enumerate() {
            let record = record?;
            let row = idx + 1;
            if record.len() != headers.len() {
                return Err(Error::InvalidCell {
                    row,
                    column: record.len().min(headers.len()) + 1,
                    message: format!(
                        "expected {} fields, got {} (missing values are not accepted)",
                        headers.len(),
                        record.len()
                    ),
                });
            }
            let parse_binary = |column: usize, name: &str| -> Result<u8> {
                let field = record[column - 1].trim();
                if field.is_empty() {
                    return Err(Error::InvalidCell {
                        row,
                        column,
                        message: format!("missing {name} value"),
                    });
                }
                match field.parse::<u8>() {
                    Ok(v @ (0 | 1)) => Ok(v),
                    _ => Err(Error::InvalidCell {
                        row,
                        column,
                        message: format!("{name} must be the integer 0 or 1, got '{field}'"),
                    }),
                }
            };
            outcome.push(parse_binary(1, "outcome")?);
            treatment.push(parse_binary(2, "treatment")?);
            for c in 0..d {
                let column = c + 3;
                let field = record[c + 2].trim();
                if field.is_empty() {
                    return Err(Error::InvalidCell {
                        row,
                        column,
                        message: "missing covariate value".into(),
                    });
                }
                let value: f64 = field.parse().map_err(|_| Error::InvalidCell {
                    row,
                    column,
                    message: format!("covariate must be a decimal float, got '{field}'"),
                })?;
                rows.push(value);
            }
        }
        let n = outcome.len();
        if n == 0 {
            return Err(Error::EmptyDataset(site_id));
        }
        let covariates = DMatrix::from_row_slice(n, d, &rows);
        SiteDataset::new(site_id, outcome, treatment, covariates, false)
    }

    /// Reads a CSV file; the site id is the file stem.
    pub fn from_csv_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let site_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "site".to_string());
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, site_id)
    }

    /// Writes the CSV interchange format. Floats use the shortest decimal
    /// representation that round-trips the exact binary64 value.
    pub fn to_csv_writer(&self, writer: impl Write) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let d = self.covariates.ncols();
        let mut header = vec!["Y".to_string(), "A".to_string()];
        for c in 0..d {
            header.push(format!("X{}", c + 1));
        }
        wtr.write_record(&header)?;
        for i in 0..self.n() {
            let mut record = vec![self.outcome[i].to_string(), self.treatment[i].to_string()];
            for c in 0..d {
                record.push(format!("{}", self.covariates[(i, c)]));
            }
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn to_csv_path(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.to_csv_writer(file)
    }
}
