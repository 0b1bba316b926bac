//! JSON model specifications: `{"family": "...", ...parameters}`.

use super::CopulaModel;
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Independence {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    Gaussian {
        correlation: CorrelationSpec,
    },
    Clayton {
        theta: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    HuslerReiss {
        lambda: f64,
    },
    BlockwiseInductive {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationSpec {
    /// All off-diagonal entries equal to `rho`.
    Equicorrelated {
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    /// First `size` coordinates equicorrelated with `rho`, the rest independent.
    Block {
        size: usize,
        rho: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        d: Option<usize>,
    },
    Matrix(Vec<Vec<f64>>),
    /// Square CSV file without header.
    Csv {
        path: PathBuf,
    },
}

fn resolve_dim(own: Option<usize>, cell: Option<usize>) -> Result<usize> {
    match (own, cell) {
        (Some(a), Some(b)) if a != b => Err(Error::config(
            "model.d",
            format!("model dimension {a} conflicts with requested dimension {b}"),
        )),
        (Some(a), _) | (None, Some(a)) => Ok(a),
        (None, None) => Err(Error::config("model.d", "dimension is not specified")),
    }
}

pub fn read_correlation_csv(path: &Path) -> Result<DMatrix<f64>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidData(format!("cannot parse `{f}` in correlation file")))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    matrix_from_rows(&rows)
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let d = rows.len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidParameter("correlation matrix is not square".into()));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl CorrelationSpec {
    pub fn build(&self, cell_d: Option<usize>) -> Result<DMatrix<f64>> {
        match self {
            Self::Equicorrelated { rho, d } => {
                let d = resolve_dim(*d, cell_d)?;
                Ok(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { *rho }))
            }
            Self::Block { size, rho, d } => {
                let d = resolve_dim(*d, cell_d)?;
                if *size > d {
                    return Err(Error::config("model.correlation.block.size", "block larger than d"));
                }
                Ok(DMatrix::from_fn(d, d, |i, j| {
                    if i == j {
                        1.0
                    } else if i < *size && j < *size {
                        *rho
                    } else {
                        0.0
                    }
                }))
            }
            Self::Matrix(rows) => {
                let m = matrix_from_rows(rows)?;
                resolve_dim(Some(m.nrows()), cell_d)?;
                Ok(m)
            }
            Self::Csv { path } => {
                let m = read_correlation_csv(path)?;
                resolve_dim(Some(m.nrows()), cell_d)?;
                Ok(m)
            }
        }
    }
}

impl ModelSpec {
    /// Instantiate, taking the dimension from the spec or from `cell_d`.
    pub fn build(&self, cell_d: Option<usize>) -> Result<CopulaModel> {
        let wrap = |e: Error| match e {
            Error::InvalidParameter(msg) => Error::config("model", msg),
            other => other,
        };
        match self {
            Self::Independence { d } => CopulaModel::independence(resolve_dim(*d, cell_d)?),
            Self::Gaussian { correlation } => CopulaModel::gaussian(correlation.build(cell_d)?),
            Self::Clayton { theta, d } => CopulaModel::clayton(*theta, resolve_dim(*d, cell_d)?),
            Self::HuslerReiss { lambda } => {
                resolve_dim(Some(2), cell_d)?;
                CopulaModel::husler_reiss(*lambda)
            }
            Self::BlockwiseInductive { d } => CopulaModel::blockwise_inductive(resolve_dim(*d, cell_d)?),
        }
        .map_err(wrap)
    }

    /// True if the spec pins its own dimension.
    pub fn fixed_dim(&self) -> Option<usize> {
        match self {
            Self::Independence { d } | Self::Clayton { d, .. } | Self::BlockwiseInductive { d } => *d,
            Self::HuslerReiss { .. } => Some(2),
            Self::Gaussian { correlation } => match correlation {
                CorrelationSpec::Equicorrelated { d, .. } | CorrelationSpec::Block { d, .. } => *d,
                CorrelationSpec::Matrix(rows) => Some(rows.len()),
                CorrelationSpec::Csv { .. } => None,
            },
        }
    }
}
