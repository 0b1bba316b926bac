//! Raw observations, column-wise max-ranks and pseudo-observations.

use crate::error::{Error, Result};
use crate::rng;
use rand::Rng;
use rayon::prelude::*;
use std::io::Read;
use std::path::Path;

/// `n x d` matrix of finite real observations, rows are samples.
///
/// Stored column-major since every rank computation works per column.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    n: usize,
    d: usize,
    values: Vec<f64>,
    names: Vec<String>,
}

impl DataMatrix {
    /// Build from column vectors. Requires `n >= 2`, `d >= 2`, finite entries.
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let d = columns.len();
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidData("columns have unequal lengths".into()));
        }
        let values: Vec<f64> = columns.into_iter().flatten().collect();
        Self::from_column_major(n, d, values)
    }

    /// Build from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidData(format!(
                "row {} has {} fields, expected {d}",
                bad + 1,
                rows[bad].len()
            )));
        }
        let mut values = vec![0.0; n * d];
        for (i, row) in rows.iter().enumerate() {
            for (j, &x) in row.iter().enumerate() {
                values[j * n + i] = x;
            }
        }
        Self::from_column_major(n, d, values)
    }

    fn from_column_major(n: usize, d: usize, values: Vec<f64>) -> Result<Self> {
        if n < 2 || d < 2 {
            return Err(Error::InvalidData(format!(
                "need at least 2 rows and 2 columns, got {n} x {d}"
            )));
        }
        if let Some(pos) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidData(format!(
                "non-finite value in row {}, column {}",
                pos % n + 1,
                pos / n + 1
            )));
        }
        let names = (1..=d).map(|j| format!("V{j}")).collect();
        Ok(Self { n, d, values, names })
    }

    pub fn with_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: names.len(),
            });
        }
        self.names = names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    /// Apply `f` to every entry of column `j`.
    pub fn map_column(&self, j: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut out = self.clone();
        for x in &mut out.values[j * self.n..(j + 1) * self.n] {
            *x = f(*x);
        }
        Self::from_column_major(out.n, out.d, out.values).and_then(|m| m.with_names(self.names.clone()))
    }

    /// Read a CSV file: one observation per row, `.` as decimal point.
    pub fn from_csv_path(path: impl AsRef<Path>, has_header: bool) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        Self::from_csv_reader(file, has_header)
    }

    pub fn from_csv_reader<R: Read>(reader: R, has_header: bool) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let names: Option<Vec<String>> = if has_header {
            Some(rdr.headers()?.iter().map(str::to_string).collect())
        } else {
            None
        };
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = rec
                .iter()
                .enumerate()
                .map(|(j, field)| {
                    field.parse::<f64>().map_err(|_| {
                        Error::InvalidData(format!(
                            "cannot parse `{field}` in data row {}, column {}",
                            i + 1,
                            j + 1
                        ))
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        let m = Self::from_rows(&rows)?;
        match names {
            Some(names) => m.with_names(names),
            None => Ok(m),
        }
    }
}

/// Rank-based pseudo-observations `uhat[i][j] = ranks[i][j] / n`.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoObsMatrix {
    n: usize,
    d: usize,
    ranks: Vec<u32>,
    uhat: Vec<f64>,
}

impl PseudoObsMatrix {
    /// Build from ranks stored column-major; each column must be a permutation of `1..=n`.
    pub fn from_rank_columns(n: usize, ranks: Vec<Vec<u32>>) -> Result<Self> {
        let d = ranks.len();
        let mut seen = vec![false; n];
        for (j, col) in ranks.iter().enumerate() {
            if col.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: col.len(),
                });
            }
            seen.iter_mut().for_each(|s| *s = false);
            for &r in col {
                let r = r as usize;
                if r == 0 || r > n || seen[r - 1] {
                    return Err(Error::TiesDetected { column: j });
                }
                seen[r - 1] = true;
            }
        }
        let ranks: Vec<u32> = ranks.into_iter().flatten().collect();
        let nf = n as f64;
        let uhat = ranks.iter().map(|&r| r as f64 / nf).collect();
        Ok(Self { n, d, ranks, uhat })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ranks(&self, j: usize) -> &[u32] {
        &self.ranks[j * self.n..(j + 1) * self.n]
    }

    pub fn uhat(&self, j: usize) -> &[f64] {
        &self.uhat[j * self.n..(j + 1) * self.n]
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[j * self.n + i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.uhat[j * self.n + i]
    }

    /// Row `i` as a vector.
    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.get(i, j)).collect()
    }
}

/// Max-ranks of one column; `Err(())` on ties.
fn rank_column(col: &[f64]) -> std::result::Result<Vec<u32>, ()> {
    let n = col.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0u32; n];
    if order.windows(2).any(|w| col[w[0]] == col[w[1]]) {
        return Err(());
    }
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = (pos + 1) as u32;
    }
    Ok(ranks)
}

/// Column-wise max-ranks and pseudo-observations `R / n`.
///
/// Fails with [`Error::TiesDetected`] naming the first tied column.
pub fn compute_ranks(data: &DataMatrix) -> Result<PseudoObsMatrix> {
    ranks_from_column_major(data.n(), data.d(), &data.values)
}

fn pseudo_from_ranks(n: usize, ranks: Vec<Vec<u32>>) -> Result<PseudoObsMatrix> {
    let d = ranks.len();
    let flat: Vec<u32> = ranks.into_iter().flatten().collect();
    let nf = n as f64;
    let uhat = flat.iter().map(|&r| r as f64 / nf).collect();
    Ok(PseudoObsMatrix {
        n,
        d,
        ranks: flat,
        uhat,
    })
}

/// Ranks of column-major values with `n` rows; used for simulated samples,
/// where `n = 1` is allowed. Ties are reported like any other.
pub fn ranks_from_column_major(n: usize, d: usize, values: &[f64]) -> Result<PseudoObsMatrix> {
    assert_eq!(values.len(), n * d);
    let cols: Vec<std::result::Result<Vec<u32>, ()>> = (0..d)
        .into_par_iter()
        .map(|j| rank_column(&values[j * n..(j + 1) * n]))
        .collect();
    let mut ranks = Vec::with_capacity(d);
    for (j, c) in cols.into_iter().enumerate() {
        ranks.push(c.map_err(|_| Error::TiesDetected { column: j })?);
    }
    pseudo_from_ranks(n, ranks)
}

/// Break ties by seed-controlled perturbations smaller than `1e-9` times the
/// column range. Untied entries are left bitwise unchanged.
pub fn jitter_ties(data: &DataMatrix, seed: u64) -> Result<DataMatrix> {
    let n = data.n();
    let mut out = data.clone();
    for j in 0..data.d() {
        let col = data.column(j);
        let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
        let range = hi - lo;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
        let tied: Vec<usize> = (0..n)
            .filter(|&p| {
                (p > 0 && col[order[p]] == col[order[p - 1]]) || (p + 1 < n && col[order[p]] == col[order[p + 1]])
            })
            .map(|p| order[p])
            .collect();
        if tied.is_empty() {
            continue;
        }
        if range == 0.0 {
            return Err(Error::DegenerateColumn { column: j });
        }
        // Perturbations stay well below the smallest gap between distinct
        // values, so untied order is preserved.
        let min_gap = order
            .windows(2)
            .map(|w| col[w[1]] - col[w[0]])
            .filter(|&g| g > 0.0)
            .fold(f64::INFINITY, f64::min);
        let scale = (1e-9 * range).min(0.25 * min_gap);
        let mut rng = rng::stream(seed, &[j as u64]);
        let dst = &mut out.values[j * n..(j + 1) * n];
        for &i in &tied {
            let eps: f64 = rng.random_range(-1.0..1.0);
            dst[i] = col[i] + eps * scale;
        }
        if rank_column(dst).is_err() {
            // Collision after perturbation: retry this column with a fresh draw.
            let retry = jitter_ties(
                &DataMatrix::from_column_major(n, data.d(), out.values.clone())?,
                rng::derive_seed(seed, &[j as u64, 1]),
            )?;
            return retry.with_names(data.names.clone());
        }
    }
    Ok(out)
}
