//! Seeded, resumable Monte Carlo experiments.
//!
//! A run appends one JSON line per replicate to a log whose first line holds
//! the configuration. Resuming skips replicates already in the log, and the
//! summary is computed from the log sorted by `(cell, rep)`, so an
//! interrupted and resumed run summarises to the same bytes as an
//! uninterrupted one.

use crate::association::{linearization_score, measure_pair, pair_list, Measure, PairScoreModel, ScoreMode};
use crate::empirical::stute_residual;
use crate::error::{Error, Result};
use crate::maxtest::{max_test, Calibration};
use crate::models::{CopulaModel, ModelSpec};
use crate::moebius::{s_stats, vbar_all, GumbelCalib, DIAGONAL_MEAN};
use crate::rng;
use crate::stepdown::{fwer_replicate, true_null_pairs, StepdownConfig};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const SOFTWARE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Sup-distance between the rank-based and the oracle copula processes.
    StuteDecay,
    /// Rejection rate of the max test under a pairwise-independent model.
    NullCalibration,
    /// Family-wise error and power of the stepdown test.
    Fwer,
    /// Rejection rate of the Moebius test and the size of the diagonal part.
    MoebiusCalibration,
    /// Gap between the scaled estimation errors and the linearisation scores.
    Linearization,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub d: usize,
}

fn default_alpha() -> f64 {
    0.05
}
fn default_boot() -> usize {
    1000
}
fn default_resolution() -> usize {
    64
}
fn default_measure() -> Measure {
    Measure::Rho
}
fn default_calibration() -> Calibration {
    Calibration::Gumbel
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub grid: Vec<Cell>,
    pub reps: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_boot")]
    pub boot: usize,
    pub seed: u64,
    #[serde(default = "default_measure")]
    pub measure: Measure,
    #[serde(default = "default_calibration")]
    pub calibration: Calibration,
    /// Lattice resolution of the residual sup for `stute_decay`.
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub two_sided: bool,
    /// Replicate log; when absent the run is kept in memory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config("config", e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Check every field and build the model of each cell.
    pub fn validate(&self) -> Result<Vec<CopulaModel>> {
        if self.reps == 0 {
            return Err(Error::config("reps", "must be at least 1"));
        }
        if self.grid.is_empty() {
            return Err(Error::config("grid", "needs at least one (n, d) cell"));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::config("alpha", format!("{} is outside (0, 1)", self.alpha)));
        }
        let min_d = match self.kind {
            ExperimentKind::MoebiusCalibration => 3,
            _ => 2,
        };
        let mut models = Vec::with_capacity(self.grid.len());
        for (k, cell) in self.grid.iter().enumerate() {
            let field = format!("grid[{k}]");
            if cell.n < 2 {
                return Err(Error::config(format!("{field}.n"), "must be at least 2"));
            }
            if cell.d < min_d {
                return Err(Error::config(
                    format!("{field}.d"),
                    format!("must be at least {min_d} for this experiment"),
                ));
            }
            let model = self.model.build(Some(cell.d)).map_err(|e| match e {
                Error::ConfigInvalid { .. } => e,
                other => Error::config("model", other.to_string()),
            })?;
            models.push(model);
        }
        let model = &models[0];
        match self.kind {
            ExperimentKind::NullCalibration | ExperimentKind::MoebiusCalibration => {
                if !model.pairwise_independent() {
                    return Err(Error::config(
                        "model",
                        format!("{} is not pairwise independent", model.family_name()),
                    ));
                }
                if self.kind == ExperimentKind::MoebiusCalibration && !matches!(model, CopulaModel::Independence { .. })
                {
                    return Err(Error::config(
                        "model",
                        "the Moebius calibration assumes mutual independence",
                    ));
                }
            }
            ExperimentKind::Fwer => {
                if self.boot < 100 {
                    return Err(Error::config("boot", "must be at least 100"));
                }
            }
            ExperimentKind::StuteDecay => {
                if self.resolution < 2 {
                    return Err(Error::config("resolution", "must be at least 2"));
                }
            }
            ExperimentKind::Linearization => {}
        }
        Ok(models)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub cell: usize,
    pub rep: usize,
    pub n: usize,
    pub d: usize,
    pub values: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueSummary {
    pub mean: f64,
    pub sd: f64,
    pub median: f64,
    pub q05: f64,
    pub q25: f64,
    pub q75: f64,
    pub q95: f64,
    /// Normal-approximation 95% interval of the mean for 0/1 indicators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binomial_ci: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub n: usize,
    pub d: usize,
    pub reps: usize,
    pub values: BTreeMap<String, ValueSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub software_version: String,
    pub cells: Vec<CellSummary>,
    /// Seconds spent computing replicates in this invocation; not persisted
    /// so that resumed runs summarise identically.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl ExperimentResult {
    pub fn cell_value(&self, cell: usize, name: &str) -> Option<&ValueSummary> {
        self.cells.get(cell).and_then(|c| c.values.get(name))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Plot-ready long table: one row per cell and value.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "cell", "n", "d", "reps", "value", "mean", "sd", "median", "q05", "q25", "q75", "q95",
        ])?;
        for c in &self.cells {
            for (name, s) in &c.values {
                let nums = [s.mean, s.sd, s.median, s.q05, s.q25, s.q75, s.q95].map(|v| v.to_string());
                let mut rec = vec![
                    c.cell.to_string(),
                    c.n.to_string(),
                    c.d.to_string(),
                    c.reps.to_string(),
                    name.clone(),
                ];
                rec.extend(nums);
                wtr.write_record(&rec)?;
            }
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize_values(vals: &[f64]) -> ValueSummary {
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let sd = if vals.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = vals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let binary = vals.iter().all(|&v| v == 0.0 || v == 1.0);
    let binomial_ci = binary.then(|| {
        let half = 1.96 * (mean * (1.0 - mean) / n).sqrt();
        ((mean - half).max(0.0), (mean + half).min(1.0))
    });
    ValueSummary {
        mean,
        sd,
        median: quantile(&sorted, 0.5),
        q05: quantile(&sorted, 0.05),
        q25: quantile(&sorted, 0.25),
        q75: quantile(&sorted, 0.75),
        q95: quantile(&sorted, 0.95),
        binomial_ci,
    }
}

/// Summary of a set of replicate records; order of `records` is irrelevant.
pub fn summarize_records(config: &ExperimentConfig, records: &[ReplicateRecord]) -> ExperimentResult {
    let mut sorted: Vec<&ReplicateRecord> = records.iter().collect();
    sorted.sort_by_key(|r| (r.cell, r.rep));
    let cells = config
        .grid
        .iter()
        .enumerate()
        .map(|(k, cell)| {
            let recs: Vec<&&ReplicateRecord> = sorted.iter().filter(|r| r.cell == k).collect();
            let mut names = BTreeSet::new();
            recs.iter().for_each(|r| names.extend(r.values.keys().cloned()));
            let values = names
                .into_iter()
                .filter_map(|name| {
                    let v: Vec<f64> = recs.iter().filter_map(|r| r.values.get(&name).copied()).collect();
                    (!v.is_empty()).then(|| (name, summarize_values(&v)))
                })
                .collect();
            CellSummary {
                cell: k,
                n: cell.n,
                d: cell.d,
                reps: recs.len(),
                values,
            }
        })
        .collect();
    ExperimentResult {
        config: config.clone(),
        software_version: SOFTWARE_VERSION.to_string(),
        cells,
        wall_clock_secs: 0.0,
    }
}

fn replicate(config: &ExperimentConfig, model: &CopulaModel, cell_idx: usize, rep: usize) -> Result<ReplicateRecord> {
    let cell = config.grid[cell_idx];
    let seed = rng::derive_seed(config.seed, &[cell_idx as u64, rep as u64]);
    let mut values = BTreeMap::new();
    let mut put = |k: &str, v: f64| {
        values.insert(k.to_string(), v);
    };
    match config.kind {
        ExperimentKind::StuteDecay => {
            let s = model.sample(cell.n, seed)?;
            let r = stute_residual(&s, model, config.resolution)?;
            put("residual_sup", r.residual_sup);
            put("cn_sup", r.cn_sup);
        }
        ExperimentKind::NullCalibration => {
            let s = model.sample(cell.n, seed)?;
            let r = max_test(&s.pseudo_obs()?, config.measure, config.alpha, config.calibration)?;
            put("T", r.t);
            put("p_value", r.p_value);
            put("reject", r.reject as u8 as f64);
        }
        ExperimentKind::Fwer => {
            let cfg = StepdownConfig {
                alpha: config.alpha,
                boot: config.boot,
                seed,
                two_sided: config.two_sided,
            };
            let nulls = true_null_pairs(model, config.two_sided)?;
            let n_alt = nulls.iter().filter(|&&x| !x).count();
            let (false_rej, true_rej) = fwer_replicate(model, cell.n, &cfg, &nulls, seed)?;
            put("false_rejection", false_rej as u8 as f64);
            if n_alt > 0 {
                put("power", true_rej as f64 / n_alt as f64);
                put("all_alternatives_rejected", (true_rej == n_alt) as u8 as f64);
            }
        }
        ExperimentKind::MoebiusCalibration => {
            let s = model.sample(cell.n, seed)?;
            let calib = GumbelCalib::new(cell.d)?;
            let max_s = s_stats(&s.pseudo_obs()?).into_iter().fold(0.0, f64::max);
            let y = calib.standardize(max_s);
            let p = calib.p_value(y);
            let v = vbar_all(&s);
            put("max_s", max_s);
            put("y", y);
            put("p_value", p);
            put("reject", (p < config.alpha) as u8 as f64);
            put("max_abs_v", v.iter().fold(0.0, |a, x| a.max(x.abs())));
            put(
                "max_abs_v_centered",
                v.iter().fold(0.0, |a, x| a.max((x - DIAGONAL_MEAN).abs())),
            );
        }
        ExperimentKind::Linearization => {
            let s = model.sample(cell.n, seed)?;
            let r = linearization_residuals(model, &s)?;
            for (meas, v) in Measure::ALL.iter().zip(r) {
                put(&format!("residual_{meas}"), v);
            }
        }
    }
    Ok(ReplicateRecord {
        cell: cell_idx,
        rep,
        n: cell.n,
        d: cell.d,
        values,
    })
}

/// `max_I |sqrt(n)(gamma_hat_I - gamma_I) - S_I|` for rho, tau and beta.
pub fn linearization_residuals(model: &CopulaModel, sample: &crate::models::UniformSample) -> Result<[f64; 3]> {
    let p = sample.pseudo_obs()?;
    let sq = (sample.n() as f64).sqrt();
    let mut out = [0.0f64; 3];
    for (l, m) in pair_list(model.dim()) {
        let sm = PairScoreModel::new(model, (l, m))?;
        for (k, &meas) in Measure::ALL.iter().enumerate() {
            let s = linearization_score(meas, ScoreMode::Model(&sm), sample, (l, m))?.s;
            let err = sq * (measure_pair(&p, meas, l, m) - sm.population(meas));
            out[k] = out[k].max((err - s).abs());
        }
    }
    Ok(out)
}

#[derive(Debug, Serialize, Deserialize)]
struct LogHeader {
    config: ExperimentConfig,
    software_version: String,
}

fn read_log(path: &Path) -> Result<(ExperimentConfig, Vec<ReplicateRecord>)> {
    let file = File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let header: LogHeader = match lines.next() {
        Some(line) => serde_json::from_str(&line?)?,
        None => return Err(Error::InvalidData(format!("{} is empty", path.display()))),
    };
    let mut records = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // A run killed mid-write can leave a truncated last line; drop it.
        match serde_json::from_str::<ReplicateRecord>(&line) {
            Ok(r) => records.push(r),
            Err(_) => break,
        }
    }
    Ok((header.config, records))
}

/// Options controlling a single invocation.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stop after computing this many new replicates (for staged runs).
    pub max_new_replicates: Option<usize>,
    /// Replicates computed in parallel between log flushes.
    pub chunk: Option<usize>,
}

/// Run (or resume) an experiment. With `config.output` set, replicates are
/// appended to that JSON-lines log as they complete.
pub fn run_experiment(config: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentResult> {
    let models = config.validate()?;
    let start = Instant::now();
    let mut records: Vec<ReplicateRecord> = Vec::new();
    let mut writer = None;
    if let Some(path) = &config.output {
        if path.exists() && std::fs::metadata(path)?.len() > 0 {
            let (logged, recs) = read_log(path)?;
            let mut a = logged.clone();
            let mut b = config.clone();
            a.output = None;
            b.output = None;
            if a != b {
                return Err(Error::config(
                    "output",
                    format!("{} belongs to a different configuration", path.display()),
                ));
            }
            records = recs;
            // Rewrite without any truncated tail so appends stay line-aligned.
            let mut f = BufWriter::new(File::create(path)?);
            write_header(&mut f, config)?;
            for r in &records {
                writeln!(f, "{}", serde_json::to_string(r)?)?;
            }
            f.flush()?;
        } else {
            let mut f = BufWriter::new(File::create(path)?);
            write_header(&mut f, config)?;
            f.flush()?;
        }
        writer = Some(BufWriter::new(OpenOptions::new().append(true).open(path)?));
    }

    let done: BTreeSet<(usize, usize)> = records.iter().map(|r| (r.cell, r.rep)).collect();
    let todo: Vec<(usize, usize)> = (0..config.grid.len())
        .flat_map(|c| (0..config.reps).map(move |r| (c, r)))
        .filter(|k| !done.contains(k))
        .collect();
    let limit = opts.max_new_replicates.unwrap_or(usize::MAX).min(todo.len());
    let chunk = opts.chunk.unwrap_or(64).max(1);
    for batch in todo[..limit].chunks(chunk) {
        let new: Vec<ReplicateRecord> = batch
            .par_iter()
            .map(|&(c, r)| replicate(config, &models[c], c, r))
            .collect::<Result<_>>()?;
        if let Some(w) = writer.as_mut() {
            for r in &new {
                writeln!(w, "{}", serde_json::to_string(r)?)?;
            }
            w.flush()?;
        }
        records.extend(new);
    }
    let mut result = summarize_records(config, &records);
    result.wall_clock_secs = start.elapsed().as_secs_f64();
    Ok(result)
}

fn write_header<W: Write>(w: &mut W, config: &ExperimentConfig) -> Result<()> {
    let header = LogHeader {
        config: config.clone(),
        software_version: SOFTWARE_VERSION.to_string(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    Ok(())
}

/// Summary of an existing replicate log.
pub fn summarize_log(path: &Path) -> Result<ExperimentResult> {
    let (config, records) = read_log(path)?;
    Ok(summarize_records(&config, &records))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(kind: ExperimentKind, model: &str, grid: &str, reps: usize) -> ExperimentConfig {
        ExperimentConfig::from_json(&format!(
            r#"{{"kind": "{}", "model": {model}, "grid": {grid}, "reps": {reps}, "seed": 7, "boot": 200}}"#,
            serde_json::to_value(kind).unwrap().as_str().unwrap()
        ))
        .unwrap()
    }

    #[test]
    fn field_level_validation() {
        let mut c = config(
            ExperimentKind::NullCalibration,
            r#"{"family": "independence"}"#,
            r#"[{"n": 50, "d": 4}]"#,
            1,
        );
        c.reps = 0;
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { ref field, .. }) if field == "reps"));
        let c = config(
            ExperimentKind::MoebiusCalibration,
            r#"{"family": "independence"}"#,
            r#"[{"n": 50, "d": 2}]"#,
            1,
        );
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { ref field, .. }) if field == "grid[0].d"));
        let c = config(
            ExperimentKind::NullCalibration,
            r#"{"family": "clayton", "theta": 1.0}"#,
            r#"[{"n": 50, "d": 3}]"#,
            1,
        );
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { ref field, .. }) if field == "model"));
        let mut c = config(
            ExperimentKind::Fwer,
            r#"{"family": "independence"}"#,
            r#"[{"n": 50, "d": 3}]"#,
            1,
        );
        c.boot = 10;
        assert!(matches!(c.validate(), Err(Error::ConfigInvalid { ref field, .. }) if field == "boot"));
        assert!(matches!(
            ExperimentConfig::from_json(r#"{"kind": "nope"}"#),
            Err(Error::ConfigInvalid { .. })
        ));
    }

    #[test]
    fn in_memory_run_is_deterministic() {
        let c = config(
            ExperimentKind::NullCalibration,
            r#"{"family": "independence"}"#,
            r#"[{"n": 40, "d": 5}, {"n": 80, "d": 5}]"#,
            12,
        );
        let a = run_experiment(&c, &RunOptions::default()).unwrap();
        let b = run_experiment(
            &c,
            &RunOptions {
                chunk: Some(5),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_eq!(a.cells[1].reps, 12);
        assert!(a.cell_value(0, "reject").unwrap().binomial_ci.is_some());
    }

    #[test]
    fn every_kind_runs() {
        let cases = [
            (
                ExperimentKind::StuteDecay,
                r#"{"family": "gaussian", "correlation": {"equicorrelated": {"rho": 0.3}}}"#,
                4,
            ),
            (
                ExperimentKind::Fwer,
                r#"{"family": "gaussian", "correlation": {"block": {"size": 2, "rho": 0.5}}}"#,
                3,
            ),
            (ExperimentKind::MoebiusCalibration, r#"{"family": "independence"}"#, 4),
            (
                ExperimentKind::Linearization,
                r#"{"family": "gaussian", "correlation": {"equicorrelated": {"rho": 0.4}}}"#,
                3,
            ),
        ];
        for (kind, model, d) in cases {
            let c = config(kind, model, &format!(r#"[{{"n": 60, "d": {d}}}]"#), 2);
            let r = run_experiment(&c, &RunOptions::default()).unwrap();
            assert_eq!(r.cells[0].reps, 2, "{kind:?}");
            assert!(!r.cells[0].values.is_empty());
        }
    }

    #[test]
    fn quantiles_of_small_samples() {
        let s = summarize_values(&[3.0, 1.0, 2.0, 4.0]);
        assert_eq!(s.median, 2.5);
        assert_eq!(s.mean, 2.5);
        assert!((s.q25 - 1.75).abs() < 1e-15);
        assert!(s.binomial_ci.is_none());
    }
}
