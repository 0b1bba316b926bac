//! Multiplier-bootstrap stepdown test of `H_I: rho_I <= 0` over all pairs,
//! with strong family-wise error control.

use crate::association::{pair_list, spearman_pair, Measure, PairScoreModel};
use crate::error::{Error, Result};
use crate::models::{CopulaModel, UniformSample};
use crate::ranks::{compute_ranks, DataMatrix, PseudoObsMatrix};
use crate::rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Observable scores `xhat_{i,I}`, one column per pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    n: usize,
    pairs: Vec<(usize, usize)>,
    /// Column-major `n x pairs.len()`.
    values: Vec<f64>,
}

impl ScoreMatrix {
    pub fn from_columns(n: usize, pairs: Vec<(usize, usize)>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.len() != pairs.len() || columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidParameter(
                "score columns do not match the pair list".into(),
            ));
        }
        Ok(Self {
            n,
            pairs,
            values: columns.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn column(&self, k: usize) -> &[f64] {
        &self.values[k * self.n..(k + 1) * self.n]
    }

    pub fn column_mean(&self, k: usize) -> f64 {
        self.column(k).iter().sum::<f64>() / self.n as f64
    }
}

/// `n^3 xhat_i` for one pair: every term of the expanded display scaled to an
/// integer, so the direct and prefix-sum routes agree bit for bit.
fn xhat_numerators_direct(rl: &[u32], rm: &[u32]) -> Vec<i128> {
    let n = rl.len() as i128;
    let srr: i128 = rl.iter().zip(rm).map(|(&a, &b)| a as i128 * b as i128).sum();
    (0..rl.len())
        .map(|i| {
            let (a, b) = (rl[i] as i128, rm[i] as i128);
            let mut acc_l = 0i128;
            let mut acc_m = 0i128;
            for j in 0..rl.len() {
                if (rl[j] as i128) <= a {
                    acc_l += n - rm[j] as i128;
                }
                if (rm[j] as i128) <= b {
                    acc_m += n - rl[j] as i128;
                }
            }
            12 * n * (n - a) * (n - b) - 36 * srr + 12 * n * (acc_l + acc_m)
        })
        .collect()
}

fn xhat_numerators_fast(rl: &[u32], rm: &[u32]) -> Vec<i128> {
    let nu = rl.len();
    let n = nu as i128;
    let srr: i128 = rl.iter().zip(rm).map(|(&a, &b)| a as i128 * b as i128).sum();
    // prefix_l[r] = sum of (n - R_m) over rows with R_l <= r, and symmetrically.
    let mut prefix_l = vec![0i128; nu + 1];
    let mut prefix_m = vec![0i128; nu + 1];
    for (&a, &b) in rl.iter().zip(rm) {
        prefix_l[a as usize] = n - b as i128;
        prefix_m[b as usize] = n - a as i128;
    }
    for r in 1..=nu {
        prefix_l[r] += prefix_l[r - 1];
        prefix_m[r] += prefix_m[r - 1];
    }
    rl.iter()
        .zip(rm)
        .map(|(&a, &b)| {
            let (ai, bi) = (a as i128, b as i128);
            12 * n * (n - ai) * (n - bi) - 36 * srr + 12 * n * (prefix_l[a as usize] + prefix_m[b as usize])
        })
        .collect()
}

fn to_scores(num: Vec<i128>, n: usize) -> Vec<f64> {
    let n3 = (n as f64).powi(3);
    num.into_iter().map(|v| v as f64 / n3).collect()
}

fn build_xhat(pseudo: &PseudoObsMatrix, f: fn(&[u32], &[u32]) -> Vec<i128>) -> ScoreMatrix {
    let n = pseudo.n();
    let pairs = pair_list(pseudo.d());
    let cols: Vec<Vec<f64>> = pairs
        .par_iter()
        .map(|&(l, m)| to_scores(f(pseudo.ranks(l), pseudo.ranks(m)), n))
        .collect();
    ScoreMatrix {
        n,
        pairs,
        values: cols.concat(),
    }
}

/// `xhat` for all pairs via sorted prefix sums, `O(n)` per pair once ranked.
pub fn compute_xhat(pseudo: &PseudoObsMatrix) -> ScoreMatrix {
    build_xhat(pseudo, xhat_numerators_fast)
}

/// `xhat` from the `O(n^2)` double sum.
pub fn compute_xhat_direct(pseudo: &PseudoObsMatrix) -> ScoreMatrix {
    build_xhat(pseudo, xhat_numerators_direct)
}

/// `That_I = n^(-1/2) sum_i e_i xhat_{i,I}` with one standard normal vector
/// `e` keyed by `(seed, replicate)` and shared by all pairs.
pub fn multiplier_draw(scores: &ScoreMatrix, seed: u64, replicate: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, &[replicate]);
    let e: Vec<f64> = (0..scores.n).map(|_| StandardNormal.sample(&mut rng)).collect();
    let scale = (scores.n as f64).sqrt();
    (0..scores.pairs.len())
        .map(|k| scores.column(k).iter().zip(&e).map(|(x, w)| x * w).sum::<f64>() / scale)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub active: Vec<(usize, usize)>,
    pub critical_value: f64,
    pub newly_rejected: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairTest {
    pub l: usize,
    pub m: usize,
    pub rho: f64,
    /// `sqrt(n) rho_hat` (absolute value when two-sided).
    pub statistic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepdownResult {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub boot: usize,
    pub seed: u64,
    pub two_sided: bool,
    pub statistics: Vec<PairTest>,
    pub rejected: Vec<(usize, usize)>,
    /// Rejections of the one-step procedure using the first critical value.
    pub single_step_rejected: Vec<(usize, usize)>,
    pub steps: Vec<StepRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepdownConfig {
    pub alpha: f64,
    pub boot: usize,
    pub seed: u64,
    pub two_sided: bool,
}

impl StepdownConfig {
    pub fn new(alpha: f64, boot: usize, seed: u64) -> Self {
        Self {
            alpha,
            boot,
            seed,
            two_sided: false,
        }
    }

    fn validate(&self) -> Result<Vec<String>> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "alpha = {} is outside (0, 1)",
                self.alpha
            )));
        }
        if self.boot < 100 {
            return Err(Error::InvalidParameter(format!(
                "B = {} bootstrap replicates is below the minimum of 100",
                self.boot
            )));
        }
        let mut warnings = Vec::new();
        if (self.boot as f64) * self.alpha < 5.0 {
            warnings.push(format!(
                "insufficient replicates: B * alpha = {} < 5, the critical value is coarse",
                self.boot as f64 * self.alpha
            ));
        }
        Ok(warnings)
    }
}

/// Index of the `ceil(B (1 - alpha))`-th order statistic.
pub fn quantile_rank(boot: usize, alpha: f64) -> usize {
    let k = (boot as f64 * (1.0 - alpha) - 1e-9).ceil() as usize;
    k.clamp(1, boot)
}

/// Bootstrap draws, row-major `B x pairs`.
fn bootstrap_matrix(scores: &ScoreMatrix, cfg: &StepdownConfig) -> Vec<Vec<f64>> {
    (0..cfg.boot as u64)
        .into_par_iter()
        .map(|b| {
            let mut t = multiplier_draw(scores, cfg.seed, b);
            if cfg.two_sided {
                t.iter_mut().for_each(|x| *x = x.abs());
            }
            t
        })
        .collect()
}

fn critical_value(draws: &[Vec<f64>], active: &[usize], k: usize) -> f64 {
    let mut maxima: Vec<f64> = draws
        .iter()
        .map(|row| active.iter().map(|&a| row[a]).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    maxima.sort_by(f64::total_cmp);
    maxima[k - 1]
}

/// Stepdown from ranked data.
pub fn stepdown_pseudo(pseudo: &PseudoObsMatrix, cfg: &StepdownConfig) -> Result<StepdownResult> {
    let warnings = cfg.validate()?;
    let (n, d) = (pseudo.n(), pseudo.d());
    if d < 2 {
        return Err(Error::DimensionTooSmall { d, min: 2 });
    }
    let scores = compute_xhat(pseudo);
    let pairs = scores.pairs.clone();
    let sq = (n as f64).sqrt();
    let statistics: Vec<PairTest> = pairs
        .iter()
        .map(|&(l, m)| {
            let rho = spearman_pair(pseudo, l, m);
            let t = sq * rho;
            PairTest {
                l,
                m,
                rho,
                statistic: if cfg.two_sided { t.abs() } else { t },
            }
        })
        .collect();
    let draws = bootstrap_matrix(&scores, cfg);
    let k = quantile_rank(cfg.boot, cfg.alpha);

    let mut active: Vec<usize> = (0..pairs.len()).collect();
    let mut rejected = Vec::new();
    let mut steps = Vec::new();
    let mut single_step_rejected = Vec::new();
    while !active.is_empty() {
        let c = critical_value(&draws, &active, k);
        let (hit, keep): (Vec<usize>, Vec<usize>) = active.iter().partition(|&&a| statistics[a].statistic > c);
        if steps.is_empty() {
            single_step_rejected = hit.iter().map(|&a| pairs[a]).collect();
        }
        steps.push(StepRecord {
            step: steps.len() + 1,
            active: active.iter().map(|&a| pairs[a]).collect(),
            critical_value: c,
            newly_rejected: hit.iter().map(|&a| pairs[a]).collect(),
        });
        if hit.is_empty() {
            break;
        }
        rejected.extend(hit.iter().map(|&a| pairs[a]));
        active = keep;
    }
    rejected.sort();
    Ok(StepdownResult {
        n,
        d,
        alpha: cfg.alpha,
        boot: cfg.boot,
        seed: cfg.seed,
        two_sided: cfg.two_sided,
        statistics,
        rejected,
        single_step_rejected,
        steps,
        warnings,
    })
}

pub fn stepdown_test(data: &DataMatrix, cfg: &StepdownConfig) -> Result<StepdownResult> {
    stepdown_pseudo(&compute_ranks(data)?, cfg)
}

/// Pairs whose hypothesis is true under `model`: `rho_I <= 0`, or `rho_I = 0`
/// for the two-sided test.
pub fn true_null_pairs(model: &CopulaModel, two_sided: bool) -> Result<Vec<bool>> {
    let d = model.dim();
    pair_list(d)
        .into_iter()
        .map(|(l, m)| -> Result<bool> {
            Ok(match model {
                CopulaModel::Independence { .. } | CopulaModel::BlockwiseInductive { .. } => true,
                CopulaModel::Gaussian(g) => {
                    let r = g.rho(l, m);
                    if two_sided {
                        r == 0.0
                    } else {
                        r <= 0.0
                    }
                }
                CopulaModel::Clayton(_) | CopulaModel::HuslerReiss(_) => false,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FwerEstimate {
    pub reps: usize,
    pub fwer: f64,
    /// Normal-approximation 95% interval for `fwer`.
    pub fwer_ci: (f64, f64),
    /// Mean fraction of false hypotheses rejected; `None` when every pair is null.
    pub power: Option<f64>,
    /// Fraction of replicates rejecting every false hypothesis.
    pub all_power: Option<f64>,
    pub null_pairs: usize,
    pub alternative_pairs: usize,
}

/// Outcome of one replicate: at least one true null rejected, and the number
/// of false hypotheses rejected.
pub fn fwer_replicate(
    model: &CopulaModel,
    n: usize,
    cfg: &StepdownConfig,
    nulls: &[bool],
    seed: u64,
) -> Result<(bool, usize)> {
    let sample = model.sample(n, seed)?;
    let p = sample.pseudo_obs()?;
    let res = stepdown_pseudo(
        &p,
        &StepdownConfig {
            seed: rng::derive_seed(seed, &[1]),
            ..*cfg
        },
    )?;
    let pairs = pair_list(model.dim());
    let mut false_rej = false;
    let mut true_rej = 0;
    for r in &res.rejected {
        let k = pairs.binary_search(r).expect("rejected pair is in the pair list");
        if nulls[k] {
            false_rej = true;
        } else {
            true_rej += 1;
        }
    }
    Ok((false_rej, true_rej))
}

/// Monte Carlo family-wise error rate and power of the stepdown test.
pub fn fwer_experiment(model: &CopulaModel, n: usize, cfg: &StepdownConfig, reps: usize) -> Result<FwerEstimate> {
    cfg.validate()?;
    let nulls = true_null_pairs(model, cfg.two_sided)?;
    let n_alt = nulls.iter().filter(|&&x| !x).count();
    let outcomes = (0..reps as u64)
        .into_par_iter()
        .map(|r| fwer_replicate(model, n, cfg, &nulls, rng::derive_seed(cfg.seed, &[r])))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize_fwer(&outcomes, nulls.len() - n_alt, n_alt))
}

pub fn summarize_fwer(outcomes: &[(bool, usize)], null_pairs: usize, alternative_pairs: usize) -> FwerEstimate {
    let reps = outcomes.len();
    let r = reps.max(1) as f64;
    let fwer = outcomes.iter().filter(|o| o.0).count() as f64 / r;
    let half = 1.96 * (fwer * (1.0 - fwer) / r).sqrt();
    let (power, all_power) = if alternative_pairs == 0 {
        (None, None)
    } else {
        let a = alternative_pairs as f64;
        (
            Some(outcomes.iter().map(|o| o.1 as f64 / a).sum::<f64>() / r),
            Some(outcomes.iter().filter(|o| o.1 == alternative_pairs).count() as f64 / r),
        )
    };
    FwerEstimate {
        reps,
        fwer,
        fwer_ci: ((fwer - half).max(0.0), (fwer + half).min(1.0)),
        power,
        all_power,
        null_pairs,
        alternative_pairs,
    }
}

/// Smallest sample variance of `x_I^2` over pairs, where `x_I` is the
/// linearisation score of Spearman's rho under `model` at true uniforms.
pub fn variance_floor(model: &CopulaModel, sample: &UniformSample) -> Result<f64> {
    let mut floor = f64::INFINITY;
    for (l, m) in pair_list(model.dim()) {
        let sm = PairScoreModel::new(model, (l, m))?;
        let sq: Vec<f64> = (0..sample.n())
            .map(|i| {
                sm.score(Measure::Rho, [sample.get(i, l), sample.get(i, m)])
                    .map(|x| x * x)
            })
            .collect::<Result<_>>()?;
        let mean = sq.iter().sum::<f64>() / sq.len() as f64;
        let var = sq.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / sq.len() as f64;
        floor = floor.min(var);
    }
    Ok(floor)
}
