//! Pairwise Spearman, Kendall and Blomquist coefficients, their exact
//! finite-sample integral identities, and the linearisation scores of the
//! three coefficients.

use crate::error::{Error, Result};
use crate::models::{CopulaModel, UniformSample};
use crate::numeric::{bvn, normal, quad};
use crate::ranks::{compute_ranks, DataMatrix, PseudoObsMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Rho,
    Tau,
    Beta,
}

impl Measure {
    pub const ALL: [Measure; 3] = [Measure::Rho, Measure::Tau, Measure::Beta];

    pub fn name(self) -> &'static str {
        match self {
            Measure::Rho => "rho",
            Measure::Tau => "tau",
            Measure::Beta => "beta",
        }
    }

    /// Null variance of the linearisation score: 1 for rho and beta, 4/9 for tau.
    pub fn null_variance(self) -> f64 {
        match self {
            Measure::Tau => 4.0 / 9.0,
            _ => 1.0,
        }
    }
}

impl FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rho" | "spearman" => Ok(Measure::Rho),
            "tau" | "kendall" => Ok(Measure::Tau),
            "beta" | "blomquist" => Ok(Measure::Beta),
            other => Err(Error::InvalidParameter(format!("unknown measure `{other}`"))),
        }
    }
}

impl std::fmt::Display for Measure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Pairs `(l, m)`, `l < m`, in lexicographic order.
pub fn pair_list(d: usize) -> Vec<(usize, usize)> {
    (0..d).flat_map(|l| (l + 1..d).map(move |m| (l, m))).collect()
}

/// `1 - 6 sum (R_l - R_m)^2 / (n (n^2 - 1))`, with the sum in integers.
pub fn spearman_pair(p: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let n = p.n() as u128;
    let ss: u128 = p
        .ranks(l)
        .iter()
        .zip(p.ranks(m))
        .map(|(&a, &b)| {
            let d = a.abs_diff(b) as u128;
            d * d
        })
        .sum();
    1.0 - (6 * ss) as f64 / (n * (n * n - 1)) as f64
}

/// Number of inversions of `v`, by merge sort; `v` is sorted on return.
pub fn count_inversions(v: &mut [u32]) -> u64 {
    let mut buf = vec![0u32; v.len()];
    merge_count(v, &mut buf)
}

fn merge_count(v: &mut [u32], buf: &mut [u32]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            inv += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    inv
}

/// Kendall's tau in `O(n log n)`: order by the first rank column and count
/// discordant pairs as inversions of the second.
pub fn kendall_pair(p: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let n = p.n();
    let mut seq = vec![0u32; n];
    for (&a, &b) in p.ranks(l).iter().zip(p.ranks(m)) {
        seq[a as usize - 1] = b;
    }
    let disc = count_inversions(&mut seq) as i128;
    let pairs = (n as i128) * (n as i128 - 1) / 2;
    (pairs - 2 * disc) as f64 / pairs as f64
}

/// Kendall's tau from the `O(n^2)` sign-product sum.
pub fn kendall_pair_brute(p: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let (a, b) = (p.ranks(l), p.ranks(m));
    let n = p.n();
    let mut s: i64 = 0;
    for i in 0..n {
        for j in i + 1..n {
            s += (a[i] as i64 - a[j] as i64).signum() * (b[i] as i64 - b[j] as i64).signum();
        }
    }
    2.0 * s as f64 / (n as f64 * (n as f64 - 1.0))
}

fn two_columns(x: &[f64], y: &[f64]) -> Result<PseudoObsMatrix> {
    let data = DataMatrix::from_columns(vec![x.to_vec(), y.to_vec()])?;
    compute_ranks(&data)
}

/// Kendall's tau of two raw columns; ties are an error.
pub fn kendall_columns(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(kendall_pair(&two_columns(x, y)?, 0, 1))
}

/// [`kendall_columns`] through the sign-product definition.
pub fn kendall_columns_brute(x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(kendall_pair_brute(&two_columns(x, y)?, 0, 1))
}

/// `4 C_hat(1/2, 1/2) - 1`.
pub fn blomquist_pair(p: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let n = p.n() as u32;
    let count = p
        .ranks(l)
        .iter()
        .zip(p.ranks(m))
        .filter(|(&a, &b)| 2 * a <= n && 2 * b <= n)
        .count();
    4.0 * count as f64 / n as f64 - 1.0
}

pub fn measure_pair(p: &PseudoObsMatrix, measure: Measure, l: usize, m: usize) -> f64 {
    match measure {
        Measure::Rho => spearman_pair(p, l, m),
        Measure::Tau => kendall_pair(p, l, m),
        Measure::Beta => blomquist_pair(p, l, m),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub l: usize,
    pub m: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
}

impl PairRecord {
    pub fn get(&self, measure: Measure) -> Option<f64> {
        match measure {
            Measure::Rho => self.rho,
            Measure::Tau => self.tau,
            Measure::Beta => self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStatisticsTable {
    pub n: usize,
    pub d: usize,
    pub names: Vec<String>,
    pub pairs: Vec<PairRecord>,
}

impl PairStatisticsTable {
    pub fn values(&self, measure: Measure) -> Result<Vec<f64>> {
        self.pairs
            .iter()
            .map(|r| {
                r.get(measure)
                    .ok_or_else(|| Error::InvalidParameter(format!("table has no {measure} column")))
            })
            .collect()
    }

    /// CSV with columns `pair,l,m,rho,tau,beta`; missing measures are empty.
    /// `l` and `m` are 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["pair", "l", "m", "rho", "tau", "beta"])?;
        let fmt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.pairs {
            wtr.write_record([
                format!("{}:{}", self.names[r.l], self.names[r.m]),
                (r.l + 1).to_string(),
                (r.m + 1).to_string(),
                fmt(r.rho),
                fmt(r.tau),
                fmt(r.beta),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// All pairwise coefficients of the requested measures.
pub fn all_pairs(data: &DataMatrix, measures: &[Measure]) -> Result<PairStatisticsTable> {
    let p = compute_ranks(data)?;
    let mut t = all_pairs_pseudo(&p, measures);
    t.names = data.names().to_vec();
    Ok(t)
}

pub fn all_pairs_pseudo(p: &PseudoObsMatrix, measures: &[Measure]) -> PairStatisticsTable {
    let want = |m: Measure| measures.contains(&m);
    let pairs = pair_list(p.d())
        .into_par_iter()
        .map(|(l, m)| PairRecord {
            l,
            m,
            rho: want(Measure::Rho).then(|| spearman_pair(p, l, m)),
            tau: want(Measure::Tau).then(|| kendall_pair(p, l, m)),
            beta: want(Measure::Beta).then(|| blomquist_pair(p, l, m)),
        })
        .collect();
    PairStatisticsTable {
        n: p.n(),
        d: p.d(),
        names: (1..=p.d()).map(|j| format!("V{j}")).collect(),
        pairs,
    }
}

/// Exact finite-sample integrals of the empirical copula of one pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmpiricalIntegrals {
    /// `int C_hat dPi`, the double sum of `C_hat` over the `1/n` cells.
    pub c_dpi: f64,
    /// `int Pi dC_hat = (1/n) sum Uhat_l Uhat_m`.
    pub pi_dc: f64,
    /// `int C_hat dC_hat = n^-2 #{(i, j) : Uhat_j <= Uhat_i}`, `i = j` included.
    pub c_dc: f64,
}

/// Sum over the cells `[a/n, (a+1)/n) x [b/n, (b+1)/n)`, where `C_hat` is constant.
pub fn c_dpi_cells(p: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let n = p.n();
    let ec = crate::empirical::EmpiricalCopula::new(p.clone());
    let t = ec.pair_count_table(l, m);
    let s: u64 = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .map(|(a, b)| t[a * (n + 1) + b] as u64)
        .sum();
    s as f64 / (n as f64).powi(3)
}

/// Componentwise dominance count `#{(i, j) : R_j <= R_i}` via a Fenwick tree.
fn dominance_count(p: &PseudoObsMatrix, l: usize, m: usize) -> u64 {
    let n = p.n();
    let mut by_l = vec![0u32; n];
    for (&a, &b) in p.ranks(l).iter().zip(p.ranks(m)) {
        by_l[a as usize - 1] = b;
    }
    let mut tree = vec![0u64; n + 1];
    let mut total = 0u64;
    for &b in &by_l {
        let mut k = b as usize;
        while k <= n {
            tree[k] += 1;
            k += k & k.wrapping_neg();
        }
        let mut k = b as usize;
        while k > 0 {
            total += tree[k];
            k -= k & k.wrapping_neg();
        }
    }
    total
}

pub fn empirical_integrals(p: &PseudoObsMatrix, l: usize, m: usize) -> EmpiricalIntegrals {
    let n = p.n() as f64;
    let pi_dc = p.uhat(l).iter().zip(p.uhat(m)).map(|(a, b)| a * b).sum::<f64>() / n;
    EmpiricalIntegrals {
        c_dpi: c_dpi_cells(p, l, m),
        pi_dc,
        c_dc: dominance_count(p, l, m) as f64 / (n * n),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityRecord {
    /// `rho_hat - (12 int C_hat dPi - 3)`.
    pub rho_residual: f64,
    /// `tau_hat - (4 int C_hat dC_hat - 1)`.
    pub tau_residual: f64,
    /// `|int Pi dC_hat - int C_hat dPi - 1/n|`.
    pub integral_identity_residual: f64,
    pub rho_bound: f64,
    pub tau_bound: f64,
}

impl IdentityRecord {
    pub fn holds(&self) -> bool {
        self.rho_residual.abs() <= self.rho_bound
            && self.tau_residual.abs() <= self.tau_bound
            && self.integral_identity_residual <= 1e-12
    }
}

pub fn verify_exact_identities(p: &PseudoObsMatrix, l: usize, m: usize) -> Result<IdentityRecord> {
    let n = p.n();
    if n < 2 {
        return Err(Error::InvalidData("identities need n >= 2".into()));
    }
    let ints = empirical_integrals(p, l, m);
    let nf = n as f64;
    Ok(IdentityRecord {
        rho_residual: spearman_pair(p, l, m) - (12.0 * ints.c_dpi - 3.0),
        tau_residual: kendall_pair(p, l, m) - (4.0 * ints.c_dc - 1.0),
        integral_identity_residual: (ints.pi_dc - ints.c_dpi - 1.0 / nf).abs(),
        rho_bound: 6.0 / (nf - 1.0),
        tau_bound: 4.0 / (nf - 1.0),
    })
}

/// Linearisation score under pairwise independence.
pub fn g_null(measure: Measure, u: [f64; 2]) -> f64 {
    let p = (u[0] - 0.5) * (u[1] - 0.5);
    match measure {
        Measure::Rho => 12.0 * p,
        Measure::Tau => 8.0 * p,
        // Same half-open convention as the model-mode indicators.
        Measure::Beta => {
            if (u[0] <= 0.5) == (u[1] <= 0.5) {
                1.0
            } else {
                -1.0
            }
        }
    }
}

/// How `z -> int_0^1 C(u, z) dz` and the population coefficients are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionIntegral {
    /// Closed forms where the family has one, quadrature otherwise.
    Auto,
    Quadrature,
}

const QUAD_TOL: f64 = 1e-8;

/// Constants of the linearisation scores for one bivariate margin.
#[derive(Debug, Clone)]
pub struct PairScoreModel {
    margin: CopulaModel,
    section: SectionIntegral,
    /// `int Pi dC = int int C`.
    pub pi_dc: f64,
    pub rho: f64,
    pub tau: f64,
    pub beta: f64,
    pub c_half: f64,
    pub d1_half: f64,
    pub d2_half: f64,
    /// Integration error estimate behind `tau` (zero for closed forms).
    pub tau_error: f64,
}

fn gaussian_rho(model: &CopulaModel) -> Option<f64> {
    match model {
        CopulaModel::Gaussian(g) => Some(g.rho(0, 1)),
        CopulaModel::Independence { .. } => Some(0.0),
        _ => None,
    }
}

fn check_quad(q: quad::Quadrature) -> Result<f64> {
    if q.error > QUAD_TOL {
        return Err(Error::QuadratureFailure {
            estimate: q.error,
            tolerance: QUAD_TOL,
        });
    }
    Ok(q.value)
}

/// `1 - 4 int int C_1 C_2`, equal to `4 int C dC - 1` after integrating by parts.
pub fn kendall_tau_by_quadrature(margin: &CopulaModel) -> Result<quad::Quadrature> {
    let q = quad::integrate_unit_square(
        |u, v| {
            if u <= 0.0 || u >= 1.0 || v <= 0.0 || v >= 1.0 {
                return 0.0;
            }
            let p = [u, v];
            margin.partial1(0, &p).unwrap_or(0.0) * margin.partial1(1, &p).unwrap_or(0.0)
        },
        QUAD_TOL / 4.0,
    )?;
    Ok(quad::Quadrature {
        value: 1.0 - 4.0 * q.value,
        error: 4.0 * q.error,
    })
}

/// `int int C`, so that Spearman's rho is `12 int int C - 3`.
pub fn copula_mass_by_quadrature(margin: &CopulaModel) -> Result<quad::Quadrature> {
    quad::integrate_unit_square(|u, v| margin.cdf(&[u, v]).unwrap_or(0.0), QUAD_TOL / 12.0)
}

impl PairScoreModel {
    pub fn new(model: &CopulaModel, pair: (usize, usize)) -> Result<Self> {
        Self::build(model, pair, SectionIntegral::Auto)
    }

    /// Everything by numerical integration, bypassing closed forms.
    pub fn with_quadrature(model: &CopulaModel, pair: (usize, usize)) -> Result<Self> {
        Self::build(model, pair, SectionIntegral::Quadrature)
    }

    fn build(model: &CopulaModel, pair: (usize, usize), section: SectionIntegral) -> Result<Self> {
        let margin = model.pair_margin(pair.0, pair.1)?;
        let h = [0.5, 0.5];
        let c_half = margin.cdf(&h)?;
        let d1_half = margin.partial1(0, &h)?;
        let d2_half = margin.partial1(1, &h)?;
        let closed = match section {
            SectionIntegral::Auto => gaussian_rho(&margin),
            SectionIntegral::Quadrature => None,
        };
        let (rho, tau, tau_error) = match closed {
            Some(r) => (6.0 / PI * (r / 2.0).asin(), 2.0 / PI * r.asin(), 0.0),
            None => {
                let mass = copula_mass_by_quadrature(&margin)?;
                let t = kendall_tau_by_quadrature(&margin)?;
                (12.0 * check_quad(mass)? - 3.0, check_quad(t)?, t.error)
            }
        };
        Ok(Self {
            margin,
            section,
            pi_dc: (rho + 3.0) / 12.0,
            rho,
            tau,
            beta: 4.0 * c_half - 1.0,
            c_half,
            d1_half,
            d2_half,
            tau_error,
        })
    }

    pub fn population(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Rho => self.rho,
            Measure::Tau => self.tau,
            Measure::Beta => self.beta,
        }
    }

    /// `int_0^1 C(u, z) dz` (`first = true`) or `int_0^1 C(z, u) dz`.
    pub fn section_integral(&self, u: f64, first: bool) -> Result<f64> {
        if u <= 0.0 {
            return Ok(0.0);
        }
        if u >= 1.0 {
            return Ok(0.5);
        }
        if self.section == SectionIntegral::Auto {
            if let Some(r) = gaussian_rho(&self.margin) {
                // P(X <= x, Y <= N) for an independent standard normal N.
                return Ok(bvn::bvn_cdf(normal::quantile(u), 0.0, r / 2f64.sqrt()));
            }
        }
        let q = quad::integrate(
            |z| {
                let p = if first { [u, z] } else { [z, u] };
                self.margin.cdf(&p).unwrap_or(0.0)
            },
            0.0,
            1.0,
            QUAD_TOL,
        )?;
        check_quad(q)
    }

    pub fn score(&self, measure: Measure, u: [f64; 2]) -> Result<f64> {
        let (a, b) = (u[0], u[1]);
        Ok(match measure {
            Measure::Rho => {
                12.0 * (1.0 - a) * (1.0 - b) - 36.0 * self.pi_dc
                    + 12.0 * (self.section_integral(a, true)? + self.section_integral(b, false)?)
            }
            Measure::Tau => 8.0 * self.margin.cdf(&u)? - 4.0 * a - 4.0 * b + 2.0 - 2.0 * self.tau,
            Measure::Beta => {
                let ind = |x: f64| if x <= 0.5 { 1.0 } else { 0.0 };
                4.0 * (ind(a) * ind(b) - self.c_half - self.d1_half * (ind(a) - 0.5) - self.d2_half * (ind(b) - 0.5))
            }
        })
    }
}

/// Score evaluation mode.
#[derive(Debug, Clone, Copy)]
pub enum ScoreMode<'a> {
    Null,
    Model(&'a PairScoreModel),
}

pub fn g_score(measure: Measure, mode: ScoreMode<'_>, u: [f64; 2]) -> Result<f64> {
    match mode {
        ScoreMode::Null => Ok(g_null(measure, u)),
        ScoreMode::Model(m) => m.score(measure, u),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LinearizationScore {
    pub gamma: Measure,
    pub values: Vec<f64>,
    /// `n^(-1/2) sum_i g(U_i)`.
    pub s: f64,
}

/// Scores of the true uniforms of `sample` on one pair.
pub fn linearization_score(
    measure: Measure,
    mode: ScoreMode<'_>,
    sample: &UniformSample,
    pair: (usize, usize),
) -> Result<LinearizationScore> {
    let (cl, cm) = (sample.column(pair.0), sample.column(pair.1));
    let values = cl
        .iter()
        .zip(cm)
        .map(|(&a, &b)| g_score(measure, mode, [a, b]))
        .collect::<Result<Vec<f64>>>()?;
    let s = values.iter().sum::<f64>() / (sample.n() as f64).sqrt();
    Ok(LinearizationScore {
        gamma: measure,
        values,
        s,
    })
}
