//! Moebius-transform statistics of the empirical copula and their
//! Gumbel-type calibration under mutual independence.

use crate::association::pair_list;
use crate::empirical::EmpiricalCopula;
use crate::error::{Error, Result};
use crate::models::UniformSample;
use crate::ranks::{compute_ranks, DataMatrix, PseudoObsMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::sync::OnceLock;

/// `M_I(G)(u) = sum_{B in I} (-1)^{|I \ B|} G(u^B) prod_{j in I \ B} G(u^{j})`,
/// where `u^B` keeps the coordinates in `B` and sets the others to one.
///
/// Panics if `|I| > 16`.
pub fn moebius_transform<G: Fn(&[f64]) -> f64>(g: G, subset: &[usize], u: &[f64]) -> f64 {
    alternating_sum(&g, subset, u, |j| {
        let mut p = vec![1.0; u.len()];
        p[j] = u[j];
        g(&p)
    })
}

/// As [`moebius_transform`] with the univariate factors replaced by `u_j`,
/// which makes it linear in `G`.
pub fn bar_moebius_transform<G: Fn(&[f64]) -> f64>(g: G, subset: &[usize], u: &[f64]) -> f64 {
    alternating_sum(&g, subset, u, |j| u[j])
}

fn alternating_sum<G, F>(g: &G, subset: &[usize], u: &[f64], factor: F) -> f64
where
    G: Fn(&[f64]) -> f64,
    F: Fn(usize) -> f64,
{
    let k = subset.len();
    assert!(k <= 16, "index set too large");
    let factors: Vec<f64> = subset.iter().map(|&j| factor(j)).collect();
    let mut p = vec![1.0; u.len()];
    let mut total = 0.0;
    for mask in 0u32..(1 << k) {
        let mut prod = 1.0;
        let mut sign = 1.0;
        for (t, &j) in subset.iter().enumerate() {
            if mask & (1 << t) != 0 {
                p[j] = u[j];
            } else {
                p[j] = 1.0;
                prod *= factors[t];
                sign = -sign;
            }
        }
        total += sign * g(&p) * prod;
    }
    total
}

/// Rank kernel `I^(j)` as a function of the two ranks.
#[inline]
fn rank_kernel(n: f64, r1: u32, r2: u32) -> f64 {
    let (a, b) = (r1 as f64, r2 as f64);
    let n2 = n * n;
    (n + 1.0) * (2.0 * n + 1.0) / (6.0 * n2) + a * (a - 1.0) / (2.0 * n2) + b * (b - 1.0) / (2.0 * n2) - a.max(b) / n
}

/// `S_{n,I}` for the pair `(l, m)` from the rank formula, `O(n^2)`.
pub fn s_stat_rank(pseudo: &PseudoObsMatrix, l: usize, m: usize) -> f64 {
    let n = pseudo.n();
    let nf = n as f64;
    let (rl, rm) = (pseudo.ranks(l), pseudo.ranks(m));
    let mut diag = 0.0;
    let mut off = 0.0;
    for i in 0..n {
        diag += rank_kernel(nf, rl[i], rl[i]) * rank_kernel(nf, rm[i], rm[i]);
        for j in i + 1..n {
            off += rank_kernel(nf, rl[i], rl[j]) * rank_kernel(nf, rm[i], rm[j]);
        }
    }
    (diag + 2.0 * off) / nf
}

/// Packed upper triangle (diagonal first) of the rank kernel of one column.
fn packed_kernel(ranks: &[u32]) -> Vec<f64> {
    let n = ranks.len();
    let nf = n as f64;
    let mut v = Vec::with_capacity(n * (n + 1) / 2);
    v.extend(ranks.iter().map(|&r| rank_kernel(nf, r, r)));
    for i in 0..n {
        for j in i + 1..n {
            v.push(rank_kernel(nf, ranks[i], ranks[j]));
        }
    }
    v
}

// Above this many bytes of cached kernels, fall back to pairwise evaluation.
const KERNEL_CACHE_BYTES: usize = 1 << 29;

/// `S_{n,I}` for every pair, in lexicographic pair order.
pub fn s_stats(pseudo: &PseudoObsMatrix) -> Vec<f64> {
    let (n, d) = (pseudo.n(), pseudo.d());
    let pairs = pair_list(d);
    if d * n * (n + 1) / 2 * 8 > KERNEL_CACHE_BYTES {
        return pairs.par_iter().map(|&(l, m)| s_stat_rank(pseudo, l, m)).collect();
    }
    let kernels: Vec<Vec<f64>> = (0..d).into_par_iter().map(|j| packed_kernel(pseudo.ranks(j))).collect();
    let nf = n as f64;
    pairs
        .par_iter()
        .map(|&(l, m)| {
            let (a, b) = (&kernels[l], &kernels[m]);
            let diag: f64 = a[..n].iter().zip(&b[..n]).map(|(x, y)| x * y).sum();
            let off: f64 = a[n..].iter().zip(&b[n..]).map(|(x, y)| x * y).sum();
            (diag + 2.0 * off) / nf
        })
        .collect()
}

/// One coordinate of the kernel: `a^2/2 + b^2/2 - max(a, b) + 1/3`.
#[inline]
pub fn kernel_factor(a: f64, b: f64) -> f64 {
    0.5 * a * a + 0.5 * b * b - a.max(b) + 1.0 / 3.0
}

pub fn kernel_h(u: [f64; 2], v: [f64; 2]) -> f64 {
    kernel_factor(u[0], v[0]) * kernel_factor(u[1], v[1])
}

/// Largest deviation between [`kernel_h`] and its cosine expansion truncated
/// at `l` terms per coordinate, over the lattice `{k/(points-1)}^4`.
pub fn eigen_expansion_check(l: usize, points: usize) -> f64 {
    let grid: Vec<f64> = (0..points).map(|k| k as f64 / (points - 1).max(1) as f64).collect();
    // The expansion factorises over coordinates:
    // kernel_factor(a, b) = sum_k 2 cos(k pi a) cos(k pi b) / (k pi)^2.
    let series = |a: f64, b: f64| -> f64 {
        (1..=l)
            .map(|k| {
                let kf = k as f64;
                2.0 * (kf * PI * a).cos() * (kf * PI * b).cos() / (kf * PI).powi(2)
            })
            .sum()
    };
    let mut exact = Vec::with_capacity(points * points);
    let mut approx = Vec::with_capacity(points * points);
    for &a in &grid {
        for &b in &grid {
            exact.push(kernel_factor(a, b));
            approx.push(series(a, b));
        }
    }
    let mut worst = 0.0f64;
    for (e1, a1) in exact.iter().zip(&approx) {
        for (e2, a2) in exact.iter().zip(&approx) {
            worst = worst.max((e1 * e2 - a1 * a2).abs());
        }
    }
    worst
}

/// Sum of the eigenvalues `(pi^2 l1 l2)^-2` over `l1, l2 <= l`, and the same
/// with the analytic tail of `sum_{k > l} k^-2` added to each factor.
pub fn eigenvalue_sum(l: usize) -> (f64, f64) {
    let head: f64 = (1..=l).rev().map(|k| 1.0 / (k as f64).powi(2)).sum();
    let lf = l as f64;
    // Euler-Maclaurin remainder of sum_{k > l} 1/k^2.
    let tail = 1.0 / lf - 0.5 / (lf * lf) + 1.0 / (6.0 * lf.powi(3)) - 1.0 / (30.0 * lf.powi(5));
    let p2 = PI * PI;
    ((head / p2).powi(2), ((head + tail) / p2).powi(2))
}

/// `(U, V)`: the off-diagonal and diagonal parts of `(1/n) sum h(U_i1, U_i2)`.
pub fn ubar_vbar(sample: &UniformSample, l: usize, m: usize) -> (f64, f64) {
    let n = sample.n();
    let (a, b) = (sample.column(l), sample.column(m));
    let v: f64 = (0..n)
        .map(|i| kernel_factor(a[i], a[i]) * kernel_factor(b[i], b[i]))
        .sum();
    let mut off = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            off += kernel_factor(a[i], a[j]) * kernel_factor(b[i], b[j]);
        }
    }
    let nf = n as f64;
    (2.0 * off / nf, v / nf)
}

/// Diagonal part `V` for every pair, `O(n d^2)`.
pub fn vbar_all(sample: &UniformSample) -> Vec<f64> {
    let n = sample.n() as f64;
    let diag: Vec<Vec<f64>> = (0..sample.d())
        .map(|j| sample.column(j).iter().map(|&x| kernel_factor(x, x)).collect())
        .collect();
    pair_list(sample.d())
        .into_iter()
        .map(|(l, m)| diag[l].iter().zip(&diag[m]).map(|(x, y)| x * y).sum::<f64>() / n)
        .collect()
}

/// `2 prod_{m=2}^{terms} (pi/m) / sin(pi/m)` times the estimated remaining factor.
pub fn kappa_sq_truncated(terms: usize) -> f64 {
    let mut log_sum = 0.0;
    for m in (2..=terms).rev() {
        let x = PI / m as f64;
        log_sum += (x / x.sin()).ln();
    }
    // log(x / sin x) = x^2/6 + x^4/180 + O(x^6) with the tail sums of 1/m^2 and 1/m^4.
    let t = terms as f64;
    let s2 = 1.0 / t - 0.5 / (t * t) + 1.0 / (6.0 * t.powi(3));
    let s4 = 1.0 / (3.0 * t.powi(3));
    let tail = PI.powi(2) / 6.0 * s2 + PI.powi(4) / 180.0 * s4;
    2.0 * (log_sum + tail).exp()
}

pub const KAPPA_TERMS: usize = 1_000_000;

pub fn kappa_sq() -> f64 {
    static KAPPA: OnceLock<f64> = OnceLock::new();
    *KAPPA.get_or_init(|| kappa_sq_truncated(KAPPA_TERMS))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GumbelCalib {
    pub d: usize,
    pub u_n: f64,
    pub kappa_sq: f64,
}

/// `E h(U, U)` under independence, the limit of every `V_{n,I}`.
pub const DIAGONAL_MEAN: f64 = 1.0 / 36.0;

impl GumbelCalib {
    pub fn new(d: usize) -> Result<Self> {
        if d < 3 {
            return Err(Error::DimensionTooSmall { d, min: 3 });
        }
        let ld = (d as f64).ln();
        Ok(Self {
            d,
            u_n: 4.0 * ld - ld.ln() - PI.powi(4) / 36.0,
            kappa_sq: kappa_sq(),
        })
    }

    /// `y = pi^4 (max S - 1/36) - u_n`. The Gumbel limit holds for the
    /// off-diagonal part `U`; the diagonal part `V` of every pair converges to
    /// `E h(U, U) = 1/36`, not to zero, so it is removed before standardising.
    pub fn standardize(&self, max_s: f64) -> f64 {
        PI.powi(4) * (max_s - DIAGONAL_MEAN) - self.u_n
    }

    /// `1 - exp(-sqrt(kappa^2 / (8 pi)) exp(-y/2))`.
    pub fn p_value(&self, y: f64) -> f64 {
        let rate = (self.kappa_sq / (8.0 * PI)).sqrt() * (-y / 2.0).exp();
        (-(-rate).exp_m1()).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoebiusStatTable {
    pub n: usize,
    pub d: usize,
    pub names: Vec<String>,
    pub pairs: Vec<(usize, usize)>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    /// Off-diagonal and diagonal parts of the rank-free version; only
    /// available when the true uniforms are known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub u_part: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_part: Option<Vec<f64>>,
    #[serde(rename = "M")]
    pub m: f64,
}

impl MoebiusStatTable {
    pub fn from_pseudo(pseudo: &PseudoObsMatrix) -> Self {
        let s = s_stats(pseudo);
        Self {
            n: pseudo.n(),
            d: pseudo.d(),
            names: (1..=pseudo.d()).map(|j| format!("V{j}")).collect(),
            pairs: pair_list(pseudo.d()),
            m: s.iter().copied().fold(0.0, f64::max),
            s,
            u_part: None,
            v_part: None,
        }
    }

    /// Rank statistics of `sample` together with `U` and `V` from the true uniforms.
    pub fn from_sample(sample: &UniformSample) -> Result<Self> {
        let mut t = Self::from_pseudo(&sample.pseudo_obs()?);
        let (u, v): (Vec<f64>, Vec<f64>) = t.pairs.par_iter().map(|&(l, m)| ubar_vbar(sample, l, m)).unzip();
        t.u_part = Some(u);
        t.v_part = Some(v);
        Ok(t)
    }

    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.s.iter().enumerate() {
            if v > self.s[best] {
                best = k;
            }
        }
        self.pairs[best]
    }

    /// CSV with columns `pair,l,m,S[,U,V]`; `l` and `m` are 1-based.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        let with_uv = self.u_part.is_some() && self.v_part.is_some();
        let mut header = vec!["pair", "l", "m", "S"];
        if with_uv {
            header.extend(["U", "V"]);
        }
        wtr.write_record(&header)?;
        for (k, &(l, m)) in self.pairs.iter().enumerate() {
            let mut rec = vec![
                format!("{}:{}", self.names[l], self.names[m]),
                (l + 1).to_string(),
                (m + 1).to_string(),
                self.s[k].to_string(),
            ];
            if let (Some(u), Some(v)) = (&self.u_part, &self.v_part) {
                rec.push(u[k].to_string());
                rec.push(v[k].to_string());
            }
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoebiusTestReport {
    pub n: usize,
    pub d: usize,
    pub max_s: f64,
    pub argmax: (usize, usize),
    pub y: f64,
    pub u_n: f64,
    pub kappa_sq: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

pub fn moebius_test_pseudo(pseudo: &PseudoObsMatrix, alpha: f64) -> Result<(MoebiusTestReport, MoebiusStatTable)> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} is outside [0, 1)")));
    }
    let calib = GumbelCalib::new(pseudo.d())?;
    let table = MoebiusStatTable::from_pseudo(pseudo);
    let y = calib.standardize(table.m);
    let p = calib.p_value(y);
    Ok((
        MoebiusTestReport {
            n: pseudo.n(),
            d: pseudo.d(),
            max_s: table.m,
            argmax: table.argmax(),
            y,
            u_n: calib.u_n,
            kappa_sq: calib.kappa_sq,
            p_value: p,
            alpha,
            reject: p < alpha,
        },
        table,
    ))
}

pub fn moebius_test(data: &DataMatrix, alpha: f64) -> Result<(MoebiusTestReport, MoebiusStatTable)> {
    let p = compute_ranks(data)?;
    let (rep, mut table) = moebius_test_pseudo(&p, alpha)?;
    table.names = data.names().to_vec();
    Ok((rep, table))
}

/// Largest `|M_I(C_hat) - bar M_I(C_hat)|` over the `(1/n)`-grid of the
/// coordinates in `subset`.
pub fn moebius_gap(ec: &EmpiricalCopula, subset: &[usize]) -> Result<f64> {
    let p = ec.pseudo();
    let (n, d) = (p.n(), p.d());
    let k = subset.len();
    if k < 2 {
        return Err(Error::InvalidParameter(
            "index set needs at least two coordinates".into(),
        ));
    }
    let g = |u: &[f64]| ec.eval(u).expect("point inside the unit cube");
    let mut worst = 0.0f64;
    let mut idx = vec![0usize; k];
    let mut u = vec![1.0; d];
    loop {
        for (t, &j) in subset.iter().enumerate() {
            u[j] = idx[t] as f64 / n as f64;
        }
        worst = worst.max((moebius_transform(g, subset, &u) - bar_moebius_transform(g, subset, &u)).abs());
        let mut t = 0;
        while t < k {
            idx[t] += 1;
            if idx[t] <= n {
                break;
            }
            idx[t] = 0;
            t += 1;
        }
        if t == k {
            return Ok(worst);
        }
    }
}
