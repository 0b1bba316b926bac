//! Empirical copula, the empirical processes built on it, and the measured
//! gap between the rank-based copula process and its linearisation.

use crate::error::{Error, Result};
use crate::models::{CopulaModel, ModelSpec, UniformSample};
use crate::ranks::PseudoObsMatrix;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct EmpiricalCopula {
    pseudo: PseudoObsMatrix,
}

impl EmpiricalCopula {
    pub fn new(pseudo: PseudoObsMatrix) -> Self {
        Self { pseudo }
    }

    pub fn pseudo(&self) -> &PseudoObsMatrix {
        &self.pseudo
    }

    /// `(1/n) #{i : Uhat_i <= u}`; coordinates equal to 1 are skipped.
    pub fn eval(&self, u: &[f64]) -> Result<f64> {
        let p = &self.pseudo;
        if u.len() != p.d() {
            return Err(Error::DimensionMismatch {
                expected: p.d(),
                got: u.len(),
            });
        }
        let active: Vec<usize> = (0..u.len()).filter(|&j| u[j] < 1.0).collect();
        let count = (0..p.n())
            .filter(|&i| active.iter().all(|&j| p.get(i, j) <= u[j]))
            .count();
        Ok(count as f64 / p.n() as f64)
    }

    /// Bivariate margin on `(l, m)` at `(a, b)`.
    pub fn eval_pair(&self, l: usize, m: usize, a: f64, b: f64) -> f64 {
        let p = &self.pseudo;
        let (ul, um) = (p.uhat(l), p.uhat(m));
        let count = ul.iter().zip(um).filter(|(x, y)| **x <= a && **y <= b).count();
        count as f64 / p.n() as f64
    }

    /// `table[a * (n+1) + b] = #{i : R_il <= a, R_im <= b}` for `a, b in 0..=n`.
    pub fn pair_count_table(&self, l: usize, m: usize) -> Vec<u32> {
        let n = self.pseudo.n();
        let w = n + 1;
        let mut t = vec![0u32; w * w];
        for (&a, &b) in self.pseudo.ranks(l).iter().zip(self.pseudo.ranks(m)) {
            t[a as usize * w + b as usize] += 1;
        }
        for a in 0..w {
            for b in 1..w {
                t[a * w + b] += t[a * w + b - 1];
            }
        }
        for a in 1..w {
            for b in 0..w {
                t[a * w + b] += t[(a - 1) * w + b];
            }
        }
        t
    }
}

/// `alpha_n(u) = n^(-1/2) sum_i {1(U_i <= u) - C(u)}` for true uniforms `U_i`.
pub fn alpha_process(sample: &UniformSample, model: &CopulaModel, u: &[f64]) -> Result<f64> {
    let c = model.cdf(u)?;
    let n = sample.n();
    let hits = (0..n)
        .filter(|&i| (0..u.len()).all(|j| u[j] >= 1.0 || sample.get(i, j) <= u[j]))
        .count();
    Ok((hits as f64 - n as f64 * c) / (n as f64).sqrt())
}

/// Univariate `alpha_nj(x) = n^(-1/2) sum_i {1(U_ij <= x) - x}`.
fn alpha_marginal(col: &[f64], x: f64) -> f64 {
    let hits = col.iter().filter(|&&v| v <= x).count();
    (hits as f64 - col.len() as f64 * x) / (col.len() as f64).sqrt()
}

/// Linearised process on the `(l, m)` margin:
/// `alpha_n(w) - sum_j C_j(w) alpha_nj(w_j)`, summing only over `w_j` in `(0, 1)`
/// since the marginal processes vanish at 0 and 1.
pub fn cbar_process(sample: &UniformSample, model: &CopulaModel, pair: (usize, usize), w: [f64; 2]) -> Result<f64> {
    let (l, m) = pair;
    let margin = model.pair_margin(l, m)?;
    let n = sample.n();
    let (cl, cm) = (sample.column(l), sample.column(m));
    let hits = cl.iter().zip(cm).filter(|(a, b)| **a <= w[0] && **b <= w[1]).count();
    let mut v = (hits as f64 - n as f64 * margin.cdf(&w)?) / (n as f64).sqrt();
    for (k, col) in [cl, cm].into_iter().enumerate() {
        if w[k] > 0.0 && w[k] < 1.0 {
            v -= margin.partial1(k, &w)? * alpha_marginal(col, w[k]);
        }
    }
    Ok(v)
}

/// `sqrt(n) (C_hat_n - C)` on the `(l, m)` margin.
pub fn cn_process(ec: &EmpiricalCopula, model: &CopulaModel, pair: (usize, usize), w: [f64; 2]) -> Result<f64> {
    let margin = model.pair_margin(pair.0, pair.1)?;
    let n = ec.pseudo().n() as f64;
    Ok(n.sqrt() * (ec.eval_pair(pair.0, pair.1, w[0], w[1]) - margin.cdf(&w)?))
}

#[derive(Debug, Clone, Serialize)]
pub struct StuteResidualReport {
    pub n: usize,
    pub d: usize,
    pub grid_resolution: usize,
    pub residual_sup: f64,
    /// Pairs in lexicographic order `(0,1), (0,2), ..., (d-2,d-1)`.
    pub per_pair_sups: Vec<f64>,
    /// `sup |sqrt(n)(C_hat_n - C)|` over the same lattice.
    pub cn_sup: f64,
    pub seed: Option<u64>,
    pub model: ModelSpec,
}

/// Smallest `k` with `x <= k / m`, so that `1(x <= k/m)` is `k >= index`.
fn grid_index(x: f64, m: usize) -> usize {
    let mf = m as f64;
    let mut k = (x * mf).ceil().max(0.0) as usize;
    while k < m && x > k as f64 / mf {
        k += 1;
    }
    while k > 0 && x <= (k - 1) as f64 / mf {
        k -= 1;
    }
    k.min(m)
}

/// Cumulative counts `#{i : idx_a(i) <= a, idx_b(i) <= b}` on `(m+1)^2` lattice indices.
fn lattice_counts(ia: &[usize], ib: &[usize], m: usize) -> Vec<u32> {
    let w = m + 1;
    let mut t = vec![0u32; w * w];
    for (&a, &b) in ia.iter().zip(ib) {
        t[a * w + b] += 1;
    }
    for a in 0..w {
        for b in 1..w {
            t[a * w + b] += t[a * w + b - 1];
        }
    }
    for a in 1..w {
        for b in 0..w {
            t[a * w + b] += t[(a - 1) * w + b];
        }
    }
    t
}

fn marginal_counts(idx: &[usize], m: usize) -> Vec<u32> {
    let mut c = vec![0u32; m + 1];
    for &k in idx {
        c[k] += 1;
    }
    for k in 1..=m {
        c[k] += c[k - 1];
    }
    c
}

/// `sup |C_n - Cbar_n|` over `{1/m, ..., (m-1)/m, 1}^2` minus the corner, for
/// every pair. `C_n` uses ranks of `sample`; `Cbar_n` uses `sample` itself
/// as the true uniforms.
///
/// The model's cdf cancels in the difference, which is
/// `sqrt(n)(C_hat - F_n) + sum_j C_j alpha_nj` with `F_n` the empirical cdf of
/// the true uniforms.
pub fn stute_residual(sample: &UniformSample, model: &CopulaModel, m: usize) -> Result<StuteResidualReport> {
    let (n, d) = (sample.n(), sample.d());
    if d != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: d,
        });
    }
    let m = m.max(2);
    let pseudo = sample.pseudo_obs()?;
    let nf = n as f64;
    let sq = nf.sqrt();
    let mf = m as f64;

    // Lattice index of each pseudo-observation (exact in integers) and of each true uniform.
    let rank_idx: Vec<Vec<usize>> = (0..d)
        .map(|j| pseudo.ranks(j).iter().map(|&r| (r as usize * m).div_ceil(n)).collect())
        .collect();
    let true_idx: Vec<Vec<usize>> = (0..d)
        .map(|j| sample.column(j).iter().map(|&x| grid_index(x, m)).collect())
        .collect();
    let marg: Vec<Vec<u32>> = true_idx.iter().map(|ix| marginal_counts(ix, m)).collect();

    let pairs: Vec<(usize, usize)> = (0..d).flat_map(|l| (l + 1..d).map(move |k| (l, k))).collect();
    let results: Vec<Result<(f64, f64)>> = pairs
        .par_iter()
        .map(|&(l, k)| {
            let margin = model.pair_margin(l, k)?;
            let ch = lattice_counts(&rank_idx[l], &rank_idx[k], m);
            let fnc = lattice_counts(&true_idx[l], &true_idx[k], m);
            let w = m + 1;
            let mut sup_res = 0.0_f64;
            let mut sup_cn = 0.0_f64;
            for a in 1..=m {
                for b in 1..=m {
                    if a == m && b == m {
                        continue;
                    }
                    let (x, y) = (a as f64 / mf, b as f64 / mf);
                    let p = [x, y];
                    let c_hat = ch[a * w + b] as f64 / nf;
                    let f_n = fnc[a * w + b] as f64 / nf;
                    let mut r = sq * (c_hat - f_n);
                    if a < m {
                        let al = (marg[l][a] as f64 - nf * x) / sq;
                        r += margin.partial1(0, &p)? * al;
                    }
                    if b < m {
                        let am = (marg[k][b] as f64 - nf * y) / sq;
                        r += margin.partial1(1, &p)? * am;
                    }
                    sup_res = sup_res.max(r.abs());
                    sup_cn = sup_cn.max((sq * (c_hat - margin.cdf(&p)?)).abs());
                }
            }
            Ok((sup_res, sup_cn))
        })
        .collect();
    let mut per_pair = Vec::with_capacity(pairs.len());
    let mut cn_sup = 0.0_f64;
    for r in results {
        let (a, b) = r?;
        per_pair.push(a);
        cn_sup = cn_sup.max(b);
    }
    Ok(StuteResidualReport {
        n,
        d,
        grid_resolution: m,
        residual_sup: per_pair.iter().cloned().fold(0.0, f64::max),
        per_pair_sups: per_pair,
        cn_sup,
        seed: None,
        model: model.to_spec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ranks::{compute_ranks, DataMatrix};
    use proptest::prelude::*;

    fn two_rows() -> EmpiricalCopula {
        let pseudo = PseudoObsMatrix::from_rank_columns(2, vec![vec![1, 2], vec![2, 1]]).unwrap();
        EmpiricalCopula::new(pseudo)
    }

    #[test]
    fn small_sample_values() {
        let ec = two_rows();
        assert_eq!(ec.eval(&[0.5, 0.5]).unwrap(), 0.0);
        assert_eq!(ec.eval(&[0.5, 1.0]).unwrap(), 0.5);
        assert_eq!(ec.eval(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(ec.eval(&[0.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn alpha_single_point() {
        let s = UniformSample::from_rows(&[vec![0.2, 0.4]]);
        let m = CopulaModel::independence(2).unwrap();
        assert!((alpha_process(&s, &m, &[0.5, 0.5]).unwrap() - 0.75).abs() < 1e-15);
        assert_eq!(alpha_process(&s, &m, &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(alpha_process(&s, &m, &[0.0, 0.7]).unwrap(), 0.0);
    }

    #[test]
    fn cbar_single_point_expansion() {
        // n = 1, U = (0.2, 0.4), independence, w = (0.5, 0.3):
        // alpha = 0 - 0.15, alpha_1 = 1 - 0.5, alpha_2 = 0 - 0.3,
        // cbar = -0.15 - 0.3 * 0.5 - 0.5 * (-0.3) = -0.15.
        let s = UniformSample::from_rows(&[vec![0.2, 0.4]]);
        let m = CopulaModel::independence(2).unwrap();
        let v = cbar_process(&s, &m, (0, 1), [0.5, 0.3]).unwrap();
        assert!((v + 0.15).abs() < 1e-15);
        assert_eq!(cbar_process(&s, &m, (0, 1), [1.0, 1.0]).unwrap(), 0.0);
    }

    #[test]
    fn cbar_independence_form() {
        let m = CopulaModel::independence(2).unwrap();
        let s = m.sample(50, 3).unwrap();
        let w = [0.35, 0.8];
        let am = |j: usize, x: f64| alpha_marginal(s.column(j), x);
        let expect = alpha_process(&s, &m, &w).unwrap() - w[1] * am(0, w[0]) - w[0] * am(1, w[1]);
        assert!((cbar_process(&s, &m, (0, 1), w).unwrap() - expect).abs() < 1e-13);
    }

    #[test]
    fn residual_matches_pointwise_definition() {
        let m = CopulaModel::gaussian_equicorrelated(3, 0.3).unwrap();
        let s = m.sample(40, 8).unwrap();
        let r = stute_residual(&s, &m, 10).unwrap();
        let ec = EmpiricalCopula::new(s.pseudo_obs().unwrap());
        let pairs = [(0, 1), (0, 2), (1, 2)];
        for (p, &pair) in pairs.iter().enumerate() {
            let mut sup = 0.0_f64;
            for a in 1..=10 {
                for b in 1..=10 {
                    if a == 10 && b == 10 {
                        continue;
                    }
                    let w = [a as f64 / 10.0, b as f64 / 10.0];
                    let diff = cn_process(&ec, &m, pair, w).unwrap() - cbar_process(&s, &m, pair, w).unwrap();
                    sup = sup.max(diff.abs());
                }
            }
            assert!(
                (sup - r.per_pair_sups[p]).abs() < 1e-12,
                "{sup} vs {}",
                r.per_pair_sups[p]
            );
        }
        assert_eq!(r.residual_sup, r.per_pair_sups.iter().cloned().fold(0.0, f64::max));
    }

    #[test]
    fn residual_below_process_sup() {
        let m = CopulaModel::independence(2).unwrap();
        let s = m.sample(500, 1).unwrap();
        let r = stute_residual(&s, &m, 50).unwrap();
        assert!(r.residual_sup.is_finite() && r.residual_sup < r.cn_sup);
    }

    #[test]
    fn residual_single_observation() {
        let m = CopulaModel::independence(3).unwrap();
        let s = UniformSample::from_rows(&[vec![0.3, 0.6, 0.9]]);
        let r = stute_residual(&s, &m, 8).unwrap();
        assert_eq!(r.per_pair_sups.len(), 3);
        assert!(r.per_pair_sups.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn pair_table_matches_eval() {
        let data = DataMatrix::from_columns(vec![vec![0.3, 0.9, 0.1, 0.5], vec![2.0, 1.0, 4.0, 3.0]]).unwrap();
        let ec = EmpiricalCopula::new(compute_ranks(&data).unwrap());
        let t = ec.pair_count_table(0, 1);
        for a in 0..=4 {
            for b in 0..=4 {
                let v = ec.eval(&[a as f64 / 4.0, b as f64 / 4.0]).unwrap();
                assert_eq!(t[a * 5 + b] as f64 / 4.0, v);
            }
        }
    }

    proptest! {
        #[test]
        fn monotone_in_each_coordinate(seed in 0u64..1000, j in 0usize..3, base in proptest::collection::vec(0.0f64..1.0, 3), steps in proptest::collection::vec(0.0f64..0.3, 5)) {
            let m = CopulaModel::clayton(1.5, 3).unwrap();
            let ec = EmpiricalCopula::new(m.sample(30, seed).unwrap().pseudo_obs().unwrap());
            let mut u = base.clone();
            let mut last = ec.eval(&u).unwrap();
            for s in steps {
                u[j] = (u[j] + s).min(1.0);
                let v = ec.eval(&u).unwrap();
                prop_assert!(v >= last);
                last = v;
            }
        }

        #[test]
        fn univariate_margin_is_step_function(seed in 0u64..1000, x in 0.0f64..=1.0) {
            let m = CopulaModel::independence(2).unwrap();
            let n = 17;
            let ec = EmpiricalCopula::new(m.sample(n, seed).unwrap().pseudo_obs().unwrap());
            let v = ec.eval(&[x, 1.0]).unwrap();
            let expect = (x * n as f64 + 1e-12).floor().min(n as f64) / n as f64;
            prop_assert!((v - expect).abs() < 1e-15);
        }
    }
}
