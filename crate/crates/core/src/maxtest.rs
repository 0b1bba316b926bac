//! Max-type tests of pairwise independence: `T = sqrt(n) max |gamma_hat|`
//! over all pairs, calibrated by the Gumbel limit or by the finite-`d`
//! Gaussian-maximum form.

use crate::association::{all_pairs_pseudo, g_null, Measure, PairStatisticsTable};
use crate::error::{Error, Result};
use crate::models::{CopulaModel, UniformSample};
use crate::numeric::normal;
use crate::ranks::PseudoObsMatrix;
use crate::rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Calibration {
    Gumbel,
    Gaussian,
}

impl FromStr for Calibration {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gumbel" => Ok(Calibration::Gumbel),
            "gaussian" => Ok(Calibration::Gaussian),
            other => Err(Error::InvalidParameter(format!("unknown calibration `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxTestReport {
    pub gamma: Measure,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub c_n: u64,
    pub v_gamma: f64,
    /// `a_n (T / sqrt(v) - b_n)` for the Gumbel path, `T / sqrt(v)` for the Gaussian path.
    pub standardized: f64,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Calibration actually used (d = 2 always uses the Gaussian form).
    pub calibration: Calibration,
    /// Pair attaining the maximum, 0-based.
    pub argmax: (usize, usize),
}

/// `sqrt(n) max_I |gamma_hat_I|` and the pair attaining it (first on ties).
pub fn max_statistic(table: &PairStatisticsTable, gamma: Measure, n: usize) -> Result<(f64, (usize, usize))> {
    let vals = table.values(gamma)?;
    let expected = table.d * table.d.saturating_sub(1) / 2;
    if vals.len() != expected || vals.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "table holds {} pairs, expected {expected}",
            vals.len()
        )));
    }
    let mut best = 0usize;
    for (k, v) in vals.iter().enumerate() {
        if v.abs() > vals[best].abs() {
            best = k;
        }
    }
    let r = &table.pairs[best];
    Ok(((n as f64).sqrt() * vals[best].abs(), (r.l, r.m)))
}

pub fn pair_count(d: usize) -> u64 {
    (d as u64) * (d as u64).saturating_sub(1) / 2
}

/// Normalising sequences `(a_n, b_n)` of the Gumbel limit for the maximum of
/// `c` absolute standard normals: `b_n = a_n - log(pi log c) / (2 a_n)`.
pub fn gumbel_constants(c: u64) -> (f64, f64) {
    let lc = (c as f64).ln();
    let a = (2.0 * lc).sqrt();
    // Written as log(4 pi log c) - log 4; with a bare 4 in place of log 4 the
    // maximum would not converge to the Gumbel law.
    let b = a - ((4.0 * PI * lc).ln() - 4f64.ln()) / (2.0 * a);
    (a, b)
}

/// Standardised statistic `t` and p-value `1 - exp(-exp(-t))`.
pub fn gumbel_standardize(t_stat: f64, d: usize, gamma: Measure) -> Result<(f64, f64)> {
    let c = pair_count(d);
    if c < 2 {
        return Err(Error::DegenerateDimension { d });
    }
    let (a, b) = gumbel_constants(c);
    let t = a * (t_stat / gamma.null_variance().sqrt() - b);
    Ok((t, -(-(-t).exp()).exp_m1()))
}

pub fn gumbel_pvalue(t_stat: f64, d: usize, gamma: Measure) -> Result<f64> {
    gumbel_standardize(t_stat, d, gamma).map(|(_, p)| p)
}

/// `1 - (2 Phi(T / sqrt(v)) - 1)^c`, the exact law of the maximum of `c`
/// independent `|N(0, v)|`.
pub fn gaussian_pvalue(t_stat: f64, d: usize, gamma: Measure) -> Result<f64> {
    let c = pair_count(d);
    if c == 0 {
        return Err(Error::DimensionTooSmall { d, min: 2 });
    }
    let z = t_stat / gamma.null_variance().sqrt();
    let tail = 2.0 * normal::sf(z);
    Ok((-(c as f64 * (-tail).ln_1p()).exp_m1()).clamp(0.0, 1.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidParameter(format!("alpha = {alpha} is outside [0, 1)")));
    }
    Ok(())
}

/// Max test from a complete pair table.
pub fn max_test_table(
    table: &PairStatisticsTable,
    gamma: Measure,
    alpha: f64,
    calibration: Calibration,
) -> Result<MaxTestReport> {
    check_alpha(alpha)?;
    let (n, d) = (table.n, table.d);
    let (t, argmax) = max_statistic(table, gamma, n)?;
    let v = gamma.null_variance();
    let calibration = if d == 2 { Calibration::Gaussian } else { calibration };
    let (standardized, p_value) = match calibration {
        Calibration::Gumbel => gumbel_standardize(t, d, gamma)?,
        Calibration::Gaussian => (t / v.sqrt(), gaussian_pvalue(t, d, gamma)?),
    };
    Ok(MaxTestReport {
        gamma,
        n,
        d,
        t,
        c_n: pair_count(d),
        v_gamma: v,
        standardized,
        p_value,
        alpha,
        reject: p_value < alpha,
        calibration,
        argmax,
    })
}

pub fn max_test(
    pseudo: &PseudoObsMatrix,
    gamma: Measure,
    alpha: f64,
    calibration: Calibration,
) -> Result<MaxTestReport> {
    if pseudo.d() < 2 {
        return Err(Error::DimensionTooSmall { d: pseudo.d(), min: 2 });
    }
    max_test_table(&all_pairs_pseudo(pseudo, &[gamma]), gamma, alpha, calibration)
}

fn null_compatible(model: &CopulaModel) -> Result<()> {
    if model.pairwise_independent() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!(
            "{} model is not pairwise independent",
            model.family_name()
        )))
    }
}

/// Rejection rate over `reps` samples of size `n`; replicate `r` is drawn
/// from the stream keyed `(seed, r)`.
pub fn mc_null_calibration(
    model: &CopulaModel,
    n: usize,
    gamma: Measure,
    reps: usize,
    seed: u64,
    alpha: f64,
    calibration: Calibration,
) -> Result<f64> {
    null_compatible(model)?;
    check_alpha(alpha)?;
    let rejections = (0..reps as u64)
        .into_par_iter()
        .map(|r| -> Result<usize> {
            let s = model.sample(n, rng::derive_seed(seed, &[r]))?;
            let rep = max_test(&s.pseudo_obs()?, gamma, alpha, calibration)?;
            Ok(rep.reject as usize)
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .sum::<usize>();
    Ok(rejections as f64 / reps.max(1) as f64)
}

/// Sample correlation of the null linearisation scores of pairs `a` and `b`
/// evaluated on true uniforms.
pub fn score_correlation(sample: &UniformSample, gamma: Measure, a: (usize, usize), b: (usize, usize)) -> f64 {
    let n = sample.n();
    let score = |p: (usize, usize), i: usize| g_null(gamma, [sample.get(i, p.0), sample.get(i, p.1)]);
    let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (x, y) = (score(a, i), score(b, i));
        sa += x;
        sb += y;
        saa += x * x;
        sbb += y * y;
        sab += x * y;
    }
    let nf = n as f64;
    let cov = sab / nf - sa * sb / (nf * nf);
    let va = saa / nf - (sa / nf).powi(2);
    let vb = sbb / nf - (sb / nf).powi(2);
    cov / (va * vb).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::association::{pair_list, PairRecord};

    fn table(n: usize, d: usize, rho: &[f64]) -> PairStatisticsTable {
        PairStatisticsTable {
            n,
            d,
            names: (1..=d).map(|j| format!("V{j}")).collect(),
            pairs: pair_list(d)
                .into_iter()
                .zip(rho)
                .map(|((l, m), &r)| PairRecord {
                    l,
                    m,
                    rho: Some(r),
                    tau: None,
                    beta: None,
                })
                .collect(),
        }
    }

    #[test]
    fn max_statistic_examples() {
        let t = table(100, 3, &[0.1, -0.3, 0.2]);
        let (v, arg) = max_statistic(&t, Measure::Rho, 100).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
        assert_eq!(arg, (0, 2));
        let t = table(49, 2, &[-0.5]);
        assert_eq!(max_statistic(&t, Measure::Rho, 49).unwrap().0, 3.5);
        let t = table(10, 4, &[0.0; 6]);
        assert_eq!(max_statistic(&t, Measure::Rho, 10).unwrap().0, 0.0);
        assert!(max_statistic(&t, Measure::Tau, 10).is_err());
    }

    #[test]
    fn gumbel_at_location_is_one_minus_inverse_e() {
        let (_, b) = gumbel_constants(pair_count(20));
        let p = gumbel_pvalue(b, 20, Measure::Rho).unwrap();
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        let p = gumbel_pvalue(b * (4.0f64 / 9.0).sqrt(), 20, Measure::Tau).unwrap();
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
    }

    #[test]
    fn gumbel_constants_for_twenty_dimensions() {
        // 2 log 190 = 10.4985..., evaluated to 12 digits separately.
        let (a, b) = gumbel_constants(190);
        assert!((a - 3.239_451_827_75).abs() < 1e-10, "{a}");
        assert!((b - 2.806_910_906_12).abs() < 1e-10, "{b}");
        let p = gumbel_pvalue(4.0, 20, Measure::Rho).unwrap();
        let t: f64 = a * (4.0 - b);
        assert!((p - (1.0 - (-(-t).exp()).exp())).abs() < 1e-15);
    }

    #[test]
    fn gumbel_form_approaches_exact_maximum_law() {
        // Exact cdf of the maximum of c independent |N(0,1)| at the Gumbel
        // threshold, against exp(-exp(-t)); the gap shrinks as c grows.
        let gap = |c: u64, t: f64| {
            let (a, b) = gumbel_constants(c);
            let z = b + t / a;
            let exact = (c as f64 * (-2.0 * normal::sf(z)).ln_1p()).exp();
            (exact - (-(-t).exp()).exp()).abs()
        };
        for t in [-1.0, 0.0, 1.0, 2.97] {
            assert!(gap(1_000_000_000_000, t) < 0.015, "t {t}");
            assert!(gap(1_000_000_000_000, t) < gap(1000, t));
        }
    }

    #[test]
    fn gumbel_rejects_two_dimensions() {
        assert!(matches!(
            gumbel_pvalue(1.0, 2, Measure::Rho),
            Err(Error::DegenerateDimension { d: 2 })
        ));
    }

    #[test]
    fn pvalues_decrease_in_t() {
        let mut last = (1.0, 1.0);
        for k in 0..200 {
            let t = k as f64 * 0.05;
            let g = gumbel_pvalue(t, 12, Measure::Tau).unwrap();
            let z = gaussian_pvalue(t, 12, Measure::Tau).unwrap();
            assert!((0.0..=1.0).contains(&g) && (0.0..=1.0).contains(&z));
            if k > 0 {
                // Strict wherever the p-value is not saturated in floating point.
                assert!(g < last.0 || g == 0.0 || last.0 == 1.0);
                assert!(g <= last.0);
                assert!(z <= last.1);
            }
            last = (g, z);
        }
        assert!(gumbel_pvalue(100.0, 12, Measure::Rho).unwrap() < 1e-100);
    }

    #[test]
    fn gaussian_form_single_pair_is_two_sided_normal() {
        let p = gaussian_pvalue(1.96, 2, Measure::Rho).unwrap();
        assert!((p - 2.0 * normal::sf(1.96)).abs() < 1e-15);
    }

    #[test]
    fn two_dimensions_route_to_gaussian() {
        let t = table(100, 2, &[0.2]);
        let r = max_test_table(&t, Measure::Rho, 0.05, Calibration::Gumbel).unwrap();
        assert_eq!(r.calibration, Calibration::Gaussian);
        assert!((r.p_value - 2.0 * normal::sf(2.0)).abs() < 1e-15);
        assert!(r.reject);
    }

    #[test]
    fn argmax_invariant_under_standardisation() {
        let t = table(400, 4, &[0.05, -0.12, 0.03, 0.11, -0.02, 0.0]);
        let r = max_test_table(&t, Measure::Rho, 0.05, Calibration::Gumbel).unwrap();
        assert_eq!(r.argmax, (0, 2));
        let g = max_test_table(&t, Measure::Rho, 0.05, Calibration::Gaussian).unwrap();
        assert_eq!(g.argmax, r.argmax);
    }

    #[test]
    fn zero_level_never_rejects() {
        let m = CopulaModel::independence(5).unwrap();
        let rate = mc_null_calibration(&m, 50, Measure::Tau, 20, 3, 0.0, Calibration::Gumbel).unwrap();
        assert_eq!(rate, 0.0);
        let c = CopulaModel::clayton(1.0, 3).unwrap();
        assert!(mc_null_calibration(&c, 50, Measure::Rho, 2, 3, 0.05, Calibration::Gumbel).is_err());
    }

    #[test]
    fn null_calibration_reproducible() {
        let m = CopulaModel::independence(6).unwrap();
        let a = mc_null_calibration(&m, 60, Measure::Beta, 40, 11, 0.2, Calibration::Gaussian).unwrap();
        let b = mc_null_calibration(&m, 60, Measure::Beta, 40, 11, 0.2, Calibration::Gaussian).unwrap();
        assert_eq!(a, b);
    }
}
