//! Multivariate normal orthant probabilities `P(Z <= b)` for `Z ~ N(0, S)`.
//!
//! Dimensions one and two are handled in closed form / by [`super::bvn`],
//! dimension three by one-dimensional quadrature over a bivariate normal cdf.
//! Higher dimensions use Genz's separation-of-variables transform integrated
//! with randomly shifted Richtmyer lattice rules; the reported error is three
//! standard errors across the shifts.

use super::{bvn, normal};
use crate::error::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const PRIMES: [f64; 24] = [
    2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0, 19.0, 23.0, 29.0, 31.0, 37.0, 41.0, 43.0, 47.0, 53.0, 59.0, 61.0, 67.0, 71.0,
    73.0, 79.0, 83.0, 89.0,
];
const SHIFTS: usize = 12;
const MIN_POINTS: usize = 256;
const MAX_POINTS: usize = 1 << 17;
// Fixed so that estimates are reproducible call to call.
const LATTICE_SEED: u64 = 0x5eed_1a77_1ce5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MvnEstimate {
    pub value: f64,
    pub error: f64,
}

/// Orthant probability with upper limits `b` and covariance `cov`.
///
/// Coordinates with `b = +inf` are marginalised out first. Fails with
/// [`Error::ToleranceNotMet`] when the lattice budget is exhausted before
/// the error estimate falls below `tol`.
pub fn mvn_cdf(b: &[f64], cov: &DMatrix<f64>, tol: f64) -> Result<MvnEstimate> {
    assert_eq!(cov.nrows(), b.len());
    if b.contains(&f64::NEG_INFINITY) {
        return Ok(MvnEstimate { value: 0.0, error: 0.0 });
    }
    let keep: Vec<usize> = (0..b.len()).filter(|&i| b[i].is_finite()).collect();
    let k = keep.len();
    let sd: Vec<f64> = keep.iter().map(|&i| cov[(i, i)].sqrt()).collect();
    let z: Vec<f64> = keep.iter().zip(&sd).map(|(&i, s)| b[i] / s).collect();
    let corr = DMatrix::from_fn(k, k, |r, c| cov[(keep[r], keep[c])] / (sd[r] * sd[c]));
    let exact = |value: f64| Ok(MvnEstimate { value, error: 0.0 });
    match k {
        0 => exact(1.0),
        1 => exact(normal::cdf(z[0])),
        2 => exact(bvn::bvn_cdf(z[0], z[1], corr[(0, 1)])),
        3 => trivariate(&z, &corr, tol),
        _ => genz_qmc(&z, &corr, tol),
    }
}

/// Condition on the first coordinate and integrate the bivariate normal
/// cdf of the other two against its density.
fn trivariate(b: &[f64], corr: &DMatrix<f64>, tol: f64) -> Result<MvnEstimate> {
    let (r12, r13, r23) = (corr[(0, 1)], corr[(0, 2)], corr[(1, 2)]);
    let s2 = (1.0 - r12 * r12).sqrt();
    let s3 = (1.0 - r13 * r13).sqrt();
    let r = ((r23 - r12 * r13) / (s2 * s3)).clamp(-1.0, 1.0);
    let lo = -38.5;
    if b[0] <= lo {
        return Ok(MvnEstimate { value: 0.0, error: 0.0 });
    }
    let q = super::quad::integrate(
        |t| normal::pdf(t) * bvn::bvn_cdf((b[1] - r12 * t) / s2, (b[2] - r13 * t) / s3, r),
        lo,
        b[0],
        tol.min(1e-10),
    )
    .map_err(|_| Error::ToleranceNotMet {
        estimate: f64::NAN,
        tolerance: tol,
    })?;
    Ok(MvnEstimate {
        value: q.value.clamp(0.0, 1.0),
        error: q.error,
    })
}

fn genz_qmc(b: &[f64], corr: &DMatrix<f64>, tol: f64) -> Result<MvnEstimate> {
    let k = b.len();
    let chol = corr
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidParameter("covariance is not positive definite".into()))?;
    let l = chol.l();
    let gens: Vec<f64> = PRIMES[..k - 1].iter().map(|p| p.sqrt().fract()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(LATTICE_SEED);
    let shifts: Vec<Vec<f64>> = (0..SHIFTS)
        .map(|_| (0..k - 1).map(|_| rng.random::<f64>()).collect())
        .collect();

    let e0 = normal::cdf(b[0] / l[(0, 0)]);
    let mut y = vec![0.0; k];
    let mut n_points = MIN_POINTS;
    loop {
        let means: Vec<f64> = shifts
            .iter()
            .map(|shift| {
                let mut acc = 0.0;
                for j in 1..=n_points {
                    let mut f = e0;
                    let mut e = e0;
                    for i in 1..k {
                        let raw = (j as f64 * gens[i - 1] + shift[i - 1]).fract();
                        let w = (2.0 * raw - 1.0).abs();
                        y[i - 1] = normal::quantile((w * e).clamp(1e-300, 1.0 - 1e-16));
                        let s: f64 = (0..i).map(|m| l[(i, m)] * y[m]).sum();
                        e = normal::cdf((b[i] - s) / l[(i, i)]);
                        f *= e;
                        if f == 0.0 {
                            break;
                        }
                    }
                    acc += f;
                }
                acc / n_points as f64
            })
            .collect();
        let mean = means.iter().sum::<f64>() / SHIFTS as f64;
        let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / ((SHIFTS - 1) * SHIFTS) as f64;
        let error = 3.0 * var.sqrt();
        if error <= tol {
            return Ok(MvnEstimate {
                value: mean.clamp(0.0, 1.0),
                error,
            });
        }
        if n_points >= MAX_POINTS {
            return Err(Error::ToleranceNotMet {
                estimate: error,
                tolerance: tol,
            });
        }
        n_points *= 2;
    }
}

/// Partial derivative of the orthant probability with respect to `b[i]`:
/// the marginal density at `b[i]` times the conditional orthant probability
/// of the remaining coordinates.
pub fn mvn_cdf_grad(b: &[f64], cov: &DMatrix<f64>, i: usize, tol: f64) -> Result<MvnEstimate> {
    let k = b.len();
    if !b[i].is_finite() || b.contains(&f64::NEG_INFINITY) {
        return Ok(MvnEstimate { value: 0.0, error: 0.0 });
    }
    let s_ii = cov[(i, i)];
    let dens = normal::pdf(b[i] / s_ii.sqrt()) / s_ii.sqrt();
    let rest: Vec<usize> = (0..k).filter(|&r| r != i).collect();
    let shifted: Vec<f64> = rest.iter().map(|&r| b[r] - cov[(r, i)] / s_ii * b[i]).collect();
    let cond = DMatrix::from_fn(rest.len(), rest.len(), |p, q| {
        let (r, c) = (rest[p], rest[q]);
        cov[(r, c)] - cov[(r, i)] * cov[(i, c)] / s_ii
    });
    let inner = mvn_cdf(&shifted, &cond, tol)?;
    Ok(MvnEstimate {
        value: dens * inner.value,
        error: dens * inner.error,
    })
}
