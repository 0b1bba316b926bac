//! Gaussian copula `C(u) = Phi_S(Phi^-1(u_1), ..., Phi^-1(u_d))`.

use crate::error::{Error, Result};
use crate::numeric::{bvn, mvn, normal};
use nalgebra::{DMatrix, DVector};

pub const DEFAULT_TOL: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianCopula {
    corr: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl GaussianCopula {
    /// Validates symmetry, unit diagonal, `|rho| < 1` and positive definiteness.
    pub fn new(corr: DMatrix<f64>) -> Result<Self> {
        let d = corr.nrows();
        if d < 2 || corr.ncols() != d {
            return Err(Error::InvalidParameter(format!(
                "correlation matrix must be square with d >= 2, got {}x{}",
                corr.nrows(),
                corr.ncols()
            )));
        }
        for i in 0..d {
            if (corr[(i, i)] - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter(format!("diagonal entry {i} is not 1")));
            }
            for j in 0..i {
                let (a, b) = (corr[(i, j)], corr[(j, i)]);
                if !a.is_finite() || (a - b).abs() > 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "correlation matrix is not symmetric at ({i}, {j})"
                    )));
                }
                if a.abs() >= 1.0 {
                    return Err(Error::InvalidParameter(format!(
                        "|rho| must be < 1, got {a} at ({i}, {j})"
                    )));
                }
            }
        }
        let corr = DMatrix::from_fn(d, d, |i, j| {
            if i == j {
                1.0
            } else {
                0.5 * (corr[(i, j)] + corr[(j, i)])
            }
        });
        let chol = corr
            .clone()
            .cholesky()
            .ok_or_else(|| Error::InvalidParameter("correlation matrix is not positive definite".into()))?
            .l();
        Ok(Self { corr, chol })
    }

    pub fn equicorrelated(d: usize, rho: f64) -> Result<Self> {
        Self::new(DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho }))
    }

    pub fn bivariate(rho: f64) -> Result<Self> {
        Self::equicorrelated(2, rho)
    }

    pub fn dim(&self) -> usize {
        self.corr.nrows()
    }

    pub fn corr(&self) -> &DMatrix<f64> {
        &self.corr
    }

    pub fn rho(&self, i: usize, j: usize) -> f64 {
        self.corr[(i, j)]
    }

    /// Largest absolute off-diagonal correlation.
    pub fn rho_max(&self) -> f64 {
        let d = self.dim();
        (0..d)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| self.corr[(i, j)].abs())
            .fold(0.0, f64::max)
    }

    pub fn chol(&self) -> &DMatrix<f64> {
        &self.chol
    }

    fn sub(&self, idx: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(idx.len(), idx.len(), |r, c| self.corr[(idx[r], idx[c])])
    }

    /// Distribution of `X_rest` given `X_given = x_given`: mean and covariance.
    fn conditional(&self, given: &[usize], x_given: &[f64], rest: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
        let s_gg = self.sub(given);
        let s_rg = DMatrix::from_fn(rest.len(), given.len(), |r, c| self.corr[(rest[r], given[c])]);
        let inv = s_gg
            .try_inverse()
            .expect("principal minor of a positive definite matrix");
        let w = &s_rg * inv;
        let mean = &w * DVector::from_column_slice(x_given);
        let cov = self.sub(rest) - &w * s_rg.transpose();
        (mean.iter().copied().collect(), cov)
    }

    pub fn cdf(&self, u: &[f64], tol: f64) -> Result<f64> {
        if u.iter().any(|&x| x <= 0.0) {
            return Ok(0.0);
        }
        let keep: Vec<usize> = (0..u.len()).filter(|&j| u[j] < 1.0).collect();
        let x: Vec<f64> = keep.iter().map(|&j| normal::quantile(u[j])).collect();
        Ok(match keep.len() {
            0 => 1.0,
            1 => u[keep[0]],
            2 => bvn::bvn_cdf(x[0], x[1], self.corr[(keep[0], keep[1])]),
            _ => mvn::mvn_cdf(&x, &self.sub(&keep), tol)?.value,
        })
    }

    /// `P(X_rest <= x_rest | X_given = x_given)` restricted to coordinates with `u < 1`.
    fn conditional_orthant(&self, u: &[f64], given: &[usize], tol: f64) -> Result<f64> {
        if u.iter().enumerate().any(|(m, &x)| !given.contains(&m) && x <= 0.0) {
            return Ok(0.0);
        }
        let rest: Vec<usize> = (0..u.len()).filter(|m| !given.contains(m) && u[*m] < 1.0).collect();
        if rest.is_empty() {
            return Ok(1.0);
        }
        let xg: Vec<f64> = given.iter().map(|&g| normal::quantile(u[g])).collect();
        let (mean, cov) = self.conditional(given, &xg, &rest);
        let b: Vec<f64> = rest
            .iter()
            .zip(&mean)
            .map(|(&m, mu)| normal::quantile(u[m]) - mu)
            .collect();
        Ok(mvn::mvn_cdf(&b, &cov, tol)?.value)
    }

    pub fn partial1(&self, j: usize, u: &[f64], tol: f64) -> Result<f64> {
        self.conditional_orthant(u, &[j], tol)
    }

    pub fn partial2(&self, i: usize, j: usize, u: &[f64], tol: f64) -> Result<f64> {
        if i != j {
            let xi = normal::quantile(u[i]);
            let xj = normal::quantile(u[j]);
            let dens = bvn::bvn_pdf(xi, xj, self.corr[(i, j)]) / (normal::pdf(xi) * normal::pdf(xj));
            return Ok(dens * self.conditional_orthant(u, &[i, j], tol)?);
        }
        // d/du_i of Psi(x_rest - sigma x_i), Psi the conditional orthant cdf.
        if u.iter().enumerate().any(|(m, &x)| m != i && x <= 0.0) {
            return Ok(0.0);
        }
        let rest: Vec<usize> = (0..u.len()).filter(|&m| m != i && u[m] < 1.0).collect();
        if rest.is_empty() {
            return Ok(0.0);
        }
        let xi = normal::quantile(u[i]);
        let (mean, cov) = self.conditional(&[i], &[xi], &rest);
        let b: Vec<f64> = rest
            .iter()
            .zip(&mean)
            .map(|(&m, mu)| normal::quantile(u[m]) - mu)
            .collect();
        let mut dx = 0.0;
        for (p, &m) in rest.iter().enumerate() {
            let sigma = self.corr[(m, i)];
            dx -= sigma * mvn::mvn_cdf_grad(&b, &cov, p, tol)?.value;
        }
        Ok(dx / normal::pdf(xi))
    }

    /// Standard normal draws mapped through the Cholesky factor and `Phi`.
    pub fn map_normals(&self, z: &mut [f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate().take(self.dim()) {
            let s: f64 = z
                .iter()
                .take(r + 1)
                .enumerate()
                .map(|(c, &x)| self.chol[(r, c)] * x)
                .sum();
            *o = normal::cdf(s);
        }
    }
}
