//! Clayton copula with generator `phi(t) = (t^-theta - 1) / theta`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClaytonCopula {
    theta: f64,
    d: usize,
}

impl ClaytonCopula {
    pub fn new(theta: f64, d: usize) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Clayton theta must be > 0, got {theta}"
            )));
        }
        if d < 2 {
            return Err(Error::InvalidParameter(format!(
                "Clayton dimension must be >= 2, got {d}"
            )));
        }
        Ok(Self { theta, d })
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn cdf(&self, u: &[f64]) -> f64 {
        if u.iter().any(|&x| x <= 0.0) {
            return 0.0;
        }
        // s = sum(u_j^-theta - 1), exact zero for coordinates equal to one.
        let s: f64 = u.iter().map(|&x| (-self.theta * x.ln()).exp_m1()).sum();
        (-s.ln_1p() / self.theta).exp()
    }

    pub fn partial1(&self, j: usize, u: &[f64]) -> f64 {
        let c = self.cdf(u);
        if c == 0.0 {
            return 0.0;
        }
        (c / u[j]).powf(self.theta + 1.0)
    }

    pub fn partial2(&self, i: usize, j: usize, u: &[f64]) -> f64 {
        let c = self.cdf(u);
        if c == 0.0 {
            return 0.0;
        }
        let t = self.theta;
        let ci = (c / u[i]).powf(t + 1.0);
        if i == j {
            // phi''(u_i)/phi'(C) - phi'(u_i)^2 phi''(C) / phi'(C)^3
            (t + 1.0) / u[i] * ci * ((c / u[i]).powf(t) - 1.0)
        } else {
            let cj = (c / u[j]).powf(t + 1.0);
            (t + 1.0) * ci * cj / c
        }
    }

    /// Marshall-Olkin frailty map: `U_j = (1 + E_j / V)^(-1/theta)`.
    pub fn frailty_map(&self, v: f64, e: &[f64], out: &mut [f64]) {
        for (o, &x) in out.iter_mut().zip(e) {
            *o = (-(x / v).ln_1p() / self.theta).exp();
        }
    }
}
