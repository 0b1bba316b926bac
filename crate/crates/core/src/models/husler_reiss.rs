//! Bivariate Huesler-Reiss extreme-value copula.

use crate::error::{Error, Result};
use crate::numeric::normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HuslerReissCopula {
    lambda: f64,
}

/// Pickands dependence function `A(t)`; `A(0) = A(1) = 1`.
pub fn hr_pickands(lambda: f64, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 1.0;
    }
    let c = ((1.0 - t) / t).ln() / (2.0 * lambda);
    (1.0 - t) * normal::cdf(lambda + c) + t * normal::cdf(lambda - c)
}

/// `t (1 - t) A''(t)`.
pub fn hr_weighted_second_derivative(lambda: f64, t: f64) -> f64 {
    if t <= 0.0 || t >= 1.0 {
        return 0.0;
    }
    weighted_second_derivative_logit(lambda, (t / (1.0 - t)).ln())
}

/// `t (1 - t) A''(t)` at `t = 1 / (1 + e^-s)`, i.e. `(g(t) + g(1 - t)) / (4 lambda^2)`
/// with `g(t) = (lambda - c(t)) / t * phi(lambda + c(t))` and `c(t) = -s / (2 lambda)`.
fn weighted_second_derivative_logit(lambda: f64, s: f64) -> f64 {
    let c = s / (2.0 * lambda);
    let g_t = (lambda + c) * (1.0 + (-s).exp()) * normal::pdf(lambda - c);
    let g_1t = (lambda - c) * (1.0 + s.exp()) * normal::pdf(lambda + c);
    (g_t + g_1t) / (4.0 * lambda * lambda)
}

/// Numerical `sup_t t (1 - t) A''(t)`.
///
/// The function is symmetric about 1/2, so a logit-spaced scan of `(0, 1/2]`
/// followed by golden-section refinement around the best grid point suffices.
pub fn hr_g_bound(lambda: f64) -> f64 {
    let f = |s: f64| weighted_second_derivative_logit(lambda, s);
    const STEPS: usize = 20_000;
    let (lo, hi) = (-60.0, 0.0);
    let h = (hi - lo) / STEPS as f64;
    let mut best = (lo, f(lo));
    for k in 1..=STEPS {
        let s = lo + k as f64 * h;
        let v = f(s);
        if v > best.1 {
            best = (s, v);
        }
    }
    let (mut a, mut b) = ((best.0 - h).max(lo), (best.0 + h).min(hi));
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let x1 = b - r * (b - a);
        let x2 = a + r * (b - a);
        if f(x1) > f(x2) {
            b = x2;
        } else {
            a = x1;
        }
    }
    best.1.max(f(0.5 * (a + b)))
}

impl HuslerReissCopula {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Huesler-Reiss lambda must lie in (0, inf), got {lambda}"
            )));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Arguments of the two normal cdfs in the exponent measure at `x = -ln u`, `y = -ln v`.
    fn ab(&self, x: f64, y: f64) -> (f64, f64) {
        let l = (x / y).ln() / (2.0 * self.lambda);
        (self.lambda + l, self.lambda - l)
    }

    pub fn cdf(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        if u >= 1.0 {
            return v;
        }
        if v >= 1.0 {
            return u;
        }
        let (x, y) = (-u.ln(), -v.ln());
        let (a, b) = self.ab(x, y);
        (-(x * normal::cdf(a) + y * normal::cdf(b))).exp()
    }

    pub fn partial1(&self, j: usize, u: f64, v: f64) -> f64 {
        let (p, q) = if j == 0 { (u, v) } else { (v, u) };
        if q <= 0.0 {
            return 0.0;
        }
        if q >= 1.0 {
            return 1.0;
        }
        let (a, _) = self.ab(-p.ln(), -q.ln());
        self.cdf(u, v) * normal::cdf(a) / p
    }

    pub fn partial2(&self, i: usize, j: usize, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 || u >= 1.0 || v >= 1.0 {
            return 0.0;
        }
        let c = self.cdf(u, v);
        let (x, y) = (-u.ln(), -v.ln());
        let (a, b) = self.ab(x, y);
        let tl = 2.0 * self.lambda;
        match (i, j) {
            (0, 0) => {
                let pa = normal::cdf(a);
                c / (u * u) * (pa * pa - pa - normal::pdf(a) / (tl * x))
            }
            (1, 1) => {
                let pb = normal::cdf(b);
                c / (v * v) * (pb * pb - pb - normal::pdf(b) / (tl * y))
            }
            _ => c / (u * v) * (normal::cdf(a) * normal::cdf(b) + normal::pdf(a) / (tl * y)),
        }
    }
}
