//! Numerical building blocks: normal distribution functions, bivariate and
//! multivariate normal probabilities, adaptive quadrature.

pub mod bvn;
pub mod mvn;
pub mod normal;
pub mod quad;

#[cfg(test)]
mod tests {
    use super::bvn::{bvn_cdf, bvn_pdf};
    use super::normal;
    use super::quad::integrate;

    /// Independent route: P(X <= x, Y <= y) = int_{-inf}^{x} phi(s) Phi((y - r s)/sqrt(1-r^2)) ds.
    fn bvn_by_quadrature(x: f64, y: f64, r: f64) -> f64 {
        let s = (1.0 - r * r).sqrt();
        integrate(|t| normal::pdf(t) * normal::cdf((y - r * t) / s), -12.0, x, 1e-13)
            .unwrap()
            .value
    }

    #[test]
    fn orthant_probability() {
        for &r in &[-0.99, -0.9, -0.5, 0.0, 0.3, 0.5, 0.8, 0.93, 0.999] {
            let exact = 0.25 + f64::asin(r) / (2.0 * std::f64::consts::PI);
            assert!((bvn_cdf(0.0, 0.0, r) - exact).abs() < 1e-14, "r = {r}");
        }
        assert!((bvn_cdf(0.0, 0.0, 0.5) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn agrees_with_one_dimensional_quadrature() {
        let pts = [
            (-2.0, 1.0),
            (0.5, 0.5),
            (1.5, -0.7),
            (-3.1, -2.5),
            (2.5, 3.0),
            (-0.2, 0.9),
        ];
        for &r in &[-0.97, -0.8, -0.4, -0.1, 0.0, 0.2, 0.6, 0.9, 0.95, 0.995] {
            for &(x, y) in &pts {
                let a = bvn_cdf(x, y, r);
                let b = bvn_by_quadrature(x, y, r);
                assert!((a - b).abs() < 1e-10, "({x},{y},{r}): {a} vs {b}");
            }
        }
    }

    #[test]
    fn degenerate_correlations() {
        assert!((bvn_cdf(0.3, -0.2, 1.0) - normal::cdf(-0.2)).abs() < 1e-15);
        let lower = (normal::cdf(0.3) + normal::cdf(0.4) - 1.0).max(0.0);
        assert!((bvn_cdf(0.3, 0.4, -1.0) - lower).abs() < 1e-15);
        assert_eq!(bvn_cdf(f64::NEG_INFINITY, 0.0, 0.3), 0.0);
        assert_eq!(bvn_cdf(f64::INFINITY, 0.2, 0.3), normal::cdf(0.2));
    }

    #[test]
    fn density_integrates_to_cdf_mixed_derivative() {
        let (x, y, r, h) = (0.4, -0.3, 0.6, 1e-4);
        let fd = (bvn_cdf(x + h, y + h, r) - bvn_cdf(x + h, y - h, r) - bvn_cdf(x - h, y + h, r)
            + bvn_cdf(x - h, y - h, r))
            / (4.0 * h * h);
        assert!((fd - bvn_pdf(x, y, r)).abs() < 1e-6);
    }
}
