//! Blockwise model built from triples `(V1, V2, (V1 + V2) mod 1)` of uniforms.
//!
//! Any two members of a triple are independent uniforms, so every bivariate
//! margin is the independence copula while each triple is degenerate.

fn overlap(a1: f64, b1: f64, a2: f64, b2: f64) -> f64 {
    (b1.min(b2) - a1.max(a2)).max(0.0)
}

/// Measure of `{v2 in [0, b] : frac(v1 + v2) <= c}`.
fn inner(v1: f64, b: f64, c: f64) -> f64 {
    overlap(0.0, b, 0.0, c - v1) + overlap(0.0, b, 1.0 - v1, 1.0 - v1 + c)
}

/// `P(V1 <= a, V2 <= b, V3 <= c)`.
pub fn triple_cdf(a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    let a = a.min(1.0);
    let b = b.min(1.0);
    let c = c.min(1.0);
    // The inner measure is piecewise linear in v1; trapezoids between kinks are exact.
    let mut knots: Vec<f64> = [c - b, c, 1.0 - b, 1.0, 1.0 + c - b, 1.0 + c]
        .into_iter()
        .filter(|&k| k > 0.0 && k < a)
        .collect();
    knots.push(0.0);
    knots.push(a);
    knots.sort_by(f64::total_cmp);
    knots
        .windows(2)
        .map(|w| 0.5 * (w[1] - w[0]) * (inner(w[0], b, c) + inner(w[1], b, c)))
        .sum()
}

/// Partial derivative of [`triple_cdf`] with respect to coordinate `k` of the triple.
pub fn triple_partial(k: usize, a: f64, b: f64, c: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 || c <= 0.0 {
        return 0.0;
    }
    let a = a.min(1.0);
    let b = b.min(1.0);
    let c = c.min(1.0);
    match k {
        0 => inner(a, b, c),
        1 => inner(b, a, c),
        _ => overlap(0.0, a, c - b, c) + overlap(0.0, a, c + 1.0 - b, c + 1.0),
    }
}

pub fn cdf(u: &[f64]) -> f64 {
    u.chunks(3).map(|t| triple_cdf(t[0], t[1], t[2])).product()
}

pub fn partial1(j: usize, u: &[f64]) -> f64 {
    let block = j / 3;
    u.chunks(3)
        .enumerate()
        .map(|(b, t)| {
            if b == block {
                triple_partial(j % 3, t[0], t[1], t[2])
            } else {
                triple_cdf(t[0], t[1], t[2])
            }
        })
        .product()
}
