//! Adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

const MAX_INTERVALS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kron += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

/// Integrate `f` over `[a, b]` to absolute tolerance `tol`.
///
/// Bisects the interval with the largest error estimate until the summed
/// estimate drops below `tol`; fails with [`Error::QuadratureFailure`] if the
/// subdivision budget runs out first.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut parts = vec![(a, b, v, e)];
    let mut total_err = e;
    while total_err > tol {
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureFailure {
                estimate: total_err,
                tolerance: tol,
            });
        }
        let (idx, _) = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (lo, hi, _, _) = parts.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            // Interval can no longer be split in floating point.
            return Err(Error::QuadratureFailure {
                estimate: total_err,
                tolerance: tol,
            });
        }
        let (v1, e1) = gk15(&mut f, lo, mid);
        let (v2, e2) = gk15(&mut f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
        total_err = parts.iter().map(|p| p.3).sum();
    }
    // Sum in interval order so the result does not depend on split history.
    parts.sort_by(|x, y| x.0.total_cmp(&y.0));
    Ok(Quadrature {
        value: parts.iter().map(|p| p.2).sum(),
        error: total_err,
    })
}

/// Iterated integral over the unit square, inner variable second.
pub fn integrate_unit_square<F>(mut f: F, tol: f64) -> Result<Quadrature>
where
    F: FnMut(f64, f64) -> f64,
{
    let inner_tol = tol * 1e-2;
    let mut inner_failure: Option<Error> = None;
    let mut inner_err_max = 0.0_f64;
    let outer = integrate(
        |u| {
            if inner_failure.is_some() {
                return 0.0;
            }
            match integrate(|v| f(u, v), 0.0, 1.0, inner_tol) {
                Ok(q) => {
                    inner_err_max = inner_err_max.max(q.error);
                    q.value
                }
                Err(e) => {
                    inner_failure = Some(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        tol * 0.5,
    )?;
    if let Some(e) = inner_failure {
        return Err(e);
    }
    let error = outer.error + inner_err_max;
    if error > tol {
        return Err(Error::QuadratureFailure {
            estimate: error,
            tolerance: tol,
        });
    }
    Ok(Quadrature {
        value: outer.value,
        error,
    })
}
