//! Parametric copula families used as simulation sources and as
//! derivative oracles.

pub mod blockwise;
mod clayton;
mod gaussian;
mod husler_reiss;
mod spec;

pub use clayton::ClaytonCopula;
pub use gaussian::{GaussianCopula, DEFAULT_TOL as GAUSSIAN_DEFAULT_TOL};
pub use husler_reiss::{hr_g_bound, hr_pickands, hr_weighted_second_derivative, HuslerReissCopula};
pub use spec::{CorrelationSpec, ModelSpec};

use crate::error::{Error, Result};
use crate::ranks::{self, PseudoObsMatrix};
use crate::rng;
use rand::distr::Open01;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::Serialize;

#[derive(Debug, Clone, PartialEq)]
pub enum CopulaModel {
    Independence { d: usize },
    Gaussian(GaussianCopula),
    Clayton(ClaytonCopula),
    HuslerReiss(HuslerReissCopula),
    BlockwiseInductive { d: usize },
}

/// `n x d` sample of uniforms, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct UniformSample {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl UniformSample {
    pub fn from_column_major(n: usize, d: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n * d);
        Self { n, d, values }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        let mut values = vec![0.0; n * d];
        for (i, r) in rows.iter().enumerate() {
            for (j, &x) in r.iter().enumerate() {
                values[j * n + i] = x;
            }
        }
        Self { n, d, values }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn pseudo_obs(&self) -> Result<PseudoObsMatrix> {
        ranks::ranks_from_column_major(self.n, self.d, &self.values)
    }
}

/// Weighted sup of second-order partial derivatives over the interior
/// lattice `{1/m, ..., (m-1)/m}^2` of one bivariate margin.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeBoundReport {
    pub pair: (usize, usize),
    pub resolution: usize,
    /// `sup |C''_ij| * min(u_i(1-u_i), u_j(1-u_j))` over all `(i, j)` in the pair;
    /// for `i = j` the weight is `u_i(1-u_i)`.
    pub grid_sup: f64,
    /// Same weight, mixed derivative only.
    pub mixed_sup: f64,
    /// Same weight, the two pure second derivatives only.
    pub diagonal_sup: f64,
    /// Mixed derivative weighted by `max(u_i(1-u_i), u_j(1-u_j))`, the weighting
    /// that makes the bound `K min(1/(u_i(1-u_i)), 1/(u_j(1-u_j)))` binding, combined
    /// with the diagonal terms.
    pub grid_sup_max_weight: f64,
    pub k_claimed: Option<f64>,
}

fn check_unit(u: &[f64]) -> Result<()> {
    match u.iter().position(|x| !(0.0..=1.0).contains(x)) {
        Some(p) => Err(Error::InvalidParameter(format!(
            "coordinate {p} = {} lies outside [0, 1]",
            u[p]
        ))),
        None => Ok(()),
    }
}

fn check_interior(u: &[f64], j: usize) -> Result<()> {
    if u[j] <= 0.0 || u[j] >= 1.0 {
        return Err(Error::BoundaryPoint { index: j, value: u[j] });
    }
    Ok(())
}

impl CopulaModel {
    pub fn independence(d: usize) -> Result<Self> {
        if d < 2 {
            return Err(Error::InvalidParameter(format!("dimension must be >= 2, got {d}")));
        }
        Ok(Self::Independence { d })
    }

    pub fn gaussian(corr: nalgebra::DMatrix<f64>) -> Result<Self> {
        GaussianCopula::new(corr).map(Self::Gaussian)
    }

    pub fn gaussian_equicorrelated(d: usize, rho: f64) -> Result<Self> {
        GaussianCopula::equicorrelated(d, rho).map(Self::Gaussian)
    }

    pub fn clayton(theta: f64, d: usize) -> Result<Self> {
        ClaytonCopula::new(theta, d).map(Self::Clayton)
    }

    pub fn husler_reiss(lambda: f64) -> Result<Self> {
        HuslerReissCopula::new(lambda).map(Self::HuslerReiss)
    }

    pub fn blockwise_inductive(d: usize) -> Result<Self> {
        if d == 0 || !d.is_multiple_of(3) {
            return Err(Error::InvalidParameter(format!(
                "blockwise model needs a positive multiple of 3 dimensions, got {d}"
            )));
        }
        Ok(Self::BlockwiseInductive { d })
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            Self::Independence { .. } => "independence",
            Self::Gaussian(_) => "gaussian",
            Self::Clayton(_) => "clayton",
            Self::HuslerReiss(_) => "husler_reiss",
            Self::BlockwiseInductive { .. } => "blockwise_inductive",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Independence { d } | Self::BlockwiseInductive { d } => *d,
            Self::Gaussian(g) => g.dim(),
            Self::Clayton(c) => c.dim(),
            Self::HuslerReiss(_) => 2,
        }
    }

    /// True when every bivariate margin is the independence copula.
    pub fn pairwise_independent(&self) -> bool {
        matches!(self, Self::Independence { .. } | Self::BlockwiseInductive { .. })
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: u.len(),
            });
        }
        check_unit(u)
    }

    pub fn cdf(&self, u: &[f64]) -> Result<f64> {
        self.cdf_with_tol(u, gaussian::DEFAULT_TOL)
    }

    /// `tol` is the absolute integration tolerance for Gaussian margins of
    /// dimension three or more; other families are exact.
    pub fn cdf_with_tol(&self, u: &[f64], tol: f64) -> Result<f64> {
        self.check_dim(u)?;
        Ok(match self {
            Self::Independence { .. } => u.iter().product(),
            Self::Gaussian(g) => g.cdf(u, tol)?,
            Self::Clayton(c) => c.cdf(u),
            Self::HuslerReiss(h) => h.cdf(u[0], u[1]),
            Self::BlockwiseInductive { .. } => blockwise::cdf(u),
        })
    }

    pub fn partial1(&self, j: usize, u: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        check_interior(u, j)?;
        Ok(match self {
            Self::Independence { .. } => u.iter().enumerate().filter(|(m, _)| *m != j).map(|(_, x)| x).product(),
            Self::Gaussian(g) => g.partial1(j, u, gaussian::DEFAULT_TOL)?,
            Self::Clayton(c) => c.partial1(j, u),
            Self::HuslerReiss(h) => h.partial1(j, u[0], u[1]),
            Self::BlockwiseInductive { .. } => blockwise::partial1(j, u),
        }
        .clamp(0.0, 1.0))
    }

    pub fn partial2(&self, i: usize, j: usize, u: &[f64]) -> Result<f64> {
        self.check_dim(u)?;
        check_interior(u, i)?;
        check_interior(u, j)?;
        Ok(match self {
            Self::Independence { .. } => {
                if i == j {
                    0.0
                } else {
                    u.iter()
                        .enumerate()
                        .filter(|(m, _)| *m != i && *m != j)
                        .map(|(_, x)| x)
                        .product()
                }
            }
            Self::Gaussian(g) => g.partial2(i, j, u, gaussian::DEFAULT_TOL)?,
            Self::Clayton(c) => c.partial2(i, j, u),
            Self::HuslerReiss(h) => h.partial2(i, j, u[0], u[1]),
            Self::BlockwiseInductive { .. } => {
                return Err(Error::Unsupported(
                    "second derivatives of the blockwise model do not exist".into(),
                ))
            }
        })
    }

    /// Bivariate margin on coordinates `(l, m)`, as a two-dimensional model.
    pub fn pair_margin(&self, l: usize, m: usize) -> Result<CopulaModel> {
        let d = self.dim();
        if l >= d || m >= d || l == m {
            return Err(Error::InvalidParameter(format!("invalid pair ({l}, {m}) for d = {d}")));
        }
        Ok(match self {
            Self::Independence { .. } | Self::BlockwiseInductive { .. } => Self::Independence { d: 2 },
            Self::Gaussian(g) => Self::Gaussian(GaussianCopula::bivariate(g.rho(l, m))?),
            Self::Clayton(c) => Self::Clayton(ClaytonCopula::new(c.theta(), 2)?),
            Self::HuslerReiss(h) => Self::HuslerReiss(*h),
        })
    }

    /// `n` draws, reproducible in `(seed, n)`.
    pub fn sample(&self, n: usize, seed: u64) -> Result<UniformSample> {
        let d = self.dim();
        let mut rng = rng::stream(seed, &[]);
        let mut values = vec![0.0; n * d];
        let mut row = vec![0.0; d];
        let mut buf = vec![0.0; d];
        for i in 0..n {
            match self {
                Self::Independence { .. } => {
                    for x in row.iter_mut() {
                        *x = rng.sample(Open01);
                    }
                }
                Self::Gaussian(g) => {
                    for z in buf.iter_mut() {
                        *z = StandardNormal.sample(&mut rng);
                    }
                    g.map_normals(&mut buf, &mut row);
                }
                Self::Clayton(c) => {
                    let gamma = Gamma::new(1.0 / c.theta(), 1.0).map_err(|e| Error::InvalidParameter(e.to_string()))?;
                    let v: f64 = gamma.sample(&mut rng);
                    for e in buf.iter_mut() {
                        *e = Exp1.sample(&mut rng);
                    }
                    c.frailty_map(v, &buf, &mut row);
                }
                Self::HuslerReiss(_) => return Err(Error::UnsupportedSampler("husler_reiss")),
                Self::BlockwiseInductive { .. } => {
                    for t in row.chunks_mut(3) {
                        loop {
                            let v1: f64 = rng.sample(Open01);
                            let v2: f64 = rng.sample(Open01);
                            let s = v1 + v2;
                            let v3 = if s > 1.0 { s - 1.0 } else { s };
                            if v3 > 0.0 && v3 < 1.0 {
                                t.copy_from_slice(&[v1, v2, v3]);
                                break;
                            }
                        }
                    }
                }
            }
            for j in 0..d {
                values[j * n + i] = row[j];
            }
        }
        Ok(UniformSample::from_column_major(n, d, values))
    }

    /// Constant of the second-order boundary condition for a bivariate margin,
    /// where a closed form is available.
    pub fn claimed_constant(&self, l: usize, m: usize) -> Option<f64> {
        match self {
            Self::Gaussian(g) => {
                let r = g.rho(l, m);
                Some((r * r / (1.0 - r * r)).sqrt())
            }
            Self::Clayton(c) => Some(c.theta() + 1.0),
            Self::HuslerReiss(h) => Some(1.0 + hr_g_bound(h.lambda())),
            _ => None,
        }
    }

    pub fn to_spec(&self) -> ModelSpec {
        match self {
            Self::Independence { d } => ModelSpec::Independence { d: Some(*d) },
            Self::Gaussian(g) => ModelSpec::Gaussian {
                correlation: CorrelationSpec::Matrix(
                    (0..g.dim())
                        .map(|i| (0..g.dim()).map(|j| g.rho(i, j)).collect())
                        .collect(),
                ),
            },
            Self::Clayton(c) => ModelSpec::Clayton {
                theta: c.theta(),
                d: Some(c.dim()),
            },
            Self::HuslerReiss(h) => ModelSpec::HuslerReiss { lambda: h.lambda() },
            Self::BlockwiseInductive { d } => ModelSpec::BlockwiseInductive { d: Some(*d) },
        }
    }
}

/// Scan the interior lattice of the `(l, m)` margin with all other coordinates at 1.
pub fn condition23_check(
    model: &CopulaModel,
    pair: (usize, usize),
    resolution: usize,
) -> Result<DerivativeBoundReport> {
    let (l, m) = pair;
    let margin = model.pair_margin(l, m)?;
    let res = resolution.max(2);
    let mut mixed = 0.0_f64;
    let mut diag = 0.0_f64;
    let mut strict = 0.0_f64;
    for a in 1..res {
        let u = a as f64 / res as f64;
        for b in 1..res {
            let v = b as f64 / res as f64;
            let p = [u, v];
            let w_lo = (u * (1.0 - u)).min(v * (1.0 - v));
            let w_hi = (u * (1.0 - u)).max(v * (1.0 - v));
            let c12 = margin.partial2(0, 1, &p)?.abs();
            let c11 = margin.partial2(0, 0, &p)?.abs();
            let c22 = margin.partial2(1, 1, &p)?.abs();
            // For i = j the weight reduces to u_i (1 - u_i).
            let dg = (c11 * u * (1.0 - u)).max(c22 * v * (1.0 - v));
            mixed = mixed.max(c12 * w_lo);
            diag = diag.max(dg);
            strict = strict.max((c12 * w_hi).max(dg));
        }
    }
    Ok(DerivativeBoundReport {
        pair,
        resolution: res,
        grid_sup: mixed.max(diag),
        mixed_sup: mixed,
        diagonal_sup: diag,
        grid_sup_max_weight: strict,
        k_claimed: model.claimed_constant(l, m),
    })
}
