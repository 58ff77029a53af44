//! Fibers of the inverse-covariance map on a directed cycle
//! `0 -> 1 -> … -> m-1 -> 0`.
//!
//! With `λ_i` on the edge `i -> i+1` (indices mod `m`) and `Δ = diag(δ)`,
//! `K = (I - Λ) Δ (I - Λ)^T` has `K_ii = δ_i + λ_i² δ_{i+1}` and
//! `K_{i,i+1} = -λ_i δ_{i+1}`. A fiber has at most two points.

use thiserror::Error;

use crate::field::RealField;
use crate::graph::MixedGraph;
use crate::linalg::{self, Matrix};
use crate::params::{kappa, phi, DeltaDiagonal, LambdaMatrix, OmegaMatrix, ParamError};

/// Agreement required between the `κ` images of fiber points.
pub const KAPPA_TOL: f64 = 1e-10;

/// Relative tolerance for two float points to count as one.
const COINCIDE_RTOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CycleError {
    #[error("invalid cycle parameters: {0}")]
    InvalidCycleParams(String),
    #[error("graph is not the directed cycle on {0} nodes")]
    NotACycle(usize),
    #[error("the constructed points disagree under kappa (residual {0:e})")]
    Verification(f64),
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleParams<F> {
    lambda: Vec<F>,
    delta: Vec<F>,
}

impl<F: RealField> CycleParams<F> {
    pub fn new(lambda: Vec<F>, delta: Vec<F>) -> Result<Self, CycleError> {
        let m = lambda.len();
        if m < 3 {
            return Err(CycleError::InvalidCycleParams(format!("cycle length {m} is below 3")));
        }
        if delta.len() != m {
            return Err(CycleError::InvalidCycleParams(format!(
                "{m} edge coefficients but {} deltas",
                delta.len()
            )));
        }
        if let Some(i) = delta.iter().position(|d| !d.is_positive()) {
            return Err(CycleError::InvalidCycleParams(format!("delta[{i}] is not positive")));
        }
        let prod = lambda.iter().fold(F::one(), |acc, l| acc * l.clone());
        if prod.approx_eq(&F::one(), COINCIDE_RTOL) {
            return Err(CycleError::InvalidCycleParams(
                "product of edge coefficients is 1, so I - Lambda is singular".into(),
            ));
        }
        Ok(CycleParams { lambda, delta })
    }

    pub fn m(&self) -> usize {
        self.lambda.len()
    }

    pub fn lambda(&self) -> &[F] {
        &self.lambda
    }

    pub fn delta(&self) -> &[F] {
        &self.delta
    }

    pub fn lambda_matrix(&self) -> Matrix<F> {
        let m = self.m();
        let mut l = Matrix::zeros(m, m);
        for i in 0..m {
            l[(i, (i + 1) % m)] = self.lambda[i].clone();
        }
        l
    }

    /// `κ(Λ, Δ)`.
    pub fn k_matrix(&self) -> Matrix<F> {
        let a = self.lambda_matrix().identity_minus();
        a.matmul(&Matrix::diagonal(&self.delta)).matmul(&a.transpose())
    }

    fn approx_eq(&self, other: &Self) -> bool {
        self.lambda
            .iter()
            .zip(&other.lambda)
            .chain(self.delta.iter().zip(&other.delta))
            .all(|(a, b)| a.approx_eq(b, COINCIDE_RTOL))
    }
}

/// The directed cycle graph on `m` nodes.
pub fn cycle_graph(m: usize) -> MixedGraph {
    MixedGraph::new(m, (0..m).map(|i| (i, (i + 1) % m)), []).expect("cycle is a valid graph")
}

/// `det K_{-i}` from the closed form
///
/// ```text
/// (Π_j δ_j) · Σ_j (1/δ_j) Π_{k on the path j -> … -> i} λ_k²
/// ```
///
/// where the `j = i` term is the empty path.
pub fn det_k_minus_i<F: RealField>(p: &CycleParams<F>, i: usize) -> F {
    let m = p.m();
    let prod_delta = p.delta.iter().fold(F::one(), |acc, d| acc * d.clone());
    let mut sum = F::zero();
    for j in 0..m {
        let mut term = F::one() / p.delta[j].clone();
        let mut k = j;
        while k != i {
            term = term * p.lambda[k].clone() * p.lambda[k].clone();
            k = (k + 1) % m;
        }
        sum = sum + term;
    }
    prod_delta * sum
}

/// `K` with row and column `i` removed, for cross-checking the closed form.
pub fn k_minus_i_direct<F: RealField>(p: &CycleParams<F>, i: usize) -> F {
    let keep: Vec<usize> = (0..p.m()).filter(|&k| k != i).collect();
    linalg::determinant(&p.k_matrix().select(&keep, &keep))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleFiber<F> {
    pub points: Vec<CycleParams<F>>,
    /// The two formal solutions coincide.
    pub degenerate: bool,
    /// `‖κ(p) - κ(p0)‖_max` over the returned points.
    pub kappa_residual: f64,
}

/// The fiber of `κ` through `p0`.
///
/// When some `λ_i = 0` the fiber is `{p0}`. Otherwise the second solution is
///
/// ```text
/// δ¹_i = δ_i + (Π δ)(Π λ² - 1) / det K_{-i}      λ¹_i = -K_{i,i+1} / δ¹_{i+1}
/// ```
///
/// which coincides with `p0` exactly when `Π λ = -1`.
pub fn cycle_fiber<F: RealField>(p0: &CycleParams<F>) -> Result<CycleFiber<F>, CycleError> {
    if p0.lambda.iter().any(|l| l.is_zero()) {
        return Ok(CycleFiber {
            points: vec![p0.clone()],
            degenerate: false,
            kappa_residual: 0.0,
        });
    }
    let m = p0.m();
    let k0 = p0.k_matrix();
    let prod_delta = p0.delta.iter().fold(F::one(), |acc, d| acc * d.clone());
    let prod_lambda_sq = p0.lambda.iter().fold(F::one(), |acc, l| acc * l.clone() * l.clone());
    let shift = prod_delta * (prod_lambda_sq - F::one());
    let delta: Vec<F> = (0..m)
        .map(|i| p0.delta[i].clone() + shift.clone() / det_k_minus_i(p0, i))
        .collect();
    let lambda: Vec<F> = (0..m)
        .map(|i| -k0[(i, (i + 1) % m)].clone() / delta[(i + 1) % m].clone())
        .collect();
    let p1 = CycleParams::new(lambda, delta)?;
    let residual = p1.k_matrix().max_abs_diff(&k0);
    if residual > KAPPA_TOL * k0.max_abs().max(1.0) {
        return Err(CycleError::Verification(residual));
    }
    if p1.approx_eq(p0) {
        return Ok(CycleFiber {
            points: vec![p0.clone()],
            degenerate: true,
            kappa_residual: residual,
        });
    }
    Ok(CycleFiber {
        points: vec![p0.clone(), p1],
        degenerate: false,
        kappa_residual: residual,
    })
}

/// Maps each fiber point to `(Λ, Ω = Δ^{-1})` on the cycle graph `g`.
pub fn lift_to_phi_fiber<F: RealField>(
    g: &MixedGraph,
    fiber: &CycleFiber<F>,
) -> Result<Vec<(LambdaMatrix<F>, OmegaMatrix<F>)>, CycleError> {
    let m = fiber.points.first().map_or(0, CycleParams::m);
    if g.m() != m || *g != cycle_graph(m).renamed(g.names().to_vec()).map_err(ParamError::from)? {
        return Err(CycleError::NotACycle(m));
    }
    fiber
        .points
        .iter()
        .map(|p| {
            let lambda = LambdaMatrix::new(g, p.lambda_matrix())?;
            let omega = OmegaMatrix::new(g, DeltaDiagonal::new(p.delta.clone())?.inverse_matrix())?;
            Ok((lambda, omega))
        })
        .collect()
}

/// Checks that all lifted points share one covariance; returns the residual.
pub fn phi_residual<F: RealField>(g: &MixedGraph, points: &[(LambdaMatrix<F>, OmegaMatrix<F>)]) -> Result<f64, ParamError> {
    let Some((l0, o0)) = points.first() else {
        return Ok(0.0);
    };
    let s0 = phi(g, l0, o0)?;
    points.iter().skip(1).try_fold(0.0, |acc: f64, (l, o)| {
        Ok(acc.max(phi(g, l, o)?.matrix().max_abs_diff(s0.matrix())))
    })
}

/// `κ` of the cycle graph, through the general map.
pub fn kappa_of<F: RealField>(p: &CycleParams<F>) -> Result<Matrix<F>, ParamError> {
    let g = cycle_graph(p.m());
    let lambda = LambdaMatrix::new(&g, p.lambda_matrix())?;
    Ok(kappa(&g, &lambda, &DeltaDiagonal::new(p.delta.clone())?)?.into_inner())
}
