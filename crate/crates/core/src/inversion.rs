//! Stepwise inversion of `φ_G` along a topological order.
//!
//! Step `i` adds node `i` to the already recovered nodes `[i] = {0, …, i-1}`.
//! With `Γ = (I - Λ)_{[i],[i]}`, `Ψ = Ω_{[i],[i]}`, parents `P`, lower
//! siblings `S` and `R = [i] \ S`, the new column of `Σ` satisfies
//!
//! ```text
//! Γ^T Σ_{[i],i} = Ψ Γ^{-1}_{[i],P} λ_P + ω_S
//! ```
//!
//! The rows in `R` determine `λ_P` through `M = Ω_{R,[i]} Γ^{-1}_{[i],P}`,
//! which needs full column rank; the rows in `S` then give `ω_S`, and
//!
//! ```text
//! ω_ii = σ_ii - λ^T Σ_{[i],[i]} λ - 2 ω^T Γ^{-1} λ
//! ```

use thiserror::Error;

use crate::field::{Field, RealField};
use crate::graph::{GraphError, MixedGraph};
use crate::linalg::{self, Matrix};
use crate::params::{Covariance, LambdaMatrix, OmegaMatrix, ParamError};

/// Residual tolerance for inexact backends, relative to `‖Σ‖_max`.
pub const CONSISTENCY_RTOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InversionError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("graph is not topologically labeled")]
    NotTopologicallyLabeled,
    #[error("expected a {expected}x{expected} matrix, found {found}x{found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("step {step} is outside 1..{m}")]
    StepOutOfRange { step: usize, m: usize },
    #[error("step {step} is rank deficient (rank {rank} < {required})")]
    RankDeficientStep { step: usize, rank: usize, required: usize },
    #[error("step {step} has no solution (residual {residual:e}); the covariance is not in the model")]
    InconsistentSystem { step: usize, residual: f64 },
    #[error("recovered Omega is not positive definite; the covariance is not in the model")]
    NotPositiveDefinite,
    #[error("base point does not map to the given covariance")]
    BaseNotInFiber,
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// The values recovered at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepSolution<F> {
    /// `λ_{p,i}` for `p` in [`StepRecord::parents`].
    pub lambda: Vec<F>,
    /// `ω_{s,i}` for `s` in [`StepRecord::siblings`].
    pub omega: Vec<F>,
    pub omega_diag: F,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord<F> {
    pub step: usize,
    pub parents: Vec<usize>,
    pub siblings: Vec<usize>,
    pub rest: Vec<usize>,
    /// `Ω_{R,[i]} Γ^{-1}_{[i],P}`.
    pub matrix_m: Matrix<F>,
    pub rank: usize,
    pub required_rank: usize,
    pub solution: Option<StepSolution<F>>,
}

impl<F> StepRecord<F> {
    pub fn passes(&self) -> bool {
        self.rank == self.required_rank
    }

    pub fn deficiency(&self) -> usize {
        self.required_rank - self.rank
    }
}

/// The linear algebra of one step, before `Σ` enters.
pub(crate) struct StepSystem<F> {
    pub parents: Vec<usize>,
    pub siblings: Vec<usize>,
    pub rest: Vec<usize>,
    pub gamma_inv: Matrix<F>,
    /// `Ψ Γ^{-1}_{[i],P}`, all `i` rows.
    pub psi_gp: Matrix<F>,
    pub m: Matrix<F>,
    /// Magnitude of the data behind `m`, for float rank decisions.
    pub scale: f64,
}

pub(crate) fn step_system<F: Field>(
    g: &MixedGraph,
    lambda: &Matrix<F>,
    omega: &Matrix<F>,
    i: usize,
    magnitude: impl Fn(&F) -> f64,
) -> StepSystem<F> {
    let known: Vec<usize> = (0..i).collect();
    let parents = g.parents(i).to_vec();
    let siblings = g.siblings_below(i);
    let rest: Vec<usize> = known.iter().copied().filter(|v| !siblings.contains(v)).collect();
    let gamma = lambda.select(&known, &known).identity_minus();
    let gamma_inv = linalg::unit_upper_inverse(&gamma);
    let psi = omega.select(&known, &known);
    let gp = gamma_inv.select(&known, &parents);
    let psi_gp = psi.matmul(&gp);
    let m = psi_gp.select(&rest, &(0..parents.len()).collect::<Vec<_>>());
    let max = |x: &Matrix<F>| x.iter().map(&magnitude).fold(0.0, f64::max);
    let scale = max(&psi) * max(&gp) * i as f64;
    StepSystem {
        parents,
        siblings,
        rest,
        gamma_inv,
        psi_gp,
        m,
        scale,
    }
}

/// `Γ^T Σ_{[i],i}`.
pub(crate) fn step_rhs<F: Field>(lambda: &Matrix<F>, sigma: &Matrix<F>, i: usize) -> Vec<F> {
    (0..i)
        .map(|k| {
            let mut acc = sigma[(k, i)].clone();
            for l in 0..k {
                if !lambda[(l, k)].is_zero() {
                    acc = acc - lambda[(l, k)].clone() * sigma[(l, i)].clone();
                }
            }
            acc
        })
        .collect()
}

/// `ω_S` and `ω_ii` from a chosen `λ_P`.
pub(crate) fn complete_step<F: Field>(
    sys: &StepSystem<F>,
    rhs: &[F],
    lambda_p: &[F],
    sigma: &Matrix<F>,
    i: usize,
) -> (Vec<F>, F) {
    let applied = sys.psi_gp.matvec(lambda_p);
    let omega_s: Vec<F> = sys
        .siblings
        .iter()
        .map(|&s| rhs[s].clone() - applied[s].clone())
        .collect();
    let mut lam = vec![F::zero(); i];
    for (k, &p) in sys.parents.iter().enumerate() {
        lam[p] = lambda_p[k].clone();
    }
    let mut om = vec![F::zero(); i];
    for (k, &s) in sys.siblings.iter().enumerate() {
        om[s] = omega_s[k].clone();
    }
    let mut diag = sigma[(i, i)].clone();
    for a in 0..i {
        if lam[a].is_zero() {
            continue;
        }
        for b in 0..i {
            if !lam[b].is_zero() {
                diag = diag - lam[a].clone() * sigma[(a, b)].clone() * lam[b].clone();
            }
        }
    }
    let gl = sys.gamma_inv.matvec(&lam);
    let two = F::from_i64(2);
    for a in 0..i {
        if !om[a].is_zero() {
            diag = diag - two.clone() * om[a].clone() * gl[a].clone();
        }
    }
    (omega_s, diag)
}

/// `M λ_P - r_R`.
pub(crate) fn step_residual<F: Field>(sys: &StepSystem<F>, rhs: &[F], lambda_p: &[F]) -> Vec<F> {
    let fitted = sys.m.matvec(lambda_p);
    sys.rest
        .iter()
        .zip(fitted)
        .map(|(&r, f)| f - rhs[r].clone())
        .collect()
}

fn require_labeled(g: &MixedGraph) -> Result<(), InversionError> {
    if !g.is_topologically_labeled() {
        return Err(InversionError::NotTopologicallyLabeled);
    }
    Ok(())
}

fn record<F: Field>(sys: StepSystem<F>, i: usize, rank: usize, solution: Option<StepSolution<F>>) -> StepRecord<F> {
    StepRecord {
        step: i,
        required_rank: sys.parents.len(),
        parents: sys.parents,
        siblings: sys.siblings,
        rest: sys.rest,
        matrix_m: sys.m,
        rank,
        solution,
    }
}

/// Evaluates the rank condition for node `i` (`1 <= i < m`) at `(Λ, Ω)`.
pub fn rank_condition<F: RealField>(
    g: &MixedGraph,
    lambda: &LambdaMatrix<F>,
    omega: &OmegaMatrix<F>,
    i: usize,
) -> Result<StepRecord<F>, InversionError> {
    require_labeled(g)?;
    if i == 0 || i >= g.m() {
        return Err(InversionError::StepOutOfRange { step: i, m: g.m() });
    }
    let sys = step_system(g, lambda.matrix(), omega.matrix(), i, |x| x.to_f64().abs());
    let rank = F::rank_scaled(&sys.m, sys.scale);
    Ok(record(sys, i, rank, None))
}

/// Whether every step's rank condition holds at `(Λ, Ω)`.
pub fn all_rank_conditions_hold<F: RealField>(g: &MixedGraph, lambda: &LambdaMatrix<F>, omega: &OmegaMatrix<F>) -> bool {
    (1..g.m()).all(|i| rank_condition(g, lambda, omega, i).is_ok_and(|r| r.passes()))
}

/// The unique preimage of `Σ` with the record of every step.
#[derive(Debug, Clone, PartialEq)]
pub struct Inversion<F> {
    pub lambda: LambdaMatrix<F>,
    pub omega: OmegaMatrix<F>,
    pub steps: Vec<StepRecord<F>>,
}

/// Recovers `(Λ, Ω)` from `Σ` on a topologically labeled acyclic graph.
pub fn invert<F: RealField>(g: &MixedGraph, sigma: &Covariance<F>) -> Result<Inversion<F>, InversionError> {
    require_labeled(g)?;
    let m = g.m();
    if sigma.dim() != m {
        return Err(InversionError::DimensionMismatch {
            expected: m,
            found: sigma.dim(),
        });
    }
    let s = sigma.matrix();
    let tol = CONSISTENCY_RTOL * s.max_abs();
    let mut lambda = Matrix::<F>::zeros(m, m);
    let mut omega = Matrix::<F>::zeros(m, m);
    let mut steps = Vec::with_capacity(m.saturating_sub(1));
    if m > 0 {
        omega[(0, 0)] = s[(0, 0)].clone();
    }
    for i in 1..m {
        let sys = step_system(g, &lambda, &omega, i, |x| x.to_f64().abs());
        let rank = F::rank_scaled(&sys.m, sys.scale);
        if rank < sys.parents.len() {
            return Err(InversionError::RankDeficientStep {
                step: i,
                rank,
                required: sys.parents.len(),
            });
        }
        let rhs = step_rhs(&lambda, s, i);
        let lambda_p = F::solve_full_column_rank(&sys.m, &rhs_rows(&sys, &rhs));
        let residual = step_residual(&sys, &rhs, &lambda_p)
            .iter()
            .map(|x| x.to_f64().abs())
            .fold(0.0, f64::max);
        let consistent = if F::EXACT { residual == 0.0 } else { residual <= tol };
        if !consistent {
            return Err(InversionError::InconsistentSystem { step: i, residual });
        }
        let (omega_s, diag) = complete_step(&sys, &rhs, &lambda_p, s, i);
        for (k, &p) in sys.parents.iter().enumerate() {
            lambda[(p, i)] = lambda_p[k].clone();
        }
        for (k, &sib) in sys.siblings.iter().enumerate() {
            omega[(sib, i)] = omega_s[k].clone();
            omega[(i, sib)] = omega_s[k].clone();
        }
        omega[(i, i)] = diag.clone();
        let solution = StepSolution {
            lambda: lambda_p,
            omega: omega_s,
            omega_diag: diag,
        };
        steps.push(record(sys, i, rank, Some(solution)));
    }
    if !omega.is_positive_definite() {
        return Err(InversionError::NotPositiveDefinite);
    }
    Ok(Inversion {
        lambda: LambdaMatrix::new_unchecked(lambda),
        omega: OmegaMatrix::new_unchecked(omega),
        steps,
    })
}

/// `r_R`, the right-hand side restricted to the rows of `M`.
pub(crate) fn rhs_rows<F: Clone>(sys: &StepSystem<F>, rhs: &[F]) -> Vec<F> {
    sys.rest.iter().map(|&r| rhs[r].clone()).collect()
}
