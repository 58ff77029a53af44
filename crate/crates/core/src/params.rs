//! Parameter containers and the two parametrizations
//!
//! ```text
//! φ_G(Λ, Ω) = (I - Λ)^{-T} Ω (I - Λ)^{-1}      κ_G(Λ, Δ) = (I - Λ) Δ (I - Λ)^T
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::field::{Field, RealField};
use crate::graph::{topological_order, GraphError, MixedGraph};
use crate::linalg::{self, Matrix};

/// Symmetry tolerance for float inputs, relative to the entry magnitude.
const SYMMETRY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("expected a {expected}x{expected} matrix, found {rows}x{cols}")]
    DimensionMismatch { expected: usize, rows: usize, cols: usize },
    #[error("{which}[{i},{j}] is nonzero but the graph has no such edge")]
    SupportViolation { which: &'static str, i: usize, j: usize },
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive definite")]
    NotPositiveDefinite,
    #[error("I - Lambda is singular")]
    SingularIminusLambda,
    #[error("delta[{0}] must be strictly positive")]
    NonPositiveDelta(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn check_square<F>(m: &Matrix<F>, expected: usize) -> Result<(), ParamError> {
    if m.rows() != expected || m.cols() != expected {
        return Err(ParamError::DimensionMismatch {
            expected,
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    Ok(())
}

/// Edge coefficients, zero off the directed support.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaMatrix<F>(Matrix<F>);

impl<F: Field> LambdaMatrix<F> {
    pub fn new(g: &MixedGraph, m: Matrix<F>) -> Result<Self, ParamError> {
        check_square(&m, g.m())?;
        for i in 0..g.m() {
            for j in 0..g.m() {
                if !m[(i, j)].is_zero() && !g.has_directed(i, j) {
                    return Err(ParamError::SupportViolation { which: "lambda", i, j });
                }
            }
        }
        Ok(LambdaMatrix(m))
    }

    pub fn zeros(g: &MixedGraph) -> Self {
        LambdaMatrix(Matrix::zeros(g.m(), g.m()))
    }

    pub(crate) fn new_unchecked(m: Matrix<F>) -> Self {
        LambdaMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<F> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.0[(i, j)]
    }
}

/// Error covariance: symmetric positive definite with off-diagonal support
/// on the bidirected edges.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaMatrix<F>(Matrix<F>);

impl<F: RealField> OmegaMatrix<F> {
    pub fn new(g: &MixedGraph, m: Matrix<F>) -> Result<Self, ParamError> {
        check_square(&m, g.m())?;
        if !m.is_symmetric(SYMMETRY_RTOL) {
            return Err(ParamError::NotSymmetric);
        }
        for i in 0..g.m() {
            for j in 0..i {
                if !m[(i, j)].is_zero() && !g.has_bidirected(i, j) {
                    return Err(ParamError::SupportViolation { which: "omega", i, j });
                }
            }
        }
        if !m.is_positive_definite() {
            return Err(ParamError::NotPositiveDefinite);
        }
        Ok(OmegaMatrix(m.symmetrized()))
    }

    pub fn identity(g: &MixedGraph) -> Self {
        OmegaMatrix(Matrix::identity(g.m()))
    }
}

impl<F: Field> OmegaMatrix<F> {
    pub(crate) fn new_unchecked(m: Matrix<F>) -> Self {
        OmegaMatrix(m)
    }

    pub fn matrix(&self) -> &Matrix<F> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<F> {
        self.0
    }

    pub fn get(&self, i: usize, j: usize) -> &F {
        &self.0[(i, j)]
    }
}

/// A symmetric positive definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Covariance<F>(Matrix<F>);

impl<F: RealField> Covariance<F> {
    pub fn new(m: Matrix<F>) -> Result<Self, ParamError> {
        if !m.is_square() {
            return Err(ParamError::DimensionMismatch {
                expected: m.rows(),
                rows: m.rows(),
                cols: m.cols(),
            });
        }
        if !m.is_symmetric(SYMMETRY_RTOL) {
            return Err(ParamError::NotSymmetric);
        }
        if !m.is_positive_definite() {
            return Err(ParamError::NotPositiveDefinite);
        }
        Ok(Covariance(m.symmetrized()))
    }

    /// Like [`Covariance::new`], additionally requiring an `m x m` shape.
    pub fn for_graph(g: &MixedGraph, m: Matrix<F>) -> Result<Self, ParamError> {
        check_square(&m, g.m())?;
        Self::new(m)
    }
}

impl<F: Field> Covariance<F> {
    pub fn matrix(&self) -> &Matrix<F> {
        &self.0
    }

    pub fn into_inner(self) -> Matrix<F> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows()
    }
}

/// Positive inverse error variances `δ_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeltaDiagonal<F>(Vec<F>);

impl<F: RealField> DeltaDiagonal<F> {
    pub fn new(values: Vec<F>) -> Result<Self, ParamError> {
        if let Some(i) = values.iter().position(|d| !d.is_positive()) {
            return Err(ParamError::NonPositiveDelta(i));
        }
        Ok(DeltaDiagonal(values))
    }

    pub fn values(&self) -> &[F] {
        &self.0
    }

    /// `Δ^{-1}` as a diagonal matrix.
    pub fn inverse_matrix(&self) -> Matrix<F> {
        let inv: Vec<F> = self.0.iter().map(|d| F::one() / d.clone()).collect();
        Matrix::diagonal(&inv)
    }
}

/// `(I - Λ)^{-1}` by summing path weights along a topological order.
///
/// Entry `(i, j)` is the sum over directed paths from `i` to `j` of the
/// product of edge coefficients; the diagonal is one.
pub fn path_inverse<F: Field>(g: &MixedGraph, lambda: &LambdaMatrix<F>) -> Result<Matrix<F>, GraphError> {
    let order = topological_order(g)?;
    let m = g.m();
    let mut x = Matrix::zeros(m, m);
    for i in 0..m {
        x[(i, i)] = F::one();
        for &j in &order.order()[order.position(i) + 1..] {
            let mut acc = F::zero();
            for &k in g.parents(j) {
                if !x[(i, k)].is_zero() {
                    acc = acc + x[(i, k)].clone() * lambda.get(k, j).clone();
                }
            }
            x[(i, j)] = acc;
        }
    }
    Ok(x)
}

fn i_minus_lambda_inverse<F: RealField>(g: &MixedGraph, lambda: &LambdaMatrix<F>) -> Result<Matrix<F>, ParamError> {
    match path_inverse(g, lambda) {
        Ok(x) => {
            debug_assert!(!F::EXACT || linalg::determinant(&lambda.matrix().identity_minus()) == F::one());
            Ok(x)
        }
        Err(GraphError::CyclicDirectedPart { .. }) => {
            linalg::inverse(&lambda.matrix().identity_minus()).ok_or(ParamError::SingularIminusLambda)
        }
        Err(e) => Err(e.into()),
    }
}

/// `φ_G(Λ, Ω)`, symmetrized.
pub fn phi<F: RealField>(
    g: &MixedGraph,
    lambda: &LambdaMatrix<F>,
    omega: &OmegaMatrix<F>,
) -> Result<Covariance<F>, ParamError> {
    check_square(lambda.matrix(), g.m())?;
    check_square(omega.matrix(), g.m())?;
    let x = i_minus_lambda_inverse(g, lambda)?;
    let sigma = x.transpose().matmul(omega.matrix()).matmul(&x);
    Ok(Covariance(sigma.symmetrized()))
}

/// `κ_G(Λ, Δ) = φ_G(Λ, Δ^{-1})^{-1}`.
pub fn kappa<F: RealField>(
    g: &MixedGraph,
    lambda: &LambdaMatrix<F>,
    delta: &DeltaDiagonal<F>,
) -> Result<Covariance<F>, ParamError> {
    check_square(lambda.matrix(), g.m())?;
    if delta.values().len() != g.m() {
        return Err(ParamError::DimensionMismatch {
            expected: g.m(),
            rows: delta.values().len(),
            cols: 1,
        });
    }
    let a = lambda.matrix().identity_minus();
    if linalg::determinant(&a).is_zero() {
        return Err(ParamError::SingularIminusLambda);
    }
    let k = a.matmul(&Matrix::diagonal(delta.values())).matmul(&a.transpose());
    Ok(Covariance(k.symmetrized()))
}

/// Grid resolution of sampled values: multiples of `scale / SAMPLE_GRID`.
pub const SAMPLE_GRID: i64 = 1024;

/// Deterministic parameters for `g`.
///
/// Edge coefficients and bidirected entries are drawn uniformly from a
/// grid on `[-scale, scale]`; each diagonal entry of `Ω` is its row's
/// absolute off-diagonal sum plus one, so `Ω` is diagonally dominant.
/// Grid values are dyadic when `scale` is, so both backends see the same
/// numbers.
pub fn sample_parameters<F: RealField>(g: &MixedGraph, seed: u64, scale: f64) -> (LambdaMatrix<F>, OmegaMatrix<F>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || {
        let k = rng.gen_range(-SAMPLE_GRID..=SAMPLE_GRID);
        F::from_f64(scale * k as f64 / SAMPLE_GRID as f64).expect("finite sample")
    };
    let m = g.m();
    let mut lambda = Matrix::zeros(m, m);
    for (i, j) in g.directed_edges() {
        lambda[(i, j)] = draw();
    }
    let mut omega = Matrix::zeros(m, m);
    for (i, j) in g.bidirected_edges() {
        let v = draw();
        omega[(i, j)] = v.clone();
        omega[(j, i)] = v;
    }
    for i in 0..m {
        let mut diag = F::one();
        for j in 0..m {
            if j != i {
                diag = diag + omega[(i, j)].abs();
            }
        }
        omega[(i, i)] = diag;
    }
    (LambdaMatrix(lambda), OmegaMatrix(omega))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ratio, Rational};

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect()).unwrap()
    }

    #[test]
    fn phi_on_a_single_edge() {
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[]).unwrap();
        let lambda = LambdaMatrix::new(&g, q(&[&[0, 2], &[0, 0]])).unwrap();
        let omega = OmegaMatrix::new(&g, q(&[&[2, 0], &[0, 1]])).unwrap();
        let sigma = phi(&g, &lambda, &omega).unwrap();
        assert_eq!(sigma.matrix(), &q(&[&[2, 4], &[4, 9]]));
    }

    #[test]
    fn zero_lambda_gives_omega() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[(1, 3)]).unwrap();
        let omega = OmegaMatrix::new(&g, q(&[&[2, 0, 1], &[0, 1, 0], &[1, 0, 3]])).unwrap();
        let sigma = phi(&g, &LambdaMatrix::zeros(&g), &omega).unwrap();
        assert_eq!(sigma.matrix(), omega.matrix());
    }

    #[test]
    fn support_is_enforced() {
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[]).unwrap();
        assert!(matches!(
            LambdaMatrix::new(&g, q(&[&[0, 0], &[1, 0]])),
            Err(ParamError::SupportViolation { which: "lambda", i: 1, j: 0 })
        ));
        assert!(matches!(
            OmegaMatrix::new(&g, q(&[&[1, 1], &[1, 2]])),
            Err(ParamError::SupportViolation { which: "omega", .. })
        ));
        let h = MixedGraph::from_one_based(2, &[], &[(1, 2)]).unwrap();
        assert_eq!(OmegaMatrix::new(&h, q(&[&[1, 2], &[2, 1]])), Err(ParamError::NotPositiveDefinite));
        assert_eq!(OmegaMatrix::new(&h, q(&[&[1, 0], &[1, 1]])), Err(ParamError::NotSymmetric));
    }

    #[test]
    fn kappa_on_a_three_cycle() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3), (3, 1)], &[]).unwrap();
        let lambda = LambdaMatrix::new(&g, q(&[&[0, 2, 0], &[0, 0, 1], &[1, 0, 0]])).unwrap();
        let delta = DeltaDiagonal::new(vec![ratio(1, 1); 3]).unwrap();
        let k = kappa(&g, &lambda, &delta).unwrap();
        assert_eq!(k.matrix(), &q(&[&[5, -2, -1], &[-2, 2, -1], &[-1, -1, 2]]));
        let sigma = phi(&g, &lambda, &OmegaMatrix::new(&g, delta.inverse_matrix()).unwrap()).unwrap();
        assert_eq!(k.matrix().matmul(sigma.matrix()), Matrix::identity(3));
    }

    #[test]
    fn singular_cycle_is_reported() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3), (3, 1)], &[]).unwrap();
        let lambda = LambdaMatrix::new(&g, q(&[&[0, 1, 0], &[0, 0, 1], &[1, 0, 0]])).unwrap();
        let omega = OmegaMatrix::identity(&g);
        assert_eq!(phi(&g, &lambda, &omega), Err(ParamError::SingularIminusLambda));
        let delta = DeltaDiagonal::new(vec![ratio(1, 1); 3]).unwrap();
        assert_eq!(kappa(&g, &lambda, &delta), Err(ParamError::SingularIminusLambda));
    }

    #[test]
    fn path_inverse_multiplies_along_paths() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[]).unwrap();
        let lambda = LambdaMatrix::new(&g, q(&[&[0, 5, 0], &[0, 0, 7], &[0, 0, 0]])).unwrap();
        let x = path_inverse(&g, &lambda).unwrap();
        assert_eq!(x[(0, 2)], ratio(35, 1));
        assert_eq!(x.matmul(&lambda.matrix().identity_minus()), Matrix::identity(3));
        assert_eq!(path_inverse(&g, &LambdaMatrix::<Rational>::zeros(&g)).unwrap(), Matrix::identity(3));
    }

    #[test]
    fn sampler_is_deterministic_and_backend_agnostic() {
        let g = MixedGraph::from_one_based(4, &[(1, 2), (2, 3), (1, 4)], &[(1, 3), (2, 4), (3, 4)]).unwrap();
        let (l1, o1) = sample_parameters::<f64>(&g, 7, 1.0);
        let (l2, o2) = sample_parameters::<f64>(&g, 7, 1.0);
        assert_eq!((l1.matrix(), o1.matrix()), (l2.matrix(), o2.matrix()));
        let (lq, oq) = sample_parameters::<Rational>(&g, 7, 1.0);
        assert_eq!(&lq.matrix().to_f64(), l1.matrix());
        assert_eq!(&oq.matrix().to_f64(), o1.matrix());
        assert!(OmegaMatrix::new(&g, oq.into_inner()).is_ok());
        let empty = MixedGraph::new(3, [], []).unwrap();
        let (l, o) = sample_parameters::<f64>(&empty, 1, 1.0);
        assert!(l.matrix().is_zero());
        assert_eq!(o.matrix(), &Matrix::identity(3));
    }
}
