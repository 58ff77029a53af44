//! Fibers of `φ_G` through a rank-deficient step.
//!
//! At the first step whose system has a one-dimensional kernel the solution
//! set is a line `λ_P = λ* + t α`. Every later step is then solved over the
//! field of rational functions in `t`; leftover equations become polynomial
//! constraints on `t`, and the common real roots of those constraints that
//! give a positive definite `Ω` are the fiber.

use serde::Serialize;

use crate::field::{Field, Rational, RealField};
use crate::graph::MixedGraph;
use crate::inversion::{
    complete_step, rank_condition, rhs_rows, step_residual, step_rhs, step_system, InversionError,
};
use crate::linalg::{self, Matrix};
use crate::params::{phi, Covariance, LambdaMatrix, OmegaMatrix};
use crate::poly::{Poly, RatFun};

/// Largest polynomial degree carried before giving up.
pub const MAX_DEGREE: usize = 32;

/// Forward-map residual accepted for a point found from a float root.
pub const POINT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiberKind {
    Singleton,
    Finite,
    Family,
    Unresolved,
}

/// One parameter point of a fiber.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberPoint {
    pub lambda: Matrix<f64>,
    pub omega: Matrix<f64>,
    /// Exact coordinates when the point is rational.
    pub exact: Option<(Matrix<Rational>, Matrix<Rational>)>,
    /// Value of the free parameter, when the point came from a line.
    pub t: Option<f64>,
}

impl FiberPoint {
    fn exact(lambda: Matrix<Rational>, omega: Matrix<Rational>, t: Option<f64>) -> Self {
        FiberPoint {
            lambda: lambda.to_f64(),
            omega: omega.to_f64(),
            exact: Some((lambda, omega)),
            t,
        }
    }
}

/// A curve `t ↦ (Λ(t), Ω(t))` of parameters with a common image.
#[derive(Debug, Clone, PartialEq)]
pub struct FiberFamily {
    lambda: Matrix<RatFun>,
    omega: Matrix<RatFun>,
    /// Open interval of `t`, possibly unbounded, on which `Ω(t)` is
    /// positive definite and every entry is defined.
    pub interval: (f64, f64),
    /// Parameter value of the base point.
    pub anchor: f64,
}

impl FiberFamily {
    pub fn lambda_entries(&self) -> &Matrix<RatFun> {
        &self.lambda
    }

    pub fn omega_entries(&self) -> &Matrix<RatFun> {
        &self.omega
    }

    pub fn contains(&self, t: f64) -> bool {
        self.interval.0 < t && t < self.interval.1
    }

    /// `(Λ(t), Ω(t))`, or `None` at a pole.
    pub fn point_at(&self, t: f64) -> Option<(Matrix<f64>, Matrix<f64>)> {
        Some((eval_f64(&self.lambda, t)?, eval_f64(&self.omega, t)?))
    }

    pub fn point_at_exact(&self, t: &Rational) -> Option<(Matrix<Rational>, Matrix<Rational>)> {
        Some((eval_exact(&self.lambda, t)?, eval_exact(&self.omega, t)?))
    }

    pub fn base(&self) -> (Matrix<f64>, Matrix<f64>) {
        self.point_at(self.anchor).expect("anchor lies inside the interval")
    }

    /// Tangent `(Λ'(t), Ω'(t))` at the anchor.
    pub fn direction(&self) -> (Matrix<f64>, Matrix<f64>) {
        let d = |m: &Matrix<RatFun>| {
            m.map(|x| x.derivative().eval_f64(self.anchor).expect("anchor is not a pole"))
        };
        (d(&self.lambda), d(&self.omega))
    }

    /// `n` parameter values spread over the interval, for probing.
    pub fn sample_parameters(&self, n: usize) -> Vec<f64> {
        let (lo, hi) = self.interval;
        let (lo, hi) = match (lo.is_finite(), hi.is_finite()) {
            (true, true) => (lo, hi),
            (true, false) => (lo, lo + 2.0 * (self.anchor - lo).abs().max(1.0)),
            (false, true) => (hi - 2.0 * (hi - self.anchor).abs().max(1.0), hi),
            (false, false) => (self.anchor - 1.0, self.anchor + 1.0),
        };
        (1..=n).map(|k| lo + (hi - lo) * k as f64 / (n + 1) as f64).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FiberDescription {
    pub kind: FiberKind,
    pub points: Vec<FiberPoint>,
    pub family: Option<FiberFamily>,
    /// Steps whose rank condition failed along the way.
    pub deficient_steps: Vec<usize>,
    /// Greatest common divisor of the constraints on the free parameter.
    pub constraint: Option<Poly>,
    pub reason: Option<String>,
}

impl FiberDescription {
    fn singleton(point: FiberPoint, deficient_steps: Vec<usize>, constraint: Option<Poly>) -> Self {
        FiberDescription {
            kind: FiberKind::Singleton,
            points: vec![point],
            family: None,
            deficient_steps,
            constraint,
            reason: None,
        }
    }

    fn unresolved(reason: String, deficient_steps: Vec<usize>, constraint: Option<Poly>) -> Self {
        FiberDescription {
            kind: FiberKind::Unresolved,
            points: Vec::new(),
            family: None,
            deficient_steps,
            constraint,
            reason: Some(reason),
        }
    }
}

fn eval_f64(m: &Matrix<RatFun>, t: f64) -> Option<Matrix<f64>> {
    let rows = m.to_rows();
    let values: Option<Vec<Vec<f64>>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x.eval_f64(t)).collect())
        .collect();
    Matrix::from_rows(values?).or_else(|| Some(Matrix::zeros(m.rows(), m.cols())))
}

fn eval_exact(m: &Matrix<RatFun>, t: &Rational) -> Option<Matrix<Rational>> {
    let rows = m.to_rows();
    let values: Option<Vec<Vec<Rational>>> = rows
        .iter()
        .map(|r| r.iter().map(|x| x.eval(t)).collect())
        .collect();
    Matrix::from_rows(values?).or_else(|| Some(Matrix::zeros(m.rows(), m.cols())))
}

fn lift(m: &Matrix<Rational>) -> Matrix<RatFun> {
    m.map(|x| RatFun::constant(x.clone()))
}

fn max_degree(m: &Matrix<RatFun>) -> usize {
    m.iter().map(RatFun::degree).max().unwrap_or(0)
}

/// Continued-fraction convergents of `x` with denominators up to `max_den`.
fn convergents(x: f64, max_den: i64) -> Vec<Rational> {
    let mut out = Vec::new();
    if !x.is_finite() || x.abs() > 1e12 {
        return out;
    }
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut rest = x;
    for _ in 0..40 {
        let a = rest.floor();
        let ai = a as i64;
        let (Some(p2), Some(q2)) = (
            ai.checked_mul(p1).and_then(|v| v.checked_add(p0)),
            ai.checked_mul(q1).and_then(|v| v.checked_add(q0)),
        ) else {
            break;
        };
        if q2 > max_den {
            break;
        }
        out.push(crate::field::ratio(p2, q2));
        (p0, q0, p1, q1) = (p1, q1, p2, q2);
        let frac = rest - a;
        if frac.abs() < 1e-15 {
            break;
        }
        rest = 1.0 / frac;
    }
    out
}

/// Later steps at a specific point, evaluated on either backend.
fn later_steps_pass<F: RealField>(g: &MixedGraph, lambda: &Matrix<F>, omega: &Matrix<F>, from: usize) -> bool {
    let lambda = LambdaMatrix::new_unchecked(lambda.clone());
    let omega = OmegaMatrix::new_unchecked(omega.clone());
    (from..g.m()).all(|i| rank_condition(g, &lambda, &omega, i).is_ok_and(|r| r.passes()))
}

enum Candidate {
    Valid(FiberPoint),
    RankDrop(f64),
    Rejected,
}

fn check_root(
    g: &MixedGraph,
    sigma: &Covariance<Rational>,
    lambda: &Matrix<RatFun>,
    omega: &Matrix<RatFun>,
    constraint: &Poly,
    root: f64,
    later: usize,
) -> Candidate {
    if let Some(t) = convergents(root, 1_000_000)
        .into_iter()
        .find(|q| Field::is_zero(&constraint.eval(q)) && (q.to_f64() - root).abs() <= 1e-6 * (1.0 + root.abs()))
    {
        let (Some(l), Some(o)) = (eval_exact(lambda, &t), eval_exact(omega, &t)) else {
            return Candidate::Rejected;
        };
        if !o.is_positive_definite() {
            return Candidate::Rejected;
        }
        let image = phi(g, &LambdaMatrix::new_unchecked(l.clone()), &OmegaMatrix::new_unchecked(o.clone()));
        if image.map_or(true, |s| s.matrix() != sigma.matrix()) {
            return Candidate::Rejected;
        }
        if !later_steps_pass(g, &l, &o, later) {
            return Candidate::RankDrop(root);
        }
        return Candidate::Valid(FiberPoint::exact(l, o, Some(t.to_f64())));
    }
    let (Some(l), Some(o)) = (eval_f64(lambda, root), eval_f64(omega, root)) else {
        return Candidate::Rejected;
    };
    if !o.is_positive_definite() {
        return Candidate::Rejected;
    }
    let image = phi(g, &LambdaMatrix::new_unchecked(l.clone()), &OmegaMatrix::new_unchecked(o.clone()));
    let target = sigma.matrix().to_f64();
    let tol = POINT_TOL * target.max_abs().max(1.0);
    if image.map_or(true, |s| s.matrix().max_abs_diff(&target) > tol) {
        return Candidate::Rejected;
    }
    if !later_steps_pass(g, &l, &o, later) {
        return Candidate::RankDrop(root);
    }
    Candidate::Valid(FiberPoint {
        lambda: l,
        omega: o,
        exact: None,
        t: Some(root),
    })
}

/// Interval of `t` around the preferred anchor where `Ω(t)` is positive
/// definite and all entries are finite.
fn family_interval(lambda: &Matrix<RatFun>, omega: &Matrix<RatFun>, prefer: f64) -> Option<(f64, f64, f64)> {
    let mut critical: Vec<f64> = Vec::new();
    for x in lambda.iter().chain(omega.iter()) {
        critical.extend(x.denom().real_roots());
    }
    let m = omega.rows();
    for j in 1..=m {
        let idx: Vec<usize> = (0..j).collect();
        let minor = linalg::determinant(&omega.select(&idx, &idx));
        critical.extend(minor.numer().real_roots());
        critical.extend(minor.denom().real_roots());
    }
    critical.sort_by(|a, b| a.total_cmp(b));
    critical.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * (1.0 + b.abs()));
    let mut bounds = vec![f64::NEG_INFINITY];
    bounds.extend(&critical);
    bounds.push(f64::INFINITY);
    let pd_at = |t: f64| eval_f64(omega, t).is_some_and(|o| o.is_positive_definite()) && eval_f64(lambda, t).is_some();
    let probe = |lo: f64, hi: f64| match (lo.is_finite(), hi.is_finite()) {
        (true, true) => (lo + hi) / 2.0,
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    };
    let mut candidates: Vec<(f64, f64, f64)> = bounds
        .windows(2)
        .filter_map(|w| {
            let (lo, hi) = (w[0], w[1]);
            let anchor = if lo < prefer && prefer < hi { prefer } else { probe(lo, hi) };
            pd_at(anchor).then_some((lo, hi, anchor))
        })
        .collect();
    candidates.sort_by(|a, b| (a.2 - prefer).abs().total_cmp(&(b.2 - prefer).abs()));
    candidates.into_iter().next()
}

/// Describes the fiber of `φ_G` through `Σ`.
///
/// `base`, if given, must map to `Σ`; the free parameter is then centred on
/// it (`t = 0`). The graph must be topologically labeled.
pub fn fiber_trace(
    g: &MixedGraph,
    sigma: &Covariance<Rational>,
    base: Option<(&LambdaMatrix<Rational>, &OmegaMatrix<Rational>)>,
) -> Result<FiberDescription, InversionError> {
    if !g.is_topologically_labeled() {
        return Err(InversionError::NotTopologicallyLabeled);
    }
    let m = g.m();
    if sigma.dim() != m {
        return Err(InversionError::DimensionMismatch {
            expected: m,
            found: sigma.dim(),
        });
    }
    if let Some((l, o)) = base {
        if phi(g, l, o)?.matrix() != sigma.matrix() {
            return Err(InversionError::BaseNotInFiber);
        }
    }
    let s = sigma.matrix();
    let mut lambda = Matrix::<Rational>::zeros(m, m);
    let mut omega = Matrix::<Rational>::zeros(m, m);
    if m > 0 {
        omega[(0, 0)] = s[(0, 0)].clone();
    }
    let mut deficient = None;
    for i in 1..m {
        let sys = step_system(g, &lambda, &omega, i, |_| 0.0);
        let rank = Rational::rank(&sys.m);
        let rhs = step_rhs(&lambda, s, i);
        match sys.parents.len() - rank {
            0 => {}
            1 => {
                deficient = Some((i, sys, rhs));
                break;
            }
            d => {
                return Ok(FiberDescription::unresolved(
                    format!("step {i} has a {d}-dimensional kernel"),
                    vec![i],
                    None,
                ))
            }
        }
        let lambda_p = linalg::solve_on_pivot_rows(&sys.m, &rhs_rows(&sys, &rhs));
        if let Some(r) = step_residual(&sys, &rhs, &lambda_p).iter().find(|r| !Field::is_zero(*r)) {
            return Err(InversionError::InconsistentSystem {
                step: i,
                residual: r.to_f64().abs(),
            });
        }
        let (omega_s, diag) = complete_step(&sys, &rhs, &lambda_p, s, i);
        store(&mut lambda, &mut omega, &sys.parents, &sys.siblings, i, lambda_p, omega_s, diag);
    }
    let Some((k, sys, rhs)) = deficient else {
        if !omega.is_positive_definite() {
            return Err(InversionError::NotPositiveDefinite);
        }
        return Ok(FiberDescription::singleton(FiberPoint::exact(lambda, omega, None), Vec::new(), None));
    };

    let alpha = linalg::kernel_exact(&sys.m).remove(0);
    let start = match base {
        Some((l, _)) => sys.parents.iter().map(|&p| l.get(p, k).clone()).collect(),
        None => linalg::solve_on_pivot_rows(&sys.m, &rhs_rows(&sys, &rhs)),
    };
    if let Some(r) = step_residual(&sys, &rhs, &start).iter().find(|r| !Field::is_zero(*r)) {
        return Err(InversionError::InconsistentSystem {
            step: k,
            residual: r.to_f64().abs(),
        });
    }

    let t = RatFun::from_poly(Poly::variable());
    let mut lam = lift(&lambda);
    let mut om = lift(&omega);
    let st = lift(s);
    let sys_t = step_system(g, &lam, &om, k, |_| 0.0);
    let rhs_t = step_rhs(&lam, &st, k);
    let lambda_p: Vec<RatFun> = start
        .iter()
        .zip(&alpha)
        .map(|(x, a)| RatFun::constant(x.clone()) + t.clone() * RatFun::constant(a.clone()))
        .collect();
    let (omega_s, diag) = complete_step(&sys_t, &rhs_t, &lambda_p, &st, k);
    store(&mut lam, &mut om, &sys_t.parents, &sys_t.siblings, k, lambda_p, omega_s, diag);

    let mut constraints: Vec<Poly> = Vec::new();
    for i in k + 1..m {
        let sys = step_system(g, &lam, &om, i, |_| 0.0);
        if RatFun::rank(&sys.m) < sys.parents.len() {
            return Ok(FiberDescription::unresolved(
                format!("step {i} is rank deficient along the whole line through step {k}"),
                vec![k, i],
                None,
            ));
        }
        let rhs = step_rhs(&lam, &st, i);
        let lambda_p = linalg::solve_on_pivot_rows(&sys.m, &rhs_rows(&sys, &rhs));
        for r in step_residual(&sys, &rhs, &lambda_p) {
            if !Field::is_zero(&r) {
                constraints.push(r.numer().clone());
            }
        }
        let (omega_s, diag) = complete_step(&sys, &rhs, &lambda_p, &st, i);
        store(&mut lam, &mut om, &sys.parents, &sys.siblings, i, lambda_p, omega_s, diag);
        let degree = max_degree(&lam).max(max_degree(&om));
        if degree > MAX_DEGREE || constraints.iter().any(|c| c.degree() > MAX_DEGREE) {
            return Ok(FiberDescription::unresolved(
                format!("polynomial degree exceeds {MAX_DEGREE} at step {i}"),
                vec![k],
                None,
            ));
        }
    }

    let Some(common) = constraints.iter().skip(1).fold(constraints.first().cloned(), |acc, c| acc.map(|a| a.gcd(c)))
    else {
        let prefer = 0.0;
        let Some((lo, hi, anchor)) = family_interval(&lam, &om, prefer) else {
            return Err(InversionError::NotPositiveDefinite);
        };
        return Ok(FiberDescription {
            kind: FiberKind::Family,
            points: Vec::new(),
            family: Some(FiberFamily {
                lambda: lam,
                omega: om,
                interval: (lo, hi),
                anchor,
            }),
            deficient_steps: vec![k],
            constraint: None,
            reason: None,
        });
    };
    let common = common.monic();
    if common.degree() == 0 {
        return Err(InversionError::InconsistentSystem {
            step: k,
            residual: f64::INFINITY,
        });
    }
    let mut points = Vec::new();
    let mut drops = Vec::new();
    for root in common.real_roots() {
        match check_root(g, sigma, &lam, &om, &common, root, k + 1) {
            Candidate::Valid(p) => points.push(p),
            Candidate::RankDrop(t) => drops.push(t),
            Candidate::Rejected => {}
        }
    }
    if !drops.is_empty() {
        return Ok(FiberDescription::unresolved(
            format!("a later step loses rank at t = {:?}", drops),
            vec![k],
            Some(common),
        ));
    }
    match points.len() {
        0 => Err(InversionError::NotPositiveDefinite),
        1 => Ok(FiberDescription::singleton(points.remove(0), vec![k], Some(common))),
        _ => Ok(FiberDescription {
            kind: FiberKind::Finite,
            points,
            family: None,
            deficient_steps: vec![k],
            constraint: Some(common),
            reason: None,
        }),
    }
}

#[allow(clippy::too_many_arguments)]
fn store<F: Field>(
    lambda: &mut Matrix<F>,
    omega: &mut Matrix<F>,
    parents: &[usize],
    siblings: &[usize],
    i: usize,
    lambda_p: Vec<F>,
    omega_s: Vec<F>,
    diag: F,
) {
    for (&p, v) in parents.iter().zip(lambda_p) {
        lambda[(p, i)] = v;
    }
    for (&s, v) in siblings.iter().zip(omega_s) {
        omega[(s, i)] = v.clone();
        omega[(i, s)] = v;
    }
    omega[(i, i)] = diag;
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ratio;

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect()).unwrap()
    }

    #[test]
    fn convergents_recover_simple_fractions() {
        let c = convergents(0.375, 1000);
        assert_eq!(c.last(), Some(&ratio(3, 8)));
        assert_eq!(convergents(1e-17, 1000)[0], ratio(0, 1));
        assert_eq!(convergents(-2.5, 10).last(), Some(&ratio(-5, 2)));
    }

    #[test]
    fn identifiable_graph_gives_singleton() {
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[]).unwrap();
        let sigma = Covariance::new(q(&[&[2, 4], &[4, 9]])).unwrap();
        let f = fiber_trace(&g, &sigma, None).unwrap();
        assert_eq!(f.kind, FiberKind::Singleton);
        assert!(f.deficient_steps.is_empty());
        assert_eq!(f.points[0].exact.as_ref().unwrap().0[(0, 1)], ratio(2, 1));
    }

    #[test]
    fn bow_gives_family() {
        // fiber through (0, I): omega_12 = -lambda, omega_22 = 1 + lambda^2
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[(1, 2)]).unwrap();
        let sigma = Covariance::new(q(&[&[1, 0], &[0, 1]])).unwrap();
        let f = fiber_trace(&g, &sigma, None).unwrap();
        assert_eq!(f.kind, FiberKind::Family);
        let fam = f.family.unwrap();
        assert_eq!(fam.interval, (f64::NEG_INFINITY, f64::INFINITY));
        let (l, o) = fam.point_at(3.0).unwrap();
        assert_eq!(l[(0, 1)], 3.0);
        assert_eq!(o[(0, 1)], -3.0);
        assert_eq!(o[(1, 1)], 10.0);
        let (dl, _) = fam.direction();
        assert_eq!(dl[(0, 1)], 1.0);
    }

    #[test]
    fn base_must_lie_in_the_fiber() {
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[(1, 2)]).unwrap();
        let sigma = Covariance::new(q(&[&[1, 0], &[0, 1]])).unwrap();
        let l = LambdaMatrix::new(&g, q(&[&[0, 1], &[0, 0]])).unwrap();
        let o = OmegaMatrix::new(&g, q(&[&[1, 0], &[0, 1]])).unwrap();
        assert_eq!(fiber_trace(&g, &sigma, Some((&l, &o))), Err(InversionError::BaseNotInFiber));
    }
}
