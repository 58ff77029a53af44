//! Two distinct parameter points with the same covariance.
//!
//! Given a violating set `A` with sink `y`, keep a converging arborescence
//! and a bidirected spanning tree inside `A`, order `A` with `y` last and
//! set every tree coefficient not entering `y` to one. A Laplacian choice of
//! `Ω` then puts `1_P` in the kernel of the last step's matrix, and moving
//! along that kernel direction gives a second point in the fiber.

use std::collections::VecDeque;

use thiserror::Error;

use crate::criterion::check_global_identifiability;
use crate::cycle::{cycle_fiber, CycleError, CycleParams};
use crate::field::RealField;
use crate::graph::{topological_order, GraphError, MixedGraph};
use crate::inversion::{complete_step, step_rhs, step_system};
use crate::linalg::Matrix;
use crate::params::{path_inverse, phi, Covariance, LambdaMatrix, OmegaMatrix, ParamError};

/// Smallest step tried along the kernel direction.
pub const MIN_STEP: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WitnessError {
    #[error("the parametrization is injective for this graph")]
    Identifiable,
    #[error("({0:?}, sink {1}) is not a violating set")]
    InvalidViolatingSet(Vec<usize>, usize),
    #[error("span vector has a zero coordinate at node {0}")]
    ZeroCoordinate(usize),
    #[error("directed part is not an arborescence converging to the last node")]
    NotArborescence,
    #[error("bidirected part is not a spanning tree")]
    NotSpanningTree,
    #[error("no positive definite second point down to step {MIN_STEP:e}")]
    PdPerturbationFailed,
    #[error("cycle {0:?} has length two; only cycles of length three or more are supported")]
    TwoCycle(Vec<usize>),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct WitnessPair<F> {
    pub point_a: (LambdaMatrix<F>, OmegaMatrix<F>),
    pub point_b: (LambdaMatrix<F>, OmegaMatrix<F>),
    pub sigma: Covariance<F>,
    /// `max(‖Λ_a - Λ_b‖_max, ‖Ω_a - Ω_b‖_max)`.
    pub separation: f64,
    /// `‖φ(a) - φ(b)‖_max`.
    pub residual: f64,
    /// Nodes the construction lives on.
    pub support: Vec<usize>,
    /// Sink of the violating set; absent for cycle witnesses.
    pub sink: Option<usize>,
}

/// `Λ` on a converging arborescence whose sink is the last node, with
/// `(I - Λ)^{-1}_{[m],P} x_P = x` over the first `m` nodes.
///
/// Each non-sink node has one outgoing edge `i -> j`; for `j` not the sink
/// the coefficient is `x_i / x_j`, and edges into the sink get zero.
pub fn build_arborescence_lambda<F: RealField>(arb: &MixedGraph, x: &[F]) -> Result<LambdaMatrix<F>, WitnessError> {
    let n = arb.m();
    if n == 0 || x.len() + 1 != n {
        return Err(WitnessError::NotArborescence);
    }
    let sink = n - 1;
    if let Some(i) = x.iter().position(|v| v.is_zero()) {
        return Err(WitnessError::ZeroCoordinate(i));
    }
    if !arb.is_topologically_labeled() || !arb.children(sink).is_empty() {
        return Err(WitnessError::NotArborescence);
    }
    let mut lambda = Matrix::zeros(n, n);
    for (i, xi) in x.iter().enumerate() {
        let &[j] = arb.children(i) else {
            return Err(WitnessError::NotArborescence);
        };
        if j != sink {
            lambda[(i, j)] = xi.clone() / x[j].clone();
        }
    }
    let lambda = LambdaMatrix::new(arb, lambda)?;
    let inv = path_inverse(arb, &lambda)?;
    let parents = arb.parents(sink);
    for (i, xi) in x.iter().enumerate() {
        let mut acc = F::zero();
        for &p in parents {
            acc = acc + inv[(i, p)].clone() * x[p].clone();
        }
        debug_assert!(acc.approx_eq(xi, 1e-12), "span condition fails at node {i}");
    }
    Ok(lambda)
}

fn is_spanning_tree(g: &MixedGraph) -> bool {
    let n = g.m();
    if n == 0 || g.num_bidirected() + 1 != n {
        return false;
    }
    let all: Vec<usize> = (0..n).collect();
    g.bidirected_connected(&all).unwrap_or(false)
}

/// `Ω` for a graph whose bidirected part is a spanning tree and whose sink
/// is the last node, with `Ω_{R,[m]} 1 = 0` for `R = [m] \ S`.
///
/// `Ω_{R,R}` is the Laplacian of the tree restricted to `R` plus the
/// indicator of the nodes `T ⊆ R` adjacent to `S`; each `T` row splits `-1`
/// equally over its `S` neighbours. Diagonal entries over `S` and the sink
/// start at one plus the absolute row sum and are doubled until `Ω` is
/// positive definite.
pub fn build_laplacian_omega<F: RealField>(tree: &MixedGraph) -> Result<OmegaMatrix<F>, WitnessError> {
    if !is_spanning_tree(tree) {
        return Err(WitnessError::NotSpanningTree);
    }
    let n = tree.m();
    let sink = n - 1;
    let in_s: Vec<bool> = (0..n).map(|v| v != sink && tree.has_bidirected(v, sink)).collect();
    let mut omega = Matrix::<F>::zeros(n, n);
    for r in (0..sink).filter(|&r| !in_s[r]) {
        let s_nbrs: Vec<usize> = tree.siblings(r).iter().copied().filter(|&s| in_s[s]).collect();
        let r_nbrs = tree.siblings(r).iter().filter(|&&v| v != sink && !in_s[v]);
        let mut degree = 0;
        for &v in r_nbrs {
            omega[(r, v)] = -F::one();
            degree += 1;
        }
        omega[(r, r)] = F::from_i64(degree + i64::from(!s_nbrs.is_empty()));
        if !s_nbrs.is_empty() {
            let share = -F::one() / F::from_i64(s_nbrs.len() as i64);
            for &s in &s_nbrs {
                omega[(r, s)] = share.clone();
                omega[(s, r)] = share.clone();
            }
        }
    }
    let free: Vec<usize> = (0..n).filter(|&v| v == sink || in_s[v]).collect();
    for &v in &free {
        let mut d = F::one();
        for c in (0..n).filter(|&c| c != v) {
            d = d + omega[(v, c)].abs();
        }
        omega[(v, v)] = d;
    }
    for _ in 0..64 {
        if omega.is_positive_definite() {
            return Ok(OmegaMatrix::new(tree, omega)?);
        }
        for &v in &free {
            omega[(v, v)] = omega[(v, v)].clone() * F::from_i64(2);
        }
    }
    Err(WitnessError::PdPerturbationFailed)
}

/// Witness for a graph the criterion rejects.
pub fn construct_witness<F: RealField>(g: &MixedGraph) -> Result<WitnessPair<F>, WitnessError> {
    let verdict = check_global_identifiability(g);
    if verdict.identifiable {
        return Err(WitnessError::Identifiable);
    }
    match (verdict.violating_set, verdict.sink) {
        (Some(a), Some(y)) => construct_witness_for(g, &a, y),
        _ => construct_cycle_witness(g),
    }
}

/// Witness built from a given violating set `a` with sink `y`.
pub fn construct_witness_for<F: RealField>(g: &MixedGraph, a: &[usize], y: usize) -> Result<WitnessPair<F>, WitnessError> {
    topological_order(g)?;
    let invalid = || WitnessError::InvalidViolatingSet(a.to_vec(), y);
    if a.len() < 2 || !g.bidirected_connected(a)? || !g.has_converging_arborescence(a, y)? {
        return Err(invalid());
    }
    let mask = g.mask(a)?;

    // shortest-path arborescence into y and breadth-first bidirected tree from y
    let mut dist = vec![usize::MAX; g.m()];
    dist[y] = 0;
    let mut queue = VecDeque::from([y]);
    while let Some(v) = queue.pop_front() {
        for &p in g.parents(v) {
            if mask[p] && dist[p] == usize::MAX {
                dist[p] = dist[v] + 1;
                queue.push_back(p);
            }
        }
    }
    let mut tree_d = Vec::new();
    for &v in a.iter().filter(|&&v| v != y) {
        let next = g
            .children(v)
            .iter()
            .copied()
            .find(|&c| mask[c] && dist[c] + 1 == dist[v])
            .ok_or_else(invalid)?;
        tree_d.push((v, next));
    }
    let mut seen = vec![false; g.m()];
    seen[y] = true;
    let mut tree_b = Vec::new();
    let mut queue = VecDeque::from([y]);
    while let Some(v) = queue.pop_front() {
        for &s in g.siblings(v) {
            if mask[s] && !seen[s] {
                seen[s] = true;
                tree_b.push((v, s));
                queue.push_back(s);
            }
        }
    }

    // order A topologically along the tree edges; y comes out last
    let nodes: Vec<usize> = a.to_vec();
    let mut local = vec![usize::MAX; g.m()];
    for (k, &v) in nodes.iter().enumerate() {
        local[v] = k;
    }
    let skeleton = MixedGraph::new(
        nodes.len(),
        tree_d.iter().map(|&(i, j)| (local[i], local[j])),
        tree_b.iter().map(|&(i, j)| (local[i], local[j])),
    )?;
    let order = topological_order(&skeleton)?;
    let placed: Vec<usize> = order.order().iter().map(|&k| nodes[k]).collect();
    debug_assert_eq!(placed.last(), Some(&y));
    let tree = skeleton.relabeled(order.order());
    let n = tree.m();
    let sink = n - 1;

    let lambda = build_arborescence_lambda(&tree, &vec![F::one(); sink])?;
    let omega = build_laplacian_omega::<F>(&tree)?;
    let sigma = phi(&tree, &lambda, &omega)?;

    let sys = step_system(&tree, lambda.matrix(), omega.matrix(), sink, |x| x.to_f64().abs());
    debug_assert!(sys.m.matvec(&vec![F::one(); sys.parents.len()]).iter().all(|v| v.to_f64().abs() < 1e-9));
    let rhs = step_rhs(lambda.matrix(), sigma.matrix(), sink);
    let mut t = F::one();
    let half = F::one() / F::from_i64(2);
    let second = loop {
        let lambda_p = vec![t.clone(); sys.parents.len()];
        let (omega_s, diag) = complete_step(&sys, &rhs, &lambda_p, sigma.matrix(), sink);
        let mut l = lambda.matrix().clone();
        let mut o = omega.matrix().clone();
        for &p in &sys.parents {
            l[(p, sink)] = t.clone();
        }
        for (&s, v) in sys.siblings.iter().zip(omega_s) {
            o[(s, sink)] = v.clone();
            o[(sink, s)] = v;
        }
        o[(sink, sink)] = diag;
        if o.is_positive_definite() {
            break (l, o);
        }
        t = t * half.clone();
        if t.to_f64() < MIN_STEP {
            return Err(WitnessError::PdPerturbationFailed);
        }
    };

    let lift = |l: &Matrix<F>, o: &Matrix<F>| -> Result<(LambdaMatrix<F>, OmegaMatrix<F>), WitnessError> {
        let mut lg = Matrix::zeros(g.m(), g.m());
        let mut og = Matrix::identity(g.m());
        for i in 0..n {
            for j in 0..n {
                lg[(placed[i], placed[j])] = l[(i, j)].clone();
                og[(placed[i], placed[j])] = o[(i, j)].clone();
            }
        }
        Ok((LambdaMatrix::new(g, lg)?, OmegaMatrix::new(g, og)?))
    };
    let point_a = lift(lambda.matrix(), omega.matrix())?;
    let point_b = lift(&second.0, &second.1)?;
    let mut support = a.to_vec();
    support.sort_unstable();
    finish(g, point_a, point_b, support, Some(y))
}

/// Witness for a graph whose directed part contains a cycle of length at
/// least three: a two-point cycle fiber, padded with zeros elsewhere.
pub fn construct_cycle_witness<F: RealField>(g: &MixedGraph) -> Result<WitnessPair<F>, WitnessError> {
    let cycle = match topological_order(g) {
        Err(GraphError::CyclicDirectedPart { cycle, .. }) => cycle,
        Err(e) => return Err(e.into()),
        Ok(_) => return Err(WitnessError::Identifiable),
    };
    let len = cycle.len();
    if len < 3 {
        return Err(WitnessError::TwoCycle(cycle));
    }
    let p0 = CycleParams::new(vec![F::from_i64(2); len], vec![F::one(); len])?;
    let fiber = cycle_fiber(&p0)?;
    let [a, b] = fiber.points.as_slice() else {
        unreachable!("coefficients of two give a two-point fiber");
    };
    let lift = |p: &CycleParams<F>| -> Result<(LambdaMatrix<F>, OmegaMatrix<F>), WitnessError> {
        let mut lg = Matrix::zeros(g.m(), g.m());
        let mut og = Matrix::identity(g.m());
        for k in 0..len {
            lg[(cycle[k], cycle[(k + 1) % len])] = p.lambda()[k].clone();
            og[(cycle[k], cycle[k])] = F::one() / p.delta()[k].clone();
        }
        Ok((LambdaMatrix::new(g, lg)?, OmegaMatrix::new(g, og)?))
    };
    let point_a = lift(a)?;
    let point_b = lift(b)?;
    let mut support = cycle.clone();
    support.sort_unstable();
    finish(g, point_a, point_b, support, None)
}

fn finish<F: RealField>(
    g: &MixedGraph,
    point_a: (LambdaMatrix<F>, OmegaMatrix<F>),
    point_b: (LambdaMatrix<F>, OmegaMatrix<F>),
    support: Vec<usize>,
    sink: Option<usize>,
) -> Result<WitnessPair<F>, WitnessError> {
    let sigma = phi(g, &point_a.0, &point_a.1)?;
    let sigma_b = phi(g, &point_b.0, &point_b.1)?;
    let residual = sigma.matrix().max_abs_diff(sigma_b.matrix());
    let separation = point_a
        .0
        .matrix()
        .max_abs_diff(point_b.0.matrix())
        .max(point_a.1.matrix().max_abs_diff(point_b.1.matrix()));
    Ok(WitnessPair {
        point_a,
        point_b,
        sigma,
        separation,
        residual,
        support,
        sink,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{ratio, Rational};

    fn q(rows: &[&[i64]]) -> Matrix<Rational> {
        Matrix::from_rows(rows.iter().map(|r| r.iter().map(|&v| ratio(v, 1)).collect()).collect()).unwrap()
    }

    #[test]
    fn arborescence_coefficients() {
        let chain = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[]).unwrap();
        let l = build_arborescence_lambda(&chain, &[ratio(1, 1), ratio(1, 1)]).unwrap();
        assert_eq!(l.get(0, 1), &ratio(1, 1));
        let l = build_arborescence_lambda(&chain, &[ratio(3, 1), ratio(1, 1)]).unwrap();
        assert_eq!(l.get(0, 1), &ratio(3, 1));
        assert_eq!(l.get(1, 2), &ratio(0, 1));
        assert_eq!(
            build_arborescence_lambda(&chain, &[ratio(0, 1), ratio(1, 1)]),
            Err(WitnessError::ZeroCoordinate(0))
        );
        let star = MixedGraph::from_one_based(3, &[(1, 3), (2, 3)], &[]).unwrap();
        assert!(build_arborescence_lambda(&star, &[ratio(5, 1), ratio(-2, 1)]).unwrap().matrix().is_zero());
        let fork = MixedGraph::from_one_based(3, &[(1, 2), (1, 3), (2, 3)], &[]).unwrap();
        assert_eq!(
            build_arborescence_lambda(&fork, &[ratio(1, 1), ratio(1, 1)]),
            Err(WitnessError::NotArborescence)
        );
    }

    #[test]
    fn laplacian_on_a_path_tree() {
        let g = MixedGraph::from_one_based(3, &[(1, 3), (2, 3)], &[(1, 2), (2, 3)]).unwrap();
        let o = build_laplacian_omega::<Rational>(&g).unwrap();
        assert_eq!(o.matrix(), &q(&[&[1, -1, 0], &[-1, 2, 0], &[0, 0, 1]]));
        let no_tree = MixedGraph::from_one_based(3, &[], &[(1, 2)]).unwrap();
        assert_eq!(build_laplacian_omega::<Rational>(&no_tree), Err(WitnessError::NotSpanningTree));
    }

    #[test]
    fn bow_witness() {
        let g = MixedGraph::from_one_based(2, &[(1, 2)], &[(1, 2)]).unwrap();
        let w = construct_witness::<Rational>(&g).unwrap();
        assert_eq!(w.sigma.matrix(), &q(&[&[1, 0], &[0, 1]]));
        assert!(w.point_a.0.matrix().is_zero());
        assert_eq!(w.point_a.1.matrix(), &q(&[&[1, 0], &[0, 1]]));
        assert_eq!(w.point_b.0.matrix(), &q(&[&[0, 1], &[0, 0]]));
        assert_eq!(w.point_b.1.matrix(), &q(&[&[1, -1], &[-1, 2]]));
        assert_eq!(w.residual, 0.0);
        assert_eq!(w.separation, 1.0);
    }

    #[test]
    fn instrument_witness() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[(2, 3)]).unwrap();
        let w = construct_witness::<f64>(&g).unwrap();
        assert!(w.residual <= 1e-9);
        assert!(w.separation >= 1e-3);
        assert_eq!(w.support, vec![1, 2]);
        assert_eq!(construct_witness::<f64>(&MixedGraph::from_one_based(2, &[(1, 2)], &[]).unwrap()), Err(WitnessError::Identifiable));
    }

    #[test]
    fn cycle_witness() {
        let g = MixedGraph::from_one_based(4, &[(1, 2), (2, 3), (3, 1), (3, 4)], &[(1, 4)]).unwrap();
        let w = construct_witness::<Rational>(&g).unwrap();
        assert_eq!(w.residual, 0.0);
        assert_eq!(w.support, vec![0, 1, 2]);
        assert_eq!(w.sink, None);
        let two = MixedGraph::from_one_based(2, &[(1, 2), (2, 1)], &[]).unwrap();
        assert!(matches!(construct_witness::<f64>(&two), Err(WitnessError::TwoCycle(_))));
    }
}
