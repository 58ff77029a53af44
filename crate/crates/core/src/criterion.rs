//! Deciding global identifiability.
//!
//! `φ_G` fails to be injective exactly when the directed part has a cycle,
//! or some induced subgraph `G_A` with `|A| >= 2` has a sink `y` that every
//! other node of `A` reaches inside `A` and a connected bidirected part.

use serde::Serialize;

use crate::graph::{topological_order, topologically_relabeled, GraphError, MixedGraph};
use crate::inversion::rank_condition;
use crate::params::{LambdaMatrix, OmegaMatrix};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IdentVerdict {
    pub identifiable: bool,
    /// Sorted node indices of a violating set, or of a directed cycle.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_set: Option<Vec<usize>>,
    /// Sink of the violating set; absent for cyclic graphs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink: Option<usize>,
    pub simple: bool,
    pub ancestral: bool,
    pub acyclic: bool,
}

pub fn check_global_identifiability(g: &MixedGraph) -> IdentVerdict {
    let simple = g.is_simple();
    match find_violating_set(g) {
        Err(GraphError::CyclicDirectedPart { mut cycle, .. }) => {
            cycle.sort_unstable();
            IdentVerdict {
                identifiable: false,
                violating_set: Some(cycle),
                sink: None,
                simple,
                ancestral: false,
                acyclic: false,
            }
        }
        Err(e) => unreachable!("violating-set search on a valid graph failed: {e}"),
        Ok(found) => IdentVerdict {
            identifiable: found.is_none(),
            sink: found.as_ref().map(|(_, y)| *y),
            violating_set: found.map(|(a, _)| a),
            simple,
            ancestral: g.is_ancestral().unwrap_or(false),
            acyclic: true,
        },
    }
}

/// Largest violating set with sink `y`, or `{y}` when there is none.
///
/// Starting from all nodes, alternately drops nodes that cannot reach `y`
/// and nodes outside the bidirected component of `y`. Any violating set
/// with sink `y` survives every round, so the limit contains all of them.
pub fn max_violating_set_for_sink(g: &MixedGraph, y: usize) -> Vec<usize> {
    let mut alive = vec![true; g.m()];
    loop {
        let reach = g.ancestors_within(&alive, y);
        let comp = g.bidirected_component_within(&reach, y);
        if comp == alive {
            break;
        }
        alive = comp;
    }
    (0..g.m()).filter(|&v| alive[v]).collect()
}

/// First violating `(A, y)` with sinks tried from the last topological
/// position backwards.
pub fn find_violating_set(g: &MixedGraph) -> Result<Option<(Vec<usize>, usize)>, GraphError> {
    let order = topological_order(g)?;
    Ok(order.order().iter().rev().find_map(|&y| {
        let a = max_violating_set_for_sink(g, y);
        (a.len() >= 2).then_some((a, y))
    }))
}

/// Scans all `2^m` node subsets directly against the definition.
/// Intended as an independent check of [`find_violating_set`] for small `m`.
pub fn find_violating_set_exhaustive(g: &MixedGraph) -> Result<Option<(Vec<usize>, usize)>, GraphError> {
    topological_order(g)?;
    let m = g.m();
    assert!(m < usize::BITS as usize, "too many nodes for a subset scan");
    for bits in 1usize..(1 << m) {
        if bits.count_ones() < 2 {
            continue;
        }
        let a: Vec<usize> = (0..m).filter(|&v| bits >> v & 1 == 1).collect();
        if !g.bidirected_connected(&a)? {
            continue;
        }
        for &y in &a {
            if g.has_converging_arborescence(&a, y)? {
                return Ok(Some((a, y)));
            }
        }
    }
    Ok(None)
}

/// Simple and acyclic, confirmed by the rank conditions at `Λ = 0, Ω = I`.
pub fn is_generically_identifiable_simple(g: &MixedGraph) -> bool {
    if !g.is_simple() {
        return false;
    }
    let Ok((h, _)) = topologically_relabeled(g) else {
        return false;
    };
    let lambda = LambdaMatrix::<f64>::zeros(&h);
    let omega = OmegaMatrix::<f64>::identity(&h);
    (1..h.m()).all(|i| rank_condition(&h, &lambda, &omega, i).is_ok_and(|s| s.passes()))
}
