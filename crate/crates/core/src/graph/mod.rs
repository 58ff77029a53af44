//! Mixed graphs `G = (V, D, B)`: directed edges `i -> j` and symmetric
//! bidirected edges `i <-> j`, without self-loops.
//!
//! Nodes are internal indices `0..m`. External names live alongside the
//! graph and survive relabeling, so results can always be reported in the
//! caller's vocabulary.

mod io;

use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;

use thiserror::Error;

pub use io::{name_value, parse_graph, ParsedGraph};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("self-loop on node {node}")]
    SelfLoop { node: String },
    #[error("node index {index} out of range for a graph on {m} nodes")]
    NodeOutOfRange { index: usize, m: usize },
    #[error("directed part contains the cycle {}", .names.join(" -> "))]
    CyclicDirectedPart { cycle: Vec<usize>, names: Vec<String> },
    #[error("node subset must be nonempty")]
    EmptySubset,
    #[error("duplicate node name {0}")]
    DuplicateName(String),
    #[error("invalid graph JSON: {0}")]
    Json(String),
}

#[derive(Clone, PartialEq, Eq)]
pub struct MixedGraph {
    names: Vec<String>,
    directed: BTreeSet<(usize, usize)>,
    bidirected: BTreeSet<(usize, usize)>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    siblings: Vec<Vec<usize>>,
}

impl fmt::Debug for MixedGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d: Vec<String> = self
            .directed
            .iter()
            .map(|&(i, j)| format!("{}->{}", self.names[i], self.names[j]))
            .collect();
        let b: Vec<String> = self
            .bidirected
            .iter()
            .map(|&(i, j)| format!("{}<->{}", self.names[i], self.names[j]))
            .collect();
        write!(f, "MixedGraph(m={}; {}; {})", self.m(), d.join(","), b.join(","))
    }
}

impl MixedGraph {
    /// Graph on nodes named `"1"`, ..., `"m"` with 0-based edge endpoints.
    pub fn new(
        m: usize,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let names = (1..=m).map(|k| k.to_string()).collect();
        Self::with_names(names, directed, bidirected)
    }

    /// Same as [`MixedGraph::new`] but with 1-based endpoints, so that
    /// edges can be written the way they are usually drawn.
    pub fn from_one_based(
        m: usize,
        directed: &[(usize, usize)],
        bidirected: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let shift = |edges: &[(usize, usize)]| -> Result<Vec<(usize, usize)>, GraphError> {
            edges
                .iter()
                .map(|&(i, j)| {
                    if i == 0 || j == 0 {
                        Err(GraphError::NodeOutOfRange { index: 0, m })
                    } else {
                        Ok((i - 1, j - 1))
                    }
                })
                .collect()
        };
        Self::new(m, shift(directed)?, shift(bidirected)?)
    }

    pub fn with_names(
        names: Vec<String>,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self, GraphError> {
        let m = names.len();
        let mut seen = BTreeSet::new();
        for n in &names {
            if !seen.insert(n.as_str()) {
                return Err(GraphError::DuplicateName(n.clone()));
            }
        }
        let check = |i: usize, j: usize| -> Result<(), GraphError> {
            for index in [i, j] {
                if index >= m {
                    return Err(GraphError::NodeOutOfRange { index, m });
                }
            }
            if i == j {
                return Err(GraphError::SelfLoop {
                    node: names[i].clone(),
                });
            }
            Ok(())
        };
        let mut d = BTreeSet::new();
        for (i, j) in directed {
            check(i, j)?;
            d.insert((i, j));
        }
        let mut b = BTreeSet::new();
        for (i, j) in bidirected {
            check(i, j)?;
            b.insert((i.min(j), i.max(j)));
        }
        let mut parents = vec![Vec::new(); m];
        let mut children = vec![Vec::new(); m];
        let mut siblings = vec![Vec::new(); m];
        for &(i, j) in &d {
            children[i].push(j);
            parents[j].push(i);
        }
        for &(i, j) in &b {
            siblings[i].push(j);
            siblings[j].push(i);
        }
        for list in parents.iter_mut().chain(&mut children).chain(&mut siblings) {
            list.sort_unstable();
        }
        Ok(MixedGraph {
            names,
            directed: d,
            bidirected: b,
            parents,
            children,
            siblings,
        })
    }

    pub fn m(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, i: usize) -> &str {
        &self.names[i]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.directed.iter().copied()
    }

    /// Bidirected edges as `(min, max)` pairs.
    pub fn bidirected_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.bidirected.iter().copied()
    }

    pub fn num_directed(&self) -> usize {
        self.directed.len()
    }

    pub fn num_bidirected(&self) -> usize {
        self.bidirected.len()
    }

    pub fn has_directed(&self, i: usize, j: usize) -> bool {
        self.directed.contains(&(i, j))
    }

    pub fn has_bidirected(&self, i: usize, j: usize) -> bool {
        self.bidirected.contains(&(i.min(j), i.max(j)))
    }

    /// `pa(i)`, sorted.
    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    /// All bidirected neighbours of `i`, sorted.
    pub fn siblings(&self, i: usize) -> &[usize] {
        &self.siblings[i]
    }

    /// Bidirected neighbours of `i` with a smaller label.
    pub fn siblings_below(&self, i: usize) -> Vec<usize> {
        self.siblings[i].iter().copied().filter(|&j| j < i).collect()
    }

    /// At most one edge between any pair of nodes.
    pub fn is_simple(&self) -> bool {
        self.directed
            .iter()
            .all(|&(i, j)| !self.has_bidirected(i, j) && !self.directed.contains(&(j, i)))
    }

    pub fn is_acyclic(&self) -> bool {
        topological_order(self).is_ok()
    }

    /// Every directed edge goes from a lower to a higher label.
    pub fn is_topologically_labeled(&self) -> bool {
        self.directed.iter().all(|&(i, j)| i < j)
    }

    /// A bidirected edge forbids directed paths between its endpoints.
    pub fn is_ancestral(&self) -> Result<bool, GraphError> {
        topological_order(self)?;
        let all = vec![true; self.m()];
        Ok(self.bidirected.iter().all(|&(i, j)| {
            !self.reaches_within(&all, i, j) && !self.reaches_within(&all, j, i)
        }))
    }

    /// Graph with node `order[k]` of `self` becoming node `k`.
    pub fn relabeled(&self, order: &[usize]) -> MixedGraph {
        assert_eq!(order.len(), self.m());
        let mut position = vec![usize::MAX; self.m()];
        for (k, &v) in order.iter().enumerate() {
            position[v] = k;
        }
        assert!(position.iter().all(|&p| p != usize::MAX), "not a permutation");
        let names = order.iter().map(|&v| self.names[v].clone()).collect();
        MixedGraph::with_names(
            names,
            self.directed.iter().map(|&(i, j)| (position[i], position[j])),
            self.bidirected.iter().map(|&(i, j)| (position[i], position[j])),
        )
        .expect("relabeling preserves validity")
    }

    /// The same graph with different node names.
    pub fn renamed(&self, names: Vec<String>) -> Result<MixedGraph, GraphError> {
        assert_eq!(names.len(), self.m());
        MixedGraph::with_names(names, self.directed_edges(), self.bidirected_edges())
    }

    /// `H = (V, D', B')` keeping only the listed edges (which must exist).
    pub fn edge_subgraph(
        &self,
        directed: impl IntoIterator<Item = (usize, usize)>,
        bidirected: impl IntoIterator<Item = (usize, usize)>,
    ) -> MixedGraph {
        let d: Vec<_> = directed.into_iter().collect();
        let b: Vec<_> = bidirected.into_iter().collect();
        debug_assert!(d.iter().all(|&(i, j)| self.has_directed(i, j)));
        debug_assert!(b.iter().all(|&(i, j)| self.has_bidirected(i, j)));
        MixedGraph::with_names(self.names.clone(), d, b).expect("subgraph of a valid graph")
    }

    /// Membership mask for a node list, validating indices.
    pub fn mask(&self, a: &[usize]) -> Result<Vec<bool>, GraphError> {
        let mut mask = vec![false; self.m()];
        for &v in a {
            if v >= self.m() {
                return Err(GraphError::NodeOutOfRange {
                    index: v,
                    m: self.m(),
                });
            }
            mask[v] = true;
        }
        Ok(mask)
    }

    /// Whether a directed path from `from` to `to` exists using only nodes
    /// in `within`.
    pub fn reaches_within(&self, within: &[bool], from: usize, to: usize) -> bool {
        if from == to {
            return true;
        }
        let mut seen = vec![false; self.m()];
        let mut queue = VecDeque::from([from]);
        seen[from] = true;
        while let Some(v) = queue.pop_front() {
            for &c in &self.children[v] {
                if within[c] && !seen[c] {
                    if c == to {
                        return true;
                    }
                    seen[c] = true;
                    queue.push_back(c);
                }
            }
        }
        false
    }

    /// Nodes of `within` with a directed path to `target` inside `within`
    /// (breadth-first search backwards along parent lists).
    pub fn ancestors_within(&self, within: &[bool], target: usize) -> Vec<bool> {
        let mut seen = vec![false; self.m()];
        seen[target] = true;
        let mut queue = VecDeque::from([target]);
        while let Some(v) = queue.pop_front() {
            for &p in &self.parents[v] {
                if within[p] && !seen[p] {
                    seen[p] = true;
                    queue.push_back(p);
                }
            }
        }
        seen
    }

    /// Nodes of `within` joined to `root` by bidirected paths inside `within`.
    pub fn bidirected_component_within(&self, within: &[bool], root: usize) -> Vec<bool> {
        let mut seen = vec![false; self.m()];
        seen[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(v) = queue.pop_front() {
            for &s in &self.siblings[v] {
                if within[s] && !seen[s] {
                    seen[s] = true;
                    queue.push_back(s);
                }
            }
        }
        seen
    }

    /// `(A, B_A)` is connected; singletons are connected.
    pub fn bidirected_connected(&self, a: &[usize]) -> Result<bool, GraphError> {
        let mask = self.mask(a)?;
        let Some(&root) = a.first() else {
            return Err(GraphError::EmptySubset);
        };
        let comp = self.bidirected_component_within(&mask, root);
        Ok(a.iter().all(|&v| comp[v]))
    }

    /// `D_A` contains an arborescence converging to `y`: every other node of
    /// `a` reaches `y` inside `a`. Requires `y` in `a` and `|a| >= 2`.
    pub fn has_converging_arborescence(&self, a: &[usize], y: usize) -> Result<bool, GraphError> {
        let mask = self.mask(a)?;
        let distinct = mask.iter().filter(|&&b| b).count();
        if y >= self.m() || !mask[y] || distinct < 2 {
            return Ok(false);
        }
        let anc = self.ancestors_within(&mask, y);
        Ok(a.iter().all(|&v| anc[v]))
    }
}

/// A bijection from nodes to positions `0..m` compatible with every
/// directed edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopoOrder {
    order: Vec<usize>,
    position: Vec<usize>,
}

impl TopoOrder {
    /// `order()[k]` is the node placed at position `k`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Position of node `v`.
    pub fn position(&self, v: usize) -> usize {
        self.position[v]
    }

    pub fn positions(&self) -> &[usize] {
        &self.position
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(k, &v)| k == v)
    }
}

/// Kahn's algorithm, always releasing the smallest available label first.
pub fn topological_order(g: &MixedGraph) -> Result<TopoOrder, GraphError> {
    let m = g.m();
    let mut indegree: Vec<usize> = (0..m).map(|v| g.parents[v].len()).collect();
    let mut ready: BinaryHeap<Reverse<usize>> =
        (0..m).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(m);
    while let Some(Reverse(v)) = ready.pop() {
        order.push(v);
        for &c in &g.children[v] {
            indegree[c] -= 1;
            if indegree[c] == 0 {
                ready.push(Reverse(c));
            }
        }
    }
    if order.len() < m {
        let cycle = find_cycle(g, &indegree);
        let names = cycle.iter().map(|&v| g.names[v].clone()).collect();
        return Err(GraphError::CyclicDirectedPart { cycle, names });
    }
    let mut position = vec![0; m];
    for (k, &v) in order.iter().enumerate() {
        position[v] = k;
    }
    Ok(TopoOrder { order, position })
}

/// Extracts a directed cycle among the nodes Kahn's algorithm could not
/// release. Every such node keeps a parent that is also stuck, so walking
/// parents must eventually repeat.
fn find_cycle(g: &MixedGraph, indegree: &[usize]) -> Vec<usize> {
    let stuck = |v: usize| indegree[v] > 0;
    let start = (0..g.m()).find(|&v| stuck(v)).expect("some node is stuck");
    let mut visited_at = vec![usize::MAX; g.m()];
    let mut walk = Vec::new();
    let mut v = start;
    while visited_at[v] == usize::MAX {
        visited_at[v] = walk.len();
        walk.push(v);
        v = *g.parents[v]
            .iter()
            .find(|&&p| stuck(p))
            .expect("stuck node has a stuck parent");
    }
    let mut cycle: Vec<usize> = walk[visited_at[v]..].to_vec();
    // the walk followed parents, so reverse into edge direction
    cycle.reverse();
    let min_pos = (0..cycle.len()).min_by_key(|&k| cycle[k]).unwrap_or(0);
    cycle.rotate_left(min_pos);
    cycle
}

/// `G_A = (A, D_A, B_A)` together with the map from new to old labels.
/// Nodes keep their relative order, so topological labels stay topological.
pub fn induced_subgraph(g: &MixedGraph, a: &[usize]) -> Result<(MixedGraph, Vec<usize>), GraphError> {
    if a.is_empty() {
        return Err(GraphError::EmptySubset);
    }
    let mask = g.mask(a)?;
    let keep: Vec<usize> = (0..g.m()).filter(|&v| mask[v]).collect();
    let mut new_index = vec![usize::MAX; g.m()];
    for (k, &v) in keep.iter().enumerate() {
        new_index[v] = k;
    }
    let names = keep.iter().map(|&v| g.names[v].clone()).collect();
    let sub = MixedGraph::with_names(
        names,
        g.directed_edges()
            .filter(|&(i, j)| mask[i] && mask[j])
            .map(|(i, j)| (new_index[i], new_index[j])),
        g.bidirected_edges()
            .filter(|&(i, j)| mask[i] && mask[j])
            .map(|(i, j)| (new_index[i], new_index[j])),
    )?;
    Ok((sub, keep))
}

/// Relabels `g` along its topological order.
pub fn topologically_relabeled(g: &MixedGraph) -> Result<(MixedGraph, TopoOrder), GraphError> {
    let order = topological_order(g)?;
    Ok((g.relabeled(order.order()), order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain5() -> MixedGraph {
        MixedGraph::from_one_based(
            5,
            &[(1, 2), (2, 3), (3, 4), (4, 5)],
            &[(1, 4), (1, 5), (2, 4), (3, 5)],
        )
        .unwrap()
    }

    fn instrument5() -> MixedGraph {
        MixedGraph::from_one_based(5, &[(1, 2), (2, 3), (3, 4)], &[(1, 3), (1, 4), (1, 5), (2, 4)])
            .unwrap()
    }

    #[test]
    fn self_loops_rejected() {
        assert!(matches!(
            MixedGraph::from_one_based(1, &[(1, 1)], &[]),
            Err(GraphError::SelfLoop { .. })
        ));
        assert!(matches!(
            MixedGraph::from_one_based(2, &[], &[(2, 2)]),
            Err(GraphError::SelfLoop { .. })
        ));
    }

    #[test]
    fn bidirected_is_symmetric() {
        let g = MixedGraph::new(3, [], [(2, 0)]).unwrap();
        assert!(g.has_bidirected(0, 2) && g.has_bidirected(2, 0));
        assert_eq!(g.bidirected_edges().collect::<Vec<_>>(), vec![(0, 2)]);
    }

    #[test]
    fn topological_order_examples() {
        let chain = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[]).unwrap();
        assert!(topological_order(&chain).unwrap().is_identity());

        let swap = MixedGraph::from_one_based(2, &[(2, 1)], &[]).unwrap();
        assert_eq!(topological_order(&swap).unwrap().order(), &[1, 0]);

        let cyc = MixedGraph::from_one_based(3, &[(1, 2), (2, 3), (3, 1)], &[]).unwrap();
        match topological_order(&cyc) {
            Err(GraphError::CyclicDirectedPart { cycle, .. }) => assert_eq!(cycle, vec![0, 1, 2]),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn cycle_reported_in_edge_direction() {
        // 1 -> 3 -> 2 -> 1 plus a tail 4 -> 1
        let g = MixedGraph::from_one_based(4, &[(1, 3), (3, 2), (2, 1), (4, 1)], &[]).unwrap();
        match topological_order(&g) {
            Err(GraphError::CyclicDirectedPart { cycle, .. }) => {
                assert_eq!(cycle, vec![0, 2, 1]);
                for k in 0..cycle.len() {
                    assert!(g.has_directed(cycle[k], cycle[(k + 1) % cycle.len()]));
                }
            }
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn induced_subgraph_examples() {
        let g = chain5();
        let (full, map) = induced_subgraph(&g, &[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(full, g);
        assert_eq!(map, vec![0, 1, 2, 3, 4]);

        let (h, map) = induced_subgraph(&g, &[3, 4]).unwrap();
        assert_eq!(map, vec![3, 4]);
        assert_eq!(h.directed_edges().collect::<Vec<_>>(), vec![(0, 1)]);
        assert_eq!(h.num_bidirected(), 0);

        let (h, _) = induced_subgraph(&g, &[0, 3, 4]).unwrap();
        assert_eq!(h.directed_edges().collect::<Vec<_>>(), vec![(1, 2)]);
        assert_eq!(h.bidirected_edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2)]);
        assert_eq!(h.names(), &["1", "4", "5"]);

        assert_eq!(induced_subgraph(&g, &[]), Err(GraphError::EmptySubset));
    }

    #[test]
    fn parents_and_siblings() {
        let g = chain5();
        assert_eq!(g.parents(4), &[3]);
        assert_eq!(g.siblings_below(4), vec![0, 2]);
        let empty = MixedGraph::new(3, [], []).unwrap();
        assert!((0..3).all(|i| empty.parents(i).is_empty()));
    }

    #[test]
    fn simplicity() {
        let both = MixedGraph::from_one_based(2, &[(1, 2)], &[(1, 2)]).unwrap();
        assert!(!both.is_simple());
        let ok = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[(1, 3)]).unwrap();
        assert!(ok.is_simple());
        let two_way = MixedGraph::from_one_based(2, &[(1, 2), (2, 1)], &[]).unwrap();
        assert!(!two_way.is_simple());
    }

    #[test]
    fn ancestral_examples() {
        let g = MixedGraph::from_one_based(3, &[(1, 2)], &[(1, 3)]).unwrap();
        assert_eq!(g.is_ancestral(), Ok(true));
        let iv = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[(2, 3)]).unwrap();
        assert_eq!(iv.is_ancestral(), Ok(false));
        assert_eq!(chain5().is_ancestral(), Ok(false));
        let cyc = MixedGraph::from_one_based(3, &[(1, 2), (2, 3), (3, 1)], &[]).unwrap();
        assert!(cyc.is_ancestral().is_err());
    }

    #[test]
    fn bidirected_connectivity() {
        let g = chain5();
        assert_eq!(g.bidirected_connected(&[0, 1, 2, 3, 4]), Ok(true));
        assert_eq!(g.bidirected_connected(&[1, 2]), Ok(false));
        assert_eq!(g.bidirected_connected(&[3]), Ok(true));
        assert_eq!(g.bidirected_connected(&[]), Err(GraphError::EmptySubset));
    }

    #[test]
    fn converging_arborescences() {
        let chain = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[]).unwrap();
        assert_eq!(chain.has_converging_arborescence(&[0, 1, 2], 2), Ok(true));
        assert_eq!(chain5().has_converging_arborescence(&[0, 1, 2, 3, 4], 4), Ok(true));
        assert_eq!(chain.has_converging_arborescence(&[0, 2], 2), Ok(false));
        assert_eq!(instrument5().has_converging_arborescence(&[0, 1, 2, 3], 3), Ok(true));
    }

    #[test]
    fn relabel_round_trip() {
        let g = MixedGraph::from_one_based(3, &[(3, 1), (1, 2)], &[(3, 2)]).unwrap();
        let (h, order) = topologically_relabeled(&g).unwrap();
        assert!(h.is_topologically_labeled());
        assert_eq!(h.names(), &["3", "1", "2"]);
        assert_eq!(h.relabeled(order.positions()), g);
    }
}
