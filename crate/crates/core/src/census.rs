//! Exhaustive census of small acyclic mixed graphs.
//!
//! Every acyclic mixed graph is isomorphic to one whose directed edges all
//! point from lower to higher labels, so the census walks those
//! representatives, groups them by canonical form and compares the
//! criterion against an oracle that never calls it.

use std::collections::{BTreeMap, BinaryHeap};
use std::cmp::Reverse;
use std::fmt;

use rayon::prelude::*;
use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::criterion::{check_global_identifiability, find_violating_set_exhaustive};
use crate::graph::{topologically_relabeled, GraphError, MixedGraph};
use crate::inversion::all_rank_conditions_hold;
use crate::params::{sample_parameters, LambdaMatrix, OmegaMatrix};
use crate::witness::construct_witness_for;

/// Largest node count accepted by [`enumerate_graphs`] and [`canonical_form`].
pub const MAX_NODES: usize = 6;
/// Largest node count accepted by the oracle and the report.
pub const MAX_REPORT_NODES: usize = 5;
pub const DEFAULT_TRIALS: usize = 20;
/// Witness acceptance thresholds used by the oracle.
pub const WITNESS_RESIDUAL: f64 = 1e-9;
pub const WITNESS_SEPARATION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CensusError {
    #[error("node count {n} is outside 1..={max}")]
    NodeCount { n: usize, max: usize },
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn check_n(n: usize, max: usize) -> Result<(), CensusError> {
    if n == 0 || n > max {
        return Err(CensusError::NodeCount { n, max });
    }
    Ok(())
}

/// Bit layout: directed `i -> j` at `i * n + j`, bidirected `{i, j}` with
/// `i < j` at `n * n + pair_index(i, j)`.
fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

fn upper_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}

fn encode(g: &MixedGraph) -> u64 {
    let n = g.m();
    let mut bits = 0u64;
    for (i, j) in g.directed_edges() {
        bits |= 1 << (i * n + j);
    }
    for (i, j) in g.bidirected_edges() {
        bits |= 1 << (n * n + pair_index(n, i, j));
    }
    bits
}

fn decode(n: usize, bits: u64) -> MixedGraph {
    let pairs = upper_pairs(n);
    let directed = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j && bits >> (i * n + j) & 1 == 1);
    let bidirected = pairs
        .iter()
        .copied()
        .filter(|&(i, j)| bits >> (n * n + pair_index(n, i, j)) & 1 == 1);
    MixedGraph::new(n, directed, bidirected).expect("decoded edges are in range")
}

/// Canonical form: the least bit encoding over all node permutations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalKey(pub u64);

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:013x}", self.0)
    }
}

impl Serialize for CanonicalKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Bit permutations induced by every node permutation on `n` nodes.
struct PermTable {
    n: usize,
    maps: Vec<Vec<(u8, u8)>>,
}

impl PermTable {
    fn new(n: usize) -> Self {
        let mut perms = Vec::new();
        let mut p: Vec<usize> = (0..n).collect();
        permutations(&mut p, 0, &mut perms);
        let maps = perms
            .iter()
            .map(|p| {
                let mut map = Vec::new();
                for i in 0..n {
                    for j in 0..n {
                        if i != j {
                            map.push(((i * n + j) as u8, (p[i] * n + p[j]) as u8));
                        }
                    }
                }
                for (i, j) in upper_pairs(n) {
                    let (a, b) = (p[i].min(p[j]), p[i].max(p[j]));
                    map.push(((n * n + pair_index(n, i, j)) as u8, (n * n + pair_index(n, a, b)) as u8));
                }
                map
            })
            .collect();
        PermTable { n, maps }
    }

    /// Canonical key and the number of permutations attaining it, which is
    /// the order of the automorphism group.
    fn canonical(&self, bits: u64) -> (u64, u64) {
        let mut best = u64::MAX;
        let mut count = 0;
        for map in &self.maps {
            let mut out = 0u64;
            for &(from, to) in map {
                out |= (bits >> from & 1) << to;
            }
            match out.cmp(&best) {
                std::cmp::Ordering::Less => {
                    best = out;
                    count = 1;
                }
                std::cmp::Ordering::Equal => count += 1,
                std::cmp::Ordering::Greater => {}
            }
        }
        (best, count)
    }

    fn factorial(&self) -> u64 {
        (1..=self.n as u64).product()
    }
}

fn permutations(p: &mut Vec<usize>, k: usize, out: &mut Vec<Vec<usize>>) {
    if k == p.len() {
        out.push(p.clone());
        return;
    }
    for i in k..p.len() {
        p.swap(k, i);
        permutations(p, k + 1, out);
        p.swap(k, i);
    }
}

pub fn canonical_form(g: &MixedGraph) -> Result<CanonicalKey, CensusError> {
    check_n(g.m(), MAX_NODES)?;
    Ok(CanonicalKey(PermTable::new(g.m()).canonical(encode(g)).0))
}

/// Order of the automorphism group of `g`.
pub fn automorphism_count(g: &MixedGraph) -> Result<u64, CensusError> {
    check_n(g.m(), MAX_NODES)?;
    Ok(PermTable::new(g.m()).canonical(encode(g)).1)
}

/// Lexicographically least topological order, by node index.
fn least_topological_order(n: usize, bits: u64) -> Option<Vec<usize>> {
    let mut indegree = vec![0; n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            if bits >> (i * n + j) & 1 == 1 {
                indegree[j] += 1;
            }
        }
    }
    let mut heap: BinaryHeap<Reverse<usize>> = (0..n).filter(|&v| indegree[v] == 0).map(Reverse).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(v)) = heap.pop() {
        order.push(v);
        for j in (0..n).filter(|&j| j != v) {
            if bits >> (v * n + j) & 1 == 1 {
                indegree[j] -= 1;
                if indegree[j] == 0 {
                    heap.push(Reverse(j));
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Directed parts as bit masks: all labeled DAGs, or all digraphs.
fn directed_parts(n: usize, acyclic_only: bool) -> Box<dyn Iterator<Item = u64>> {
    if acyclic_only {
        // each labeled DAG is an upper-triangular one moved by its own least
        // topological order, which makes the pair unique
        let table = PermTable::new(n);
        let pairs = upper_pairs(n);
        let mut perms = Vec::new();
        permutations(&mut (0..n).collect(), 0, &mut perms);
        Box::new((0u64..1 << pairs.len()).flat_map(move |mask| {
            let pairs = pairs.clone();
            let upper: u64 = pairs
                .iter()
                .enumerate()
                .filter(|&(k, _)| mask >> k & 1 == 1)
                .map(|(_, &(i, j))| 1u64 << (i * n + j))
                .sum();
            let out: Vec<u64> = table
                .maps
                .iter()
                .zip(&perms)
                .filter_map(|(map, p)| {
                    let mut bits = 0u64;
                    for &(from, to) in map {
                        bits |= (upper >> from & 1) << to;
                    }
                    (least_topological_order(n, bits).as_deref() == Some(p.as_slice())).then_some(bits)
                })
                .collect();
            out.into_iter()
        }))
    } else {
        let slots: Vec<usize> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| i * n + j))
            .collect();
        Box::new((0u64..1 << slots.len()).map(move |mask| {
            slots
                .iter()
                .enumerate()
                .filter(|&(k, _)| mask >> k & 1 == 1)
                .map(|(_, &s)| 1u64 << s)
                .sum()
        }))
    }
}

fn with_bidirected(n: usize, directed: impl Iterator<Item = u64>, simple_only: bool) -> impl Iterator<Item = u64> {
    let pairs = upper_pairs(n);
    directed.flat_map(move |d| {
        let pairs = pairs.clone();
        (0u64..1 << pairs.len()).filter_map(move |mask| {
            let mut bits = d;
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if mask >> k & 1 == 1 {
                    if simple_only && (d >> (i * n + j) & 1 == 1 || d >> (j * n + i) & 1 == 1) {
                        return None;
                    }
                    bits |= 1 << (n * n + pair_index(n, i, j));
                }
            }
            Some(bits)
        })
    })
}

/// All labeled mixed graphs on `n` nodes.
pub fn enumerate_graphs(
    n: usize,
    acyclic_only: bool,
    simple_only: bool,
) -> Result<impl Iterator<Item = MixedGraph>, CensusError> {
    check_n(n, MAX_NODES)?;
    Ok(with_bidirected(n, directed_parts(n, acyclic_only), simple_only).map(move |bits| decode(n, bits)))
}

fn representative_bits(n: usize, simple_only: bool) -> impl Iterator<Item = u64> {
    let pairs = upper_pairs(n);
    let directed = (0u64..1 << pairs.len()).map(move |mask| {
        pairs
            .iter()
            .enumerate()
            .filter(|&(k, _)| mask >> k & 1 == 1)
            .map(|(_, &(i, j))| 1u64 << (i * n + j))
            .sum()
    });
    with_bidirected(n, directed, simple_only)
}

/// Acyclic mixed graphs whose directed edges all increase the label.
/// Every acyclic mixed graph on `n` nodes is isomorphic to at least one.
pub fn enumerate_representatives(n: usize, simple_only: bool) -> Result<impl Iterator<Item = MixedGraph>, CensusError> {
    check_n(n, MAX_NODES)?;
    Ok(representative_bits(n, simple_only).map(move |bits| decode(n, bits)))
}

fn serialize_graph<S: Serializer>(g: &MixedGraph, s: S) -> Result<S::Ok, S::Error> {
    g.to_json().serialize(s)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OracleEvidence {
    /// Rank conditions held at this many points.
    RankConditions { points: usize },
    Witness {
        violating_set: Vec<usize>,
        sink: usize,
        separation: f64,
        residual: f64,
    },
    Failure { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleVerdict {
    pub injective: bool,
    pub evidence: OracleEvidence,
}

impl OracleVerdict {
    pub fn failed(&self) -> bool {
        matches!(self.evidence, OracleEvidence::Failure { .. })
    }
}

fn trial_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64)
}

/// Injectivity decided by an exhaustive subset scan, backed by the rank
/// conditions at `Λ = 0, Ω = I` and `trials` random points, or by an
/// explicit witness.
pub fn injectivity_oracle(g: &MixedGraph, trials: usize, seed: u64) -> Result<OracleVerdict, CensusError> {
    check_n(g.m(), MAX_REPORT_NODES)?;
    let scan = find_violating_set_exhaustive(g)?;
    let Some((a, y)) = scan else {
        let (h, _) = topologically_relabeled(g)?;
        let mut points = vec![(LambdaMatrix::zeros(&h), OmegaMatrix::identity(&h))];
        points.extend((0..trials).map(|k| sample_parameters::<f64>(&h, trial_seed(seed, k), 1.0)));
        let evidence = match points.iter().position(|(l, o)| !all_rank_conditions_hold(&h, l, o)) {
            None => OracleEvidence::RankConditions { points: points.len() },
            Some(k) => OracleEvidence::Failure {
                reason: format!("rank condition fails at point {k}"),
            },
        };
        return Ok(OracleVerdict { injective: true, evidence });
    };
    let evidence = match construct_witness_for::<f64>(g, &a, y) {
        Ok(w) if w.residual <= WITNESS_RESIDUAL && w.separation >= WITNESS_SEPARATION => OracleEvidence::Witness {
            violating_set: a,
            sink: y,
            separation: w.separation,
            residual: w.residual,
        },
        Ok(w) => OracleEvidence::Failure {
            reason: format!("witness residual {:e}, separation {:e}", w.residual, w.separation),
        },
        Err(e) => OracleEvidence::Failure {
            reason: format!("witness construction failed: {e}"),
        },
    };
    Ok(OracleVerdict { injective: false, evidence })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClassTotals {
    pub simple_identifiable: u64,
    pub simple_not_identifiable: u64,
    pub nonsimple_identifiable: u64,
    pub nonsimple_not_identifiable: u64,
}

impl ClassTotals {
    fn add(&mut self, simple: bool, identifiable: bool, count: u64) {
        let slot = match (simple, identifiable) {
            (true, true) => &mut self.simple_identifiable,
            (true, false) => &mut self.simple_not_identifiable,
            (false, true) => &mut self.nonsimple_identifiable,
            (false, false) => &mut self.nonsimple_not_identifiable,
        };
        *slot += count;
    }

    pub fn total(&self) -> u64 {
        self.simple_identifiable + self.simple_not_identifiable + self.nonsimple_identifiable + self.nonsimple_not_identifiable
    }

    pub fn not_identifiable(&self) -> u64 {
        self.simple_not_identifiable + self.nonsimple_not_identifiable
    }
}

/// One isomorphism class.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassRecord {
    pub key: CanonicalKey,
    /// A member whose labels are a topological order.
    #[serde(serialize_with = "serialize_graph")]
    pub graph: MixedGraph,
    /// Number of labeled graphs in the class.
    pub labeled: u64,
    pub simple: bool,
    pub ancestral: bool,
    pub identifiable: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violating_set: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sink: Option<usize>,
    pub oracle: OracleVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Disagreement {
    pub key: CanonicalKey,
    #[serde(serialize_with = "serialize_graph")]
    pub graph: MixedGraph,
    pub criterion: bool,
    pub oracle: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub n: usize,
    pub simple_only: bool,
    pub trials: usize,
    /// Upper-triangular representatives checked one by one.
    pub representatives: u64,
    pub labeled: ClassTotals,
    pub unlabeled: ClassTotals,
    pub classes: Vec<ClassRecord>,
    pub disagreements: Vec<Disagreement>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CensusOptions {
    pub n: usize,
    pub simple_only: bool,
    pub trials: usize,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl CensusOptions {
    pub fn new(n: usize) -> Self {
        CensusOptions {
            n,
            simple_only: false,
            trials: DEFAULT_TRIALS,
            jobs: None,
        }
    }
}

fn one_based(v: &[usize]) -> String {
    v.iter().map(|i| (i + 1).to_string()).collect::<Vec<_>>().join(" ")
}

fn evaluate_class(key: u64, bits: u64, aut: u64, opts: &CensusOptions, table: &PermTable) -> (ClassRecord, Option<Disagreement>) {
    let g = decode(opts.n, bits);
    let verdict = check_global_identifiability(&g);
    let oracle = match injectivity_oracle(&g, opts.trials, key) {
        Ok(v) => v,
        Err(e) => OracleVerdict {
            injective: verdict.identifiable,
            evidence: OracleEvidence::Failure { reason: e.to_string() },
        },
    };
    let key = CanonicalKey(key);
    let disagreement = if oracle.injective != verdict.identifiable || oracle.failed() || (verdict.identifiable && !verdict.simple) {
        Some(Disagreement {
            key,
            graph: g.clone(),
            criterion: verdict.identifiable,
            oracle: oracle.injective,
            detail: match &oracle.evidence {
                OracleEvidence::Failure { reason } => reason.clone(),
                _ => "verdicts differ".into(),
            },
        })
    } else {
        None
    };
    let record = ClassRecord {
        key,
        graph: g,
        labeled: table.factorial() / aut,
        simple: verdict.simple,
        ancestral: verdict.ancestral,
        identifiable: verdict.identifiable,
        violating_set: verdict.violating_set,
        sink: verdict.sink,
        oracle,
    };
    (record, disagreement)
}

/// Classifies every acyclic mixed graph on `opts.n` nodes up to isomorphism.
///
/// The criterion and the subset scan are compared on every representative;
/// the full oracle runs once per class.
pub fn census_report(opts: &CensusOptions) -> Result<CensusReport, CensusError> {
    check_n(opts.n, MAX_REPORT_NODES)?;
    let run = || {
        let table = PermTable::new(opts.n);
        let reps: Vec<u64> = representative_bits(opts.n, opts.simple_only).collect();
        let scanned: Vec<(u64, u64, Option<Disagreement>)> = reps
            .par_iter()
            .map(|&bits| {
                let (key, aut) = table.canonical(bits);
                let g = decode(opts.n, bits);
                let fast = crate::criterion::find_violating_set(&g).expect("representatives are acyclic");
                let slow = find_violating_set_exhaustive(&g).expect("representatives are acyclic");
                let bad = (fast.is_some() != slow.is_some()).then(|| Disagreement {
                    key: CanonicalKey(key),
                    graph: g,
                    criterion: fast.is_none(),
                    oracle: slow.is_none(),
                    detail: "subset scan differs on this labeling".into(),
                });
                (key, aut, bad)
            })
            .collect();
        let mut disagreements = Vec::new();
        let mut classes: BTreeMap<u64, (u64, u64)> = BTreeMap::new();
        for (&bits, (key, aut, bad)) in reps.iter().zip(scanned) {
            classes.entry(key).or_insert((bits, aut));
            disagreements.extend(bad);
        }
        let evaluated: Vec<(ClassRecord, Option<Disagreement>)> = classes
            .par_iter()
            .map(|(&key, &(bits, aut))| evaluate_class(key, bits, aut, opts, &table))
            .collect();
        let mut labeled = ClassTotals::default();
        let mut unlabeled = ClassTotals::default();
        let mut records = Vec::with_capacity(evaluated.len());
        for (record, bad) in evaluated {
            labeled.add(record.simple, record.identifiable, record.labeled);
            unlabeled.add(record.simple, record.identifiable, 1);
            disagreements.extend(bad);
            records.push(record);
        }
        CensusReport {
            n: opts.n,
            simple_only: opts.simple_only,
            trials: opts.trials,
            representatives: reps.len() as u64,
            labeled,
            unlabeled,
            classes: records,
            disagreements,
        }
    };
    match opts.jobs {
        None => Ok(run()),
        Some(jobs) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs)
                .build()
                .map_err(|e| CensusError::ThreadPool(e.to_string()))?;
            Ok(pool.install(run))
        }
    }
}

pub const CSV_HEADER: &str = "key,labeled,simple,ancestral,identifiable,oracle,directed,bidirected,violating_set,sink";

impl CensusReport {
    /// One row per isomorphism class, nodes numbered from one.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for c in &self.classes {
            let d: Vec<String> = c.graph.directed_edges().map(|(i, j)| format!("{}->{}", i + 1, j + 1)).collect();
            let b: Vec<String> = c.graph.bidirected_edges().map(|(i, j)| format!("{}<->{}", i + 1, j + 1)).collect();
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                c.key,
                c.labeled,
                c.simple,
                c.ancestral,
                c.identifiable,
                if c.oracle.injective { "injective" } else { "noninjective" },
                d.join(" "),
                b.join(" "),
                c.violating_set.as_deref().map(one_based).unwrap_or_default(),
                c.sink.map(|y| (y + 1).to_string()).unwrap_or_default(),
            ));
        }
        out
    }

    pub fn noninjective(&self) -> impl Iterator<Item = &ClassRecord> {
        self.classes.iter().filter(|c| !c.identifiable)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labeled_counts_on_two_nodes() {
        assert_eq!(enumerate_graphs(1, true, false).unwrap().count(), 1);
        assert_eq!(enumerate_graphs(2, true, false).unwrap().count(), 6);
        assert_eq!(enumerate_graphs(2, false, false).unwrap().count(), 8);
        assert_eq!(enumerate_graphs(2, true, true).unwrap().count(), 4);
        // labeled DAGs on three nodes
        assert_eq!(enumerate_graphs(3, true, false).unwrap().count(), 25 * 8);
        assert!(enumerate_graphs(7, true, false).is_err());
    }

    #[test]
    fn canonical_keys() {
        let a = MixedGraph::from_one_based(3, &[(1, 2)], &[(2, 3)]).unwrap();
        let b = MixedGraph::from_one_based(3, &[(3, 1)], &[(1, 2)]).unwrap();
        assert_eq!(canonical_form(&a).unwrap(), canonical_form(&b).unwrap());
        let d = MixedGraph::from_one_based(2, &[(1, 2)], &[]).unwrap();
        let e = MixedGraph::from_one_based(2, &[], &[(1, 2)]).unwrap();
        assert_ne!(canonical_form(&d).unwrap(), canonical_form(&e).unwrap());
        assert_eq!(automorphism_count(&e).unwrap(), 2);
        assert_eq!(automorphism_count(&d).unwrap(), 1);
    }

    #[test]
    fn two_node_report() {
        let r = census_report(&CensusOptions::new(2)).unwrap();
        assert_eq!(r.classes.len(), 4);
        assert_eq!(r.labeled.total(), 6);
        assert!(r.disagreements.is_empty());
        let r = census_report(&CensusOptions {
            simple_only: true,
            ..CensusOptions::new(2)
        })
        .unwrap();
        assert_eq!(r.classes.len(), 3);
        assert_eq!(r.unlabeled.not_identifiable(), 0);
    }

    #[test]
    fn oracle_on_instrument() {
        let g = MixedGraph::from_one_based(3, &[(1, 2), (2, 3)], &[(2, 3)]).unwrap();
        let v = injectivity_oracle(&g, 5, 1).unwrap();
        assert!(!v.injective && !v.failed());
        let anc = MixedGraph::from_one_based(3, &[(1, 2)], &[(1, 3)]).unwrap();
        let v = injectivity_oracle(&anc, 5, 1).unwrap();
        assert_eq!(v.evidence, OracleEvidence::RankConditions { points: 6 });
    }

    #[test]
    fn csv_has_one_row_per_class() {
        let r = census_report(&CensusOptions::new(3)).unwrap();
        assert_eq!(r.to_csv().lines().count(), r.classes.len() + 1);
    }
}
