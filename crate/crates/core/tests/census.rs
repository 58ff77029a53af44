use semident::census::{canonical_form, census_report, enumerate_graphs, CensusOptions};
use semident::criterion::check_global_identifiability;
use semident::MixedGraph;

#[test]
fn three_nodes_injective_iff_simple() {
    let r = census_report(&CensusOptions::new(3)).unwrap();
    assert!(r.disagreements.is_empty(), "{:?}", r.disagreements);
    for c in &r.classes {
        assert_eq!(c.identifiable, c.simple, "{:?}", c.graph);
    }
    assert_eq!(r.unlabeled.simple_not_identifiable, 0);
}

#[test]
fn four_nodes_two_simple_noninjective_classes() {
    let r = census_report(&CensusOptions {
        simple_only: true,
        ..CensusOptions::new(4)
    })
    .unwrap();
    assert!(r.disagreements.is_empty(), "{:?}", r.disagreements);
    let bad: Vec<_> = r.noninjective().collect();
    assert_eq!(bad.len(), 2);
    assert_ne!(bad[0].key, bad[1].key);
}

#[test]
fn four_node_census_matches_labeled_enumeration() {
    let r = census_report(&CensusOptions::new(4)).unwrap();
    assert!(r.disagreements.is_empty(), "{:?}", r.disagreements);
    let mut labeled_bad = 0;
    let mut total = 0;
    for g in enumerate_graphs(4, true, false).unwrap() {
        total += 1;
        if !check_global_identifiability(&g).identifiable {
            labeled_bad += 1;
        }
    }
    assert_eq!(r.labeled.total(), total);
    assert_eq!(r.labeled.not_identifiable(), labeled_bad);
}

#[test]
fn relabeling_preserves_key() {
    for g in enumerate_graphs(3, true, false).unwrap().step_by(7) {
        let perm = [2, 0, 1];
        let h = MixedGraph::new(
            3,
            g.directed_edges().map(|(i, j)| (perm[i], perm[j])),
            g.bidirected_edges().map(|(i, j)| (perm[i], perm[j])),
        )
        .unwrap();
        assert_eq!(canonical_form(&g).unwrap(), canonical_form(&h).unwrap());
    }
}
