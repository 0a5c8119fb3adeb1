mod common;

use common::*;
use formnet_core::graph::{FormationGraph, Link};
use formnet_core::spanning_tree::*;
use formnet_core::Error;
use proptest::prelude::*;
use rand::Rng;

fn weighted_graph(
    seed: u64,
    n: usize,
    extra: usize,
) -> (FormationGraph, Vec<(usize, usize)>, Vec<f64>) {
    let mut r = rng(seed);
    let edges = random_connected_edges(&mut r, n, extra);
    // quarter-integer weights keep every sum exact
    let weights: Vec<f64> = edges
        .iter()
        .map(|_| r.random_range(0..40) as f64 * 0.25)
        .collect();
    let links = edges
        .iter()
        .zip(&weights)
        .map(|(&(i, j), &w)| Link::new(i, j, 1.0).with_weight(w))
        .collect();
    (FormationGraph::new(n, 2, links, 0).unwrap(), edges, weights)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn kruskal_matches_enumeration(seed in any::<u64>(), n in 2usize..=7, extra in 0usize..12) {
        let (g, edges, weights) = weighted_graph(seed, n, extra);
        let healthy = prune_unhealthy(&g, &LinkTokenVector::all_healthy(edges.len(), 0)).unwrap();
        prop_assert_eq!(healthy.edges.clone(), (0..edges.len()).collect::<Vec<_>>());
        let tree = build_mst(&g, &healthy, &weights).unwrap();
        prop_assert_eq!(Some(tree.total_weight), brute_force_mst(n, &edges, &weights));
        prop_assert_eq!(tree.edges.len(), n - 1);
        let picked: Vec<(usize, usize)> = tree.edges.iter().map(|&e| edges[e]).collect();
        prop_assert_eq!(component_count(n, &picked), 1);
        prop_assert_eq!(build_mst(&g, &healthy, &weights).unwrap(), tree);
    }

    #[test]
    fn pruned_mst_matches_enumeration_or_reports_partition(
        seed in any::<u64>(), n in 2usize..=7, extra in 0usize..12, mask in any::<u32>()
    ) {
        let (g, edges, weights) = weighted_graph(seed, n, extra);
        let tokens = LinkTokenVector { tokens: (0..edges.len()).map(|e| mask >> (e % 32) & 1 == 1).collect(), epoch: 0 };
        let healthy = prune_unhealthy(&g, &tokens).unwrap();
        prop_assert_eq!(healthy.healthy_count, healthy.edges.len());
        let kept: Vec<(usize, usize)> = healthy.edges.iter().map(|&e| edges[e]).collect();
        let kept_w: Vec<f64> = healthy.edges.iter().map(|&e| weights[e]).collect();
        match build_mst(&g, &healthy, &weights) {
            Ok(tree) => {
                prop_assert_eq!(Some(tree.total_weight), brute_force_mst(n, &kept, &kept_w));
                prop_assert!(tree.edges.iter().all(|e| healthy.edges.contains(e)));
            }
            Err(Error::Disconnected { components }) => {
                prop_assert!(component_count(n, &kept) > 1);
                prop_assert_eq!(components.len(), component_count(n, &kept));
                prop_assert_eq!(components.iter().map(Vec::len).sum::<usize>(), n);
            }
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }
}

#[test]
fn triangle_examples_match_enumeration() {
    let edges = [(0, 1), (1, 2), (0, 2)];
    let w = [1.0, 2.0, 3.0];
    assert_eq!(brute_force_mst(3, &edges, &w), Some(3.0));
    assert_eq!(brute_force_mst(3, &edges[1..], &w[1..]), Some(5.0));
}
