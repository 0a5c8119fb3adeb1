mod common;

use common::*;
use formnet_core::graph::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn graph_case() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..=6, 0usize..10)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(120))]

    #[test]
    fn rigid_motions_lie_in_the_kernel((seed, n, extra) in graph_case()) {
        let mut r = rng(seed);
        let edges = random_connected_edges(&mut r, n, extra);
        let pts = random_points(&mut r, n, 2, 5.0);
        let g = graph_from(n, 2, &edges, &pts);
        let q = Configuration::from_points(&pts).unwrap();
        let rig = build_rigidity_matrix(&g, &q).unwrap();

        let translation = DVector::from_fn(2 * n, |k, _| if k % 2 == 0 { 1.3 } else { -0.7 });
        prop_assert!((rig.matrix() * translation).amax() < 1e-10);
        let (cx, cy) = (0.4, -2.0);
        let rotation = DVector::from_fn(2 * n, |k, _| {
            let p = q.agent(k / 2);
            if k % 2 == 0 { -(p[1] - cy) } else { p[0] - cx }
        });
        prop_assert!((rig.matrix() * rotation).amax() < 1e-10);
    }

    #[test]
    fn rigidity_rank_is_bounded_and_matches_elimination((seed, n, extra) in graph_case()) {
        let mut r = rng(seed);
        let edges = random_connected_edges(&mut r, n, extra);
        let pts = random_points(&mut r, n, 2, 5.0);
        let g = graph_from(n, 2, &edges, &pts);
        let rank = build_rigidity_matrix(&g, &Configuration::from_points(&pts).unwrap()).unwrap().rank();
        prop_assert!(rank <= edges.len().min(2 * n));
        prop_assert!(rank <= 2 * n - 3);
        prop_assert_eq!(rank, rank_by_elimination(rigidity_rows(n, 2, &edges, &pts), 1e-9));
    }

    #[test]
    fn incidence_rank_counts_components(seed in any::<u64>(), n in 2usize..=6, m in 0usize..10) {
        let mut r = rng(seed);
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for _ in 0..m {
            use rand::Rng;
            let (a, b) = (r.random_range(0..n), r.random_range(0..n));
            if a != b && !edges.iter().any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a)) {
                edges.push((a, b));
            }
        }
        let h = IncidenceMatrix::from_edges(n, &edges).unwrap();
        for row in h.matrix().row_iter() {
            prop_assert_eq!(row.sum(), 0.0);
        }
        prop_assert_eq!(numerical_rank(h.matrix()), n - component_count(n, &edges));
        prop_assert_eq!(components(n, edges.iter().copied()).len(), component_count(n, &edges));
    }

    #[test]
    fn weighted_laplacian_is_symmetric_psd((seed, n, extra) in graph_case(), scale in 0.1f64..10.0) {
        let mut r = rng(seed);
        let edges = random_connected_edges(&mut r, n, extra);
        let pts = random_points(&mut r, n, 2, 5.0);
        let g = graph_from(n, 2, &edges, &pts);
        let m = edges.len();
        // SPD covariance: A A^T + scale I
        let a = DMatrix::from_fn(m, m, |i, j| ((i * 7 + j * 3) % 5) as f64 * 0.1);
        let p = &a * a.transpose() + DMatrix::identity(m, m) * scale;
        let lap = weighted_laplacian(&g, &p).unwrap();
        prop_assert!((&lap - lap.transpose()).amax() < 1e-12);
        prop_assert!(lap.clone().symmetric_eigenvalues().min() >= -1e-10);
        prop_assert!((&lap * DVector::from_element(n, 1.0)).amax() < 1e-10 * lap.amax().max(1.0));
    }
}

#[test]
fn triangle_rank_agrees_with_elimination_oracle() {
    let pts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.5, 1.0]];
    let edges = [(0, 1), (1, 2), (0, 2)];
    assert_eq!(
        rank_by_elimination(rigidity_rows(3, 2, &edges, &pts), 1e-9),
        3
    );
    let g = graph_from(3, 2, &edges, &pts);
    let rep = is_generically_rigid(&g, &Configuration::from_points(&pts).unwrap()).unwrap();
    assert_eq!((rep.rank, rep.required, rep.rigid), (3, 3, true));
}

#[test]
fn three_dimensional_tetrahedron_is_rigid() {
    let pts = vec![
        vec![0.0, 0.0, 0.0],
        vec![1.0, 0.1, 0.0],
        vec![0.2, 1.1, 0.0],
        vec![0.3, 0.4, 1.2],
    ];
    let edges = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
    let g = graph_from(4, 3, &edges, &pts);
    let rep = is_generically_rigid(&g, &Configuration::from_points(&pts).unwrap()).unwrap();
    assert_eq!((rep.rank, rep.required, rep.rigid), (6, 6, true));
}
