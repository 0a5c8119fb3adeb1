//! Independent oracles for the integration and acceptance tests. Nothing in
//! here calls into the library's linear algebra or union-find.
#![allow(dead_code)]

use formnet_core::graph::{Configuration, FormationGraph, Link};
use formnet_core::scenario_file::ScenarioFile;
use formnet_core::sim::Scenario;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const PENTAGON_LOSSLESS: &str = include_str!("../../../../scenarios/pentagon-lossless.json");
pub const PENTAGON_PERSISTENT: &str =
    include_str!("../../../../scenarios/pentagon-persistent-loss.json");
pub const TRIANGLE_LOSSLESS: &str = include_str!("../../../../scenarios/lossless-triangle.json");
pub const BERNOULLI_SWEEP: &str = include_str!("../../../../scenarios/bernoulli-sweep.json");

pub fn scenario(text: &str) -> Scenario {
    ScenarioFile::parse(text).unwrap().to_scenario().unwrap()
}

/// Rank by Gaussian elimination with partial pivoting; pivots below
/// `rel_tol * max|a_ij|` count as zero.
pub fn rank_by_elimination(mut rows: Vec<Vec<f64>>, rel_tol: f64) -> usize {
    let scale = rows.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0;
    }
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let pivot =
            (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs()));
        let Some(p) = pivot else { break };
        if rows[p][c].abs() <= rel_tol * scale {
            continue;
        }
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank {
                let f = rows[r][c] / rows[rank][c];
                for k in c..cols {
                    rows[r][k] -= f * rows[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}

/// Rigidity matrix rows written straight from the edge constraint derivative.
pub fn rigidity_rows(
    n: usize,
    d: usize,
    edges: &[(usize, usize)],
    points: &[Vec<f64>],
) -> Vec<Vec<f64>> {
    edges
        .iter()
        .map(|&(i, j)| {
            let mut row = vec![0.0; n * d];
            for k in 0..d {
                row[i * d + k] = points[i][k] - points[j][k];
                row[j * d + k] = points[j][k] - points[i][k];
            }
            row
        })
        .collect()
}

/// Number of connected components by repeated label relaxation.
pub fn component_count(n: usize, edges: &[(usize, usize)]) -> usize {
    let mut label: Vec<usize> = (0..n).collect();
    loop {
        let mut changed = false;
        for &(a, b) in edges {
            let m = label[a].min(label[b]);
            if label[a] != m || label[b] != m {
                label[a] = m;
                label[b] = m;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut roots: Vec<usize> = label;
    roots.sort_unstable();
    roots.dedup();
    roots.len()
}

/// Minimum spanning-tree weight by enumerating every (n-1)-subset of edges.
pub fn brute_force_mst(n: usize, edges: &[(usize, usize)], weights: &[f64]) -> Option<f64> {
    fn walk(
        n: usize,
        edges: &[(usize, usize)],
        weights: &[f64],
        start: usize,
        chosen: &mut Vec<usize>,
        best: &mut Option<f64>,
    ) {
        if chosen.len() + 1 == n {
            let picked: Vec<(usize, usize)> = chosen.iter().map(|&e| edges[e]).collect();
            if component_count(n, &picked) == 1 {
                let w: f64 = chosen.iter().map(|&e| weights[e]).sum();
                *best = Some(best.map_or(w, |b| b.min(w)));
            }
            return;
        }
        for e in start..edges.len() {
            chosen.push(e);
            walk(n, edges, weights, e + 1, chosen, best);
            chosen.pop();
        }
    }
    let mut best = None;
    walk(n, edges, weights, 0, &mut Vec::new(), &mut best);
    best
}

/// Solves `A x = b` by Gauss-Jordan elimination with partial pivoting.
pub fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in 0..n {
            if r != c {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    (0..n).map(|i| b[i] / a[i][i]).collect()
}

/// Anchored weighted least squares per coordinate: builds the full weighted
/// Laplacian edge by edge, moves the reference column to the right-hand side
/// and solves the remaining system densely.
pub fn dense_anchored_solve(
    n: usize,
    d: usize,
    edges: &[(usize, usize)],
    values: &[Vec<f64>],
    variances: &[f64],
    reference: usize,
    reference_position: &[f64],
) -> Vec<Vec<f64>> {
    let mut lap = vec![vec![0.0; n]; n];
    for (&(i, j), &var) in edges.iter().zip(variances) {
        let w = 1.0 / var;
        lap[i][i] += w;
        lap[j][j] += w;
        lap[i][j] -= w;
        lap[j][i] -= w;
    }
    let others: Vec<usize> = (0..n).filter(|&a| a != reference).collect();
    let mut out = vec![vec![0.0; d]; n];
    out[reference] = reference_position.to_vec();
    for k in 0..d {
        // weighted H^T z
        let mut rhs = vec![0.0; n];
        for ((&(i, j), z), &var) in edges.iter().zip(values).zip(variances) {
            rhs[i] += z[k] / var;
            rhs[j] -= z[k] / var;
        }
        let a: Vec<Vec<f64>> = others
            .iter()
            .map(|&r| others.iter().map(|&c| lap[r][c]).collect())
            .collect();
        let b: Vec<f64> = others
            .iter()
            .map(|&r| rhs[r] - lap[r][reference] * reference_position[k])
            .collect();
        for (idx, v) in gauss_solve(a, b).into_iter().enumerate() {
            out[others[idx]][k] = v;
        }
    }
    out
}

/// Random connected graph on `n` vertices: a random spanning tree plus extra edges.
pub fn random_connected_edges(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        let u = rng.random_range(0..v);
        edges.push(if rng.random_bool(0.5) { (u, v) } else { (v, u) });
    }
    for _ in 0..extra {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        if a != b
            && !edges
                .iter()
                .any(|&(x, y)| (x, y) == (a, b) || (x, y) == (b, a))
        {
            edges.push((a, b));
        }
    }
    edges
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, half_width: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| rng.random_range(-half_width..half_width))
                .collect()
        })
        .collect()
}

pub fn graph_from(
    n: usize,
    d: usize,
    edges: &[(usize, usize)],
    points: &[Vec<f64>],
) -> FormationGraph {
    let cfg = Configuration::from_points(points).unwrap();
    let links = edges
        .iter()
        .map(|&(i, j)| Link::new(i, j, cfg.distance(i, j).max(1e-6)))
        .collect();
    FormationGraph::new(n, d, links, 0).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
