//! Token-based pruning of dropped links and Kruskal MST over what survives.

use std::cmp::Ordering;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{components, FormationGraph};

/// Per-link delivery bits for one epoch, indexed by the graph's link order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkTokenVector {
    pub tokens: Vec<bool>,
    pub epoch: u64,
}

impl LinkTokenVector {
    pub fn all_healthy(edges: usize, epoch: u64) -> Self {
        LinkTokenVector {
            tokens: vec![true; edges],
            epoch,
        }
    }

    /// `"101"` style rendering, one character per link.
    pub fn bitstring(&self) -> String {
        self.tokens
            .iter()
            .map(|&t| if t { '1' } else { '0' })
            .collect()
    }

    pub fn parse_bitstring(bits: &str, epoch: u64) -> Option<Self> {
        bits.chars()
            .map(|c| match c {
                '1' => Some(true),
                '0' => Some(false),
                _ => None,
            })
            .collect::<Option<Vec<_>>>()
            .map(|tokens| LinkTokenVector { tokens, epoch })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HealthySubgraph {
    /// Indices of retained links, ascending.
    pub edges: Vec<usize>,
    pub healthy_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpanningTree {
    /// Link indices in the order Kruskal accepted them.
    pub edges: Vec<usize>,
    pub total_weight: f64,
}

impl SpanningTree {
    pub fn sorted_edges(&self) -> Vec<usize> {
        let mut e = self.edges.clone();
        e.sort_unstable();
        e
    }
}

/// Disjoint-set forest with path compression and union by size.
#[derive(Debug, Clone)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    pub fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    /// Merges the clusters of `a` and `b`; false if they were already joined.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        true
    }
}

pub fn prune_unhealthy(
    graph: &FormationGraph,
    tokens: &LinkTokenVector,
) -> Result<HealthySubgraph> {
    if tokens.tokens.len() != graph.edge_count() {
        return Err(Error::TokenLength {
            expected: graph.edge_count(),
            got: tokens.tokens.len(),
        });
    }
    let edges: Vec<usize> = tokens
        .tokens
        .iter()
        .enumerate()
        .filter_map(|(e, &ok)| ok.then_some(e))
        .collect();
    Ok(HealthySubgraph {
        healthy_count: edges.len(),
        edges,
    })
}

/// Minimum spanning tree of the healthy links under `weights` (one per graph
/// link). Ties are broken by link index.
pub fn build_mst(
    graph: &FormationGraph,
    healthy: &HealthySubgraph,
    weights: &[f64],
) -> Result<SpanningTree> {
    if weights.len() != graph.edge_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} weights for {} links",
            weights.len(),
            graph.edge_count()
        )));
    }
    let links = graph.links();
    let n = graph.agents();
    let mut order = healthy.edges.clone();
    order.sort_by(|&a, &b| {
        weights[a]
            .partial_cmp(&weights[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });

    let mut clusters = UnionFind::new(n);
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut total_weight = 0.0;
    for e in order {
        if edges.len() + 1 == n {
            break;
        }
        let (u, v) = links[e].endpoints();
        if clusters.union(u, v) {
            edges.push(e);
            total_weight += weights[e];
        }
    }
    if edges.len() + 1 != n {
        let comps = components(n, healthy.edges.iter().map(|&e| links[e].endpoints()));
        return Err(Error::Disconnected { components: comps });
    }
    Ok(SpanningTree {
        edges,
        total_weight,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Link;

    fn triangle() -> FormationGraph {
        let links = vec![
            Link::new(0, 1, 1.0).with_weight(1.0),
            Link::new(1, 2, 1.0).with_weight(2.0),
            Link::new(0, 2, 1.0).with_weight(3.0),
        ];
        FormationGraph::new(3, 2, links, 0).unwrap()
    }

    fn tokens(bits: &str) -> LinkTokenVector {
        LinkTokenVector::parse_bitstring(bits, 0).unwrap()
    }

    #[test]
    fn pruning_examples() {
        let g = triangle();
        let all = prune_unhealthy(&g, &tokens("111")).unwrap();
        assert_eq!((all.edges.clone(), all.healthy_count), (vec![0, 1, 2], 3));
        let one_down = prune_unhealthy(&g, &tokens("011")).unwrap();
        assert_eq!(
            (one_down.edges.clone(), one_down.healthy_count),
            (vec![1, 2], 2)
        );
        let none = prune_unhealthy(&g, &tokens("000")).unwrap();
        assert_eq!(none.healthy_count, 0);
        assert!(none.edges.is_empty());
        assert_eq!(
            prune_unhealthy(&g, &tokens("11")),
            Err(Error::TokenLength {
                expected: 3,
                got: 2
            })
        );
    }

    #[test]
    fn mst_on_weighted_triangle() {
        let g = triangle();
        let w = g.link_weights(
            &crate::graph::Configuration::from_points(&vec![vec![0.0, 0.0]; 3]).unwrap(),
        );
        let tree = build_mst(&g, &prune_unhealthy(&g, &tokens("111")).unwrap(), &w).unwrap();
        assert_eq!(tree.sorted_edges(), vec![0, 1]);
        assert_eq!(tree.total_weight, 3.0);

        let tree = build_mst(&g, &prune_unhealthy(&g, &tokens("011")).unwrap(), &w).unwrap();
        assert_eq!(tree.sorted_edges(), vec![1, 2]);
        assert_eq!(tree.total_weight, 5.0);
    }

    #[test]
    fn dropping_a_bridge_disconnects() {
        let links = vec![Link::new(0, 1, 1.0), Link::new(1, 2, 1.0)];
        let path = FormationGraph::new(3, 2, links, 0).unwrap();
        let err = build_mst(
            &path,
            &prune_unhealthy(&path, &tokens("10")).unwrap(),
            &[1.0, 1.0],
        )
        .unwrap_err();
        assert_eq!(
            err,
            Error::Disconnected {
                components: vec![vec![0, 1], vec![2]]
            }
        );
        assert_eq!(
            err.to_string(),
            "healthy links do not span the formation: {1,2} | {3}"
        );
    }

    #[test]
    fn ties_resolve_by_link_index() {
        let links = vec![
            Link::new(0, 1, 1.0),
            Link::new(1, 2, 1.0),
            Link::new(0, 2, 1.0),
        ];
        let g = FormationGraph::new(3, 2, links, 0).unwrap();
        let healthy = prune_unhealthy(&g, &tokens("111")).unwrap();
        let tree = build_mst(&g, &healthy, &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(tree.edges, vec![0, 1]);
    }

    #[test]
    fn union_find_merges() {
        let mut uf = UnionFind::new(4);
        assert!(uf.union(0, 1));
        assert!(uf.union(2, 3));
        assert!(!uf.union(1, 0));
        assert!(uf.union(1, 3));
        assert_eq!(uf.find(0), uf.find(2));
    }
}
