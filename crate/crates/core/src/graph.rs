//! Formation graph, configurations, incidence and rigidity matrices.
//!
//! Agents are indexed from 0 internally. Every link is stored as an ordered
//! `(tail, head)` pair; the orientation only matters for measurement signs
//! (`z = x_tail - x_head`), rigidity and connectivity ignore it.

use std::collections::{HashSet, VecDeque};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};

/// Relative singular-value threshold used for every numerical rank decision.
pub const RANK_TOLERANCE: f64 = 1e-9;

/// Seed of the perturbation used to detect non-generic placements.
const PERTURBATION_SEED: u64 = 0x6a09_e667_f3bc_c908;
/// Perturbation size relative to the placement's coordinate scale.
const PERTURBATION_SCALE: f64 = 1e-3;

/// How a link's MST weight is obtained each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum LinkWeight {
    /// Fixed weight supplied by the scenario.
    Static(f64),
    /// Current Euclidean distance between the two agents.
    Distance,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Link {
    pub tail: usize,
    pub head: usize,
    /// Desired separation between the two agents.
    pub separation: f64,
    pub weight: LinkWeight,
}

impl Link {
    pub fn new(tail: usize, head: usize, separation: f64) -> Self {
        Link {
            tail,
            head,
            separation,
            weight: LinkWeight::Distance,
        }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = LinkWeight::Static(weight);
        self
    }

    pub fn endpoints(&self) -> (usize, usize) {
        (self.tail, self.head)
    }

    pub fn touches(&self, agent: usize) -> bool {
        self.tail == agent || self.head == agent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FormationGraph {
    agents: usize,
    dim: usize,
    links: Vec<Link>,
    leader: usize,
}

impl FormationGraph {
    pub fn new(agents: usize, dim: usize, links: Vec<Link>, leader: usize) -> Result<Self> {
        if agents == 0 {
            return Err(Error::InvalidGraph(
                "formation needs at least one agent".into(),
            ));
        }
        if !(2..=3).contains(&dim) {
            return Err(Error::InvalidGraph(format!(
                "dimension must be 2 or 3, got {dim}"
            )));
        }
        if leader >= agents {
            return Err(Error::AgentOutOfRange {
                index: leader,
                agents,
            });
        }
        let mut seen = HashSet::new();
        for (k, link) in links.iter().enumerate() {
            for v in [link.tail, link.head] {
                if v >= agents {
                    return Err(Error::AgentOutOfRange { index: v, agents });
                }
            }
            if link.tail == link.head {
                return Err(Error::InvalidGraph(format!(
                    "link {k} is a self-loop on agent {}",
                    link.tail + 1
                )));
            }
            let key = (link.tail.min(link.head), link.tail.max(link.head));
            if !seen.insert(key) {
                return Err(Error::InvalidGraph(format!(
                    "duplicate link between agents {} and {}",
                    key.0 + 1,
                    key.1 + 1
                )));
            }
            if !(link.separation.is_finite() && link.separation > 0.0) {
                return Err(Error::InvalidGraph(format!(
                    "link {k} has non-positive separation {}",
                    link.separation
                )));
            }
            if let LinkWeight::Static(w) = link.weight {
                if !(w.is_finite() && w >= 0.0) {
                    return Err(Error::InvalidGraph(format!(
                        "link {k} has negative weight {w}"
                    )));
                }
            }
        }
        Ok(FormationGraph {
            agents,
            dim,
            links,
            leader,
        })
    }

    pub fn agents(&self) -> usize {
        self.agents
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn leader(&self) -> usize {
        self.leader
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn edge_count(&self) -> usize {
        self.links.len()
    }

    pub fn endpoints(&self) -> Vec<(usize, usize)> {
        self.links.iter().map(Link::endpoints).collect()
    }

    /// MST weight of every link at the given configuration.
    pub fn link_weights(&self, config: &Configuration) -> Vec<f64> {
        self.links
            .iter()
            .map(|l| match l.weight {
                LinkWeight::Static(w) => w,
                LinkWeight::Distance => config.distance(l.tail, l.head),
            })
            .collect()
    }

    pub fn check_config(&self, config: &Configuration) -> Result<()> {
        if config.dim() != self.dim || config.agents() != self.agents {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} agents in {}D, configuration has {} agents in {}D",
                self.agents,
                self.dim,
                config.agents(),
                config.dim()
            )));
        }
        Ok(())
    }
}

/// Stacked agent positions `q = [x_1, ..., x_n]` at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    dim: usize,
    coords: DVector<f64>,
    pub epoch: u64,
}

impl Configuration {
    pub fn new(dim: usize, coords: DVector<f64>) -> Result<Self> {
        if dim == 0 || !coords.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch(format!(
                "{} coordinates cannot be split into {dim}-vectors",
                coords.len()
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidScenario(
                "configuration has non-finite coordinates".into(),
            ));
        }
        Ok(Configuration {
            dim,
            coords,
            epoch: 0,
        })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(0, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::DimensionMismatch(
                "points have differing dimensions".into(),
            ));
        }
        Configuration::new(
            dim,
            DVector::from_iterator(points.len() * dim, points.iter().flatten().copied()),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn agents(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn agent(&self, i: usize) -> &[f64] {
        &self.coords.as_slice()[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.agents()).map(|i| self.agent(i).to_vec()).collect()
    }

    /// `x_i - x_j`.
    pub fn displacement(&self, i: usize, j: usize) -> DVector<f64> {
        DVector::from_iterator(
            self.dim,
            self.agent(i).iter().zip(self.agent(j)).map(|(a, b)| a - b),
        )
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        self.displacement(i, j).norm()
    }

    pub fn translated(&self, shift: &[f64]) -> Configuration {
        let mut out = self.clone();
        for (k, c) in out.coords.iter_mut().enumerate() {
            *c += shift[k % self.dim];
        }
        out
    }
}

/// Signed edge-by-agent matrix; row `e` holds `+1` at the tail and `-1` at the head.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    matrix: DMatrix<f64>,
    edges: Vec<(usize, usize)>,
}

impl IncidenceMatrix {
    /// Builds the incidence matrix of an arbitrary ordered edge list.
    /// Repeated edges are allowed (repeated measurements of one link).
    pub fn from_edges(agents: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut matrix = DMatrix::zeros(edges.len(), agents);
        for (row, &(tail, head)) in edges.iter().enumerate() {
            for v in [tail, head] {
                if v >= agents {
                    return Err(Error::AgentOutOfRange { index: v, agents });
                }
            }
            if tail == head {
                return Err(Error::InvalidGraph(format!("edge {row} is a self-loop")));
            }
            matrix[(row, tail)] = 1.0;
            matrix[(row, head)] = -1.0;
        }
        Ok(IncidenceMatrix {
            matrix,
            edges: edges.to_vec(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn agents(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }
}

pub fn build_incidence(graph: &FormationGraph) -> IncidenceMatrix {
    IncidenceMatrix::from_edges(graph.agents(), &graph.endpoints()).expect("validated graph")
}

#[derive(Debug, Clone, PartialEq)]
pub struct RigidityMatrix {
    matrix: DMatrix<f64>,
    dim: usize,
}

impl RigidityMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        numerical_rank(&self.matrix)
    }
}

/// Row for link `{i, j}` carries `(x_i - x_j)^T` in agent `i`'s block and
/// `(x_j - x_i)^T` in agent `j`'s block.
pub fn build_rigidity_matrix(
    graph: &FormationGraph,
    config: &Configuration,
) -> Result<RigidityMatrix> {
    graph.check_config(config)?;
    let d = graph.dim();
    let mut matrix = DMatrix::zeros(graph.edge_count(), graph.agents() * d);
    for (row, link) in graph.links().iter().enumerate() {
        let (i, j) = link.endpoints();
        let diff = config.displacement(i, j);
        for k in 0..d {
            matrix[(row, i * d + k)] = diff[k];
            matrix[(row, j * d + k)] = -diff[k];
        }
    }
    Ok(RigidityMatrix { matrix, dim: d })
}

/// Number of singular values above `RANK_TOLERANCE * sigma_max`.
pub fn numerical_rank(matrix: &DMatrix<f64>) -> usize {
    if matrix.is_empty() {
        return 0;
    }
    let sv = matrix.clone().svd(false, false).singular_values;
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// Rank the rigidity matrix must reach for a generically rigid formation.
pub fn required_rank(agents: usize, dim: usize) -> Result<usize> {
    let min_agents = if dim == 2 { 2 } else { 3 };
    if agents < min_agents {
        return Err(Error::TooFewAgents {
            agents,
            dimension: dim,
            required: min_agents,
        });
    }
    Ok(match dim {
        2 => 2 * agents - 3,
        _ => 3 * agents - 6,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RigidityReport {
    pub rigid: bool,
    pub rank: usize,
    pub required: usize,
    /// The verdict at the supplied placement differs from the verdict at a
    /// small random perturbation of it.
    pub degenerate_placement: bool,
}

pub fn is_generically_rigid(
    graph: &FormationGraph,
    config: &Configuration,
) -> Result<RigidityReport> {
    graph.check_config(config)?;
    let required = required_rank(graph.agents(), graph.dim())?;
    let rank = build_rigidity_matrix(graph, config)?.rank();

    let scale = config.coords().amax().max(1.0) * PERTURBATION_SCALE;
    let mut rng = ChaCha8Rng::seed_from_u64(PERTURBATION_SEED);
    let jitter = DVector::from_fn(config.coords().len(), |_, _| {
        scale * (2.0 * rng.random::<f64>() - 1.0)
    });
    let perturbed = Configuration::new(config.dim(), config.coords() + jitter)?;
    let perturbed_rank = build_rigidity_matrix(graph, &perturbed)?.rank();

    let rigid = rank == required;
    Ok(RigidityReport {
        rigid,
        rank,
        required,
        degenerate_placement: rigid != (perturbed_rank == required),
    })
}

/// `H^T P^{-1} H` for a scalar per-edge covariance `P` (m x m).
pub fn weighted_laplacian(
    graph: &FormationGraph,
    noise_cov: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let m = graph.edge_count();
    if noise_cov.nrows() != m || noise_cov.ncols() != m {
        return Err(Error::DimensionMismatch(format!(
            "covariance is {}x{}, graph has {m} edges",
            noise_cov.nrows(),
            noise_cov.ncols()
        )));
    }
    let chol = spd_cholesky(noise_cov)?;
    let h = build_incidence(graph);
    let p_inv_h = chol.solve(h.matrix());
    let lap = h.matrix().transpose() * p_inv_h;
    Ok((&lap + lap.transpose()) * 0.5)
}

/// Cholesky factor of a symmetric positive definite matrix.
pub(crate) fn spd_cholesky(matrix: &DMatrix<f64>) -> Result<Cholesky<f64, nalgebra::Dyn>> {
    if !matrix.is_square() {
        return Err(Error::NotPositiveDefinite);
    }
    let scale = matrix.amax().max(f64::MIN_POSITIVE);
    if (matrix - matrix.transpose()).amax() > 1e-12 * scale {
        return Err(Error::NotPositiveDefinite);
    }
    Cholesky::new(matrix.clone()).ok_or(Error::NotPositiveDefinite)
}

/// Connected components of `agents` vertices under the given undirected edges,
/// each sorted ascending, ordered by smallest member.
pub fn components<I>(agents: usize, edges: I) -> Vec<Vec<usize>>
where
    I: IntoIterator<Item = (usize, usize)>,
{
    let mut adjacency = vec![Vec::new(); agents];
    for (a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut label = vec![usize::MAX; agents];
    let mut out = Vec::new();
    for start in 0..agents {
        if label[start] != usize::MAX {
            continue;
        }
        let id = out.len();
        let mut members = vec![start];
        label[start] = id;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &w in &adjacency[v] {
                if label[w] == usize::MAX {
                    label[w] = id;
                    members.push(w);
                    queue.push_back(w);
                }
            }
        }
        members.sort_unstable();
        out.push(members);
    }
    out
}

/// True iff the links selected by `active_edges` (indices into the graph's
/// link list) connect every agent.
pub fn is_connected(graph: &FormationGraph, active_edges: &[usize]) -> bool {
    let links = graph.links();
    components(
        graph.agents(),
        active_edges.iter().map(|&e| links[e].endpoints()),
    )
    .len()
        == 1
}
