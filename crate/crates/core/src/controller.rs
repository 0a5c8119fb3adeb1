//! Consensus-based formation control for single-integrator agents.
//!
//! Each agent runs consensus on its offset error `r_i = x_i - d0_i`:
//! `x_i' = -sum_{j in N_i} [(x_i - x_j) - (d0_i - d0_j)]`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::graph::{Configuration, FormationGraph};

/// Desired offsets `d0_i`; the link separations are derived from them.
#[derive(Debug, Clone, PartialEq)]
pub struct DesiredFormation {
    offsets: Configuration,
}

impl DesiredFormation {
    pub fn new(offsets: Configuration) -> Self {
        DesiredFormation { offsets }
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        Ok(DesiredFormation {
            offsets: Configuration::from_points(points)?,
        })
    }

    pub fn offsets(&self) -> &Configuration {
        &self.offsets
    }

    pub fn offset(&self, i: usize) -> &[f64] {
        self.offsets.agent(i)
    }

    pub fn separation(&self, i: usize, j: usize) -> f64 {
        self.offsets.distance(i, j)
    }

    /// Checks that every link's separation is realized by the offsets.
    pub fn realizes(&self, graph: &FormationGraph) -> bool {
        graph
            .links()
            .iter()
            .all(|l| (self.separation(l.tail, l.head) - l.separation).abs() <= 1e-9)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeErrorState {
    pub dim: usize,
    /// Stacked `r_i`.
    pub errors: DVector<f64>,
}

impl RelativeErrorState {
    pub fn agent(&self, i: usize) -> &[f64] {
        &self.errors.as_slice()[i * self.dim..(i + 1) * self.dim]
    }
}

fn check_shapes(config: &Configuration, formation: &DesiredFormation) -> Result<()> {
    let off = formation.offsets();
    if config.dim() != off.dim() || config.agents() != off.agents() {
        return Err(Error::DimensionMismatch(format!(
            "configuration has {} agents in {}D, formation has {} agents in {}D",
            config.agents(),
            config.dim(),
            off.agents(),
            off.dim()
        )));
    }
    Ok(())
}

pub fn relative_error(
    config: &Configuration,
    formation: &DesiredFormation,
) -> Result<RelativeErrorState> {
    check_shapes(config, formation)?;
    Ok(RelativeErrorState {
        dim: config.dim(),
        errors: config.coords() - formation.offsets().coords(),
    })
}

/// Velocity of every agent under the consensus law over the given neighbor
/// lists. Agents with no neighbors hold still.
pub fn control_velocity(
    config: &Configuration,
    formation: &DesiredFormation,
    neighbor_sets: &[Vec<usize>],
) -> Result<DVector<f64>> {
    check_shapes(config, formation)?;
    let n = config.agents();
    let d = config.dim();
    if neighbor_sets.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} neighbor sets for {n} agents",
            neighbor_sets.len()
        )));
    }
    let r = relative_error(config, formation)?;
    let mut velocity = DVector::zeros(n * d);
    for (i, neighbors) in neighbor_sets.iter().enumerate() {
        for &j in neighbors {
            if j >= n {
                return Err(Error::AgentOutOfRange {
                    index: j,
                    agents: n,
                });
            }
            for k in 0..d {
                velocity[i * d + k] -= r.agent(i)[k] - r.agent(j)[k];
            }
        }
    }
    Ok(velocity)
}

/// Explicit Euler step `x(k+1) = x(k) + h * v(k)`.
pub fn integrate_step(
    config: &Configuration,
    velocities: &DVector<f64>,
    step: f64,
) -> Result<Configuration> {
    if step.is_nan() || step <= 0.0 {
        return Err(Error::NonPositiveStep(step));
    }
    if velocities.len() != config.coords().len() {
        return Err(Error::DimensionMismatch(format!(
            "{} velocity components for {} coordinates",
            velocities.len(),
            config.coords().len()
        )));
    }
    let mut next = Configuration::new(config.dim(), config.coords() + velocities * step)?;
    next.epoch = config.epoch + 1;
    Ok(next)
}

/// `sum_e | ||x_i - x_j|| - C_ij |` over the graph's links.
pub fn formation_error(config: &Configuration, graph: &FormationGraph) -> f64 {
    graph
        .links()
        .iter()
        .map(|l| (config.distance(l.tail, l.head) - l.separation).abs())
        .sum()
}

/// Symmetric neighbor lists induced by a subset of the graph's links.
pub fn neighbor_sets(graph: &FormationGraph, active_edges: &[usize]) -> Vec<Vec<usize>> {
    let mut sets = vec![Vec::new(); graph.agents()];
    for &e in active_edges {
        let (i, j) = graph.links()[e].endpoints();
        sets[i].push(j);
        sets[j].push(i);
    }
    sets
}
