//! JSON scenario files. Agent indices are 1-based in files, 0-based in memory.

use serde::{Deserialize, Serialize};

use crate::controller::DesiredFormation;
use crate::error::{Error, Result};
use crate::graph::{Configuration, FormationGraph, Link};
use crate::loss::{LossKind, LossWindow, StrategyKind};
use crate::sim::{Scenario, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentsSpec {
    pub count: usize,
    pub dimension: usize,
}

/// `[i, j]` or `[i, j, weight]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EdgeSpec {
    Weighted(usize, usize, f64),
    Plain(usize, usize),
}

impl EdgeSpec {
    pub fn endpoints(&self) -> (usize, usize) {
        match *self {
            EdgeSpec::Weighted(i, j, _) | EdgeSpec::Plain(i, j) => (i, j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleSpec {
    pub edge: [usize; 2],
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum LossSpec {
    None {},
    Bernoulli { p: f64 },
    Persistent { failed_edges: Vec<[usize; 2]> },
    Scheduled { schedule: Vec<ScheduleSpec> },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::None {}
    }
}

fn default_gamma() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategySpec {
    Zero {},
    Hold {},
    Combination {
        #[serde(default = "default_gamma")]
        gamma: f64,
    },
}

impl Default for StrategySpec {
    fn default() -> Self {
        StrategySpec::Combination {
            gamma: default_gamma(),
        }
    }
}

impl From<StrategySpec> for StrategyKind {
    fn from(spec: StrategySpec) -> Self {
        match spec {
            StrategySpec::Zero {} => StrategyKind::ToZero,
            StrategySpec::Hold {} => StrategyKind::ToHold,
            StrategySpec::Combination { gamma } => StrategyKind::Combination { gamma },
        }
    }
}

fn default_sigma() -> f64 {
    0.01
}

fn default_step() -> f64 {
    0.05
}

fn default_epochs() -> u64 {
    50
}

fn default_control() -> Topology {
    Topology::Healthy
}

fn default_estimation() -> Topology {
    Topology::Mst
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub agents: AgentsSpec,
    pub edges: Vec<EdgeSpec>,
    pub leader: usize,
    pub desired_offsets: Vec<Vec<f64>>,
    pub initial_positions: Vec<Vec<f64>>,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_sigma")]
    pub drift_sigma: f64,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub strategy: StrategySpec,
    #[serde(default = "default_control")]
    pub control_topology: Topology,
    #[serde(default = "default_estimation")]
    pub estimation_links: Topology,
    #[serde(default = "default_step")]
    pub step_h: f64,
    #[serde(default = "default_epochs")]
    pub epochs: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub halt_on_disconnect: bool,
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))
    }

    fn agent(&self, one_based: usize, what: &str) -> Result<usize> {
        if one_based == 0 || one_based > self.agents.count {
            return Err(Error::InvalidScenario(format!(
                "{what}: agent {one_based} out of range 1..={}",
                self.agents.count
            )));
        }
        Ok(one_based - 1)
    }

    fn points(&self, key: &str, points: &[Vec<f64>]) -> Result<Configuration> {
        if points.len() != self.agents.count {
            return Err(Error::InvalidScenario(format!(
                "{key}: {} points for {} agents",
                points.len(),
                self.agents.count
            )));
        }
        if let Some(p) = points.iter().find(|p| p.len() != self.agents.dimension) {
            return Err(Error::InvalidScenario(format!(
                "{key}: point {p:?} is not {}-dimensional",
                self.agents.dimension
            )));
        }
        Configuration::from_points(points)
            .map_err(|e| Error::InvalidScenario(format!("{key}: {e}")))
    }

    /// Builds the formation graph with separations derived from the offsets.
    pub fn graph(&self) -> Result<FormationGraph> {
        let offsets = self.points("desired_offsets", &self.desired_offsets)?;
        let mut links = Vec::with_capacity(self.edges.len());
        for spec in &self.edges {
            let (a, b) = spec.endpoints();
            let (i, j) = (self.agent(a, "edges")?, self.agent(b, "edges")?);
            let separation = if i != j { offsets.distance(i, j) } else { 0.0 };
            let link = Link::new(i, j, separation);
            links.push(match spec {
                EdgeSpec::Weighted(_, _, w) => link.with_weight(*w),
                EdgeSpec::Plain(..) => link,
            });
        }
        let leader = self.agent(self.leader, "leader")?;
        FormationGraph::new(self.agents.count, self.agents.dimension, links, leader)
            .map_err(|e| Error::InvalidScenario(format!("edges: {e}")))
    }

    fn link_index(&self, graph: &FormationGraph, pair: [usize; 2], key: &str) -> Result<usize> {
        let (i, j) = (self.agent(pair[0], key)?, self.agent(pair[1], key)?);
        graph
            .links()
            .iter()
            .position(|l| (l.tail, l.head) == (i, j) || (l.tail, l.head) == (j, i))
            .ok_or_else(|| {
                Error::InvalidScenario(format!(
                    "{key}: no link between agents {} and {}",
                    pair[0], pair[1]
                ))
            })
    }

    pub fn to_scenario(&self) -> Result<Scenario> {
        let graph = self.graph()?;
        let loss = match &self.loss {
            LossSpec::None {} => LossKind::None,
            LossSpec::Bernoulli { p } => LossKind::Bernoulli { p: *p },
            LossSpec::Persistent { failed_edges } => LossKind::Persistent {
                failed: failed_edges
                    .iter()
                    .map(|&pair| self.link_index(&graph, pair, "loss.failed_edges"))
                    .collect::<Result<_>>()?,
            },
            LossSpec::Scheduled { schedule } => LossKind::Scheduled {
                windows: schedule
                    .iter()
                    .map(|w| {
                        Ok(LossWindow {
                            edge: self.link_index(&graph, w.edge, "loss.schedule")?,
                            start: w.start,
                            end: w.end,
                        })
                    })
                    .collect::<Result<_>>()?,
            },
        };
        Ok(Scenario {
            formation: DesiredFormation::new(
                self.points("desired_offsets", &self.desired_offsets)?,
            ),
            initial: self.points("initial_positions", &self.initial_positions)?,
            graph,
            noise_sigma: self.noise_sigma,
            drift_sigma: self.drift_sigma,
            loss,
            strategy: self.strategy.clone().into(),
            control_topology: self.control_topology,
            estimation_links: self.estimation_links,
            step: self.step_h,
            epochs: self.epochs,
            seed: self.seed,
            halt_on_disconnect: self.halt_on_disconnect,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRIANGLE: &str = r#"{
        "agents": {"count": 3, "dimension": 2},
        "edges": [[1, 2, 1.0], [2, 3, 2.0], [1, 3]],
        "leader": 1,
        "desired_offsets": [[0, 0], [1, 0], [0.5, 1]],
        "initial_positions": [[0, 0], [1.2, 0.1], [0.4, 1.3]],
        "loss": {"type": "persistent", "failed_edges": [[2, 1]]},
        "strategy": {"type": "hold"},
        "epochs": 10,
        "seed": 4
    }"#;

    #[test]
    fn parses_and_converts() {
        let file = ScenarioFile::parse(TRIANGLE).unwrap();
        let s = file.to_scenario().unwrap();
        assert_eq!(s.graph.agents(), 3);
        assert_eq!(s.graph.leader(), 0);
        assert_eq!(s.loss, LossKind::Persistent { failed: vec![0] });
        assert_eq!(s.strategy, StrategyKind::ToHold);
        assert_eq!(s.noise_sigma, 0.01);
        assert_eq!(s.control_topology, Topology::Healthy);
        assert!((s.graph.links()[1].separation - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = TRIANGLE.replace("\"seed\": 4", "\"seed\": 4, \"speed\": 3");
        let err = ScenarioFile::parse(&text).unwrap_err().to_string();
        assert!(err.contains("speed"), "{err}");
        assert!(err.contains("line"), "{err}");
        let text = TRIANGLE.replace("\"type\": \"hold\"", "\"type\": \"hold\", \"gama\": 1");
        assert!(ScenarioFile::parse(&text)
            .unwrap_err()
            .to_string()
            .contains("gama"));
    }

    #[test]
    fn out_of_range_indices_are_rejected() {
        let text = TRIANGLE.replace("\"leader\": 1", "\"leader\": 4");
        let err = ScenarioFile::parse(&text)
            .unwrap()
            .to_scenario()
            .unwrap_err()
            .to_string();
        assert!(err.contains("leader"), "{err}");
        let text = TRIANGLE.replace("[[2, 1]]", "[[2, 0]]");
        assert!(ScenarioFile::parse(&text).unwrap().to_scenario().is_err());
        let text = TRIANGLE.replace("[[0, 0], [1.2", "[[0, 0, 0], [1.2");
        let err = ScenarioFile::parse(&text)
            .unwrap()
            .to_scenario()
            .unwrap_err()
            .to_string();
        assert!(err.contains("initial_positions"), "{err}");
    }
}
