//! Formation control for multi-agent teams over packet-dropping links.
//!
//! The pipeline per epoch: link tokens decide which packets arrived
//! ([`loss`]), dropped links are pruned and an MST certifies connectivity
//! ([`spanning_tree`]), agent positions are estimated relative to the leader
//! from noisy relative measurements ([`estimation`]), and a consensus law
//! steers the agents toward the desired offsets ([`controller`]).
//! [`sim`] runs the loop and [`results`] writes the time series.

pub mod controller;
pub mod error;
pub mod estimation;
pub mod graph;
pub mod loss;
pub mod results;
pub mod scenario_file;
pub mod sim;
pub mod spanning_tree;

pub use error::{Error, Result};
pub use graph::{Configuration, FormationGraph, Link};
pub use sim::{run_scenario, Scenario, ScenarioResult};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
