//! Browser bindings. Every operation takes scenario JSON (the CLI's file
//! format) and returns JSON text; the `#[wasm_bindgen]` wrappers only turn
//! error strings into JS exceptions, so the logic is testable natively.

use formnet_core::graph::is_generically_rigid;
use formnet_core::scenario_file::ScenarioFile;
use formnet_core::sim::{run_scenario, Scenario, Summary};
use formnet_core::spanning_tree::{build_mst, prune_unhealthy, LinkTokenVector};
use formnet_core::Error;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Longest run the page will simulate.
pub const MAX_EPOCHS: u64 = 20_000;

fn load(text: &str) -> Result<(ScenarioFile, Scenario), String> {
    let file = ScenarioFile::parse(text).map_err(|e| e.to_string())?;
    let scenario = file.to_scenario().map_err(|e| e.to_string())?;
    Ok((file, scenario))
}

fn to_json(value: &impl Serialize) -> Result<String, String> {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn one_based(scenario: &Scenario, edges: &[usize]) -> Vec<[usize; 2]> {
    edges
        .iter()
        .map(|&e| {
            let (i, j) = scenario.graph.links()[e].endpoints();
            [i + 1, j + 1]
        })
        .collect()
}

#[derive(Serialize)]
struct RigidityOut {
    rank: usize,
    required: usize,
    rigid: bool,
    degenerate_placement: bool,
}

pub fn rigidity_json(scenario_text: &str) -> Result<String, String> {
    let (_, s) = load(scenario_text)?;
    let r = is_generically_rigid(&s.graph, s.formation.offsets()).map_err(|e| e.to_string())?;
    to_json(&RigidityOut {
        rank: r.rank,
        required: r.required,
        rigid: r.rigid,
        degenerate_placement: r.degenerate_placement,
    })
}

#[derive(Serialize)]
struct Frame {
    epoch: u64,
    positions: Vec<f64>,
    tokens: String,
    formation_error: f64,
    /// `None` when the estimate was unavailable.
    cov_trace: Option<f64>,
}

#[derive(Serialize)]
struct SimulationOut {
    agents: usize,
    dim: usize,
    edges: Vec<[usize; 2]>,
    offsets: Vec<f64>,
    frames: Vec<Frame>,
    summary: Summary,
    warnings: Vec<String>,
}

/// Runs the scenario, keeping every `stride`-th epoch (plus the initial and
/// final states) for drawing.
pub fn simulate_json(scenario_text: &str, stride: u32) -> Result<String, String> {
    let (_, s) = load(scenario_text)?;
    if s.epochs > MAX_EPOCHS {
        return Err(format!(
            "epochs {} exceeds the demo limit of {MAX_EPOCHS}",
            s.epochs
        ));
    }
    let result = run_scenario(&s).map_err(|e| e.to_string())?;
    let stride = u64::from(stride.max(1));
    let all: Vec<usize> = (0..s.graph.edge_count()).collect();
    let mut frames = vec![Frame {
        epoch: 0,
        positions: s.initial.coords().iter().copied().collect(),
        tokens: LinkTokenVector::all_healthy(s.graph.edge_count(), 0).bitstring(),
        formation_error: formnet_core::controller::formation_error(&s.initial, &s.graph),
        cov_trace: None,
    }];
    let last = result.records.len();
    frames.extend(
        result
            .records
            .iter()
            .enumerate()
            .filter(|(k, r)| r.epoch % stride == 0 || k + 1 == last)
            .map(|(_, r)| Frame {
                epoch: r.epoch,
                positions: r.positions.clone(),
                tokens: r.tokens.bitstring(),
                formation_error: r.formation_error,
                cov_trace: r.cov_trace.is_finite().then_some(r.cov_trace),
            }),
    );
    to_json(&SimulationOut {
        agents: result.agents,
        dim: result.dim,
        edges: one_based(&s, &all),
        offsets: s.formation.offsets().coords().iter().copied().collect(),
        frames,
        summary: result.summary,
        warnings: result.warnings,
    })
}

#[derive(Serialize)]
struct TreeOut {
    retained: Vec<[usize; 2]>,
    tree: Option<Vec<[usize; 2]>>,
    total_weight: Option<f64>,
    /// 1-based agent groups when the retained links do not span.
    components: Option<Vec<Vec<usize>>>,
}

/// `tokens` holds one `0`/`1` per edge in file order.
pub fn spanning_tree_json(scenario_text: &str, tokens: &str) -> Result<String, String> {
    let (_, s) = load(scenario_text)?;
    let tokens = LinkTokenVector::parse_bitstring(tokens.trim(), 0)
        .ok_or("tokens must be a string of 0s and 1s")?;
    let healthy = prune_unhealthy(&s.graph, &tokens).map_err(|e| e.to_string())?;
    let weights = s.graph.link_weights(&s.initial);
    let out = match build_mst(&s.graph, &healthy, &weights) {
        Ok(tree) => TreeOut {
            retained: one_based(&s, &healthy.edges),
            tree: Some(one_based(&s, &tree.sorted_edges())),
            total_weight: Some(tree.total_weight),
            components: None,
        },
        Err(Error::Disconnected { components }) => TreeOut {
            retained: one_based(&s, &healthy.edges),
            tree: None,
            total_weight: None,
            components: Some(
                components
                    .iter()
                    .map(|c| c.iter().map(|v| v + 1).collect())
                    .collect(),
            ),
        },
        Err(e) => return Err(e.to_string()),
    };
    to_json(&out)
}

#[wasm_bindgen]
pub fn rigidity(scenario: &str) -> Result<String, JsValue> {
    rigidity_json(scenario).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn simulate(scenario: &str, stride: u32) -> Result<String, JsValue> {
    simulate_json(scenario, stride).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn spanning_tree(scenario: &str, tokens: &str) -> Result<String, JsValue> {
    spanning_tree_json(scenario, tokens).map_err(|e| JsValue::from_str(&e))
}
