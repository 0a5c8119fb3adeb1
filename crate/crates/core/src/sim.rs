//! Per-epoch simulation of formation control over lossy links.
//!
//! One epoch: sample link tokens, prune dropped links, build the MST of what
//! is left, measure relative displacements, substitute lost packets, estimate
//! positions relative to the leader, apply the consensus law to the estimates
//! and take one Euler step.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{
    control_velocity, formation_error, integrate_step, neighbor_sets, DesiredFormation,
};
use crate::error::{Error, Result};
use crate::estimation::{anchored_blue, partition_incidence, Estimate, MeasurementSet};
use crate::graph::{
    build_incidence, components, is_generically_rigid, Configuration, FormationGraph,
    IncidenceMatrix,
};
use crate::loss::{
    sample_tokens, CompensationStrategy, LinkEstimate, LossKind, LossModel, StrategyKind,
    SubstitutionContext,
};
use crate::spanning_tree::{build_mst, prune_unhealthy, LinkTokenVector};

const NOISE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
/// Smallest measurement variance, relative to the mean squared separation.
/// Keeps noiseless scenarios well posed.
const VARIANCE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// Every link that delivered this epoch.
    Healthy,
    /// Only the MST of the delivering links.
    Mst,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub graph: FormationGraph,
    pub formation: DesiredFormation,
    pub initial: Configuration,
    pub noise_sigma: f64,
    /// Per-epoch drift of a link's relative displacement, used to age held values.
    pub drift_sigma: f64,
    pub loss: LossKind,
    pub strategy: StrategyKind,
    pub control_topology: Topology,
    pub estimation_links: Topology,
    pub step: f64,
    pub epochs: u64,
    pub seed: u64,
    pub halt_on_disconnect: bool,
}

impl Scenario {
    pub fn loss_model(&self) -> LossModel {
        LossModel::new(self.loss.clone(), self.seed)
    }

    /// Checks the hard invariants and returns soft warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        let g = &self.graph;
        g.check_config(&self.initial)?;
        g.check_config(self.formation.offsets())?;
        if !self.formation.realizes(g) {
            return Err(Error::InvalidScenario(
                "desired offsets do not realize the link separations".into(),
            ));
        }
        if self.epochs < 1 {
            return Err(Error::InvalidScenario("epochs must be at least 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "noise sigma {} must be >= 0",
                self.noise_sigma
            )));
        }
        if !(self.drift_sigma >= 0.0 && self.drift_sigma.is_finite()) {
            return Err(Error::InvalidScenario(format!(
                "drift sigma {} must be >= 0",
                self.drift_sigma
            )));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::NonPositiveStep(self.step));
        }
        self.strategy.validate()?;
        self.loss_model().validate(g)?;

        let mut warnings = Vec::new();
        if components(g.agents(), g.endpoints()).len() > 1 {
            warnings.push(
                "formation graph is disconnected; estimation cannot reach every agent".into(),
            );
        }
        if g.agents() >= 2 {
            let rep = is_generically_rigid(g, self.formation.offsets())?;
            if !rep.rigid {
                warnings.push(format!(
                    "desired formation is not rigid: rank {} / required {}{}",
                    rep.rank,
                    rep.required,
                    if rep.degenerate_placement {
                        " (degenerate placement)"
                    } else {
                        ""
                    }
                ));
            }
        }
        let lambda = max_laplacian_eigenvalue(&build_incidence(g));
        if self.step * lambda >= 2.0 {
            warnings.push(format!(
                "step {} exceeds the Euler stability bound 2/lambda_max = {:.4}",
                self.step,
                2.0 / lambda
            ));
        }
        Ok(warnings)
    }

    fn noise_variance(&self) -> f64 {
        let links = self.graph.links();
        let mean_sq = if links.is_empty() {
            1.0
        } else {
            links
                .iter()
                .map(|l| l.separation * l.separation)
                .sum::<f64>()
                / links.len() as f64
        };
        (self.noise_sigma * self.noise_sigma).max(VARIANCE_FLOOR * mean_sq)
    }
}

fn max_laplacian_eigenvalue(h: &IncidenceMatrix) -> f64 {
    let lap = h.matrix().transpose() * h.matrix();
    if lap.is_empty() {
        return 0.0;
    }
    lap.symmetric_eigenvalues().max()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: u64,
    /// True positions after this epoch's move, stacked.
    pub positions: Vec<f64>,
    /// Positions estimated this epoch (of the pre-move state), stacked.
    pub estimates: Vec<f64>,
    pub tokens: LinkTokenVector,
    /// Sorted MST link indices, `None` when the healthy links do not span.
    pub mst: Option<Vec<usize>>,
    pub formation_error: f64,
    /// `||x̂_i - x_i||` against the pre-move truth.
    pub estimation_error: Vec<f64>,
    pub cov_trace: f64,
    /// Links whose measurement was substituted this epoch.
    pub substituted: Vec<usize>,
    pub cold_starts: usize,
    pub estimate_valid: bool,
}

impl EpochRecord {
    pub fn mst_connected(&self) -> bool {
        self.mst.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub epochs: u64,
    pub final_formation_error: f64,
    pub mean_formation_error: f64,
    pub max_formation_error: f64,
    /// Infinite when the estimate was unavailable; JSON writes that as `null`.
    #[serde(deserialize_with = "trace_or_infinity")]
    pub final_cov_trace: f64,
    #[serde(deserialize_with = "trace_or_infinity")]
    pub mean_cov_trace: f64,
    pub disconnect_count: u64,
}

fn trace_or_infinity<'de, D: serde::Deserializer<'de>>(
    de: D,
) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(de)?.unwrap_or(f64::INFINITY))
}

impl Summary {
    /// Aggregates per-epoch `(formation_error, cov_trace, mst_connected)` in order.
    pub fn from_series(series: &[(f64, f64, bool)]) -> Summary {
        let k = series.len();
        let mut fe_sum = 0.0;
        let mut cov_sum = 0.0;
        let mut max_fe = 0.0f64;
        let mut disconnects = 0;
        for &(fe, cov, connected) in series {
            fe_sum += fe;
            cov_sum += cov;
            max_fe = max_fe.max(fe);
            if !connected {
                disconnects += 1;
            }
        }
        let last = series.last().copied().unwrap_or((0.0, 0.0, true));
        Summary {
            epochs: k as u64,
            final_formation_error: last.0,
            mean_formation_error: fe_sum / k.max(1) as f64,
            max_formation_error: max_fe,
            final_cov_trace: last.1,
            mean_cov_trace: cov_sum / k.max(1) as f64,
            disconnect_count: disconnects,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub strategy: String,
    pub seed: u64,
    pub agents: usize,
    pub dim: usize,
    pub records: Vec<EpochRecord>,
    pub summary: Summary,
    pub warnings: Vec<String>,
}

/// Per-edge Gaussian noise for one epoch, drawn for every link regardless of loss.
fn epoch_noise(seed: u64, epoch: u64, len: usize, sigma: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ NOISE_SALT);
    rng.set_stream(epoch);
    (0..len)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sigma * z
        })
        .collect()
}

pub fn run_scenario(scenario: &Scenario) -> Result<ScenarioResult> {
    let warnings = scenario.validate()?;
    let graph = &scenario.graph;
    let n = graph.agents();
    let d = graph.dim();
    let m = graph.edge_count();
    let leader = graph.leader();
    let loss = scenario.loss_model();
    let noise_variance = scenario.noise_variance();
    let drift_variance = scenario.drift_sigma * scenario.drift_sigma;
    let mut strategy = CompensationStrategy::new(scenario.strategy, m, d)?;

    let mut state = scenario.initial.clone();
    state.epoch = 0;
    let mut previous: Option<Estimate> = None;
    let mut records = Vec::with_capacity(scenario.epochs as usize);

    for epoch in 1..=scenario.epochs {
        let tokens = sample_tokens(&loss, graph, epoch);
        let healthy = prune_unhealthy(graph, &tokens)?;
        let weights = graph.link_weights(&state);
        let tree = match build_mst(graph, &healthy, &weights) {
            Ok(t) => Some(t.sorted_edges()),
            Err(Error::Disconnected { components }) => {
                if scenario.halt_on_disconnect {
                    return Err(Error::Disconnected { components });
                }
                None
            }
            Err(e) => return Err(e),
        };

        let noise = epoch_noise(scenario.seed, epoch, m * d, scenario.noise_sigma);
        let received_links: &[usize] = match (scenario.estimation_links, &tree) {
            (Topology::Mst, Some(t)) => t,
            _ => &healthy.edges,
        };

        let mut edges = Vec::new();
        let mut values = Vec::new();
        let mut variances = Vec::new();
        let mut substituted = Vec::new();
        let mut cold_starts = 0;
        for (e, link) in graph.links().iter().enumerate() {
            let (i, j) = link.endpoints();
            let delivered = tokens.tokens[e];
            let received = delivered.then(|| {
                let mut z = state.displacement(i, j);
                for k in 0..d {
                    z[k] += noise[e * d + k];
                }
                z
            });
            let local_estimate = previous.as_ref().map(|p| LinkEstimate {
                value: p.displacement(i, j),
                variance: p.displacement_variance(i, j),
            });
            let ctx = SubstitutionContext {
                epoch,
                noise_variance,
                prior_variance: link.separation * link.separation / d as f64 + noise_variance,
                drift_variance,
            };
            let eff = strategy.substitute(e, &ctx, received, local_estimate);
            if eff.cold_start {
                cold_starts += 1;
            }
            let used = if delivered {
                received_links.contains(&e)
            } else {
                true
            };
            if eff.substituted {
                substituted.push(e);
            }
            if used {
                edges.push((i, j));
                values.push(eff.value);
                variances.push(eff.variance);
            }
        }

        let measurements = MeasurementSet::isotropic(d, edges.clone(), &values, &variances)?;
        let h = IncidenceMatrix::from_edges(n, &edges)?;
        let part = partition_incidence(&h, leader)?;
        let estimate = match anchored_blue(&part, state.agent(leader), &measurements) {
            Ok(mut est) => {
                est.epoch = epoch;
                Some(est)
            }
            Err(Error::RankDeficient(msg)) => {
                if scenario.halt_on_disconnect {
                    return Err(Error::RankDeficient(msg));
                }
                None
            }
            Err(e) => return Err(e),
        };

        let control_links: &[usize] = match (scenario.control_topology, &tree) {
            (Topology::Mst, Some(t)) => t,
            _ => &healthy.edges,
        };
        let (velocity, estimates, estimation_error, cov_trace) = match &estimate {
            Some(est) => {
                let believed = Configuration::new(d, est.positions().clone())?;
                let v = control_velocity(
                    &believed,
                    &scenario.formation,
                    &neighbor_sets(graph, control_links),
                )?;
                let err = (0..n)
                    .map(|a| {
                        est.agent(a)
                            .iter()
                            .zip(state.agent(a))
                            .map(|(p, q)| (p - q) * (p - q))
                            .sum::<f64>()
                            .sqrt()
                    })
                    .collect();
                (
                    v,
                    est.positions().as_slice().to_vec(),
                    err,
                    est.covariance_trace(),
                )
            }
            // No usable estimate: every agent holds position this epoch.
            None => (
                DVector::zeros(n * d),
                vec![f64::NAN; n * d],
                vec![f64::NAN; n],
                f64::INFINITY,
            ),
        };

        state = integrate_step(&state, &velocity, scenario.step)?;
        records.push(EpochRecord {
            epoch,
            positions: state.coords().as_slice().to_vec(),
            estimates,
            tokens,
            mst: tree,
            formation_error: formation_error(&state, graph),
            estimation_error,
            cov_trace,
            substituted,
            cold_starts,
            estimate_valid: estimate.is_some(),
        });
        if estimate.is_some() {
            previous = estimate;
        }
    }

    let series: Vec<(f64, f64, bool)> = records
        .iter()
        .map(|r| (r.formation_error, r.cov_trace, r.mst_connected()))
        .collect();
    Ok(ScenarioResult {
        strategy: scenario.strategy.label(),
        seed: scenario.seed,
        agents: n,
        dim: d,
        summary: Summary::from_series(&series),
        records,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("strategy {strategy}: {source}")]
pub struct StrategyFailure {
    pub strategy: String,
    pub source: Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyRow {
    pub strategy: String,
    pub mean_cov_trace: f64,
    pub final_cov_trace: f64,
    pub mean_formation_error: f64,
    pub final_formation_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<StrategyRow>,
    /// Strategy labels by ascending mean covariance trace (stable on ties).
    pub ranking: Vec<String>,
    /// Every strategy produced the same mean covariance trace and formation error.
    pub tie: bool,
    /// Whether some combination strategy beats both baselines on mean
    /// covariance trace; `None` unless zero, hold and a combination all ran.
    pub combination_beats_baselines: Option<bool>,
}

impl ComparisonReport {
    pub fn from_rows(rows: Vec<StrategyRow>) -> Self {
        let mut order: Vec<usize> = (0..rows.len()).collect();
        order.sort_by(|&a, &b| {
            rows[a]
                .mean_cov_trace
                .total_cmp(&rows[b].mean_cov_trace)
                .then(a.cmp(&b))
        });
        let tie = rows.windows(2).all(|w| {
            w[0].mean_cov_trace == w[1].mean_cov_trace
                && w[0].mean_formation_error == w[1].mean_formation_error
        });
        let trace_of = |label: &str| {
            rows.iter()
                .find(|r| r.strategy == label)
                .map(|r| r.mean_cov_trace)
        };
        let combination_beats_baselines = match (trace_of("zero"), trace_of("hold")) {
            (Some(z), Some(h)) => {
                let combos: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.strategy.starts_with("combination"))
                    .map(|r| r.mean_cov_trace)
                    .collect();
                (!combos.is_empty()).then(|| combos.iter().any(|&c| c < z.min(h)))
            }
            _ => None,
        };
        ComparisonReport {
            ranking: order.iter().map(|&i| rows[i].strategy.clone()).collect(),
            rows,
            tie,
            combination_beats_baselines,
        }
    }
}

/// Runs the base scenario once per strategy with the same seed, in parallel.
pub fn compare_strategies(
    base: &Scenario,
    strategies: &[StrategyKind],
) -> std::result::Result<(ComparisonReport, Vec<ScenarioResult>), StrategyFailure> {
    if strategies.is_empty() {
        return Err(StrategyFailure {
            strategy: "-".into(),
            source: Error::InvalidScenario("no strategies to compare".into()),
        });
    }
    let outcomes: Vec<Result<ScenarioResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = strategies
            .iter()
            .map(|&kind| {
                let scenario = Scenario {
                    strategy: kind,
                    ..base.clone()
                };
                scope.spawn(move || run_scenario(&scenario))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario thread panicked"))
            .collect()
    });
    let mut results = Vec::with_capacity(strategies.len());
    for (kind, outcome) in strategies.iter().zip(outcomes) {
        results.push(outcome.map_err(|source| StrategyFailure {
            strategy: kind.label(),
            source,
        })?);
    }
    let rows = results
        .iter()
        .map(|r| StrategyRow {
            strategy: r.strategy.clone(),
            mean_cov_trace: r.summary.mean_cov_trace,
            final_cov_trace: r.summary.final_cov_trace,
            mean_formation_error: r.summary.mean_formation_error,
            final_formation_error: r.summary.final_formation_error,
        })
        .collect();
    Ok((ComparisonReport::from_rows(rows), results))
}

/// Strategy averages over several seeds; each seed is a paired comparison.
pub fn compare_over_seeds(
    base: &Scenario,
    strategies: &[StrategyKind],
    seeds: &[u64],
) -> std::result::Result<ComparisonReport, StrategyFailure> {
    let mut sums = vec![[0.0f64; 4]; strategies.len()];
    for &seed in seeds {
        let (report, _) = compare_strategies(
            &Scenario {
                seed,
                ..base.clone()
            },
            strategies,
        )?;
        for (acc, row) in sums.iter_mut().zip(&report.rows) {
            acc[0] += row.mean_cov_trace;
            acc[1] += row.final_cov_trace;
            acc[2] += row.mean_formation_error;
            acc[3] += row.final_formation_error;
        }
    }
    let k = seeds.len().max(1) as f64;
    let rows = strategies
        .iter()
        .zip(sums)
        .map(|(s, acc)| StrategyRow {
            strategy: s.label(),
            mean_cov_trace: acc[0] / k,
            final_cov_trace: acc[1] / k,
            mean_formation_error: acc[2] / k,
            final_formation_error: acc[3] / k,
        })
        .collect();
    Ok(ComparisonReport::from_rows(rows))
}

/// `trace((H_b^T P^-1 H_b)^-1)` for the full graph with isotropic noise.
pub fn lossless_cov_trace(scenario: &Scenario) -> f64 {
    let g = &scenario.graph;
    let d = g.dim() as f64;
    let h = build_incidence(g);
    let part = partition_incidence(&h, g.leader()).expect("leader is valid");
    let normal: DMatrix<f64> = part.reduced.transpose() * &part.reduced / scenario.noise_variance();
    normal
        .try_inverse()
        .map_or(f64::INFINITY, |inv| inv.trace() * d)
}
