//! Link loss models and receiver-side compensation of lost measurements.
//!
//! Every substituted value carries a per-coordinate variance, read as its
//! mean-squared error against the true relative displacement:
//!
//! * received: the measurement noise variance;
//! * zero: the prior second moment of the displacement (`C^2 / d + sigma^2`);
//! * held value `s` epochs old: `sigma^2 + s * q^2`, `q` being the per-epoch
//!   drift of a link's displacement;
//! * combination: `g^2 V_hold + (1 - g)^2 V_estimate`, pieces treated as
//!   independent, and the prior variance when both pieces are missing.

use nalgebra::DVector;
use rand::RngCore;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FormationGraph;
use crate::spanning_tree::LinkTokenVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LossWindow {
    pub edge: usize,
    pub start: u64,
    pub end: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LossKind {
    None,
    /// Each link independently drops its packet with probability `p` per epoch.
    Bernoulli {
        p: f64,
    },
    /// The listed links never deliver.
    Persistent {
        failed: Vec<usize>,
    },
    /// Links drop during the inclusive epoch windows.
    Scheduled {
        windows: Vec<LossWindow>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossModel {
    pub kind: LossKind,
    pub seed: u64,
}

impl LossModel {
    pub fn new(kind: LossKind, seed: u64) -> Self {
        LossModel { kind, seed }
    }

    pub fn lossless() -> Self {
        LossModel {
            kind: LossKind::None,
            seed: 0,
        }
    }

    pub fn validate(&self, graph: &FormationGraph) -> Result<()> {
        let m = graph.edge_count();
        match &self.kind {
            LossKind::None => Ok(()),
            LossKind::Bernoulli { p } if (0.0..=1.0).contains(p) => Ok(()),
            LossKind::Bernoulli { p } => Err(Error::InvalidScenario(format!(
                "drop probability {p} outside [0, 1]"
            ))),
            LossKind::Persistent { failed } => match failed.iter().find(|&&e| e >= m) {
                Some(e) => Err(Error::InvalidScenario(format!(
                    "failed link {e} not in graph"
                ))),
                None => Ok(()),
            },
            LossKind::Scheduled { windows } => {
                for w in windows {
                    if w.edge >= m {
                        return Err(Error::InvalidScenario(format!(
                            "scheduled link {} not in graph",
                            w.edge
                        )));
                    }
                    if w.start > w.end {
                        return Err(Error::InvalidScenario(format!(
                            "window {}..{} is reversed",
                            w.start, w.end
                        )));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Uniform draw in `[0, 1)` that depends only on `(seed, epoch, edge)`.
pub fn link_uniform(seed: u64, epoch: u64, edge: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(edge as u64);
    rng.set_word_pos(u128::from(epoch) * 2);
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

pub fn sample_tokens(model: &LossModel, graph: &FormationGraph, epoch: u64) -> LinkTokenVector {
    let m = graph.edge_count();
    let tokens = match &model.kind {
        LossKind::None => vec![true; m],
        LossKind::Bernoulli { p } => (0..m)
            .map(|e| link_uniform(model.seed, epoch, e) >= *p)
            .collect(),
        LossKind::Persistent { failed } => (0..m).map(|e| !failed.contains(&e)).collect(),
        LossKind::Scheduled { windows } => (0..m)
            .map(|e| {
                !windows
                    .iter()
                    .any(|w| w.edge == e && (w.start..=w.end).contains(&epoch))
            })
            .collect(),
    };
    LinkTokenVector { tokens, epoch }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum StrategyKind {
    ToZero,
    ToHold,
    Combination { gamma: f64 },
}

impl StrategyKind {
    pub fn label(&self) -> String {
        match self {
            StrategyKind::ToZero => "zero".into(),
            StrategyKind::ToHold => "hold".into(),
            StrategyKind::Combination { gamma } => format!("combination:{gamma}"),
        }
    }

    /// Parses `zero`, `hold`, `combination` or `combination:<gamma>`.
    pub fn parse(name: &str) -> Result<Self> {
        let kind = match name.split_once(':') {
            None if name == "zero" => StrategyKind::ToZero,
            None if name == "hold" => StrategyKind::ToHold,
            None if name == "combination" => StrategyKind::Combination { gamma: 0.5 },
            Some(("combination", g)) => StrategyKind::Combination {
                gamma: g
                    .parse()
                    .map_err(|_| Error::InvalidScenario(format!("cannot parse gamma `{g}`")))?,
            },
            _ => return Err(Error::InvalidScenario(format!("unknown strategy `{name}`"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StrategyKind::Combination { gamma } if !(0.0..=1.0).contains(gamma) => Err(
                Error::InvalidScenario(format!("gamma out of range: {gamma}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A link displacement estimate with its per-coordinate variance.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkEstimate {
    pub value: DVector<f64>,
    pub variance: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LinkMemory {
    last_received: Option<(DVector<f64>, u64)>,
    last_estimate: Option<(LinkEstimate, u64)>,
}

/// Variance parameters of one substitution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubstitutionContext {
    pub epoch: u64,
    pub noise_variance: f64,
    /// Mean-squared error of a zero substitute.
    pub prior_variance: f64,
    /// Per-epoch growth of a stale value's variance.
    pub drift_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveMeasurement {
    pub value: DVector<f64>,
    pub variance: f64,
    pub substituted: bool,
    /// A hold was requested but the link never delivered anything.
    pub cold_start: bool,
    /// A combination was requested without a prior estimate of the link.
    pub missing_estimate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationStrategy {
    kind: StrategyKind,
    dim: usize,
    memory: Vec<LinkMemory>,
}

impl CompensationStrategy {
    pub fn new(kind: StrategyKind, links: usize, dim: usize) -> Result<Self> {
        kind.validate()?;
        Ok(CompensationStrategy {
            kind,
            dim,
            memory: vec![LinkMemory::default(); links],
        })
    }

    pub fn kind(&self) -> StrategyKind {
        self.kind
    }

    /// Effective measurement of `link` this epoch. A received packet passes
    /// through; a lost one is replaced per the strategy.
    pub fn substitute(
        &mut self,
        link: usize,
        ctx: &SubstitutionContext,
        received: Option<DVector<f64>>,
        local_estimate: Option<LinkEstimate>,
    ) -> EffectiveMeasurement {
        let memory = &mut self.memory[link];
        if let Some(est) = local_estimate {
            memory.last_estimate = Some((est, ctx.epoch));
        }
        if let Some(value) = received {
            memory.last_received = Some((value.clone(), ctx.epoch));
            return EffectiveMeasurement {
                value,
                variance: ctx.noise_variance,
                substituted: false,
                cold_start: false,
                missing_estimate: false,
            };
        }

        let zero = DVector::zeros(self.dim);
        let held = memory.last_received.as_ref().map(|(v, at)| {
            let staleness = ctx.epoch.saturating_sub(*at) as f64;
            (
                v.clone(),
                ctx.noise_variance + staleness * ctx.drift_variance,
            )
        });
        // The estimate describes the previous epoch's geometry: one step of drift.
        let estimate = memory.last_estimate.as_ref().map(|(e, at)| {
            let age = ctx.epoch.saturating_sub(*at).max(1) as f64;
            (e.value.clone(), e.variance + age * ctx.drift_variance)
        });

        let mut out = EffectiveMeasurement {
            value: zero.clone(),
            variance: ctx.prior_variance,
            substituted: true,
            cold_start: false,
            missing_estimate: false,
        };
        match self.kind {
            StrategyKind::ToZero => {}
            StrategyKind::ToHold => match held {
                Some((v, var)) => {
                    out.value = v;
                    out.variance = var;
                }
                None => out.cold_start = true,
            },
            StrategyKind::Combination { gamma } => {
                out.cold_start = held.is_none();
                out.missing_estimate = estimate.is_none();
                if held.is_some() || estimate.is_some() {
                    let (hv, hvar) = held.unwrap_or((zero.clone(), ctx.prior_variance));
                    let (ev, evar) = estimate.unwrap_or((zero, ctx.prior_variance));
                    out.value = hv * gamma + ev * (1.0 - gamma);
                    out.variance = gamma * gamma * hvar + (1.0 - gamma) * (1.0 - gamma) * evar;
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Link;

    fn triangle() -> FormationGraph {
        let links = vec![
            Link::new(0, 1, 1.0),
            Link::new(1, 2, 1.0),
            Link::new(0, 2, 1.0),
        ];
        FormationGraph::new(3, 2, links, 0).unwrap()
    }

    fn ctx(epoch: u64) -> SubstitutionContext {
        SubstitutionContext {
            epoch,
            noise_variance: 1e-4,
            prior_variance: 0.5,
            drift_variance: 1e-3,
        }
    }

    fn v(x: f64, y: f64) -> DVector<f64> {
        DVector::from_row_slice(&[x, y])
    }

    #[test]
    fn token_models() {
        let g = triangle();
        assert_eq!(
            sample_tokens(&LossModel::lossless(), &g, 4).tokens,
            vec![true; 3]
        );
        let persistent = LossModel::new(LossKind::Persistent { failed: vec![0] }, 1);
        for k in 0..20 {
            assert_eq!(
                sample_tokens(&persistent, &g, k).tokens,
                vec![false, true, true]
            );
        }
        let always = LossModel::new(LossKind::Bernoulli { p: 1.0 }, 9);
        assert_eq!(sample_tokens(&always, &g, 3).tokens, vec![false; 3]);
        let never = LossModel::new(LossKind::Bernoulli { p: 0.0 }, 9);
        assert_eq!(sample_tokens(&never, &g, 3).tokens, vec![true; 3]);
        let sched = LossModel::new(
            LossKind::Scheduled {
                windows: vec![LossWindow {
                    edge: 2,
                    start: 3,
                    end: 5,
                }],
            },
            0,
        );
        let bits: Vec<String> = (1..=7)
            .map(|k| sample_tokens(&sched, &g, k).bitstring())
            .collect();
        assert_eq!(bits, ["111", "111", "110", "110", "110", "111", "111"]);
    }

    #[test]
    fn validation_rejects_bad_models() {
        let g = triangle();
        assert!(LossModel::new(LossKind::Bernoulli { p: 1.2 }, 0)
            .validate(&g)
            .is_err());
        assert!(LossModel::new(LossKind::Persistent { failed: vec![3] }, 0)
            .validate(&g)
            .is_err());
        let rev = LossKind::Scheduled {
            windows: vec![LossWindow {
                edge: 0,
                start: 4,
                end: 2,
            }],
        };
        assert!(LossModel::new(rev, 0).validate(&g).is_err());
    }

    #[test]
    fn strategy_names() {
        assert_eq!(StrategyKind::parse("zero").unwrap(), StrategyKind::ToZero);
        assert_eq!(StrategyKind::parse("hold").unwrap(), StrategyKind::ToHold);
        assert_eq!(
            StrategyKind::parse("combination:0.25").unwrap(),
            StrategyKind::Combination { gamma: 0.25 }
        );
        let err = StrategyKind::parse("combination:1.5").unwrap_err();
        assert!(err.to_string().contains("gamma out of range"));
        assert!(StrategyKind::parse("average").is_err());
    }

    #[test]
    fn received_packets_pass_through() {
        for kind in [
            StrategyKind::ToZero,
            StrategyKind::ToHold,
            StrategyKind::Combination { gamma: 0.3 },
        ] {
            let mut s = CompensationStrategy::new(kind, 1, 2).unwrap();
            let out = s.substitute(0, &ctx(1), Some(v(0.7, -0.2)), None);
            assert_eq!(out.value, v(0.7, -0.2));
            assert_eq!(out.variance, 1e-4);
            assert!(!out.substituted);
        }
    }

    #[test]
    fn hold_repeats_last_received() {
        let mut s = CompensationStrategy::new(StrategyKind::ToHold, 1, 2).unwrap();
        s.substitute(0, &ctx(1), Some(v(1.0, 2.0)), None);
        let out = s.substitute(0, &ctx(2), None, None);
        assert_eq!(out.value, v(1.0, 2.0));
        assert!((out.variance - (1e-4 + 1e-3)).abs() < 1e-15);
        let out = s.substitute(0, &ctx(4), None, None);
        assert!((out.variance - (1e-4 + 3e-3)).abs() < 1e-15);
    }

    #[test]
    fn hold_cold_start_is_flagged_zero() {
        let mut s = CompensationStrategy::new(StrategyKind::ToHold, 1, 2).unwrap();
        let out = s.substitute(0, &ctx(1), None, None);
        assert_eq!(out.value, v(0.0, 0.0));
        assert_eq!(out.variance, 0.5);
        assert!(out.cold_start);
    }

    #[test]
    fn zero_substitutes_zero() {
        let mut s = CompensationStrategy::new(StrategyKind::ToZero, 1, 2).unwrap();
        s.substitute(0, &ctx(1), Some(v(1.0, 2.0)), None);
        let out = s.substitute(0, &ctx(2), None, None);
        assert_eq!(out.value, v(0.0, 0.0));
        assert_eq!(out.variance, 0.5);
    }

    #[test]
    fn combination_mixes_hold_and_estimate() {
        let mut s =
            CompensationStrategy::new(StrategyKind::Combination { gamma: 0.5 }, 1, 2).unwrap();
        s.substitute(0, &ctx(1), Some(v(2.0, 0.0)), None);
        let est = LinkEstimate {
            value: v(0.0, 2.0),
            variance: 2e-4,
        };
        let out = s.substitute(0, &ctx(2), None, Some(est));
        assert_eq!(out.value, v(1.0, 1.0));
        let expected = 0.25 * (1e-4 + 1e-3) + 0.25 * (2e-4 + 1e-3);
        assert!((out.variance - expected).abs() < 1e-15);
        assert!(!out.cold_start && !out.missing_estimate);
    }

    #[test]
    fn combination_without_any_history_is_plain_zero() {
        let mut s =
            CompensationStrategy::new(StrategyKind::Combination { gamma: 0.5 }, 1, 2).unwrap();
        let out = s.substitute(0, &ctx(1), None, None);
        assert_eq!(out.value, v(0.0, 0.0));
        assert_eq!(out.variance, 0.5);
        assert!(out.cold_start && out.missing_estimate);
    }

    #[test]
    fn bernoulli_stream_is_order_independent() {
        let a: Vec<f64> = (0..50).map(|k| link_uniform(17, k, 3)).collect();
        let b: Vec<f64> = (0..50)
            .rev()
            .map(|k| link_uniform(17, k, 3))
            .collect::<Vec<_>>()
            .into_iter()
            .rev()
            .collect();
        assert_eq!(a, b);
        assert_ne!(link_uniform(17, 5, 3), link_uniform(17, 5, 4));
        assert_ne!(link_uniform(17, 5, 3), link_uniform(18, 5, 3));
    }
}
