//! TOML scenario files.
//!
//! ```toml
//! [hypotheses]
//! names = ["theta1", "theta2"]
//! true = "theta2"               # label or zero-based index
//!
//! [[agents]]
//! likelihood = [[0.7, 0.3], [0.5, 0.5]]   # one row per hypothesis
//! [[agents]]
//! likelihood = [[0.5, 0.5], [0.5, 0.5]]
//! repeat = 4
//!
//! [graph]
//! kind = "static"               # static | periodic | explicit
//! n = 5
//! undirected = true
//! edges = [[0, 1], [0, 2], [0, 3], [0, 4]]
//!
//! [rule]
//! name = "min_rule"             # min_rule | lfrhe | linear | loglinear
//!
//! [run]
//! horizon = 10000
//! seed = 7
//! ```
//!
//! Time-varying graphs list their steps as `[[graph.sequence]]` tables with
//! their own `edges`/`undirected`, plus `window` (the connectivity period `T`).
//! Adversaries are `[[adversary]]` tables with `agent`, `strategy` and the
//! strategy's fields.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::adversary::AdversarySpec;
use crate::engine::{Priors, RecordSpec, SimulationConfig};
use crate::error::{Error, Result};
use crate::graphs::{CertifyMode, DirectedGraph, GraphSchedule};
use crate::model::{AgentLikelihood, HypothesisSet, ObservationModel};
use crate::rules::Rule;

/// A parsed scenario: everything needed to certify and simulate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: SimulationConfig,
    /// Connectivity period for time-varying graphs.
    pub window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum TrueRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawHypotheses {
    names: Vec<String>,
    #[serde(rename = "true")]
    truth: TrueRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAgent {
    likelihood: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    signals: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    repeat: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStep {
    #[serde(default)]
    edges: Vec<(usize, usize)>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    undirected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
enum GraphKind {
    #[default]
    Static,
    Periodic,
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    #[serde(default)]
    kind: GraphKind,
    n: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    undirected: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    edges: Option<Vec<(usize, usize)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence: Option<Vec<RawStep>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
enum RawPriors {
    Named(String),
    Rows(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    horizon: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "one")]
    stride: usize,
    #[serde(default, skip_serializing_if = "BTreeSet::is_empty")]
    times: BTreeSet<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    priors: Option<RawPriors>,
    #[serde(default = "yes")]
    record_local: bool,
    #[serde(default)]
    record_signals: bool,
}

fn one() -> usize {
    1
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    hypotheses: RawHypotheses,
    agents: Vec<RawAgent>,
    graph: RawGraph,
    rule: Rule,
    #[serde(default, skip_serializing_if = "AdversarySpec::is_empty")]
    adversary: AdversarySpec,
    run: RawRun,
}

fn graph_from(n: usize, edges: &[(usize, usize)], undirected: bool, field: &str) -> Result<DirectedGraph> {
    let g = if undirected {
        DirectedGraph::undirected(n, edges.iter().copied())
    } else {
        DirectedGraph::new(n, edges.iter().copied())
    };
    g.map_err(|e| Error::config(field, e.to_string()))
}

impl RawScenario {
    fn into_scenario(self) -> Result<Scenario> {
        let names = self.hypotheses.names;
        let true_index = match &self.hypotheses.truth {
            TrueRef::Index(k) => *k,
            TrueRef::Label(l) => names
                .iter()
                .position(|x| x == l)
                .ok_or_else(|| Error::config("hypotheses.true", format!("`{l}` is not among the names")))?,
        };
        let hypotheses =
            HypothesisSet::new(names, true_index).map_err(|e| Error::config("hypotheses", e.to_string()))?;

        let mut agents = Vec::new();
        for (k, a) in self.agents.into_iter().enumerate() {
            let field = format!("agents[{k}]");
            let lik = match a.signals {
                Some(s) => AgentLikelihood::new(s, a.likelihood),
                None => AgentLikelihood::from_rows(a.likelihood),
            }
            .map_err(|e| Error::config(&field, e.to_string()))?;
            match a.repeat {
                Some(0) => return Err(Error::config(format!("{field}.repeat"), "must be at least 1")),
                r => agents.extend(std::iter::repeat_n(lik, r.unwrap_or(1))),
            }
        }
        let model = ObservationModel::new(hypotheses, agents).map_err(|e| Error::config("agents", e.to_string()))?;

        let g = &self.graph;
        let schedule = match g.kind {
            GraphKind::Static => {
                if g.sequence.is_some() {
                    return Err(Error::config(
                        "graph.sequence",
                        "only periodic and explicit graphs take a sequence",
                    ));
                }
                let edges = g.edges.as_deref().unwrap_or_default();
                GraphSchedule::fixed(graph_from(g.n, edges, g.undirected, "graph.edges")?)
            }
            kind => {
                if g.edges.is_some() {
                    return Err(Error::config(
                        "graph.edges",
                        "time-varying graphs list edges per step in `sequence`",
                    ));
                }
                let steps = g
                    .sequence
                    .as_ref()
                    .filter(|s| !s.is_empty())
                    .ok_or_else(|| Error::config("graph.sequence", "needs at least one step"))?;
                let seq = steps
                    .iter()
                    .enumerate()
                    .map(|(k, s)| {
                        graph_from(
                            g.n,
                            &s.edges,
                            s.undirected || g.undirected,
                            &format!("graph.sequence[{k}]"),
                        )
                    })
                    .collect::<Result<Vec<_>>>()?;
                if kind == GraphKind::Periodic {
                    GraphSchedule::periodic(seq)
                } else {
                    GraphSchedule::explicit(seq)
                }
                .map_err(|e| Error::config("graph.sequence", e.to_string()))?
            }
        };
        if g.window == Some(0) {
            return Err(Error::config("graph.window", "must be at least 1"));
        }

        let priors = match self.run.priors {
            None => Priors::Uniform,
            Some(RawPriors::Named(s)) if s == "uniform" => Priors::Uniform,
            Some(RawPriors::Named(s)) => {
                return Err(Error::config(
                    "run.priors",
                    format!("expected \"uniform\" or a table of rows, got \"{s}\""),
                ))
            }
            Some(RawPriors::Rows(rows)) => Priors::Explicit { rows },
        };
        let config = SimulationConfig {
            model,
            schedule,
            rule: self.rule,
            adversary: self.adversary,
            horizon: self.run.horizon,
            seed: self.run.seed,
            priors,
            record: RecordSpec {
                stride: self.run.stride,
                times: self.run.times,
                local: self.run.record_local,
                signals: self.run.record_signals,
            },
        };
        config.validate()?;
        Ok(Scenario {
            config,
            window: self.graph.window,
        })
    }

    fn from_scenario(s: &Scenario) -> Self {
        let c = &s.config;
        let model = &c.model;
        let agents = model
            .agents()
            .iter()
            .map(|a| RawAgent {
                likelihood: a.rows().to_vec(),
                signals: Some(a.signal_names().to_vec()),
                repeat: None,
            })
            .collect();
        let edges = |g: &DirectedGraph| g.edges().iter().copied().collect::<Vec<_>>();
        let (kind, static_edges, sequence) = match &c.schedule {
            GraphSchedule::Static { graph } => (GraphKind::Static, Some(edges(graph)), None),
            GraphSchedule::Periodic { sequence } | GraphSchedule::Explicit { sequence } => {
                let kind = if matches!(c.schedule, GraphSchedule::Periodic { .. }) {
                    GraphKind::Periodic
                } else {
                    GraphKind::Explicit
                };
                let steps = sequence
                    .iter()
                    .map(|g| RawStep {
                        edges: edges(g),
                        undirected: false,
                    })
                    .collect();
                (kind, None, Some(steps))
            }
        };
        RawScenario {
            hypotheses: RawHypotheses {
                names: model.hypotheses().names().to_vec(),
                truth: TrueRef::Index(model.true_index()),
            },
            agents,
            graph: RawGraph {
                kind,
                n: model.n(),
                undirected: false,
                edges: static_edges,
                sequence,
                window: s.window,
            },
            rule: c.rule,
            adversary: c.adversary.clone(),
            run: RawRun {
                horizon: c.horizon,
                seed: c.seed,
                stride: c.record.stride,
                times: c.record.times.clone(),
                priors: match &c.priors {
                    Priors::Uniform => None,
                    Priors::Explicit { rows } => Some(RawPriors::Rows(rows.clone())),
                },
                record_local: c.record.local,
                record_signals: c.record.signals,
            },
        }
    }
}

impl Scenario {
    /// Parse a scenario document. Syntax errors carry line and column.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        raw.into_scenario()
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Explicit form: every agent spelled out, directed edges sorted, all
    /// defaults written. Parsing it gives back an equal scenario.
    pub fn to_canonical_toml(&self) -> String {
        toml::to_string(&RawScenario::from_scenario(self)).expect("scenario serializes")
    }

    /// Stable across any re-ordering that parses to the same scenario.
    pub fn digest(&self) -> String {
        self.config.digest()
    }

    /// The certification that matches the configured rule and graph.
    pub fn certify_mode(&self) -> Result<CertifyMode> {
        match self.config.rule {
            Rule::Lfrhe { f } => Ok(CertifyMode::Lfrhe { f }),
            _ if self.config.schedule.is_static() => Ok(CertifyMode::MinRuleStatic),
            _ => self
                .window
                .map(|window| CertifyMode::MinRuleTimeVarying { window })
                .ok_or_else(|| Error::config("graph.window", "a time-varying graph needs its connectivity window")),
        }
    }
}

const BUNDLED: &[(&str, &str)] = &[
    ("example1_n5", include_str!("../configs/example1_n5.toml")),
    ("example1_n10", include_str!("../configs/example1_n10.toml")),
    ("example2_theta1", include_str!("../configs/example2_theta1.toml")),
    ("example2_theta2", include_str!("../configs/example2_theta2.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

/// Source text of a bundled scenario.
pub fn bundled(name: &str) -> Option<&'static str> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
