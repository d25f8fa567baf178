//! Byzantine agents: who they are, what they send, and the f-local check.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::{DirectedGraph, GraphSchedule};
use crate::logmath::to_log;
use crate::model::ROW_SUM_TOLERANCE;
use crate::rng::{substream, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeBelief {
    pub to: usize,
    pub belief: Vec<f64>,
}

/// Message-forging template for one Byzantine agent. Vectors are probability
/// distributions over the hypotheses (not log).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Honest until `start`, then the same fixed vector to every out-neighbor.
    FixedBelief { belief: Vec<f64>, start: usize },
    /// A fresh uniform point of the simplex per out-neighbor per step.
    RandomBelief { seed: u64 },
    /// Honest until `start`, then a dedicated vector for each out-neighbor.
    PerEdge { edges: Vec<EdgeBelief>, start: usize },
    /// Runs the honest rule; a control for A/B comparisons.
    SilentConform,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "Vec<AdversaryEntry>", into = "Vec<AdversaryEntry>")]
pub struct AdversarySpec {
    agents: BTreeMap<usize, Strategy>,
}

#[derive(Serialize, Deserialize)]
struct AdversaryEntry {
    agent: usize,
    #[serde(flatten)]
    strategy: Strategy,
}

impl From<Vec<AdversaryEntry>> for AdversarySpec {
    fn from(v: Vec<AdversaryEntry>) -> Self {
        AdversarySpec::new(v.into_iter().map(|e| (e.agent, e.strategy)))
    }
}

impl From<AdversarySpec> for Vec<AdversaryEntry> {
    fn from(s: AdversarySpec) -> Self {
        s.agents
            .into_iter()
            .map(|(agent, strategy)| AdversaryEntry { agent, strategy })
            .collect()
    }
}

impl AdversarySpec {
    pub fn new(agents: impl IntoIterator<Item = (usize, Strategy)>) -> Self {
        let mut agents: BTreeMap<usize, Strategy> = agents.into_iter().collect();
        for s in agents.values_mut() {
            if let Strategy::PerEdge { edges, .. } = s {
                edges.sort_by_key(|e| e.to);
            }
        }
        Self { agents }
    }

    pub fn none() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn is_byzantine(&self, i: usize) -> bool {
        self.agents.contains_key(&i)
    }

    pub fn byzantine(&self) -> impl Iterator<Item = usize> + '_ {
        self.agents.keys().copied()
    }

    pub fn strategy(&self, i: usize) -> Option<&Strategy> {
        self.agents.get(&i)
    }

    /// Indices of the regular agents among `n`.
    pub fn regular(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| !self.is_byzantine(*i)).collect()
    }

    /// Structural checks against the run: indices in range, at least one
    /// regular agent, vectors are distributions over `m` hypotheses, and
    /// per-edge maps cover every out-neighbor in every graph of the schedule.
    pub fn validate(&self, schedule: &GraphSchedule, m: usize) -> Result<()> {
        let n = schedule.n();
        if !self.agents.is_empty() && self.agents.len() >= n {
            return Err(Error::config("adversary", "at least one agent must be regular"));
        }
        for (&i, s) in &self.agents {
            if i >= n {
                return Err(Error::config(
                    "adversary",
                    format!("agent {i} out of range for {n} agents"),
                ));
            }
            let field = format!("adversary[{i}]");
            match s {
                Strategy::FixedBelief { belief, .. } => check_distribution(belief, m, &field)?,
                Strategy::PerEdge { edges, .. } => {
                    for e in edges {
                        check_distribution(&e.belief, m, &field)?;
                    }
                    for w in edges.windows(2) {
                        if w[0].to == w[1].to {
                            return Err(Error::config(
                                field,
                                format!("duplicate entry for out-neighbor {}", w[0].to),
                            ));
                        }
                    }
                    for g in schedule.graphs() {
                        if let Some(&j) = g.out_neighbors(i).iter().find(|j| !edges.iter().any(|e| e.to == **j)) {
                            return Err(Error::config(field, format!("no belief given for out-neighbor {j}")));
                        }
                    }
                }
                Strategy::RandomBelief { .. } | Strategy::SilentConform => {}
            }
        }
        Ok(())
    }
}

fn check_distribution(v: &[f64], m: usize, field: &str) -> Result<()> {
    if v.len() != m {
        return Err(Error::config(
            field,
            format!("belief has {} entries, expected {m}", v.len()),
        ));
    }
    if v.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
        return Err(Error::config(field, "belief entries must be non-negative"));
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::config(field, format!("belief sums to {sum}, not 1")));
    }
    Ok(())
}

/// At most `f` Byzantine in-neighbors around every regular agent.
pub fn f_local(spec: &AdversarySpec, g: &DirectedGraph, f: usize) -> bool {
    (0..g.n())
        .filter(|&i| !spec.is_byzantine(i))
        .all(|i| g.in_neighbors(i).iter().filter(|&&j| spec.is_byzantine(j)).count() <= f)
}

fn random_simplex_point<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    // Normalized i.i.d. exponentials are uniform on the simplex.
    let mut v: Vec<f64> = (0..m)
        .map(|_| Exp1.sample(rng))
        .map(|x: f64| x.max(f64::MIN_POSITIVE))
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Messages a Byzantine `sender` transmits at step `t`, one per out-neighbor,
/// as log-probability vectors. `honest` is what the honest rule would send.
pub fn forge_messages<R: Rng + ?Sized>(
    spec: &AdversarySpec,
    sender: usize,
    t: usize,
    honest: &[f64],
    out_neighbors: &[usize],
    rng: &mut R,
) -> Result<Vec<(usize, Vec<f64>)>> {
    let strategy = spec
        .strategy(sender)
        .ok_or_else(|| Error::InvalidArgument(format!("agent {sender} is not Byzantine")))?;
    let out = match strategy {
        Strategy::SilentConform => out_neighbors.iter().map(|&j| (j, honest.to_vec())).collect(),
        Strategy::FixedBelief { start, .. } | Strategy::PerEdge { start, .. } if t < *start => {
            out_neighbors.iter().map(|&j| (j, honest.to_vec())).collect()
        }
        Strategy::FixedBelief { belief, .. } => {
            let v = to_log(belief);
            out_neighbors.iter().map(|&j| (j, v.clone())).collect()
        }
        Strategy::PerEdge { edges, .. } => out_neighbors
            .iter()
            .map(|&j| {
                let e = edges.iter().find(|e| e.to == j).ok_or_else(|| {
                    Error::config(
                        format!("adversary[{sender}]"),
                        format!("no belief for out-neighbor {j}"),
                    )
                })?;
                Ok((j, to_log(&e.belief)))
            })
            .collect::<Result<_>>()?,
        Strategy::RandomBelief { .. } => out_neighbors
            .iter()
            .map(|&j| (j, to_log(&random_simplex_point(honest.len(), rng))))
            .collect(),
    };
    Ok(out)
}

/// Per-adversary random streams, so forging stays deterministic regardless
/// of how rounds are scheduled.
#[derive(Debug, Clone)]
pub struct Forger {
    spec: AdversarySpec,
    streams: BTreeMap<usize, ChaCha8Rng>,
}

impl Forger {
    pub fn new(spec: AdversarySpec) -> Self {
        let streams = spec
            .agents
            .iter()
            .map(|(&i, s)| {
                let seed = match s {
                    Strategy::RandomBelief { seed } => *seed,
                    _ => 0,
                };
                (i, substream(seed, Purpose::Adversary, i))
            })
            .collect();
        Self { spec, streams }
    }

    pub fn spec(&self) -> &AdversarySpec {
        &self.spec
    }

    pub fn forge(
        &mut self,
        sender: usize,
        t: usize,
        honest: &[f64],
        out_neighbors: &[usize],
    ) -> Result<Vec<(usize, Vec<f64>)>> {
        let rng = self
            .streams
            .get_mut(&sender)
            .ok_or_else(|| Error::InvalidArgument(format!("agent {sender} is not Byzantine")))?;
        forge_messages(&self.spec, sender, t, honest, out_neighbors, rng)
    }
}
