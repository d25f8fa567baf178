//! Seeded synchronous simulation. Each round every agent reads the
//! round-t messages of its in-neighbors, folds in its round-(t+1) signal,
//! and writes its round-(t+1) beliefs.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adversary::{AdversarySpec, Forger};
use crate::error::{Error, Result};
use crate::graphs::GraphSchedule;
use crate::logmath::{log_sum_exp, normalized};
use crate::model::{ObservationModel, SignalSource, ROW_SUM_TOLERANCE};
use crate::rules::{
    bayes_local_update, lazy_metropolis_weights, lfrhe_update, linear_pool_update, loglinear_pool_update,
    min_rule_update, BeliefState, ConsensusWeights, InboxMessage, Rule,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Priors {
    #[default]
    Uniform,
    /// One probability row per agent.
    Explicit { rows: Vec<Vec<f64>> },
}

/// Which series a run keeps. Beliefs are kept at `t = 0`, every multiple of
/// `stride`, every entry of `times`, and at the horizon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordSpec {
    pub stride: usize,
    #[serde(default)]
    pub times: BTreeSet<usize>,
    pub local: bool,
    pub signals: bool,
}

impl Default for RecordSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            times: BTreeSet::new(),
            local: true,
            signals: false,
        }
    }
}

impl RecordSpec {
    /// Only the listed steps (plus `0` and the horizon).
    pub fn at(times: impl IntoIterator<Item = usize>) -> Self {
        Self {
            stride: usize::MAX,
            times: times.into_iter().collect(),
            local: false,
            signals: false,
        }
    }

    fn keeps(&self, t: usize, horizon: usize) -> bool {
        t == 0 || t == horizon || t.is_multiple_of(self.stride) || self.times.contains(&t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub model: ObservationModel,
    pub schedule: GraphSchedule,
    pub rule: Rule,
    #[serde(default)]
    pub adversary: AdversarySpec,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub priors: Priors,
    #[serde(default)]
    pub record: RecordSpec,
}

impl SimulationConfig {
    pub fn new(model: ObservationModel, schedule: GraphSchedule, rule: Rule, horizon: usize, seed: u64) -> Self {
        Self {
            model,
            schedule,
            rule,
            adversary: AdversarySpec::none(),
            horizon,
            seed,
            priors: Priors::Uniform,
            record: RecordSpec::default(),
        }
    }

    pub fn with_adversary(mut self, adversary: AdversarySpec) -> Self {
        self.adversary = adversary;
        self
    }

    pub fn with_record(mut self, record: RecordSpec) -> Self {
        self.record = record;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.model.n();
        let m = self.model.m();
        if self.schedule.n() != n {
            return Err(Error::config(
                "graph",
                format!("graph has {} agents but the model has {n}", self.schedule.n()),
            ));
        }
        if self.horizon == 0 {
            return Err(Error::config("run.horizon", "must be at least 1"));
        }
        if self.record.stride == 0 {
            return Err(Error::config("run.stride", "must be at least 1"));
        }
        match self.rule {
            Rule::Lfrhe { .. } if !self.schedule.is_static() => {
                return Err(Error::config("rule", "lfrhe is only defined on a time-invariant graph"));
            }
            Rule::Linear | Rule::LogLinear => {
                let g = self
                    .schedule
                    .as_static()
                    .ok_or_else(|| Error::config("rule", "pooling baselines need a time-invariant graph"))?;
                lazy_metropolis_weights(g).map_err(|e| Error::config("rule", e.to_string()))?;
            }
            _ => {}
        }
        if let Priors::Explicit { rows } = &self.priors {
            if rows.len() != n {
                return Err(Error::config(
                    "run.priors",
                    format!("{} rows for {n} agents", rows.len()),
                ));
            }
            for (i, row) in rows.iter().enumerate() {
                let field = format!("run.priors[{i}]");
                if row.len() != m {
                    return Err(Error::config(
                        field,
                        format!("{} entries for {m} hypotheses", row.len()),
                    ));
                }
                if row.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
                    return Err(Error::config(field, "prior entries must be strictly positive"));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                    return Err(Error::config(field, format!("sums to {sum}, not 1")));
                }
            }
        }
        self.adversary.validate(&self.schedule, m)
    }

    /// SHA-256 over the canonical JSON encoding of everything that shapes the
    /// dynamics. What gets recorded is left out.
    pub fn digest(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        value
            .as_object_mut()
            .expect("struct encodes as an object")
            .remove("record");
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    fn initial_state(&self) -> BeliefState {
        match &self.priors {
            Priors::Uniform => BeliefState::uniform(self.model.n(), self.model.m()),
            Priors::Explicit { rows } => {
                let logs: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|r| normalized(r.iter().map(|p| p.ln()).collect()))
                    .collect();
                BeliefState::from_log_priors(&logs)
            }
        }
    }
}

/// Snapshot of one recorded step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedStep {
    pub t: usize,
    /// `n * m` row-major log actual beliefs. Byzantine rows hold the message
    /// sent on their reference edge.
    pub log_actual: Vec<f64>,
    pub log_local: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub n: usize,
    pub m: usize,
    pub true_index: usize,
    pub horizon: usize,
    pub seed: u64,
    pub config_digest: String,
    pub adversarial: Vec<bool>,
    pub steps: Vec<RecordedStep>,
    /// `signals[t - 1][i]` is agent `i`'s signal at step `t`.
    pub signals: Option<Vec<Vec<usize>>>,
}

impl TrajectoryRecord {
    pub fn last(&self) -> &RecordedStep {
        self.steps.last().expect("a record always holds t = 0")
    }

    pub fn step_at(&self, t: usize) -> Option<&RecordedStep> {
        self.steps
            .binary_search_by_key(&t, |s| s.t)
            .ok()
            .map(|k| &self.steps[k])
    }

    pub fn regular(&self) -> Vec<usize> {
        (0..self.n).filter(|&i| !self.adversarial[i]).collect()
    }
}

impl RecordedStep {
    pub fn actual(&self, i: usize, m: usize) -> &[f64] {
        &self.log_actual[i * m..(i + 1) * m]
    }
}

/// A running simulation that can be advanced one round at a time.
pub struct Simulation<'a> {
    config: &'a SimulationConfig,
    t: usize,
    state: BeliefState,
    next: BeliefState,
    signals: SignalSource,
    forger: Forger,
    weights: Option<ConsensusWeights>,
    byzantine: Vec<bool>,
    /// Messages sent at the current step by Byzantine agents, keyed by (from, to).
    forged: BTreeMap<(usize, usize), Vec<f64>>,
    last_signals: Vec<usize>,
}

impl<'a> Simulation<'a> {
    pub fn new(config: &'a SimulationConfig) -> Result<Self> {
        config.validate()?;
        let n = config.model.n();
        let weights = match config.rule {
            Rule::Linear | Rule::LogLinear => Some(lazy_metropolis_weights(
                config.schedule.as_static().expect("validated"),
            )?),
            _ => None,
        };
        let state = config.initial_state();
        let mut sim = Self {
            config,
            t: 0,
            next: state.clone(),
            state,
            signals: SignalSource::new(&config.model, config.seed),
            forger: Forger::new(config.adversary.clone()),
            weights,
            byzantine: (0..n).map(|i| config.adversary.is_byzantine(i)).collect(),
            forged: BTreeMap::new(),
            last_signals: vec![0; n],
        };
        sim.forge_current()?;
        Ok(sim)
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Internal beliefs. For Byzantine agents these are what the honest rule
    /// would hold, not what they send.
    pub fn state(&self) -> &BeliefState {
        &self.state
    }

    pub fn last_signals(&self) -> &[usize] {
        &self.last_signals
    }

    /// What agent `i` broadcasts at the current step on its reference edge
    /// (lowest-index out-neighbor).
    pub fn displayed_actual(&self, i: usize) -> &[f64] {
        if self.byzantine[i] {
            let g = self.config.schedule.graph_at(self.t);
            if let Some(&j) = g.out_neighbors(i).first() {
                return &self.forged[&(i, j)];
            }
        }
        self.state.actual(i)
    }

    fn forge_current(&mut self) -> Result<()> {
        self.forged.clear();
        let g = self.config.schedule.graph_at(self.t);
        for i in self.config.adversary.byzantine() {
            let msgs = self.forger.forge(i, self.t, self.state.actual(i), g.out_neighbors(i))?;
            for (j, v) in msgs {
                self.forged.insert((i, j), v);
            }
        }
        Ok(())
    }

    /// Advance from step `t` to `t + 1`.
    pub fn step(&mut self) -> Result<()> {
        let cfg = self.config;
        let g = cfg.schedule.graph_at(self.t);
        self.signals.fill(&mut self.last_signals);
        let mut inbox: Vec<InboxMessage<'_>> = Vec::new();
        for i in 0..cfg.model.n() {
            let lik = cfg.model.agent(i);
            let signal = self.last_signals[i];
            let local = bayes_local_update(self.state.local(i), lik, signal);
            inbox.clear();
            for &j in g.in_neighbors(i) {
                let log_belief = if self.byzantine[j] {
                    self.forged[&(j, i)].as_slice()
                } else {
                    self.state.actual(j)
                };
                inbox.push(InboxMessage { sender: j, log_belief });
            }
            let own = self.state.actual(i);
            let actual = match cfg.rule {
                Rule::MinRule => min_rule_update(own, &inbox, &local)?,
                Rule::Lfrhe { f } => lfrhe_update(&inbox, &local, f)?,
                Rule::Linear => linear_pool_update(own, &inbox, self.weights.as_ref().expect("set"), i, lik, signal)?,
                Rule::LogLinear => {
                    loglinear_pool_update(own, &inbox, self.weights.as_ref().expect("set"), i, lik, signal)?
                }
            };
            if !self.byzantine[i] {
                check_row(&actual, i, self.t + 1, "actual");
                check_row(&local, i, self.t + 1, "local");
            }
            self.next.local_mut(i).copy_from_slice(&local);
            self.next.actual_mut(i).copy_from_slice(&actual);
        }
        std::mem::swap(&mut self.state, &mut self.next);
        self.t += 1;
        self.forge_current()
    }

    fn snapshot(&self, keep_local: bool) -> RecordedStep {
        let n = self.config.model.n();
        let log_actual = (0..n).flat_map(|i| self.displayed_actual(i).iter().copied()).collect();
        RecordedStep {
            t: self.t,
            log_actual,
            log_local: keep_local.then(|| self.state.log_local().to_vec()),
        }
    }
}

/// A belief row that cannot be normalized means the update itself broke.
/// `-inf` entries are allowed: a forged zero passed through an unfiltered
/// rule legitimately rules a hypothesis out.
fn check_row(row: &[f64], agent: usize, t: usize, which: &str) {
    let z = log_sum_exp(row);
    assert!(
        row.iter().all(|v| !v.is_nan() && *v != f64::INFINITY) && z.abs() <= 1e-9,
        "{which} belief of agent {agent} broke at step {t}: {row:?}"
    );
}

/// Execute a full run.
pub fn run(config: &SimulationConfig) -> Result<TrajectoryRecord> {
    let mut sim = Simulation::new(config)?;
    let rec = &config.record;
    let mut steps = vec![sim.snapshot(rec.local)];
    let mut signals = rec.signals.then(|| Vec::with_capacity(config.horizon));
    while sim.t() < config.horizon {
        sim.step()?;
        if let Some(s) = signals.as_mut() {
            s.push(sim.last_signals().to_vec());
        }
        if rec.keeps(sim.t(), config.horizon) {
            steps.push(sim.snapshot(rec.local));
        }
    }
    Ok(TrajectoryRecord {
        n: config.model.n(),
        m: config.model.m(),
        true_index: config.model.true_index(),
        horizon: config.horizon,
        seed: config.seed,
        config_digest: config.digest(),
        adversarial: sim.byzantine.clone(),
        steps,
        signals,
    })
}

/// Independent runs over `seeds`, mapped through `f`, in seed order.
pub fn sweep_map<T, F>(config: &SimulationConfig, seeds: &[u64], f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(TrajectoryRecord) -> T + Sync,
{
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("sweep needs at least one seed".into()));
    }
    config.validate()?;
    seeds
        .par_iter()
        .map(|&seed| run(&config.clone().with_seed(seed)).map(&f))
        .collect()
}

pub fn sweep(config: &SimulationConfig, seeds: &[u64]) -> Result<Vec<TrajectoryRecord>> {
    sweep_map(config, seeds, |r| r)
}
