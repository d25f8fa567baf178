//! Files written by `run` and `sweep`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use minrule_core::config::Scenario;
use minrule_core::engine::TrajectoryRecord;
use minrule_core::metrics::{
    rate_report, social_learning_rate, theoretical_bounds, BoundMode, Provenance, DEFAULT_TAIL_FRACTION,
};
use minrule_core::Rule;

/// Belief on the truth every regular agent must exceed to count as consistent.
pub const CONSISTENCY_LEVEL: f64 = 0.99;
/// Below this the truth is not the agent's best guess in a binary sense.
pub const NON_RECOVERY_LEVEL: f64 = 0.5;

#[derive(Debug, Serialize, PartialEq)]
pub struct RateCheck {
    pub agent: usize,
    pub hypothesis: String,
    pub estimate: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct Verdicts {
    /// Every regular agent holds more than 0.99 on the truth.
    pub consistent: bool,
    /// Regular agents holding less than 0.5 on the truth.
    pub not_recovered: Vec<usize>,
    /// Every rate estimate clears its bound minus the band; absent for the baselines.
    pub rates_within_bound: Option<bool>,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct RunSummary {
    pub config_digest: String,
    pub seed: u64,
    pub horizon: usize,
    pub rule: Rule,
    pub hypotheses: Vec<String>,
    pub true_hypothesis: String,
    pub byzantine: Vec<usize>,
    /// Final actual beliefs, one row per agent.
    pub final_beliefs: Vec<Vec<f64>>,
    /// Final `-log(mu)/t` per agent and false hypothesis.
    pub final_rates: Vec<BTreeMap<String, f64>>,
    /// Minimum over the last 20% of steps of `-log(e_t)/t`, regular agents only.
    pub social_learning_rate: f64,
    pub bound_provenance: Option<Provenance>,
    /// Slack allowed below each bound, in nats.
    pub band: f64,
    pub rate_checks: Vec<RateCheck>,
    pub verdicts: Verdicts,
}

/// The guarantee that applies to the configured rule, if any.
fn bound_mode(scenario: &Scenario) -> Option<BoundMode> {
    let c = &scenario.config;
    match c.rule {
        Rule::Lfrhe { .. } => Some(BoundMode::RegularSources {
            regular: c.adversary.regular(c.model.n()).into_iter().collect(),
        }),
        Rule::MinRule if c.schedule.is_static() => Some(BoundMode::ReachableSources),
        Rule::MinRule => Some(BoundMode::AllSources),
        Rule::Linear | Rule::LogLinear => None,
    }
}

pub fn summarize(scenario: &Scenario, record: &TrajectoryRecord, band: f64) -> Result<RunSummary> {
    let model = &scenario.config.model;
    let names = model.hypotheses().names().to_vec();
    let star = model.true_index();
    let last = record.last();
    let m = record.m;
    let final_beliefs: Vec<Vec<f64>> = (0..record.n)
        .map(|i| last.actual(i, m).iter().map(|v| v.exp()).collect())
        .collect();
    let t = last.t.max(1) as f64;
    let final_rates = (0..record.n)
        .map(|i| {
            (0..m)
                .filter(|&k| k != star)
                .map(|k| (names[k].clone(), -last.actual(i, m)[k] / t))
                .collect()
        })
        .collect();
    let regular = record.regular();
    let consistent = regular.iter().all(|&i| final_beliefs[i][star] > CONSISTENCY_LEVEL);
    let not_recovered = regular
        .iter()
        .copied()
        .filter(|&i| final_beliefs[i][star] < NON_RECOVERY_LEVEL)
        .collect();

    let (provenance, rate_checks) = match bound_mode(scenario) {
        Some(mode) => {
            let bounds = theoretical_bounds(model, &scenario.config.schedule, &mode)?;
            let report = rate_report(record, &bounds, DEFAULT_TAIL_FRACTION, band)?;
            let checks = report
                .entries
                .into_iter()
                .map(|e| RateCheck {
                    agent: e.agent,
                    hypothesis: names[e.theta].clone(),
                    estimate: e.estimate,
                    bound: e.bound,
                    pass: e.pass,
                })
                .collect();
            (Some(bounds.provenance), checks)
        }
        None => (None, Vec::new()),
    };
    let rates_within_bound = provenance.map(|_| rate_checks.iter().all(|c: &RateCheck| c.pass));
    Ok(RunSummary {
        config_digest: record.config_digest.clone(),
        seed: record.seed,
        horizon: record.horizon,
        rule: scenario.config.rule,
        true_hypothesis: names[star].clone(),
        hypotheses: names,
        byzantine: scenario.config.adversary.byzantine().collect(),
        final_beliefs,
        final_rates,
        social_learning_rate: social_learning_rate(record, DEFAULT_TAIL_FRACTION, true)?,
        bound_provenance: provenance,
        band,
        rate_checks,
        verdicts: Verdicts {
            consistent,
            not_recovered,
            rates_within_bound,
        },
    })
}

/// `t,agent,hypothesis,mu,pi,q`; `q` is empty for the true hypothesis and at `t = 0`.
pub fn write_trajectory(path: &Path, scenario: &Scenario, record: &TrajectoryRecord) -> Result<()> {
    let names = scenario.config.model.hypotheses().names();
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["t", "agent", "hypothesis", "mu", "pi", "q"])?;
    let m = record.m;
    for step in &record.steps {
        let local = step.log_local.as_ref();
        for i in 0..record.n {
            let actual = step.actual(i, m);
            for (k, name) in names.iter().enumerate() {
                let pi = local.map(|l| l[i * m + k].exp().to_string()).unwrap_or_default();
                let q = if k == record.true_index || step.t == 0 {
                    String::new()
                } else {
                    (-actual[k] / step.t as f64).to_string()
                };
                w.write_record([
                    step.t.to_string(),
                    i.to_string(),
                    name.clone(),
                    actual[k].exp().to_string(),
                    pi,
                    q,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub config_digest: String,
    pub artifact_version: &'static str,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_seconds: f64,
    pub verdicts: serde_json::Value,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text + "\n").with_context(|| format!("cannot write {}", path.display()))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}
