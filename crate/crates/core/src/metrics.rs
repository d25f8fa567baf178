//! Rates, bounds and diagnostics computed from finished runs.
//!
//! Everything works from stored log-beliefs: at `t = 10^4` with a rate near
//! 0.09 the beliefs on false hypotheses are far below `f64::MIN_POSITIVE`.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::engine::{RecordedStep, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::graphs::{reachable_from, GraphSchedule};
use crate::logmath::log_sum_exp;
use crate::model::{log_ratio_bound, source_set, ObservationModel};
use crate::rules::ConsensusWeights;

/// Share of the run used by the finite-horizon rate estimators.
pub const DEFAULT_TAIL_FRACTION: f64 = 0.2;
/// Default slack when comparing an estimated rate against its bound, in nats.
pub const DEFAULT_BAND: f64 = 0.02;

fn check_false(record_true: usize, m: usize, theta: usize) -> Result<()> {
    if theta >= m {
        return Err(Error::IndexOutOfRange { index: theta, len: m });
    }
    if theta == record_true {
        return Err(Error::InvalidArgument(format!(
            "hypothesis {theta} is the true one; rejection rates are for false hypotheses"
        )));
    }
    Ok(())
}

fn check_agent(record: &TrajectoryRecord, i: usize) -> Result<()> {
    if i >= record.n {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: record.n,
        });
    }
    Ok(())
}

/// `-log mu / t`. Zero at `t = 0` by convention.
pub fn rejection_rate_at(step: &RecordedStep, m: usize, i: usize, theta: usize) -> f64 {
    if step.t == 0 {
        return 0.0;
    }
    -step.actual(i, m)[theta] / step.t as f64
}

/// `(t, q_{i,t}(theta))` for every recorded `t >= 1`.
pub fn rejection_rate(record: &TrajectoryRecord, i: usize, theta: usize) -> Result<Vec<(usize, f64)>> {
    check_agent(record, i)?;
    check_false(record.true_index, record.m, theta)?;
    Ok(record
        .steps
        .iter()
        .filter(|s| s.t >= 1)
        .map(|s| (s.t, rejection_rate_at(s, record.m, i, theta)))
        .collect())
}

fn counted_agents(record: &TrajectoryRecord, regular_only: bool) -> Vec<usize> {
    if regular_only {
        record.regular()
    } else {
        (0..record.n).collect()
    }
}

/// `log e_t`: log of the total mass placed on false hypotheses.
pub fn log_tv_error_at(record: &TrajectoryRecord, step: &RecordedStep, regular_only: bool) -> f64 {
    let terms: Vec<f64> = counted_agents(record, regular_only)
        .into_iter()
        .flat_map(|i| {
            step.actual(i, record.m)
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != record.true_index)
                .map(|(_, &v)| v)
                .collect::<Vec<_>>()
        })
        .collect();
    log_sum_exp(&terms)
}

fn recorded(record: &TrajectoryRecord, t: usize) -> Result<&RecordedStep> {
    record
        .step_at(t)
        .ok_or_else(|| Error::InvalidArgument(format!("step {t} was not recorded")))
}

pub fn log_tv_error(record: &TrajectoryRecord, t: usize, regular_only: bool) -> Result<f64> {
    Ok(log_tv_error_at(record, recorded(record, t)?, regular_only))
}

/// Summed belief on false hypotheses over (regular) agents.
pub fn tv_error(record: &TrajectoryRecord, t: usize, regular_only: bool) -> Result<f64> {
    log_tv_error(record, t, regular_only).map(f64::exp)
}

/// Finite-horizon stand-in for `liminf -log(e_t)/t`: the minimum over the
/// last `tail_fraction` of the series (by time). `log_series` holds
/// `(t, log e_t)`. An identically zero error yields `+inf`.
pub fn liminf_estimate(log_series: &[(usize, f64)], tail_fraction: f64) -> Result<f64> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "tail fraction must lie in (0, 1], got {tail_fraction}"
        )));
    }
    let last = log_series
        .iter()
        .map(|&(t, _)| t)
        .max()
        .ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    let start = ((1.0 - tail_fraction) * last as f64).ceil() as usize;
    let tail: Vec<f64> = log_series
        .iter()
        .filter(|&&(t, _)| t >= start.max(1))
        .map(|&(t, le)| -le / t as f64)
        .collect();
    if tail.is_empty() {
        return Err(Error::InvalidArgument("the tail window holds no step t >= 1".into()));
    }
    Ok(tail.into_iter().fold(f64::INFINITY, f64::min))
}

/// Empirical rate of social learning from the recorded steps.
pub fn social_learning_rate(record: &TrajectoryRecord, tail_fraction: f64, regular_only: bool) -> Result<f64> {
    let series: Vec<(usize, f64)> = record
        .steps
        .iter()
        .map(|s| (s.t, log_tv_error_at(record, s, regular_only)))
        .collect();
    liminf_estimate(&series, tail_fraction)
}

/// Which guarantee a bound comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    /// Best source anywhere in the network; needs joint strong connectivity.
    AllSources,
    /// Best source with a directed path to the agent; static graph.
    ReachableSources,
    /// Worst regular source; filtered rule under attack.
    RegularSources,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Provenance::AllSources => "all-sources",
            Provenance::ReachableSources => "reachable-sources",
            Provenance::RegularSources => "regular-sources",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoundMode {
    AllSources,
    ReachableSources,
    RegularSources { regular: BTreeSet<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoreticalBounds {
    pub provenance: Provenance,
    /// `per_agent[i][theta]`; `None` on the true hypothesis and for agents
    /// the bound says nothing about (Byzantine agents).
    pub per_agent: Vec<Vec<Option<f64>>>,
    /// Per false hypothesis, the minimum over covered agents.
    pub per_hypothesis: Vec<Option<f64>>,
    /// Bound on the network rate: minimum over agents and false hypotheses.
    pub network: f64,
    pub warnings: Vec<String>,
}

impl TheoreticalBounds {
    pub fn get(&self, i: usize, theta: usize) -> Option<f64> {
        self.per_agent.get(i).and_then(|r| r.get(theta)).copied().flatten()
    }
}

pub fn theoretical_bounds(
    model: &ObservationModel,
    schedule: &GraphSchedule,
    mode: &BoundMode,
) -> Result<TheoreticalBounds> {
    let (n, m, star) = (model.n(), model.m(), model.true_index());
    if schedule.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: schedule.n(),
        });
    }
    let static_graph = || {
        schedule
            .as_static()
            .ok_or_else(|| Error::ModeMismatch("this bound needs a time-invariant graph".into()))
    };
    let provenance = match mode {
        BoundMode::AllSources => Provenance::AllSources,
        BoundMode::ReachableSources => {
            static_graph()?;
            Provenance::ReachableSources
        }
        BoundMode::RegularSources { regular } => {
            static_graph()?;
            if let Some(&bad) = regular.iter().find(|&&i| i >= n) {
                return Err(Error::IndexOutOfRange { index: bad, len: n });
            }
            Provenance::RegularSources
        }
    };
    let mut per_agent = vec![vec![None; m]; n];
    let mut warnings = Vec::new();
    for theta in (0..m).filter(|&k| k != star) {
        let sources = source_set(model, star, theta)?;
        let label = &model.hypotheses().names()[theta];
        if sources.is_empty() {
            warnings.push(format!(
                "no agent can distinguish the true hypothesis from {label}; the bound is 0"
            ));
        }
        let kl = |v: usize| model.kl(v, star, theta);
        let max_kl = |set: &mut dyn Iterator<Item = usize>| set.map(kl).fold(0.0f64, f64::max);
        match mode {
            BoundMode::AllSources => {
                let b = max_kl(&mut sources.iter().copied());
                for row in per_agent.iter_mut() {
                    row[theta] = Some(b);
                }
            }
            BoundMode::ReachableSources => {
                let g = static_graph()?;
                let reach: std::collections::BTreeMap<usize, BTreeSet<usize>> = sources
                    .iter()
                    .map(|&v| Ok((v, reachable_from(g, &BTreeSet::from([v]))?)))
                    .collect::<Result<_>>()?;
                let mut unreached = Vec::new();
                for (i, row) in per_agent.iter_mut().enumerate() {
                    let b = max_kl(&mut sources.iter().copied().filter(|&v| reach[&v].contains(&i)));
                    if b == 0.0 && !sources.is_empty() {
                        unreached.push(i);
                    }
                    row[theta] = Some(b);
                }
                if !unreached.is_empty() {
                    warnings.push(format!(
                        "agents {unreached:?} are not reached by any source for {label}"
                    ));
                }
            }
            BoundMode::RegularSources { regular } => {
                let regular_sources: Vec<usize> = sources.intersection(regular).copied().collect();
                let b = if regular_sources.is_empty() {
                    if !sources.is_empty() {
                        warnings.push(format!("no regular source for {label}; the bound is 0"));
                    }
                    0.0
                } else {
                    regular_sources.iter().map(|&v| kl(v)).fold(f64::INFINITY, f64::min)
                };
                for &i in regular {
                    per_agent[i][theta] = Some(b);
                }
            }
        }
    }
    let per_hypothesis: Vec<Option<f64>> = (0..m)
        .map(|theta| {
            per_agent
                .iter()
                .filter_map(|row| row[theta])
                .fold(None, |acc: Option<f64>, b| Some(acc.map_or(b, |a| a.min(b))))
        })
        .collect();
    let network = per_hypothesis.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    Ok(TheoreticalBounds {
        provenance,
        per_agent,
        per_hypothesis,
        network: if network.is_finite() { network } else { 0.0 },
        warnings,
    })
}

/// `sum_i nu_i K_i(theta*, theta)` per hypothesis, `nu` the centrality of the
/// consensus weights. This is the asymptotic rate of log-linear pooling.
pub fn baseline_reference_rates(model: &ObservationModel, weights: &ConsensusWeights) -> Result<Vec<Option<f64>>> {
    if weights.n() != model.n() {
        return Err(Error::DimensionMismatch {
            expected: model.n(),
            found: weights.n(),
        });
    }
    let nu = weights.centrality();
    let star = model.true_index();
    Ok((0..model.m())
        .map(|theta| (theta != star).then(|| nu.iter().enumerate().map(|(i, w)| w * model.kl(i, star, theta)).sum()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub agent: usize,
    pub theta: usize,
    /// `(t, q)` over the recorded steps.
    pub series: Vec<(usize, f64)>,
    /// Minimum of `q` over the tail window.
    pub estimate: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub provenance: Provenance,
    pub tail_fraction: f64,
    pub band: f64,
    pub entries: Vec<RateEntry>,
}

impl RateReport {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }
}

/// Compare each covered agent's rejection rates against `bounds`.
pub fn rate_report(
    record: &TrajectoryRecord,
    bounds: &TheoreticalBounds,
    tail_fraction: f64,
    band: f64,
) -> Result<RateReport> {
    if bounds.per_agent.len() != record.n {
        return Err(Error::DimensionMismatch {
            expected: record.n,
            found: bounds.per_agent.len(),
        });
    }
    let mut entries = Vec::new();
    for i in record.regular() {
        for theta in (0..record.m).filter(|&k| k != record.true_index) {
            let Some(bound) = bounds.get(i, theta) else { continue };
            let series = rejection_rate(record, i, theta)?;
            let as_log: Vec<(usize, f64)> = series.iter().map(|&(t, q)| (t, -q * t as f64)).collect();
            let estimate = liminf_estimate(&as_log, tail_fraction)?;
            entries.push(RateEntry {
                agent: i,
                theta,
                series,
                estimate,
                bound,
                pass: estimate >= bound - band,
            });
        }
    }
    Ok(RateReport {
        provenance: bounds.provenance,
        tail_fraction,
        band,
        entries,
    })
}

/// Best source for `theta`: largest `K_v(theta*, theta)`, lowest index on ties.
pub fn best_source(model: &ObservationModel, theta: usize) -> Result<Option<usize>> {
    let star = model.true_index();
    let mut best: Option<(usize, f64)> = None;
    for v in source_set(model, star, theta)? {
        let k = model.kl(v, star, theta);
        if best.is_none_or(|(_, b)| k > b) {
            best = Some((v, k));
        }
    }
    Ok(best.map(|(v, _)| v))
}

/// Evolution of the path-length delays `c_{i,t}` from a reference agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayDiagnostic {
    pub reference: usize,
    pub window: usize,
    /// `values[t][i]`; `None` is an infinite delay.
    pub values: Vec<Vec<Option<u64>>>,
    /// `2(n-1)T`.
    pub bound: u64,
    /// Checks start at `(n-1)T`.
    pub check_from: usize,
    pub bound_holds: bool,
    /// First `(t, agent)` that broke the bound.
    pub violation: Option<(usize, usize)>,
}

/// Runs the delay recursion: the reference agent stays at 0, everyone else
/// starts infinite and takes one more than the smallest delay in its
/// in-neighborhood (itself included). A `None` window means the
/// connectivity period is unknown.
pub fn delay_diagnostic(
    schedule: &GraphSchedule,
    reference: usize,
    window: Option<usize>,
    horizon: usize,
) -> Result<DelayDiagnostic> {
    let window = window.ok_or_else(|| Error::Unavailable("the connectivity window T is unknown".into()))?;
    if window == 0 {
        return Err(Error::InvalidArgument("window must be at least 1".into()));
    }
    let n = schedule.n();
    if reference >= n {
        return Err(Error::IndexOutOfRange {
            index: reference,
            len: n,
        });
    }
    let mut current: Vec<Option<u64>> = (0..n).map(|i| (i == reference).then_some(0)).collect();
    let mut values = vec![current.clone()];
    for t in 0..horizon {
        let g = schedule.graph_at(t);
        let next: Vec<Option<u64>> = (0..n)
            .map(|i| {
                if i == reference {
                    return Some(0);
                }
                g.in_neighbors(i)
                    .iter()
                    .chain(std::iter::once(&i))
                    .filter_map(|&j| current[j])
                    .min()
                    .map(|c| c + 1)
            })
            .collect();
        values.push(next.clone());
        current = next;
    }
    let bound = 2 * (n as u64 - 1) * window as u64;
    let check_from = (n - 1) * window;
    let violation = values
        .iter()
        .enumerate()
        .skip(check_from)
        .find_map(|(t, row)| row.iter().position(|c| c.is_none_or(|c| c > bound)).map(|i| (t, i)));
    Ok(DelayDiagnostic {
        reference,
        window,
        values,
        bound,
        check_from,
        bound_holds: violation.is_none(),
        violation,
    })
}

/// Minimum number of runs accepted by [`concentration_probe`].
pub const MIN_PROBE_SEEDS: usize = 50;

/// The worst (smallest) rejection rate of `theta` over regular agents at
/// each grid time of one run.
pub fn probe_sample(record: &TrajectoryRecord, theta: usize, grid: &[usize]) -> Result<Vec<(usize, f64)>> {
    check_false(record.true_index, record.m, theta)?;
    grid.iter()
        .map(|&t| {
            if t == 0 {
                return Err(Error::InvalidArgument("grid times must be at least 1".into()));
            }
            let step = recorded(record, t)?;
            let q = record
                .regular()
                .into_iter()
                .map(|i| rejection_rate_at(step, record.m, i, theta))
                .fold(f64::INFINITY, f64::min);
            Ok((t, q))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedancePoint {
    pub t: usize,
    /// Share of runs whose worst agent has `q <= k_bar - epsilon`.
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCurve {
    pub k_bar: f64,
    pub epsilon: f64,
    pub seeds: usize,
    /// `epsilon^2 / (8 L^2)`; displayed only, the Hoeffding constant is loose.
    pub reference_slope: f64,
    pub points: Vec<ExceedancePoint>,
}

/// Fraction of runs in which some agent still lags `k_bar` by at least
/// `epsilon`, per grid time. `samples` come from [`probe_sample`] with a
/// shared grid.
pub fn concentration_probe(
    samples: &[Vec<(usize, f64)>],
    k_bar: f64,
    epsilon: f64,
    log_ratio: f64,
) -> Result<ConcentrationCurve> {
    if samples.len() < MIN_PROBE_SEEDS {
        return Err(Error::InvalidArgument(format!(
            "the concentration probe needs at least {MIN_PROBE_SEEDS} runs, got {}",
            samples.len()
        )));
    }
    if epsilon.is_nan() || epsilon <= 0.0 {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let grid: Vec<usize> = samples[0].iter().map(|&(t, _)| t).collect();
    if samples
        .iter()
        .any(|s| s.iter().map(|&(t, _)| t).ne(grid.iter().copied()))
    {
        return Err(Error::InvalidArgument(
            "every sample must use the same time grid".into(),
        ));
    }
    let threshold = k_bar - epsilon;
    let points = grid
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let hits = samples.iter().filter(|s| s[k].1 <= threshold).count();
            ExceedancePoint {
                t,
                fraction: hits as f64 / samples.len() as f64,
            }
        })
        .collect();
    let reference_slope = if log_ratio > 0.0 {
        epsilon * epsilon / (8.0 * log_ratio * log_ratio)
    } else {
        f64::INFINITY
    };
    Ok(ConcentrationCurve {
        k_bar,
        epsilon,
        seeds: samples.len(),
        reference_slope,
        points,
    })
}

/// `log_ratio_bound` re-exported here for the probe's reference slope.
pub fn probe_log_ratio(model: &ObservationModel) -> f64 {
    log_ratio_bound(model)
}
