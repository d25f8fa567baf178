//! Belief-update rules. All vectors are natural-log probabilities over the
//! hypothesis set and every rule returns a normalized vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphs::DirectedGraph;
use crate::logmath::{log_sum_exp, normalize_in_place};
use crate::model::AgentLikelihood;

/// Rule selection as it appears in configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum Rule {
    MinRule,
    Lfrhe {
        f: usize,
    },
    Linear,
    #[serde(rename = "loglinear")]
    LogLinear,
}

impl Rule {
    pub fn name(&self) -> &'static str {
        match self {
            Rule::MinRule => "min_rule",
            Rule::Lfrhe { .. } => "lfrhe",
            Rule::Linear => "linear",
            Rule::LogLinear => "loglinear",
        }
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, Rule::Linear | Rule::LogLinear)
    }
}

/// A neighbor's actual belief as received this round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InboxMessage<'a> {
    pub sender: usize,
    pub log_belief: &'a [f64],
}

/// Per-agent local (`pi`) and actual (`mu`) beliefs, `n x m`, log domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefState {
    n: usize,
    m: usize,
    log_local: Vec<f64>,
    log_actual: Vec<f64>,
}

impl BeliefState {
    pub fn uniform(n: usize, m: usize) -> Self {
        let v = -(m as f64).ln();
        Self {
            n,
            m,
            log_local: vec![v; n * m],
            log_actual: vec![v; n * m],
        }
    }

    /// Both belief sets start from the same prior rows.
    pub fn from_log_priors(rows: &[Vec<f64>]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self {
            n,
            m,
            log_local: flat.clone(),
            log_actual: flat,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn local(&self, i: usize) -> &[f64] {
        &self.log_local[i * self.m..(i + 1) * self.m]
    }

    pub fn actual(&self, i: usize) -> &[f64] {
        &self.log_actual[i * self.m..(i + 1) * self.m]
    }

    pub fn local_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.log_local[i * self.m..(i + 1) * self.m]
    }

    pub fn actual_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.log_actual[i * self.m..(i + 1) * self.m]
    }

    pub fn log_local(&self) -> &[f64] {
        &self.log_local
    }

    pub fn log_actual(&self) -> &[f64] {
        &self.log_actual
    }
}

fn check_len(v: &[f64], m: usize) -> Result<()> {
    if v.len() != m {
        return Err(Error::Protocol(format!(
            "belief vector has {} entries, expected {m}",
            v.len()
        )));
    }
    Ok(())
}

/// One step of Bayes' rule on the agent's private signal.
pub fn bayes_local_update(log_row: &[f64], agent: &AgentLikelihood, signal: usize) -> Vec<f64> {
    let mut out: Vec<f64> = log_row
        .iter()
        .enumerate()
        .map(|(p, &prior)| agent.log_likelihood(signal, p) + prior)
        .collect();
    normalize_in_place(&mut out);
    out
}

/// Min-rule: elementwise minimum of own actual belief, every neighbor's
/// actual belief and the freshly updated local belief, then normalized.
pub fn min_rule_update(own_log_actual: &[f64], inbox: &[InboxMessage<'_>], new_log_local: &[f64]) -> Result<Vec<f64>> {
    let m = new_log_local.len();
    check_len(own_log_actual, m)?;
    let mut out: Vec<f64> = own_log_actual
        .iter()
        .zip(new_log_local)
        .map(|(a, b)| a.min(*b))
        .collect();
    for msg in inbox {
        check_len(msg.log_belief, m)?;
        for (o, &v) in out.iter_mut().zip(msg.log_belief) {
            *o = o.min(v);
        }
    }
    normalize_in_place(&mut out);
    Ok(out)
}

/// Sorts `values` ascending and returns the part left after dropping the `f`
/// lowest and `f` highest. Empty when there are fewer than `2f+1` values.
pub fn trim_extremes(values: &mut [f64], f: usize) -> &[f64] {
    if values.len() < 2 * f + 1 {
        return &[];
    }
    values.sort_unstable_by(f64::total_cmp);
    let len = values.len();
    &values[f..len - f]
}

/// Local-filtering min-rule. With fewer than `2f+1` neighbors the agent
/// ignores the network and copies its local belief; otherwise, per
/// hypothesis, the `f` largest and `f` smallest neighbor values are
/// discarded and the minimum of the rest is taken against the local belief.
/// The agent's own previous actual belief does not enter.
pub fn lfrhe_update(inbox: &[InboxMessage<'_>], new_log_local: &[f64], f: usize) -> Result<Vec<f64>> {
    let m = new_log_local.len();
    for msg in inbox {
        check_len(msg.log_belief, m)?;
    }
    if inbox.len() < 2 * f + 1 {
        return Ok(new_log_local.to_vec());
    }
    let mut scratch = vec![0.0; inbox.len()];
    let mut out = Vec::with_capacity(m);
    for (theta, &local) in new_log_local.iter().enumerate() {
        for (s, msg) in scratch.iter_mut().zip(inbox) {
            *s = msg.log_belief[theta];
        }
        let kept_min = trim_extremes(&mut scratch, f)[0];
        out.push(kept_min.min(local));
    }
    normalize_in_place(&mut out);
    Ok(out)
}

/// Row-stochastic consensus weights supported on the inclusive neighborhoods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusWeights {
    a: Vec<Vec<f64>>,
}

impl ConsensusWeights {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i]
    }

    pub fn is_doubly_stochastic(&self, tol: f64) -> bool {
        let n = self.n();
        (0..n).all(|j| ((0..n).map(|i| self.a[i][j]).sum::<f64>() - 1.0).abs() <= tol)
    }

    /// Left Perron vector (eigenvector centrality) by power iteration.
    pub fn centrality(&self) -> Vec<f64> {
        let n = self.n();
        let mut nu = vec![1.0 / n as f64; n];
        for _ in 0..100_000 {
            let mut next = vec![0.0; n];
            for (i, row) in self.a.iter().enumerate() {
                for (j, &w) in row.iter().enumerate() {
                    next[j] += nu[i] * w;
                }
            }
            let diff = next.iter().zip(&nu).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            nu = next;
            if diff < 1e-15 {
                break;
            }
        }
        nu
    }
}

/// Lazy Metropolis weights on a symmetric graph:
/// `a_ij = 1 / (2 max(d_i, d_j))` for neighbors, remainder on the diagonal.
pub fn lazy_metropolis_weights(g: &DirectedGraph) -> Result<ConsensusWeights> {
    if !g.is_symmetric() {
        return Err(Error::UnsupportedBaseline(
            "pooling baselines need an undirected (symmetric) graph".into(),
        ));
    }
    let n = g.n();
    let deg: Vec<usize> = (0..n).map(|i| g.in_neighbors(i).len()).collect();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        let mut off = 0.0;
        for &j in g.in_neighbors(i) {
            let w = 1.0 / (2.0 * deg[i].max(deg[j]) as f64);
            a[i][j] = w;
            off += w;
        }
        a[i][i] = 1.0 - off;
    }
    Ok(ConsensusWeights { a })
}

/// Arithmetic pooling of the agent's own Bayesian posterior with its
/// neighbors' current actual beliefs.
pub fn linear_pool_update(
    own_log_actual: &[f64],
    inbox: &[InboxMessage<'_>],
    weights: &ConsensusWeights,
    agent: usize,
    likelihood: &AgentLikelihood,
    signal: usize,
) -> Result<Vec<f64>> {
    let m = own_log_actual.len();
    let posterior = bayes_local_update(own_log_actual, likelihood, signal);
    let self_w = weights.weight(agent, agent).ln();
    let mut terms = Vec::with_capacity(inbox.len() + 1);
    let mut out = Vec::with_capacity(m);
    for (theta, &post) in posterior.iter().enumerate() {
        terms.clear();
        terms.push(self_w + post);
        for msg in inbox {
            check_len(msg.log_belief, m)?;
            terms.push(weights.weight(agent, msg.sender).ln() + msg.log_belief[theta]);
        }
        out.push(log_sum_exp(&terms));
    }
    normalize_in_place(&mut out);
    Ok(out)
}

/// Geometric pooling of the inclusive neighborhood followed by Bayesian
/// reweighting with the agent's own signal.
pub fn loglinear_pool_update(
    own_log_actual: &[f64],
    inbox: &[InboxMessage<'_>],
    weights: &ConsensusWeights,
    agent: usize,
    likelihood: &AgentLikelihood,
    signal: usize,
) -> Result<Vec<f64>> {
    let m = own_log_actual.len();
    let self_w = weights.weight(agent, agent);
    let mut out: Vec<f64> = (0..m)
        .map(|theta| likelihood.log_likelihood(signal, theta) + self_w * own_log_actual[theta])
        .collect();
    for msg in inbox {
        check_len(msg.log_belief, m)?;
        let w = weights.weight(agent, msg.sender);
        for (o, &v) in out.iter_mut().zip(msg.log_belief) {
            *o += w * v;
        }
    }
    normalize_in_place(&mut out);
    Ok(out)
}
