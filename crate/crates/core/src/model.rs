//! Hypotheses, per-agent likelihood tables and the quantities derived from
//! them: KL divergences, source sets, identifiability and the log-ratio bound.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// KL values at or below this are treated as zero (observational equivalence).
pub const ZERO_KL_TOLERANCE: f64 = 1e-12;

/// Rows whose mass is off by more than this are rejected rather than renormalized.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisSet {
    names: Vec<String>,
    true_index: usize,
}

impl HypothesisSet {
    pub fn new(names: Vec<String>, true_index: usize) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least two hypotheses, got {}",
                names.len()
            )));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(Error::InvalidModel("hypothesis labels must be unique".into()));
        }
        if true_index >= names.len() {
            return Err(Error::InvalidModel(format!(
                "true index {true_index} out of range for {} hypotheses",
                names.len()
            )));
        }
        Ok(Self { names, true_index })
    }

    /// `m` hypotheses labelled `theta1..thetam`.
    pub fn numbered(m: usize, true_index: usize) -> Result<Self> {
        Self::new((1..=m).map(|k| format!("theta{k}")).collect(), true_index)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn true_index(&self) -> usize {
        self.true_index
    }

    pub fn with_true_index(&self, true_index: usize) -> Result<Self> {
        Self::new(self.names.clone(), true_index)
    }

    /// Indices of every hypothesis other than the true one.
    pub fn false_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&p| p != self.true_index)
    }
}

/// One agent's signal structure: `table[p][w] = l_i(w | theta_p)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLikelihood", into = "RawLikelihood")]
pub struct AgentLikelihood {
    signal_names: Vec<String>,
    table: Vec<Vec<f64>>,
    #[serde(skip)]
    log_table: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct RawLikelihood {
    signal_names: Vec<String>,
    table: Vec<Vec<f64>>,
}

impl TryFrom<RawLikelihood> for AgentLikelihood {
    type Error = Error;
    fn try_from(raw: RawLikelihood) -> Result<Self> {
        AgentLikelihood::new(raw.signal_names, raw.table)
    }
}

impl From<AgentLikelihood> for RawLikelihood {
    fn from(a: AgentLikelihood) -> Self {
        RawLikelihood {
            signal_names: a.signal_names,
            table: a.table,
        }
    }
}

impl AgentLikelihood {
    pub fn new(signal_names: Vec<String>, table: Vec<Vec<f64>>) -> Result<Self> {
        if signal_names.is_empty() {
            return Err(Error::InvalidModel("an agent needs at least one signal".into()));
        }
        let unique: BTreeSet<&String> = signal_names.iter().collect();
        if unique.len() != signal_names.len() {
            return Err(Error::InvalidModel("signal labels must be unique".into()));
        }
        let mut table = table;
        for (p, row) in table.iter_mut().enumerate() {
            if row.len() != signal_names.len() {
                return Err(Error::DimensionMismatch {
                    expected: signal_names.len(),
                    found: row.len(),
                });
            }
            if let Some(bad) = row.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
                return Err(Error::InvalidModel(format!(
                    "likelihood row {p} has non-positive entry {bad}"
                )));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidModel(format!("likelihood row {p} sums to {sum}, not 1")));
            }
            row.iter_mut().for_each(|v| *v /= sum);
        }
        let log_table = table.iter().map(|r| r.iter().map(|v| v.ln()).collect()).collect();
        Ok(Self {
            signal_names,
            table,
            log_table,
        })
    }

    /// Signals `w1..wk` with the given rows.
    pub fn from_rows(table: Vec<Vec<f64>>) -> Result<Self> {
        let k = table.first().map_or(0, Vec::len);
        Self::new((1..=k).map(|w| format!("w{w}")).collect(), table)
    }

    /// Identical rows for every hypothesis: an agent that can distinguish nothing.
    pub fn uninformative(m: usize, row: Vec<f64>) -> Result<Self> {
        Self::from_rows(vec![row; m])
    }

    pub fn signal_names(&self) -> &[String] {
        &self.signal_names
    }

    pub fn num_signals(&self) -> usize {
        self.signal_names.len()
    }

    pub fn num_hypotheses(&self) -> usize {
        self.table.len()
    }

    pub fn row(&self, p: usize) -> &[f64] {
        &self.table[p]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.table
    }

    /// `ln l(signal | theta_p)`.
    pub fn log_likelihood(&self, signal: usize, p: usize) -> f64 {
        self.log_table[p][signal]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationModel {
    hypotheses: HypothesisSet,
    agents: Vec<AgentLikelihood>,
}

impl ObservationModel {
    pub fn new(hypotheses: HypothesisSet, agents: Vec<AgentLikelihood>) -> Result<Self> {
        if agents.is_empty() {
            return Err(Error::InvalidModel("need at least one agent".into()));
        }
        let m = hypotheses.len();
        for (i, a) in agents.iter().enumerate() {
            if a.num_hypotheses() != m {
                return Err(Error::InvalidModel(format!(
                    "agent {i} has {} likelihood rows but there are {m} hypotheses",
                    a.num_hypotheses()
                )));
            }
        }
        Ok(Self { hypotheses, agents })
    }

    pub fn hypotheses(&self) -> &HypothesisSet {
        &self.hypotheses
    }

    pub fn agents(&self) -> &[AgentLikelihood] {
        &self.agents
    }

    pub fn agent(&self, i: usize) -> &AgentLikelihood {
        &self.agents[i]
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn true_index(&self) -> usize {
        self.hypotheses.true_index()
    }

    pub fn with_true_index(&self, true_index: usize) -> Result<Self> {
        Ok(Self {
            hypotheses: self.hypotheses.with_true_index(true_index)?,
            agents: self.agents.clone(),
        })
    }

    /// `K_i(theta_p, theta_q)`.
    pub fn kl(&self, i: usize, p: usize, q: usize) -> f64 {
        let a = &self.agents[i];
        kl_unchecked(a.row(p), a.row(q))
    }
}

fn kl_unchecked(p: &[f64], q: &[f64]) -> f64 {
    let d: f64 = p.iter().zip(q).map(|(&a, &b)| a * (a / b).ln()).sum();
    d.max(0.0)
}

/// `D(p || q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            found: q.len(),
        });
    }
    for (name, row) in [("p", p), ("q", q)] {
        if row.iter().any(|&v| v.is_nan() || v <= 0.0) {
            return Err(Error::InvalidModel(format!("{name} has a non-positive entry")));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
            return Err(Error::InvalidModel(format!("{name} sums to {sum}")));
        }
    }
    Ok(kl_unchecked(p, q))
}

fn check_pair(model: &ObservationModel, p: usize, q: usize) -> Result<()> {
    let m = model.m();
    if p >= m || q >= m {
        return Err(Error::InvalidArgument(format!(
            "hypothesis pair ({p},{q}) out of range for {m} hypotheses"
        )));
    }
    if p == q {
        return Err(Error::InvalidArgument(
            "source set needs two distinct hypotheses".into(),
        ));
    }
    Ok(())
}

fn is_source(model: &ObservationModel, i: usize, p: usize, q: usize) -> bool {
    // Either direction: keeps S(p,q) == S(q,p) exact under the tolerance.
    model.kl(i, p, q).max(model.kl(i, q, p)) > ZERO_KL_TOLERANCE
}

/// Agents able to tell `theta_p` from `theta_q` on their own.
pub fn source_set(model: &ObservationModel, p: usize, q: usize) -> Result<BTreeSet<usize>> {
    check_pair(model, p, q)?;
    Ok((0..model.n()).filter(|&i| is_source(model, i, p, q)).collect())
}

/// Every pair of hypotheses is distinguishable by some agent in `subset`.
pub fn globally_identifiable(model: &ObservationModel, subset: &BTreeSet<usize>) -> Result<bool> {
    if subset.is_empty() {
        return Err(Error::InvalidArgument("subset must be non-empty".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= model.n()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: model.n(),
        });
    }
    let m = model.m();
    let ok = (0..m)
        .flat_map(|p| ((p + 1)..m).map(move |q| (p, q)))
        .all(|(p, q)| subset.iter().any(|&i| is_source(model, i, p, q)));
    Ok(ok)
}

/// The constant `L = max |ln(l_i(w|theta_p) / l_i(w|theta_q))|`.
pub fn log_ratio_bound(model: &ObservationModel) -> f64 {
    let mut bound = 0.0f64;
    for a in model.agents() {
        for w in 0..a.num_signals() {
            let (lo, hi) = (0..model.m())
                .map(|p| a.log_likelihood(w, p))
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            bound = bound.max(hi - lo);
        }
    }
    bound
}

/// Draw one index from a probability row. Zero-mass entries are never drawn.
pub fn sample_from_row<R: Rng + ?Sized>(row: &[f64], rng: &mut R) -> usize {
    WeightedIndex::new(row)
        .expect("row has positive total mass")
        .sample(rng)
}

/// Per-agent signal generators, each on its own seeded substream.
#[derive(Debug, Clone)]
pub struct SignalSource {
    samplers: Vec<WeightedIndex<f64>>,
    streams: Vec<ChaCha8Rng>,
}

impl SignalSource {
    pub fn new(model: &ObservationModel, seed: u64) -> Self {
        let t = model.true_index();
        let samplers = model
            .agents()
            .iter()
            .map(|a| WeightedIndex::new(a.row(t)).expect("validated row"))
            .collect();
        let streams = (0..model.n()).map(|i| substream(seed, Purpose::Signals, i)).collect();
        Self { samplers, streams }
    }

    /// One signal per agent, drawn independently from the true-state rows.
    pub fn sample_signals(&mut self) -> Vec<usize> {
        let mut out = vec![0; self.samplers.len()];
        self.fill(&mut out);
        out
    }

    pub fn fill(&mut self, out: &mut [usize]) {
        for ((slot, sampler), rng) in out.iter_mut().zip(&self.samplers).zip(&mut self.streams) {
            *slot = sampler.sample(rng);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use proptest::prelude::*;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_divergence(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.0);
        // 0.5 ln(0.5/0.7) + 0.5 ln(0.5/0.3)
        let d = kl_divergence(&[0.5, 0.5], &[0.7, 0.3]).unwrap();
        assert!(approx(d, 0.087_177, 1e-6), "{d}");
        let d = kl_divergence(&[0.7, 0.3], &[0.5, 0.5]).unwrap();
        assert!(approx(d, 0.082_282, 1e-6), "{d}");
    }

    #[test]
    fn kl_errors() {
        assert!(matches!(
            kl_divergence(&[0.5, 0.5], &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            kl_divergence(&[1.0, 0.0], &[0.5, 0.5]),
            Err(Error::InvalidModel(_))
        ));
    }

    #[test]
    fn hypothesis_set_invariants() {
        assert!(HypothesisSet::numbered(1, 0).is_err());
        assert!(HypothesisSet::numbered(2, 2).is_err());
        assert!(HypothesisSet::new(vec!["a".into(), "a".into()], 0).is_err());
        assert_eq!(
            HypothesisSet::numbered(3, 1)
                .unwrap()
                .false_indices()
                .collect::<Vec<_>>(),
            vec![0, 2]
        );
    }

    #[test]
    fn likelihood_validation() {
        assert!(AgentLikelihood::from_rows(vec![vec![0.5, 0.5], vec![1.0, 0.0]]).is_err());
        assert!(AgentLikelihood::from_rows(vec![vec![0.6, 0.5]]).is_err());
        // off by less than 1e-9: renormalized
        let a = AgentLikelihood::from_rows(vec![vec![0.5 + 4e-10, 0.5]]).unwrap();
        assert!(approx(a.row(0).iter().sum::<f64>(), 1.0, 1e-12));
    }

    #[test]
    fn model_rejects_row_count_mismatch() {
        let h = HypothesisSet::numbered(3, 0).unwrap();
        let a = AgentLikelihood::uninformative(2, vec![0.5, 0.5]).unwrap();
        assert!(ObservationModel::new(h, vec![a]).is_err());
    }

    #[test]
    fn source_sets_on_examples() {
        let m1 = presets::example1_model(5, 1);
        assert_eq!(source_set(&m1, 0, 1).unwrap(), BTreeSet::from([0]));
        let m2 = presets::example2_model(0);
        assert_eq!(source_set(&m2, 1, 2).unwrap(), (3..9).collect());
        assert_eq!(source_set(&m2, 0, 1).unwrap(), (0..3).collect());
        assert_eq!(source_set(&m2, 0, 2).unwrap(), (0..9).collect());
        assert!(matches!(source_set(&m2, 1, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn identical_rows_have_no_sources() {
        let h = HypothesisSet::numbered(2, 0).unwrap();
        let a = AgentLikelihood::uninformative(2, vec![0.2, 0.8]).unwrap();
        let m = ObservationModel::new(h, vec![a.clone(), a]).unwrap();
        assert!(source_set(&m, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn identifiability_examples() {
        let m2 = presets::example2_model(0);
        assert!(globally_identifiable(&m2, &(0..9).collect()).unwrap());
        assert!(!globally_identifiable(&m2, &BTreeSet::from([0, 1, 2])).unwrap());
        let m1 = presets::example1_model(5, 1);
        assert!(!globally_identifiable(&m1, &BTreeSet::from([1])).unwrap());
        assert!(globally_identifiable(&m1, &BTreeSet::new()).is_err());
    }

    #[test]
    fn log_ratio_bound_examples() {
        let h = HypothesisSet::numbered(3, 0).unwrap();
        let u = AgentLikelihood::uninformative(3, vec![0.25; 4]).unwrap();
        let flat = ObservationModel::new(h, vec![u; 3]).unwrap();
        assert_eq!(log_ratio_bound(&flat), 0.0);
        assert!(approx(log_ratio_bound(&presets::example2_model(0)), 3f64.ln(), 1e-12));
        assert!(approx(
            log_ratio_bound(&presets::example1_model(5, 1)),
            (0.5f64 / 0.3).ln(),
            1e-12
        ));
    }

    #[test]
    fn degenerate_row_always_first_signal() {
        let mut rng = substream(3, Purpose::Signals, 0);
        for _ in 0..1000 {
            assert_eq!(sample_from_row(&[1.0, 0.0, 0.0], &mut rng), 0);
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = presets::example1_model(5, 1);
        let mut a = SignalSource::new(&m, 42);
        let mut b = SignalSource::new(&m, 42);
        for _ in 0..200 {
            assert_eq!(a.sample_signals(), b.sample_signals());
        }
    }

    #[test]
    fn empirical_frequencies_match_row() {
        let h = HypothesisSet::numbered(2, 0).unwrap();
        let a = AgentLikelihood::from_rows(vec![vec![0.7, 0.3], vec![0.5, 0.5]]).unwrap();
        let m = ObservationModel::new(h, vec![a]).unwrap();
        let mut src = SignalSource::new(&m, 11);
        let draws = 100_000;
        let zeros = (0..draws).filter(|_| src.sample_signals()[0] == 0).count();
        let freq = zeros as f64 / draws as f64;
        assert!(approx(freq, 0.7, 0.01), "{freq}");
    }

    fn prob_row(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_zero_iff_equal(p in prob_row(4), q in prob_row(4)) {
            let d = kl_divergence(&p, &q).unwrap();
            prop_assert!(d >= 0.0);
            prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
            if p != q {
                let gap = p.iter().zip(&q).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                if gap > 1e-3 {
                    prop_assert!(d > 0.0);
                }
            }
        }

        #[test]
        fn source_set_symmetric_and_bound_dominates(
            rows in prop::collection::vec(prop::collection::vec(prob_row(3), 3), 1..5)
        ) {
            let h = HypothesisSet::numbered(3, 0).unwrap();
            let agents = rows.into_iter().map(|r| AgentLikelihood::from_rows(r).unwrap()).collect();
            let model = ObservationModel::new(h, agents).unwrap();
            let l = log_ratio_bound(&model);
            for p in 0..3 {
                for q in 0..3 {
                    if p != q {
                        prop_assert_eq!(source_set(&model, p, q).unwrap(), source_set(&model, q, p).unwrap());
                    }
                    for a in model.agents() {
                        for w in 0..3 {
                            let r = (a.row(p)[w] / a.row(q)[w]).ln().abs();
                            prop_assert!(l >= r - 1e-12);
                        }
                    }
                }
            }
        }
    }
}
