use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{jointly_strongly_connected, reachable_from, strongly_r_robust_wrt, GraphSchedule};
use crate::error::{Error, Result};
use crate::model::{source_set, ObservationModel};

/// Which set of sufficient conditions to certify.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CertifyMode {
    /// Global identifiability plus joint strong connectivity over windows of `window` steps.
    MinRuleTimeVarying { window: usize },
    /// Static graph: every non-source agent reachable from the source set of each pair.
    MinRuleStatic,
    /// Static graph strongly (2f+1)-robust w.r.t. every source set.
    Lfrhe { f: usize },
}

impl fmt::Display for CertifyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CertifyMode::MinRuleTimeVarying { window } => write!(f, "min-rule, time-varying (T={window})"),
            CertifyMode::MinRuleStatic => write!(f, "min-rule, static graph"),
            CertifyMode::Lfrhe { f: faults } => write!(f, "LFRHE (f={faults})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairCertificate {
    pub p: usize,
    pub q: usize,
    pub labels: (String, String),
    pub sources: BTreeSet<usize>,
    pub holds: bool,
    pub reason: Option<String>,
    pub witness: Option<BTreeSet<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectivityCheck {
    pub window: usize,
    pub horizon: usize,
    pub holds: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub mode: CertifyMode,
    pub verdict: bool,
    pub pairs: Vec<PairCertificate>,
    pub connectivity: Option<ConnectivityCheck>,
}

fn fmt_set(s: &BTreeSet<usize>) -> String {
    let items: Vec<String> = s.iter().map(usize::to_string).collect();
    format!("{{{}}}", items.join(","))
}

/// Check the hypotheses of the relevant convergence guarantee for every
/// unordered pair of hypotheses.
pub fn certify(model: &ObservationModel, schedule: &GraphSchedule, mode: CertifyMode) -> Result<CertificationReport> {
    let n = model.n();
    if schedule.n() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: schedule.n(),
        });
    }
    let static_graph = match mode {
        CertifyMode::MinRuleTimeVarying { .. } => None,
        CertifyMode::MinRuleStatic | CertifyMode::Lfrhe { .. } => Some(
            schedule
                .as_static()
                .ok_or_else(|| Error::ModeMismatch(format!("{mode} requires a time-invariant graph")))?,
        ),
    };

    let names = model.hypotheses().names();
    let mut pairs = Vec::new();
    for p in 0..model.m() {
        for q in (p + 1)..model.m() {
            let sources = source_set(model, p, q)?;
            let mut cert = PairCertificate {
                p,
                q,
                labels: (names[p].clone(), names[q].clone()),
                sources: sources.clone(),
                holds: false,
                reason: None,
                witness: None,
            };
            if sources.is_empty() {
                cert.reason = Some("no agent can distinguish this pair (empty source set)".into());
                pairs.push(cert);
                continue;
            }
            match (mode, static_graph) {
                (CertifyMode::MinRuleTimeVarying { .. }, _) => cert.holds = true,
                (CertifyMode::MinRuleStatic, Some(g)) => {
                    let reached = reachable_from(g, &sources)?;
                    let missed: BTreeSet<usize> = (0..n).filter(|v| !reached.contains(v)).collect();
                    if missed.is_empty() {
                        cert.holds = true;
                    } else {
                        cert.reason = Some(format!(
                            "agents {} are not reachable from the source set",
                            fmt_set(&missed)
                        ));
                        cert.witness = Some(missed);
                    }
                }
                (CertifyMode::Lfrhe { f }, Some(g)) => {
                    let r = 2 * f + 1;
                    let res = strongly_r_robust_wrt(g, &sources, r)?;
                    if res.robust {
                        cert.holds = true;
                    } else {
                        cert.reason = Some(format!(
                            "not strongly {r}-robust w.r.t. the source set: {} is not {r}-reachable \
                             (percolation leaves {} inactive)",
                            fmt_set(&res.witness),
                            fmt_set(&res.inactive)
                        ));
                        cert.witness = Some(res.witness);
                    }
                }
                _ => unreachable!("static graph resolved above"),
            }
            pairs.push(cert);
        }
    }

    let connectivity = match mode {
        CertifyMode::MinRuleTimeVarying { window } => {
            let horizon = schedule.sufficient_horizon(window);
            let holds = jointly_strongly_connected(schedule, window, horizon)?;
            let note = match schedule {
                GraphSchedule::Explicit { .. } => {
                    format!("checked windows over [0,{horizon}); later steps repeat the final graph")
                }
                _ => format!("checked windows over [0,{horizon}); the schedule repeats thereafter"),
            };
            Some(ConnectivityCheck {
                window,
                horizon,
                holds,
                note,
            })
        }
        _ => None,
    };

    let verdict = pairs.iter().all(|c| c.holds) && connectivity.as_ref().is_none_or(|c| c.holds);
    Ok(CertificationReport {
        mode,
        verdict,
        pairs,
        connectivity,
    })
}

impl fmt::Display for CertificationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "certification: {}", self.mode)?;
        for c in &self.pairs {
            let status = if c.holds { "ok  " } else { "FAIL" };
            write!(
                f,
                "  [{status}] ({}, {}) sources={}",
                c.labels.0,
                c.labels.1,
                fmt_set(&c.sources)
            )?;
            if let Some(reason) = &c.reason {
                write!(f, " -- {reason}")?;
            }
            writeln!(f)?;
        }
        if let Some(c) = &self.connectivity {
            let status = if c.holds { "ok  " } else { "FAIL" };
            writeln!(f, "  [{status}] joint strong connectivity, T={} ({})", c.window, c.note)?;
        }
        write!(f, "verdict: {}", if self.verdict { "PASS" } else { "FAIL" })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphs::{source_components, DirectedGraph};
    use crate::model::{globally_identifiable, AgentLikelihood, HypothesisSet};
    use crate::presets;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example1_static_passes() {
        let model = presets::example1_model(5, 1);
        let sched = GraphSchedule::fixed(presets::example1_graph(5));
        let rep = certify(&model, &sched, CertifyMode::MinRuleStatic).unwrap();
        assert!(rep.verdict, "{rep}");
        assert_eq!(rep.pairs[0].sources, BTreeSet::from([0]));
    }

    #[test]
    fn example2_lfrhe_passes() {
        let model = presets::example2_model(0);
        let sched = GraphSchedule::fixed(presets::example2_graph());
        let rep = certify(&model, &sched, CertifyMode::Lfrhe { f: 1 }).unwrap();
        assert!(rep.verdict, "{rep}");
        assert_eq!(rep.pairs.len(), 3);
        assert!(rep.pairs.iter().all(|c| c.holds));
    }

    #[test]
    fn example2_without_first_group_fails() {
        let removed = BTreeSet::from([0, 1, 2]);
        let full = presets::example2_model(0);
        let agents = full.agents()[3..].to_vec();
        let model = ObservationModel::new(full.hypotheses().clone(), agents).unwrap();
        let sched = GraphSchedule::fixed(presets::example2_graph().without(&removed));
        let rep = certify(&model, &sched, CertifyMode::Lfrhe { f: 1 }).unwrap();
        assert!(!rep.verdict);
        let pair01 = rep.pairs.iter().find(|c| (c.p, c.q) == (0, 1)).unwrap();
        assert!(!pair01.holds);
        assert!(pair01.sources.is_empty());
    }

    #[test]
    fn star_is_not_lfrhe_certifiable() {
        let model = presets::example1_model(5, 1);
        let sched = GraphSchedule::fixed(presets::example1_graph(5));
        let rep = certify(&model, &sched, CertifyMode::Lfrhe { f: 1 }).unwrap();
        assert!(!rep.verdict);
        assert!(rep.pairs[0].witness.as_ref().unwrap().contains(&1));
    }

    #[test]
    fn mode_mismatch() {
        let model = presets::example1_model(2, 1);
        let a = DirectedGraph::new(2, [(0, 1)]).unwrap();
        let b = DirectedGraph::new(2, [(1, 0)]).unwrap();
        let sched = GraphSchedule::periodic(vec![a, b]).unwrap();
        assert!(matches!(
            certify(&model, &sched, CertifyMode::MinRuleStatic),
            Err(Error::ModeMismatch(_))
        ));
        let rep = certify(&model, &sched, CertifyMode::MinRuleTimeVarying { window: 2 }).unwrap();
        assert!(rep.verdict);
        let rep = certify(&model, &sched, CertifyMode::MinRuleTimeVarying { window: 1 }).unwrap();
        assert!(!rep.verdict);
    }

    // Static min-rule conditions hold exactly when every source component
    // is globally identifiable on its own.
    #[test]
    fn static_conditions_match_source_component_identifiability() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let informative = [
            vec![vec![0.7, 0.3], vec![0.5, 0.5], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.2, 0.8], vec![0.5, 0.5]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.9, 0.1]],
            vec![vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]],
        ];
        for _ in 0..300 {
            let n = rng.random_range(1..=7);
            let agents: Vec<_> = (0..n)
                .map(|_| AgentLikelihood::from_rows(informative[rng.random_range(0..4)].clone()).unwrap())
                .collect();
            let model = ObservationModel::new(HypothesisSet::numbered(3, 0).unwrap(), agents).unwrap();
            let edges: Vec<_> = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .filter(|_| rng.random_bool(0.25))
                .collect();
            let g = DirectedGraph::new(n, edges).unwrap();
            let rep = certify(&model, &GraphSchedule::fixed(g.clone()), CertifyMode::MinRuleStatic).unwrap();
            let by_components = source_components(&g)
                .iter()
                .all(|c| globally_identifiable(&model, c).unwrap());
            assert_eq!(rep.verdict, by_components);
        }
    }

    #[test]
    fn report_renders() {
        let model = presets::example2_model(0);
        let sched = GraphSchedule::fixed(presets::example2_graph());
        let rep = certify(&model, &sched, CertifyMode::Lfrhe { f: 1 }).unwrap();
        let text = rep.to_string();
        assert!(text.contains("verdict: PASS"));
        let json = serde_json::to_string(&rep).unwrap();
        let back: CertificationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
    }
}
