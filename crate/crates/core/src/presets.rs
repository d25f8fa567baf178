//! The two reference setups: a star with a single informative agent, and a
//! nine-agent layered network with three signal groups. Agent indices are
//! zero-based, so the star center and the only informative agent is agent 0.

use crate::adversary::{AdversarySpec, Strategy};
use crate::graphs::DirectedGraph;
use crate::model::{AgentLikelihood, HypothesisSet, ObservationModel};

/// Binary test; agent 0 has rows `(0.7, 0.3)` / `(0.5, 0.5)`, all others are uniform.
pub fn example1_model(n: usize, true_index: usize) -> ObservationModel {
    let h = HypothesisSet::numbered(2, true_index).expect("valid hypotheses");
    let mut agents = vec![AgentLikelihood::from_rows(vec![vec![0.7, 0.3], vec![0.5, 0.5]]).expect("valid rows")];
    agents.extend((1..n).map(|_| AgentLikelihood::uninformative(2, vec![0.5, 0.5]).expect("valid rows")));
    ObservationModel::new(h, agents).expect("valid model")
}

/// Undirected star centered at agent 0.
pub fn example1_graph(n: usize) -> DirectedGraph {
    DirectedGraph::star(n, 0).expect("valid star")
}

/// Three hypotheses, two signals, three groups of three agents.
pub fn example2_model(true_index: usize) -> ObservationModel {
    let h = HypothesisSet::numbered(3, true_index).expect("valid hypotheses");
    let row = |p: f64| vec![p, 1.0 - p];
    let group = |w1: [f64; 3]| AgentLikelihood::from_rows(w1.iter().map(|&p| row(p)).collect()).expect("valid rows");
    let a = group([3.0 / 4.0, 1.0 / 3.0, 1.0 / 3.0]);
    let b = group([2.0 / 5.0, 2.0 / 5.0, 1.0 / 7.0]);
    let c = group([1.0 / 2.0, 1.0 / 2.0, 5.0 / 6.0]);
    let agents = [a, b, c].into_iter().flat_map(|g| std::iter::repeat_n(g, 3)).collect();
    ObservationModel::new(h, agents).expect("valid model")
}

/// `{0,1,2}` fully joined to `{3,4,5}`, which is fully joined to `{6,7,8}`; undirected.
pub fn example2_graph() -> DirectedGraph {
    let edges = (0..3)
        .flat_map(|i| (3..6).map(move |j| (i, j)))
        .chain((3..6).flat_map(|i| (6..9).map(move |j| (i, j))));
    DirectedGraph::undirected(9, edges).expect("valid graph")
}

/// Agent 4 holds 0.1 on the true state and 0.45 on each false one from step 20.
pub fn example2_attack(true_index: usize) -> AdversarySpec {
    let belief = (0..3).map(|p| if p == true_index { 0.1 } else { 0.45 }).collect();
    AdversarySpec::new([(4, Strategy::FixedBelief { belief, start: 20 })])
}
