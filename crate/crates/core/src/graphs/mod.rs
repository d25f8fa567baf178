//! Directed (possibly time-varying) communication graphs and the structural
//! conditions the learning guarantees rest on.
//!
//! An edge `(i, j)` means agent `i` transmits to agent `j`, so the neighbors
//! of `j` are its in-neighbors. Self-loops are implicit and never stored.

mod certify;
mod robust;

pub use certify::{certify, CertificationReport, CertifyMode, ConnectivityCheck, PairCertificate};
pub use robust::{r_reachable, strongly_r_robust_wrt, Robustness};

use std::collections::{BTreeSet, VecDeque};

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph", into = "RawGraph")]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
    in_adj: Vec<Vec<usize>>,
    out_adj: Vec<Vec<usize>>,
}

#[derive(Serialize, Deserialize)]
struct RawGraph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl TryFrom<RawGraph> for DirectedGraph {
    type Error = Error;
    fn try_from(raw: RawGraph) -> Result<Self> {
        DirectedGraph::new(raw.n, raw.edges)
    }
}

impl From<DirectedGraph> for RawGraph {
    fn from(g: DirectedGraph) -> Self {
        RawGraph {
            n: g.n,
            edges: g.edges.into_iter().collect(),
        }
    }
}

impl DirectedGraph {
    /// Builds a graph from directed edges. Self-loops are dropped (they are implied).
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (i, j) in edges {
            for v in [i, j] {
                if v >= n {
                    return Err(Error::IndexOutOfRange { index: v, len: n });
                }
            }
            if i != j {
                set.insert((i, j));
            }
        }
        let mut in_adj = vec![Vec::new(); n];
        let mut out_adj = vec![Vec::new(); n];
        for &(i, j) in &set {
            out_adj[i].push(j);
            in_adj[j].push(i);
        }
        for v in in_adj.iter_mut() {
            v.sort_unstable();
        }
        Ok(Self {
            n,
            edges: set,
            in_adj,
            out_adj,
        })
    }

    /// Each undirected edge becomes a pair of directed edges.
    pub fn undirected(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        Self::new(n, edges.into_iter().flat_map(|(i, j)| [(i, j), (j, i)]))
    }

    pub fn empty(n: usize) -> Self {
        Self::new(n, []).expect("no edges")
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (0..n).map(move |j| (i, j)))).expect("in range")
    }

    /// Undirected star around `center`.
    pub fn star(n: usize, center: usize) -> Result<Self> {
        Self::undirected(n, (0..n).filter(|&j| j != center).map(|j| (center, j)))
    }

    /// Directed path `0 -> 1 -> ... -> n-1`.
    pub fn chain(n: usize) -> Self {
        Self::new(n, (1..n).map(|j| (j - 1, j))).expect("in range")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.edges
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Agents that transmit to `i`, ascending, excluding `i`.
    pub fn in_neighbors(&self, i: usize) -> &[usize] {
        &self.in_adj[i]
    }

    /// Agents `i` transmits to, ascending, excluding `i`.
    pub fn out_neighbors(&self, i: usize) -> &[usize] {
        &self.out_adj[i]
    }

    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|&(i, j)| self.edges.contains(&(j, i)))
    }

    pub fn union(&self, other: &DirectedGraph) -> Result<DirectedGraph> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                found: other.n,
            });
        }
        Self::new(self.n, self.edges.iter().chain(&other.edges).copied())
    }

    /// Subgraph on the agents not in `removed`, relabelled densely in ascending order.
    pub fn without(&self, removed: &BTreeSet<usize>) -> DirectedGraph {
        let keep: Vec<usize> = (0..self.n).filter(|v| !removed.contains(v)).collect();
        let mut relabel = vec![usize::MAX; self.n];
        for (new, &old) in keep.iter().enumerate() {
            relabel[old] = new;
        }
        let edges = self
            .edges
            .iter()
            .filter(|(i, j)| relabel[*i] != usize::MAX && relabel[*j] != usize::MAX)
            .map(|&(i, j)| (relabel[i], relabel[j]));
        DirectedGraph::new(keep.len(), edges).expect("relabelled in range")
    }

    fn sccs(&self) -> Vec<Vec<usize>> {
        let mut g = DiGraph::<(), ()>::with_capacity(self.n, self.edges.len());
        let nodes: Vec<_> = (0..self.n).map(|_| g.add_node(())).collect();
        for &(i, j) in &self.edges {
            g.add_edge(nodes[i], nodes[j], ());
        }
        tarjan_scc(&g)
            .into_iter()
            .map(|c| c.into_iter().map(|ix| ix.index()).collect())
            .collect()
    }
}

/// Schedule of graphs indexed by time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSchedule {
    Static {
        graph: DirectedGraph,
    },
    /// `graph_at(t) = sequence[t % sequence.len()]`.
    Periodic {
        sequence: Vec<DirectedGraph>,
    },
    /// `graph_at(t) = sequence[t]`, with the last graph repeated forever.
    Explicit {
        sequence: Vec<DirectedGraph>,
    },
}

impl GraphSchedule {
    pub fn fixed(graph: DirectedGraph) -> Self {
        GraphSchedule::Static { graph }
    }

    pub fn periodic(sequence: Vec<DirectedGraph>) -> Result<Self> {
        Self::check_sequence(&sequence)?;
        Ok(GraphSchedule::Periodic { sequence })
    }

    pub fn explicit(sequence: Vec<DirectedGraph>) -> Result<Self> {
        Self::check_sequence(&sequence)?;
        Ok(GraphSchedule::Explicit { sequence })
    }

    fn check_sequence(sequence: &[DirectedGraph]) -> Result<()> {
        let first = sequence
            .first()
            .ok_or_else(|| Error::InvalidArgument("schedule needs at least one graph".into()))?;
        if let Some(g) = sequence.iter().find(|g| g.n() != first.n()) {
            return Err(Error::DimensionMismatch {
                expected: first.n(),
                found: g.n(),
            });
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        match self {
            GraphSchedule::Static { graph } => graph.n(),
            GraphSchedule::Periodic { sequence } | GraphSchedule::Explicit { sequence } => sequence[0].n(),
        }
    }

    pub fn graph_at(&self, t: usize) -> &DirectedGraph {
        match self {
            GraphSchedule::Static { graph } => graph,
            GraphSchedule::Periodic { sequence } => &sequence[t % sequence.len()],
            GraphSchedule::Explicit { sequence } => &sequence[t.min(sequence.len() - 1)],
        }
    }

    /// Every distinct graph slot of the schedule.
    pub fn graphs(&self) -> &[DirectedGraph] {
        match self {
            GraphSchedule::Static { graph } => std::slice::from_ref(graph),
            GraphSchedule::Periodic { sequence } | GraphSchedule::Explicit { sequence } => sequence,
        }
    }

    /// The single graph, when every step uses the same one.
    pub fn as_static(&self) -> Option<&DirectedGraph> {
        match self {
            GraphSchedule::Static { graph } => Some(graph),
            GraphSchedule::Periodic { sequence } | GraphSchedule::Explicit { sequence } => {
                sequence.iter().all(|g| g == &sequence[0]).then(|| &sequence[0])
            }
        }
    }

    pub fn is_static(&self) -> bool {
        self.as_static().is_some()
    }

    /// A horizon that makes the joint-connectivity check over `[0, horizon)`
    /// exact for this schedule: beyond it every window repeats one already seen.
    pub fn sufficient_horizon(&self, window: usize) -> usize {
        let window = window.max(1);
        match self {
            GraphSchedule::Static { .. } => window,
            GraphSchedule::Periodic { sequence } => lcm(sequence.len(), window),
            GraphSchedule::Explicit { sequence } => sequence.len().div_ceil(window) * window + window,
        }
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn lcm(a: usize, b: usize) -> usize {
    a / gcd(a, b) * b
}

fn check_agent(n: usize, i: usize) -> Result<()> {
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, len: n });
    }
    Ok(())
}

fn check_set(n: usize, set: &BTreeSet<usize>, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} must be non-empty")));
    }
    set.iter().try_for_each(|&i| check_agent(n, i))
}

/// `N_i[t]`: in-neighbors of `i` at step `t`, excluding `i`.
pub fn in_neighbors(schedule: &GraphSchedule, i: usize, t: usize) -> Result<&[usize]> {
    check_agent(schedule.n(), i)?;
    Ok(schedule.graph_at(t).in_neighbors(i))
}

pub fn strongly_connected(g: &DirectedGraph) -> bool {
    g.n() <= 1 || g.sccs().len() == 1
}

/// Union graph of `schedule` over steps `[from, to)`.
pub fn union_over(schedule: &GraphSchedule, from: usize, to: usize) -> DirectedGraph {
    let edges = (from..to).flat_map(|t| schedule.graph_at(t).edges().iter().copied());
    DirectedGraph::new(schedule.n(), edges.collect::<Vec<_>>()).expect("same vertex set")
}

/// Every window `[rT, (r+1)T)` that fits inside `horizon` has a strongly
/// connected union graph.
pub fn jointly_strongly_connected(schedule: &GraphSchedule, window: usize, horizon: usize) -> Result<bool> {
    if window == 0 {
        return Err(Error::InvalidArgument("window length must be at least 1".into()));
    }
    if horizon < window {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is shorter than window {window}"
        )));
    }
    Ok((0..horizon / window).all(|r| strongly_connected(&union_over(schedule, r * window, (r + 1) * window))))
}

/// Nodes with a directed path from some source, sources included.
pub fn reachable_from(g: &DirectedGraph, sources: &BTreeSet<usize>) -> Result<BTreeSet<usize>> {
    check_set(g.n(), sources, "source set")?;
    let mut seen = vec![false; g.n()];
    let mut queue: VecDeque<usize> = sources.iter().copied().collect();
    for &s in sources {
        seen[s] = true;
    }
    while let Some(v) = queue.pop_front() {
        for &w in g.out_neighbors(v) {
            if !seen[w] {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    Ok((0..g.n()).filter(|&v| seen[v]).collect())
}

/// Strongly connected components with no incoming edge from outside,
/// ordered by smallest member.
pub fn source_components(g: &DirectedGraph) -> Vec<BTreeSet<usize>> {
    let comps = g.sccs();
    let mut comp_of = vec![0; g.n()];
    for (k, c) in comps.iter().enumerate() {
        for &v in c {
            comp_of[v] = k;
        }
    }
    let mut has_incoming = vec![false; comps.len()];
    for &(i, j) in g.edges() {
        if comp_of[i] != comp_of[j] {
            has_incoming[comp_of[j]] = true;
        }
    }
    let mut out: Vec<BTreeSet<usize>> = comps
        .into_iter()
        .enumerate()
        .filter(|(k, _)| !has_incoming[*k])
        .map(|(_, c)| c.into_iter().collect())
        .collect();
    out.sort_by_key(|c| *c.iter().next().expect("components are non-empty"));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    #[test]
    fn construction_rules() {
        let g = DirectedGraph::new(3, [(0, 0), (0, 1)]).unwrap();
        assert_eq!(g.edges().len(), 1, "self-loops are implicit");
        assert!(matches!(
            DirectedGraph::new(2, [(0, 2)]),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn star_neighbors() {
        let sched = GraphSchedule::fixed(DirectedGraph::star(5, 0).unwrap());
        for t in [0, 7, 1000] {
            assert_eq!(in_neighbors(&sched, 2, t).unwrap(), &[0]);
        }
        assert_eq!(in_neighbors(&sched, 0, 0).unwrap(), &[1, 2, 3, 4]);
        assert!(in_neighbors(&sched, 5, 0).is_err());
    }

    #[test]
    fn empty_graph_has_no_neighbors() {
        let sched = GraphSchedule::fixed(DirectedGraph::empty(3));
        assert!(in_neighbors(&sched, 1, 0).unwrap().is_empty());
    }

    #[test]
    fn periodic_indexing() {
        let even = DirectedGraph::new(3, [(0, 1)]).unwrap();
        let odd = DirectedGraph::new(3, [(2, 1)]).unwrap();
        let sched = GraphSchedule::periodic(vec![even, odd]).unwrap();
        assert_eq!(in_neighbors(&sched, 1, 5).unwrap(), &[2]);
        assert_eq!(in_neighbors(&sched, 1, 4).unwrap(), &[0]);
    }

    #[test]
    fn explicit_extends_last_graph() {
        let a = DirectedGraph::new(2, [(0, 1)]).unwrap();
        let b = DirectedGraph::new(2, [(1, 0)]).unwrap();
        let sched = GraphSchedule::explicit(vec![a, b.clone()]).unwrap();
        assert_eq!(sched.graph_at(100), &b);
    }

    #[test]
    fn strong_connectivity_examples() {
        assert!(strongly_connected(&DirectedGraph::empty(1)));
        assert!(strongly_connected(&presets::example2_graph()));
        assert!(!strongly_connected(&DirectedGraph::chain(3)));
    }

    #[test]
    fn joint_connectivity_examples() {
        let g = DirectedGraph::complete(4);
        assert!(jointly_strongly_connected(&GraphSchedule::fixed(g), 1, 1).unwrap());

        let even = DirectedGraph::new(2, [(0, 1)]).unwrap();
        let odd = DirectedGraph::new(2, [(1, 0)]).unwrap();
        let sched = GraphSchedule::periodic(vec![even, odd]).unwrap();
        assert!(jointly_strongly_connected(&sched, 2, sched.sufficient_horizon(2)).unwrap());
        assert!(!jointly_strongly_connected(&sched, 1, sched.sufficient_horizon(1)).unwrap());
        assert!(jointly_strongly_connected(&sched, 2, 1).is_err());

        // agent 2 never has an incident edge
        let iso = GraphSchedule::fixed(DirectedGraph::undirected(3, [(0, 1)]).unwrap());
        for t in 1..5 {
            assert!(!jointly_strongly_connected(&iso, t, iso.sufficient_horizon(t)).unwrap());
        }
    }

    #[test]
    fn reachability_examples() {
        assert_eq!(
            reachable_from(&DirectedGraph::complete(4), &set(&[0])).unwrap(),
            set(&[0, 1, 2, 3])
        );
        assert_eq!(
            reachable_from(&DirectedGraph::chain(3), &set(&[1])).unwrap(),
            set(&[1, 2])
        );
        let star = DirectedGraph::star(5, 0).unwrap();
        assert_eq!(reachable_from(&star, &set(&[0])).unwrap(), (0..5).collect());
        assert!(reachable_from(&star, &BTreeSet::new()).is_err());
    }

    #[test]
    fn source_component_examples() {
        assert_eq!(source_components(&DirectedGraph::complete(3)), vec![set(&[0, 1, 2])]);
        assert_eq!(source_components(&DirectedGraph::chain(3)), vec![set(&[0])]);
        let two = DirectedGraph::undirected(4, [(0, 1), (2, 3)]).unwrap();
        assert_eq!(source_components(&two), vec![set(&[0, 1]), set(&[2, 3])]);
    }

    #[test]
    fn without_relabels() {
        let g = presets::example2_graph().without(&set(&[0, 1, 2]));
        assert_eq!(g.n(), 6);
        assert_eq!(g.in_neighbors(0), &[3, 4, 5]);
    }
}
