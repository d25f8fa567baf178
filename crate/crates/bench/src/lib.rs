//! Benchmark bodies; `benches/` only wires them into criterion groups.

use std::collections::BTreeSet;
use std::hint::black_box;

use criterion::{BenchmarkId, Criterion, Throughput};
use minrule_core::engine::{RecordSpec, Simulation, SimulationConfig};
use minrule_core::graphs::{strongly_r_robust_wrt, DirectedGraph, GraphSchedule};
use minrule_core::model::{AgentLikelihood, HypothesisSet, ObservationModel};
use minrule_core::{presets, Rule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Undirected ring with chords to the `k` next agents on each side.
pub fn ring_lattice(n: usize, k: usize) -> DirectedGraph {
    let edges = (0..n).flat_map(|i| (1..=k).map(move |d| (i, (i + d) % n)));
    DirectedGraph::undirected(n, edges).expect("valid lattice")
}

/// `n` agents, `m` hypotheses; agent `i` only separates hypothesis `i % m` from the rest.
pub fn scattered_model(n: usize, m: usize) -> ObservationModel {
    let h = HypothesisSet::numbered(m, 0).expect("valid hypotheses");
    let agents = (0..n)
        .map(|i| {
            let rows = (0..m)
                .map(|k| if k == i % m { vec![0.7, 0.3] } else { vec![0.4, 0.6] })
                .collect();
            AgentLikelihood::from_rows(rows).expect("valid rows")
        })
        .collect();
    ObservationModel::new(h, agents).expect("valid model")
}

pub fn random_digraph(rng: &mut ChaCha8Rng, n: usize, p: f64) -> DirectedGraph {
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter(|&(i, j)| i != j)
        .collect();
    let kept: Vec<(usize, usize)> = edges.into_iter().filter(|_| rng.random_bool(p)).collect();
    DirectedGraph::new(n, kept).expect("valid graph")
}

/// Cost of one synchronous round for each rule on a ring lattice.
pub fn rounds(c: &mut Criterion) {
    let mut group = c.benchmark_group("round");
    for n in [16, 128, 512] {
        let graph = ring_lattice(n, 3);
        for rule in [Rule::MinRule, Rule::Lfrhe { f: 1 }, Rule::Linear, Rule::LogLinear] {
            let cfg = SimulationConfig::new(
                scattered_model(n, 4),
                GraphSchedule::fixed(graph.clone()),
                rule,
                usize::MAX,
                1,
            )
            .with_record(RecordSpec::at([]));
            let mut sim = Simulation::new(&cfg).expect("valid config");
            group.throughput(Throughput::Elements(n as u64));
            group.bench_with_input(BenchmarkId::new(rule.name(), n), &n, |b, _| {
                b.iter(|| sim.step().expect("round"));
            });
        }
    }
    group.finish();
}

/// A full attacked run of the nine-agent example.
pub fn attacked_run(c: &mut Criterion) {
    let cfg = SimulationConfig::new(
        presets::example2_model(0),
        GraphSchedule::fixed(presets::example2_graph()),
        Rule::Lfrhe { f: 1 },
        1_000,
        3,
    )
    .with_adversary(presets::example2_attack(0))
    .with_record(RecordSpec::at([]));
    c.bench_function("example2_lfrhe_1000_steps", |b| {
        b.iter(|| minrule_core::run(black_box(&cfg)).expect("run"))
    });
}

/// Percolation-based strong robustness on dense random digraphs.
pub fn robustness(c: &mut Criterion) {
    let mut group = c.benchmark_group("strong_robustness");
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for n in [32, 128, 512] {
        let g = random_digraph(&mut rng, n, 0.2);
        let sources: BTreeSet<usize> = (0..n / 8).collect();
        group.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| strongly_r_robust_wrt(black_box(&g), black_box(&sources), 3).expect("valid"))
        });
    }
    group.finish();
}
