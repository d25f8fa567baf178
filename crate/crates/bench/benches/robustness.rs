use criterion::{criterion_group, criterion_main};

criterion_group!(benches, minrule_bench::robustness);
criterion_main!(benches);
