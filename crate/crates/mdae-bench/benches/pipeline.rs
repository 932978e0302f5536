//! Benchmarks for the structural kernels and the end-to-end restart pipeline.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use mdae_core::graph::{dm_decompose, max_matching, BipartiteGraph};
use mdae_core::mcarray::ModeChange;
use mdae_core::model::parse_model;
use mdae_core::rescale::{solve_min_offsets, PairConstraint, RescalingConstraints};
use mdae_core::{generate_restart, VarKey};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CUPBALL: &str = r#"
model cupball
param L = 1;
param g = 981/100;
var x, y, lambda;
mode free {
  eq e1: der(x, 2) + lambda*x = 0;
  eq e2: der(y, 2) + lambda*y + g = 0;
  eq k3: lambda = 0;
}
mode taut {
  eq e1: der(x, 2) + lambda*x = 0;
  eq e2: der(y, 2) + lambda*y + g = 0;
  eq k1: L^2 - (x^2 + y^2) = 0;
}
transition free -> taut on up(x^2 + y^2 - L^2);
"#;

fn random_graph(rng: &mut ChaCha8Rng, n: usize, density: f64) -> BipartiteGraph {
    let mut g = BipartiteGraph::new(n, n);
    for e in 0..n {
        for v in 0..n {
            if rng.gen_bool(density) {
                g.add_edge(e, v);
            }
        }
    }
    g
}

fn bench_matching(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let graphs: Vec<BipartiteGraph> = (0..64).map(|_| random_graph(&mut rng, 24, 0.2)).collect();
    c.bench_function("max_matching_24x24", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % graphs.len();
            max_matching(&graphs[i])
        })
    });
    c.bench_function("dm_decompose_24x24", |b| {
        let mut i = 0;
        b.iter(|| {
            i = (i + 1) % graphs.len();
            dm_decompose(&graphs[i])
        })
    });
}

fn bench_offsets(c: &mut Criterion) {
    // a chain of Euler pairs: mu(x_i) = 1 + mu(x_{i+1})
    let n = 64;
    let vars: Vec<VarKey> = (0..=n)
        .map(|i| VarKey::state(mdae_core::Sym::new("x"), (n - i) as u32, i as i32))
        .collect();
    let pairs: Vec<PairConstraint> = (0..n)
        .map(|i| PairConstraint {
            label: format!("E{i}"),
            x: i,
            n: 1,
            zs: vec![i + 1],
        })
        .collect();
    let constraints = RescalingConstraints {
        vars,
        pinned_zero: (0..=n).map(|i| i == n).collect(),
        rows: vec![],
        pairs,
    };
    c.bench_function("offset_fixpoint_chain_64", |b| {
        b.iter_batched(
            || constraints.clone(),
            |c| solve_min_offsets(&c),
            BatchSize::SmallInput,
        )
    });
}

fn bench_pipeline(c: &mut Criterion) {
    let model = parse_model(CUPBALL).unwrap();
    let mc = ModeChange::from_model(&model, "free", "taut").unwrap();
    c.bench_function("restart_pipeline_cupball", |b| {
        b.iter(|| generate_restart(&mc, None).unwrap())
    });
}

criterion_group!(benches, bench_matching, bench_offsets, bench_pipeline);
criterion_main!(benches);
