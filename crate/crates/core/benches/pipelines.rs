use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavxai::attack::sweep;
use uavxai::ddpg::{Actor, TrainConfig};
use uavxai::detectors::Explainers;
use uavxai::runner::evaluate;
use uavxai::sim::{Arena, Episode, LidarConfig, Observation};
use uavxai::Exec;

fn setup() -> (Arc<Arena>, Actor, Vec<Observation>) {
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    let actor = Actor::new(&TrainConfig::default().network, &arena.lidar, arena.kinematics, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let states = (0..16).map(|s| Episode::reset(arena.clone(), s).observation().clone()).collect();
    (arena, actor, states)
}

fn modes() -> [(&'static str, Exec); 2] {
    [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)]
}

fn pipelines(c: &mut Criterion) {
    let (arena, actor, states) = setup();
    let ex = Explainers::new(&actor, &states[..8]).unwrap();

    let mut g = c.benchmark_group("attack_sweep");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| black_box(sweep(&actor, &states, &[1.0, 4.0], &[5], exec).unwrap())));
    }
    g.finish();

    let mut g = c.benchmark_group("full_attribution_batch");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| black_box(exec.map(&states, |o| ex.full(o).unwrap().output))));
    }
    g.finish();

    let seeds: Vec<u64> = (0..8).collect();
    let mut g = c.benchmark_group("evaluation");
    g.sample_size(10);
    for (name, exec) in modes() {
        g.bench_function(name, |b| b.iter(|| black_box(evaluate(&arena, &actor, None, &seeds, exec).unwrap().completion)));
    }
    g.finish();
}

criterion_group!(benches, pipelines);
criterion_main!(benches);
