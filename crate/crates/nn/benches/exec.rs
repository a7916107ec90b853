use criterion::{criterion_group, criterion_main, Criterion};
use rand::SeedableRng;
use std::hint::black_box;
use uavxai_nn::exec::Exec;
use uavxai_nn::{LayerSpec, Parametrized, Sequential, Tensor};

fn batch_gradients(c: &mut Criterion) {
    let mut rng = rand::rngs::StdRng::seed_from_u64(1);
    let spec = [
        LayerSpec::TimeDistributed {
            layers: vec![
                LayerSpec::Conv2d { filters: 4, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv2d { filters: 8, kernel: 3, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Flatten,
            ],
        },
        LayerSpec::Gru { units: 48 },
    ];
    let net = Sequential::<f32>::build(&[5, 1, 8, 32], &spec, &mut rng).unwrap();
    let inputs: Vec<Tensor<f32>> = (0..32)
        .map(|i| Tensor::filled(&[5, 1, 8, 32], 0.01 * i as f32))
        .collect();
    let upstream = Tensor::filled(&[48], 1.0f32);
    let run = |exec: Exec| {
        let per = exec.map(&inputs, |x| {
            let tape = net.forward(x).unwrap();
            let mut g = net.zero_grads();
            net.backward(&tape, &upstream, &mut g).unwrap();
            g
        });
        let mut total = net.zero_grads();
        for g in per {
            for (t, s) in total.iter_mut().zip(&g) {
                t.add_assign(s);
            }
        }
        total
    };
    let mut group = c.benchmark_group("minibatch_gradients");
    group.sample_size(20);
    group.bench_function("sequential", |b| b.iter(|| black_box(run(Exec::Sequential))));
    group.bench_function("parallel", |b| b.iter(|| black_box(run(Exec::Parallel))));
    group.finish();
}

criterion_group!(benches, batch_gradients);
criterion_main!(benches);
