//! Analytic gradients against central finite differences (h = 1e-4, f64).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavxai_nn::{Branched, LayerSpec, Parametrized, Sequential, Tensor};

const H: f64 = 1e-4;
const TOL: f64 = 1e-4;

fn random(rng: &mut ChaCha8Rng, dims: &[usize]) -> Tensor<f64> {
    let n: usize = dims.iter().product();
    Tensor::new(dims.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt() + b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

/// loss = sum(c * net(x)) for fixed random c
fn check(name: &str, input_dims: &[usize], specs: &[LayerSpec], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Sequential::<f64>::build(input_dims, specs, &mut rng).unwrap();
    let x = random(&mut rng, input_dims);
    let tape = net.forward(&x).unwrap();
    let c = random(&mut rng, tape.output().dims());
    let loss = |net: &Sequential<f64>, x: &Tensor<f64>| -> f64 {
        let y = net.infer(x).unwrap();
        y.data().iter().zip(c.data()).map(|(a, b)| a * b).sum()
    };
    let mut grads = net.zero_grads();
    let gx = net.backward(&tape, &c, &mut grads).unwrap();
    assert_eq!(gx.dims(), x.dims(), "{name}: input grad dims");

    let mut numeric = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let mut xm = x.clone();
        xm.data_mut()[i] -= H;
        numeric[i] = (loss(&net, &xp) - loss(&net, &xm)) / (2.0 * H);
    }
    let e = rel_err(gx.data(), &numeric);
    assert!(e <= TOL, "{name}: input gradient rel err {e}");

    for (k, g) in grads.iter().enumerate() {
        let mut numeric = vec![0.0; g.len()];
        for i in 0..g.len() {
            let orig = net.params()[k].data()[i];
            net.params_mut()[k].data_mut()[i] = orig + H;
            let lp = loss(&net, &x);
            net.params_mut()[k].data_mut()[i] = orig - H;
            let lm = loss(&net, &x);
            net.params_mut()[k].data_mut()[i] = orig;
            numeric[i] = (lp - lm) / (2.0 * H);
        }
        let e = rel_err(g.data(), &numeric);
        assert!(e <= TOL, "{name}: param {k} rel err {e}");
    }
}

#[test]
fn dense() {
    check("dense", &[6], &[LayerSpec::Dense { units: 4 }], 1);
}

#[test]
fn activations() {
    check("relu", &[7], &[LayerSpec::Dense { units: 5 }, LayerSpec::Relu], 2);
    check("tanh", &[7], &[LayerSpec::Dense { units: 5 }, LayerSpec::Tanh], 3);
    check("sigmoid", &[7], &[LayerSpec::Dense { units: 5 }, LayerSpec::Sigmoid], 4);
}

#[test]
fn conv2d() {
    let spec = |stride, padding| LayerSpec::Conv2d { filters: 3, kernel: 3, stride, padding };
    check("conv s1 p0", &[2, 5, 6], &[spec(1, 0)], 5);
    check("conv s2 p1", &[2, 7, 8], &[spec(2, 1)], 6);
}

#[test]
fn maxpool() {
    check(
        "maxpool",
        &[2, 4, 6],
        &[LayerSpec::Conv2d { filters: 2, kernel: 1, stride: 1, padding: 0 }, LayerSpec::MaxPool { size: 2 }],
        7,
    );
}

#[test]
fn flatten() {
    check("flatten", &[2, 3, 2], &[LayerSpec::Flatten, LayerSpec::Dense { units: 3 }], 8);
}

#[test]
fn gru() {
    check("gru", &[4, 5], &[LayerSpec::Gru { units: 6 }], 9);
}

#[test]
fn lstm() {
    check("lstm", &[4, 5], &[LayerSpec::Lstm { units: 6 }], 10);
}

#[test]
fn time_distributed() {
    check(
        "time_distributed",
        &[3, 1, 5, 6],
        &[
            LayerSpec::TimeDistributed {
                layers: vec![
                    LayerSpec::Conv2d { filters: 2, kernel: 3, stride: 2, padding: 1 },
                    LayerSpec::Tanh,
                    LayerSpec::Flatten,
                ],
            },
            LayerSpec::Gru { units: 4 },
        ],
        11,
    );
}

#[test]
fn composed_four_layer_net() {
    check(
        "composed",
        &[1, 6, 6],
        &[
            LayerSpec::Conv2d { filters: 3, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Tanh,
            LayerSpec::MaxPool { size: 2 },
            LayerSpec::Flatten,
            LayerSpec::Dense { units: 8 },
            LayerSpec::Sigmoid,
            LayerSpec::Dense { units: 5 },
            LayerSpec::Relu,
            LayerSpec::Dense { units: 2 },
        ],
        12,
    );
}

#[test]
fn gru_final_state_wrt_first_input() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let net = Sequential::<f64>::build(&[3, 4], &[LayerSpec::Gru { units: 5 }], &mut rng).unwrap();
    let x = random(&mut rng, &[3, 4]);
    let tape = net.forward(&x).unwrap();
    for unit in 0..5 {
        let mut up = Tensor::zeros(&[5]);
        up.data_mut()[unit] = 1.0;
        let g = net.input_gradient(&tape, &up).unwrap();
        for i in 0..4 {
            let mut xp = x.clone();
            xp.data_mut()[i] += H;
            let mut xm = x.clone();
            xm.data_mut()[i] -= H;
            let fd = (net.infer(&xp).unwrap().data()[unit] - net.infer(&xm).unwrap().data()[unit]) / (2.0 * H);
            let a = g.data()[i];
            assert!((a - fd).abs() <= TOL * (1.0 + fd.abs()), "unit {unit} x0[{i}]: {a} vs {fd}");
        }
    }
}

#[test]
fn branched_side_and_primary_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let net = Branched::<f64>::build(
        &[2, 3],
        &[LayerSpec::Gru { units: 4 }],
        2,
        &[LayerSpec::Dense { units: 3 }, LayerSpec::Tanh, LayerSpec::Dense { units: 1 }],
        &mut rng,
    )
    .unwrap();
    let x = random(&mut rng, &[2, 3]);
    let side = [0.3, -0.7];
    let tape = net.forward(&x, &side).unwrap();
    let (gx, gs) = net.input_gradient(&tape, &Tensor::vector(vec![1.0])).unwrap();
    let f = |x: &Tensor<f64>, s: &[f64]| net.infer(x, s).unwrap().data()[0];
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += H;
        let mut xm = x.clone();
        xm.data_mut()[i] -= H;
        let fd = (f(&xp, &side) - f(&xm, &side)) / (2.0 * H);
        assert!((gx.data()[i] - fd).abs() < 1e-8);
    }
    for i in 0..2 {
        let mut sp = side;
        sp[i] += H;
        let mut sm = side;
        sm[i] -= H;
        let fd = (f(&x, &sp) - f(&x, &sm)) / (2.0 * H);
        assert!((gs[i] - fd).abs() < 1e-8);
    }
}
