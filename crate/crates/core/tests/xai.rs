use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavxai::ddpg::{Actor, TrainConfig};
use uavxai::sim::{Arena, Episode, LidarConfig, Observation};
use uavxai::xai::{deep_attribution, exact_shapley, gru_layer_shap, ActorExplainer, Background, GruBackground, SequentialExplainer, SplitModel};
use uavxai_nn::{LayerSpec, Sequential, Tensor};

fn points(rng: &mut ChaCha8Rng, n: usize, len: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

fn actor_and_states(n: usize) -> (Actor, Vec<Observation>) {
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    let actor = Actor::new(&TrainConfig::default().network, &arena.lidar, arena.kinematics, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
    let states = (0..n as u64).map(|s| Episode::reset(arena.clone(), s).observation().clone()).collect();
    (actor, states)
}

#[test]
fn linear_attribution_is_weight_times_offset_from_background_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 7;
    let net = Sequential::<f64>::build(&[d], &[LayerSpec::Dense { units: 1 }], &mut rng).unwrap();
    let f = |x: &[f64]| net.infer(&Tensor::vector(x.to_vec())).unwrap().data()[0];
    let zero = f(&vec![0.0; d]);
    let w: Vec<f64> = (0..d)
        .map(|i| {
            let mut e = vec![0.0; d];
            e[i] = 1.0;
            f(&e) - zero
        })
        .collect();
    let bg = points(&mut rng, 12, d);
    let mean: Vec<f64> = (0..d).map(|i| bg.iter().map(|b| b[i]).sum::<f64>() / bg.len() as f64).collect();
    let model = SequentialExplainer::new(net.clone(), 0, 1.0);
    let background = Background::build(&model, bg.clone()).unwrap();
    for x in points(&mut rng, 5, d) {
        let deep = deep_attribution(&model, &x, &background).unwrap().values;
        let exact = exact_shapley(&f, &x, &bg).unwrap();
        for i in 0..d {
            let closed = w[i] * (x[i] - mean[i]);
            assert!((deep[i] - closed).abs() < 1e-9, "deep {i}");
            assert!((exact[i] - closed).abs() < 1e-9, "exact {i}");
        }
    }
}

#[test]
fn background_shape_is_checked() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let net = Sequential::<f64>::build(&[3], &[LayerSpec::Dense { units: 1 }], &mut rng).unwrap();
    let model = SequentialExplainer::new(net, 0, 1.0);
    assert!(Background::build(&model, vec![vec![0.0; 4]]).is_err());
    assert!(Background::build(&model, Vec::new()).is_err());
}

#[test]
fn actor_attribution_is_complete() {
    let (actor, states) = actor_and_states(12);
    let model = ActorExplainer::new(&actor);
    let bg: Vec<Vec<f64>> = states[..6].iter().map(|o| ActorExplainer::input_of(&actor, o)).collect();
    let background = Background::build(&model, bg).unwrap();
    for o in &states[6..] {
        let frame = deep_attribution(&model, &ActorExplainer::input_of(&actor, o), &background).unwrap();
        assert_eq!(frame.side.len(), 2);
        // the attribution explains the actual yaw of the actor
        let yaw = actor.act(o).unwrap().omega;
        assert!((frame.output - yaw).abs() < 1e-5 * (1.0 + yaw.abs()));
        assert!(frame.completeness_gap() <= 1e-4 * (1.0 + frame.output.abs()));
    }
}

#[test]
fn split_halves_compose_to_the_actor() {
    let (actor, states) = actor_and_states(4);
    let split = SplitModel::from_actor(&actor).unwrap();
    assert_eq!(split.embedding_len(), 48);
    for o in &states {
        let stack = actor.stack::<f32>(o).unwrap();
        let side = actor.positional(o).map(|v| v as f32);
        let composed = split.decide(&split.embed(&stack).unwrap(), &side).unwrap();
        let whole = actor.net().infer(&stack, &side).unwrap();
        assert_eq!(composed.data(), whole.data());
    }
}

#[test]
fn gru_attribution_covers_the_embedding() {
    let (actor, states) = actor_and_states(10);
    let cache = GruBackground::new(&actor, &states[..5]).unwrap();
    for o in &states[5..] {
        let frame = gru_layer_shap(&actor, o, &cache).unwrap();
        assert_eq!(frame.values.len(), 48);
        assert_eq!(frame.side.len(), 2);
        let yaw = actor.act(o).unwrap().omega;
        assert!((frame.output - yaw).abs() < 1e-5 * (1.0 + yaw.abs()));
        assert!(frame.completeness_gap() <= 1e-4 * (1.0 + frame.output.abs()));
    }
}
