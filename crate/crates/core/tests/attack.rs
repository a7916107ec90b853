use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use uavxai::attack::{attack, bim, fgsm, yaw_gradient, AttackConfig, Bursts};
use uavxai::ddpg::{Actor, TrainConfig};
use uavxai::runner::Tamper;
use uavxai::sim::{Arena, Episode, LidarConfig, Observation};

fn setup(seed: u64) -> (Actor, Observation) {
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    let actor = Actor::new(&TrainConfig::default().network, &arena.lidar, arena.kinematics, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let obs = Episode::reset(arena, seed).observation().clone();
    (actor, obs)
}

#[test]
fn zero_budget_is_a_no_op() {
    let (actor, obs) = setup(1);
    let x = bim(&actor, &obs, 0.0, 10).unwrap();
    assert_eq!(x.stack(), obs.stack());
    let r = attack(&actor, &obs, 0.0, 10).unwrap();
    assert_eq!(r.deflection_deg, 0.0);
    assert!(!r.success);
}

#[test]
fn yaw_gradient_agrees_with_finite_differences() {
    let (actor, obs) = setup(2);
    let net = actor.net().cast::<f64>();
    let dims = actor.stack_dims();
    let stack: Vec<f64> = obs.stack().iter().map(|&v| v as f64).collect();
    let side: Vec<f64> = actor.positional(&obs).to_vec();
    let w = actor.kinematics().omega_max;
    let (_, g) = yaw_gradient(&net, &dims, &stack, &side, w).unwrap();

    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[b].abs().total_cmp(&g[a].abs()));
    let h = 1e-6;
    for &i in &order[..12] {
        let mut up = stack.clone();
        up[i] += h;
        let mut down = stack.clone();
        down[i] -= h;
        let (yu, _) = yaw_gradient(&net, &dims, &up, &side, w).unwrap();
        let (yd, _) = yaw_gradient(&net, &dims, &down, &side, w).unwrap();
        let fd = (yu - yd) / (2.0 * h);
        assert!((fd - g[i]).abs() <= 1e-4 * g[i].abs().max(1e-8), "pixel {i}: fd {fd} analytic {}", g[i]);
    }
}

#[test]
fn fgsm_is_one_signed_step_away_from_the_clean_yaw() {
    let (actor, obs) = setup(3);
    let eps = 2.0;
    let budget = (eps / 255.0) as f32;
    let stack = obs.stack();
    let side = actor.positional(&obs).map(|v| v as f32);
    let (yaw, g) = yaw_gradient(actor.net(), &actor.stack_dims(), &stack, &side, actor.kinematics().omega_max).unwrap();
    let dir = if yaw > 0.0 { -1.0f32 } else { 1.0 };
    let expected: Vec<f32> = stack
        .iter()
        .zip(&g)
        .map(|(&x, &gi)| (x + budget * (dir * gi).signum() * ((gi != 0.0) as u8 as f32)).clamp(0.0, 1.0))
        .collect();
    assert_eq!(fgsm(&actor, &obs, eps).unwrap().stack(), expected);
    assert_eq!(bim(&actor, &obs, eps, 1).unwrap().stack(), expected);
}

#[test]
fn more_budget_deflects_at_least_as_much_on_average() {
    let (actor, obs) = setup(4);
    let small = attack(&actor, &obs, 0.5, 5).unwrap().deflection_deg;
    let large = attack(&actor, &obs, 8.0, 5).unwrap().deflection_deg;
    assert!(large >= small, "{small} -> {large}");
}

#[test]
fn bursts_follow_onset_and_duration() {
    let (actor, obs) = setup(5);
    let always = AttackConfig { onset: 1.0, duration: 3, ..AttackConfig::default() };
    let mut b = Bursts::new(&actor, always, ChaCha8Rng::seed_from_u64(0));
    assert!((0..7).all(|t| b.tamper(t, &obs).unwrap().is_some()));

    let never = AttackConfig { onset: 0.0, ..AttackConfig::default() };
    let mut b = Bursts::new(&actor, never, ChaCha8Rng::seed_from_u64(0));
    assert!((0..20).all(|t| b.tamper(t, &obs).unwrap().is_none()));

    // runs of attacked steps come in whole multiples of the duration
    let cfg = AttackConfig { onset: 0.3, duration: 4, ..AttackConfig::default() };
    let mut b = Bursts::new(&actor, cfg, ChaCha8Rng::seed_from_u64(9));
    let hits: Vec<bool> = (0..200).map(|t| b.tamper(t, &obs).unwrap().is_some()).collect();
    // a burst still running at the end is cut short, so only closed runs count
    let mut run = 0;
    for h in &hits {
        if *h {
            run += 1;
        } else {
            assert_eq!(run % 4, 0, "run of {run}");
            run = 0;
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn perturbation_stays_in_budget_and_range(seed in 0u64..1000, eps in 0.0f64..16.0, iterations in 1usize..8) {
        let (actor, obs) = setup(seed);
        let x = bim(&actor, &obs, eps, iterations).unwrap().stack();
        let budget = (eps / 255.0) as f32;
        for (a, c) in x.iter().zip(obs.stack()) {
            prop_assert!((0.0..=1.0).contains(a));
            prop_assert!((a - c).abs() <= budget * (1.0 + 1e-5));
        }
    }
}
