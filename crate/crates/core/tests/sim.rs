use std::sync::Arc;

use proptest::prelude::*;
use uavxai::sim::{checkpoint_reward, Action, Arena, Episode, LidarConfig, Point, TerminalCause, FRAMES};

fn reference() -> Arc<Arena> {
    Arc::new(Arena::reference().with_lidar(LidarConfig::compact()))
}

#[test]
fn reset_is_a_function_of_the_seed() {
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    let a = Episode::reset(arena.clone(), 42);
    let b = Episode::reset(arena.clone(), 42);
    assert_eq!(a.state(), b.state());
    assert_eq!(a.goal_index(), b.goal_index());
    assert_eq!(a.observation().stack(), b.observation().stack());
    let differs = (0..20).any(|s| Episode::reset(arena.clone(), s).state() != a.state());
    assert!(differs);
}

#[test]
fn goals_are_drawn_evenly() {
    // 10k fair coin flips: 4 sigma is 200 either side of 5000
    let arena = reference();
    let first = (0..10_000u64).filter(|&s| Episode::reset(arena.clone(), s).goal_index() == 0).count();
    assert!((4800..=5200).contains(&first), "goal 0 drawn {first} times");
}

#[test]
fn initial_distance_without_jitter() {
    let arena = reference();
    for seed in 0..8 {
        let ep = Episode::reset(arena.clone(), seed);
        let d = ep.observation().distance;
        assert!((d - 425f64.sqrt()).abs() < 1e-12, "distance {d}");
    }
}

#[test]
fn checkpoints_pay_once_each_in_order() {
    let arena = reference();
    let n = arena.checkpoints.len();
    let mut ep = Episode::place(arena.clone(), Point::new(5.0, 2.0), 0.0, 0, 1.0);
    let k = arena.kinematics;
    let mut paid = Vec::new();
    while !ep.cause().is_terminal() && ep.state().position.x < 22.0 {
        let out = ep.step(Action { v: k.v_max, omega: 0.0 }).unwrap();
        if let Some(c) = out.checkpoint {
            assert_eq!(out.reward, checkpoint_reward(c, n));
            paid.push(c);
        }
    }
    assert_eq!(paid, (1..=n).collect::<Vec<_>>());
}

#[test]
fn frame_stack_shifts_by_one() {
    let arena = reference();
    let mut ep = Episode::reset(arena.clone(), 3);
    let k = arena.kinematics;
    for _ in 0..3 {
        let before = ep.observation().frames.clone();
        ep.step(Action { v: k.v_max, omega: 0.3 }).unwrap();
        let after = &ep.observation().frames;
        assert_eq!(after.len(), FRAMES);
        for i in 0..FRAMES - 1 {
            assert_eq!(after[i].data, before[i + 1].data);
        }
    }
}

#[test]
fn stepping_after_the_end_fails() {
    let arena = reference();
    // straight into the first column
    let mut ep = Episode::place(arena.clone(), Point::new(9.0, 8.5), 0.0, 0, 1.0);
    let k = arena.kinematics;
    while !ep.cause().is_terminal() {
        ep.step(Action { v: k.v_max, omega: 0.0 }).unwrap();
    }
    assert_eq!(ep.cause(), TerminalCause::Collision);
    assert!(ep.step(Action::default()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clamped_actions_stay_in_bounds(v in -10.0f64..10.0, omega in -10.0f64..10.0) {
        let k = Arena::reference().kinematics;
        let a = Action { v, omega }.clamp(&k);
        prop_assert!(a.within(&k));
        let back = Action::from_normalized(a.normalized(&k), &k);
        prop_assert!((back.v - a.v).abs() < 1e-9 && (back.omega - a.omega).abs() < 1e-9);
    }

    #[test]
    fn bearing_is_wrapped(seed in 0u64..5000) {
        let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
        let ep = Episode::reset(arena, seed);
        let b = ep.observation().bearing;
        prop_assert!((-std::f64::consts::PI..std::f64::consts::PI).contains(&b));
    }
}
