use std::f64::consts::FRAC_PI_2;

use proptest::prelude::*;
use uavxai::apf::{attractive_force, repulsive_force, shape, ApfConfig, ForceCommand, ObstacleRelation};
use uavxai::sim::{Action, Kinematics};

fn rel(theta: f64, distance: f64) -> ObstacleRelation {
    ObstacleRelation { theta, distance }
}

#[test]
fn columns_out_of_range_or_behind_exert_nothing() {
    let cfg = ApfConfig::default();
    assert_eq!(repulsive_force(rel(0.3, cfg.repulse_range), 1.0, &cfg).f_omega, 0.0);
    assert_eq!(repulsive_force(rel(2.0, 0.5), 1.0, &cfg).f_omega, 0.0);
    assert_eq!(repulsive_force(rel(-2.5, 0.5), 1.0, &cfg).f_omega, 0.0);
}

#[test]
fn dead_ahead_push_follows_the_drawn_sign() {
    let cfg = ApfConfig::default();
    assert_eq!(repulsive_force(rel(0.0, 1.0), 1.0, &cfg).f_omega, -3.0);
    assert_eq!(repulsive_force(rel(0.0, 1.0), -1.0, &cfg).f_omega, 3.0);
}

proptest! {
    #[test]
    fn repulsion_is_odd_and_steers_away(theta in 1e-6f64..FRAC_PI_2 - 1e-6, d in 0.0f64..2.9) {
        let cfg = ApfConfig::default();
        let right = repulsive_force(rel(theta, d), 1.0, &cfg).f_omega;
        let left = repulsive_force(rel(-theta, d), 1.0, &cfg).f_omega;
        prop_assert!(right < 0.0);
        prop_assert!((right + left).abs() < 1e-12);
    }

    #[test]
    fn repulsion_fades_towards_the_side(a in 1e-6f64..FRAC_PI_2, b in 1e-6f64..FRAC_PI_2) {
        let cfg = ApfConfig::default();
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let near = repulsive_force(rel(lo, 1.0), 1.0, &cfg).f_omega.abs();
        let far = repulsive_force(rel(hi, 1.0), 1.0, &cfg).f_omega.abs();
        prop_assert!(near >= far);
    }

    #[test]
    fn attraction_speeds_up_only_when_facing_the_goal(theta in -3.1f64..3.1, d in 0.0f64..30.0) {
        let cfg = ApfConfig::default();
        let f = attractive_force(theta, d, &cfg);
        prop_assert!(f.f_vx.is_finite() && f.f_omega.is_finite());
        if theta.abs() < FRAC_PI_2 - 1e-9 {
            prop_assert!(f.f_vx > 0.0);
        } else if theta.abs() > FRAC_PI_2 + 1e-9 {
            prop_assert!(f.f_vx < 0.0);
        }
        // yaw pull never points away from the goal
        prop_assert!(f.f_omega * theta >= 0.0);
    }

    #[test]
    fn shaped_actions_stay_flyable(
        v in 0.0f64..2.0,
        omega in -1.5f64..1.5,
        fv in -100.0f64..100.0,
        fw in -100.0f64..100.0,
    ) {
        let cfg = ApfConfig::default();
        let k = Kinematics::default();
        let s = shape(Action { v, omega }, ForceCommand { f_vx: fv, f_omega: fw }, &cfg, &k);
        prop_assert!(s.action.within(&k));
        prop_assert_eq!(s.clamped, !Action { v: v + s.delta.v, omega: omega + s.delta.omega }.within(&k));
        let idle = shape(Action { v, omega }, ForceCommand::default(), &cfg, &k);
        prop_assert_eq!(idle.action, Action { v, omega });
        prop_assert!(!idle.clamped);
    }
}
