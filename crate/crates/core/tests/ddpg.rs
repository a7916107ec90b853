use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use uavxai::ddpg::{importance_weight, soft_update, steps_to_reach, train, Actor, Agent, EpisodeStat, PrioritizedReplay, SumTree, TrainConfig, Transition};
use uavxai::sim::{Arena, Episode, LidarConfig, Observation};
use uavxai_nn::Parametrized;

fn observation(seed: u64) -> Observation {
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    Episode::reset(arena, seed).observation().clone()
}

fn transition(seed: u64, reward: f32, terminal: bool) -> Transition {
    Transition {
        state: observation(seed),
        action: [0.1, -0.2],
        reward,
        next: observation(seed + 1),
        terminal,
    }
}

fn agent(cfg: &TrainConfig) -> Agent {
    let arena = Arena::training().with_lidar(LidarConfig::compact());
    Agent::new(cfg, &arena.lidar, arena.kinematics, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()
}

#[test]
fn sampling_frequencies_follow_priorities() {
    let alpha = 0.6;
    let priorities = [0.1, 0.5, 1.0, 2.0, 3.0, 0.2, 4.0, 1.5];
    let mut replay = PrioritizedReplay::new(priorities.len(), alpha, 0);
    let proto = transition(0, 0.0, false);
    for _ in 0..priorities.len() {
        replay.push(proto.clone());
    }
    replay.update_priorities(&(0..priorities.len()).collect::<Vec<_>>(), &priorities);
    let mass: Vec<f64> = priorities.iter().map(|p: &f64| p.powf(alpha)).collect();
    let total: f64 = mass.iter().sum();

    let draws = 40_000;
    let mut counts = vec![0usize; priorities.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..draws {
        counts[replay.sample(1, 0.4, &mut rng).unwrap().indices[0]] += 1;
    }
    let chi2: f64 = counts
        .iter()
        .zip(&mass)
        .map(|(&c, m)| {
            let e = draws as f64 * m / total;
            (c as f64 - e).powi(2) / e
        })
        .sum();
    // 7 degrees of freedom, p = 0.001 critical value
    assert!(chi2 < 24.32, "chi2 {chi2}, counts {counts:?}");
}

#[test]
fn batch_weights_are_normalised_importance_weights() {
    let mut replay = PrioritizedReplay::new(6, 0.6, 0);
    let proto = transition(0, 0.0, false);
    for _ in 0..6 {
        replay.push(proto.clone());
    }
    replay.update_priorities(&[0, 1, 2, 3, 4, 5], &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0]);
    let beta = 0.4;
    let s = replay.sample(4, beta, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
    let raw: Vec<f64> = s.indices.iter().map(|&i| (6.0 * replay.probability(i)).powf(-beta)).collect();
    let max = raw.iter().cloned().fold(0.0, f64::max);
    for (w, r) in s.weights.iter().zip(&raw) {
        assert!((w - r / max).abs() < 1e-12);
    }
    assert!(s.weights.iter().any(|&w| w == 1.0));
    assert_eq!(importance_weight(0.25, 4, 0.7), 1.0);
}

#[test]
fn sampling_before_warmup_fails() {
    let mut replay = PrioritizedReplay::new(10, 0.6, 3);
    for _ in 0..3 {
        replay.push(transition(0, 0.0, false));
    }
    assert!(replay.sample(2, 0.4, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    replay.push(transition(0, 0.0, false));
    assert!(replay.sample(2, 0.4, &mut ChaCha8Rng::seed_from_u64(0)).is_ok());
}

#[test]
fn ring_buffer_overwrites_oldest() {
    let mut replay = PrioritizedReplay::new(3, 0.6, 0);
    let slots: Vec<usize> = (0..5).map(|i| replay.push(transition(0, i as f32, false))).collect();
    assert_eq!(slots, [0, 1, 2, 0, 1]);
    assert_eq!(replay.len(), 3);
    assert_eq!(replay.get(0).reward, 3.0);
    assert_eq!(replay.get(2).reward, 2.0);
}

#[test]
fn soft_update_converges_geometrically() {
    let arena = Arena::training().with_lidar(LidarConfig::compact());
    let cfg = TrainConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut target = Actor::new(&cfg.network, &arena.lidar, arena.kinematics, &mut rng).unwrap();
    let mut online = target.clone();
    for p in target.net_mut().params_mut() {
        p.data_mut().fill(0.0);
    }
    for p in online.net_mut().params_mut() {
        p.data_mut().fill(1.0);
    }
    let lambda = 0.005;
    for _ in 0..500 {
        soft_update(target.net_mut(), online.net(), lambda);
    }
    let expected = 1.0 - (1.0 - lambda).powi(500);
    for p in target.net().params() {
        for &v in p.data() {
            assert!((v as f64 - expected).abs() < 1e-4, "{v} vs {expected}");
        }
    }
}

#[test]
fn td_target_bootstraps_only_on_live_transitions() {
    let cfg = TrainConfig::default();
    let a = agent(&cfg);
    let dead = transition(1, -2.0, true);
    assert_eq!(a.td_target(&dead).unwrap(), -2.0);

    let live = transition(1, 0.5, false);
    let act = a.actor_target.normalized(&live.next).unwrap();
    let q = a.critic_target.q(&live.next, act).unwrap() as f64;
    assert!((a.td_target(&live).unwrap() - (0.5 + cfg.gamma * q)).abs() < 1e-9);

    let myopic = agent(&TrainConfig { gamma: 0.0, ..cfg });
    assert!((myopic.td_target(&live).unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn critic_steps_shrink_terminal_td_error() {
    let cfg = TrainConfig::default();
    let mut a = agent(&cfg);
    let t = transition(4, 1.0, true);
    let first = a.critic_step(&[&t], &[1.0]).unwrap()[0].abs();
    let mut last = first;
    for _ in 0..50 {
        last = a.critic_step(&[&t], &[1.0]).unwrap()[0].abs();
    }
    assert!(last < 0.2 * first, "|δ| {first} -> {last}");
}

#[test]
fn steps_to_reach_uses_rolling_rate() {
    let stats: Vec<EpisodeStat> = [false, true, true, false, true, true]
        .iter()
        .enumerate()
        .map(|(i, &s)| EpisodeStat {
            episode: i,
            steps: 10,
            total_steps: 10 * (i as u64 + 1),
            reward: 0.0,
            success: s,
            cause: if s { uavxai::sim::TerminalCause::Success } else { uavxai::sim::TerminalCause::Collision },
            rolling_success: 0.0,
        })
        .collect();
    // window 2: rates 0, .5, 1, .5, .5, 1
    assert_eq!(steps_to_reach(&stats, 1.0, 2), Some(30));
    assert_eq!(steps_to_reach(&stats, 0.5, 2), Some(20));
    assert_eq!(steps_to_reach(&stats, 1.1, 2), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn sum_tree_matches_flat_prefix_sums(values in prop::collection::vec(0u32..6, 1..40), seed in any::<u64>()) {
        let mut tree = SumTree::new(values.len());
        for (i, &v) in values.iter().enumerate() {
            tree.set(i, v as f64);
        }
        prop_assert!(tree.is_consistent());
        let total: u32 = values.iter().sum();
        prop_assert_eq!(tree.total(), total as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..16 {
            if total == 0 {
                break;
            }
            let mass = rng.random_range(0..total) as f64 + 0.5;
            let mut acc = 0.0;
            let oracle = values.iter().position(|&v| {
                acc += v as f64;
                mass < acc
            });
            prop_assert_eq!(Some(tree.find(mass)), oracle);
        }
    }
}

#[test]
fn deployed_actor_is_the_best_noise_free_one() {
    let cfg = TrainConfig {
        episodes: 4,
        warmup: 16,
        batch: 8,
        select_every: 1,
        select_flights: 3,
        checkpoint_every: 0,
        ..TrainConfig::default()
    };
    let arena = Arc::new(Arena::training().with_lidar(LidarConfig::compact()));
    let tree = uavxai::seed::SeedTree::new(9);
    let dir = tempfile::tempdir().unwrap();
    let (agent, report) = train(arena.clone(), &cfg, None, &tree, Some(dir.path()), uavxai::Exec::Sequential).unwrap();
    assert_eq!(report.selection.len(), 4);
    let best = report.selection.iter().map(|p| p.completion).fold(0.0, f64::max);
    let chosen = report.selection.iter().rposition(|p| p.completion == best).unwrap() + 1;
    assert_eq!(report.selected_episode, Some(chosen));

    let seeds: Vec<u64> = (0..3).map(|i| tree.seed("select", i)).collect();
    let again = uavxai::runner::evaluate(&arena, &agent.actor, None, &seeds, uavxai::Exec::Sequential).unwrap();
    assert_eq!(again.completion, best);
    let saved = Actor::load(&dir.path().join("actor.uavw")).unwrap();
    assert_eq!(saved.act(&observation(1)).unwrap(), agent.actor.act(&observation(1)).unwrap());
}
