use qrl::encoding::{Encoder, RangeSpec};
use qrl::envs::{seeded_rng, Blackjack, EnvKind};
use qrl::models::{QPolicyModel, TargetPair};
use qrl::nn::{AdamConfig, MlpDef};
use qrl::rlagent::*;

/// Single-input linear model: Q = w·x + b per action.
fn linear(w: [f64; 2], b: [f64; 2]) -> QPolicyModel {
    let mut m = QPolicyModel::mlp(&MlpDef::new(vec![1, 2]).unwrap(), Encoder::Directional, &mut seeded_rng(0)).unwrap();
    m.set_params(&[w[0], w[1], b[0], b[1]]).unwrap();
    m
}

fn step(reward: f64, done: bool) -> Transition {
    Transition {
        state: vec![1.0],
        raw_obs: vec![0.5],
        action: 0,
        reward,
        next: vec![1.0],
        raw_next: vec![0.5],
        done,
    }
}

const ALGOS: [Algo; 3] = [Algo::Dqn, Algo::Qddqn, Algo::CanonicalDdqn];

#[test]
fn target_uses_target_network_max() {
    let pair = TargetPair::from_parts(linear([0.0; 2], [9.0, 9.0]), linear([0.0; 2], [2.0, 3.0])).unwrap();
    let y = compute_target(&step(1.0, false), &pair, 0.95, Algo::Qddqn, true).unwrap();
    assert_eq!(y, 1.0 + 0.95 * 3.0);
    // 3.85 has no exact binary form; the product above rounds one ulp low
    assert!((y - 3.85).abs() <= 4.0 * f64::EPSILON);
}

#[test]
fn canonical_target_decouples_argmax() {
    let pair = TargetPair::from_parts(linear([0.0; 2], [5.0, 1.0]), linear([0.0; 2], [2.0, 3.0])).unwrap();
    let y = compute_target(&step(1.0, false), &pair, 0.95, Algo::CanonicalDdqn, true).unwrap();
    assert_eq!(y, 1.0 + 0.95 * 2.0);
    assert_eq!(y, 2.9);
}

#[test]
fn dqn_target_uses_online_network() {
    let pair = TargetPair::from_parts(linear([0.0; 2], [4.0, 1.0]), linear([0.0; 2], [2.0, 3.0])).unwrap();
    let y = compute_target(&step(0.5, false), &pair, 0.9, Algo::Dqn, true).unwrap();
    assert_eq!(y, 0.5 + 0.9 * 4.0);
}

#[test]
fn terminal_transitions_stop_bootstrapping() {
    let pair = TargetPair::from_parts(linear([1.0; 2], [2.0, 3.0]), linear([0.0; 2], [2.0, 3.0])).unwrap();
    for algo in ALGOS {
        assert_eq!(compute_target(&step(-1.0, true), &pair, 0.95, algo, true).unwrap(), -1.0);
    }
    // masking off bootstraps through the end, as written in the algorithm
    assert_eq!(compute_target(&step(-1.0, true), &pair, 0.95, Algo::Qddqn, false).unwrap(), -1.0 + 0.95 * 3.0);
}

#[test]
fn online_and_target_agree_after_hard_copy() {
    let mut rng = seeded_rng(4);
    let online = QPolicyModel::pure(3, 2, 2, Encoder::Scaled(RangeSpec::blackjack()), 1.0, &mut rng).unwrap();
    let other = QPolicyModel::pure(3, 2, 2, Encoder::Scaled(RangeSpec::blackjack()), 1.0, &mut rng).unwrap();
    let mut pair = TargetPair::from_parts(online, other).unwrap();
    pair.hard_copy();
    let mut env = Blackjack::new();
    let mut buffer = ReplayBuffer::new(100).unwrap();
    let mut trainer_rng = seeded_rng(5);
    for _ in 0..30 {
        let obs = qrl::envs::Environment::reset(&mut env, &mut trainer_rng);
        let s = qrl::envs::Environment::step(&mut env, 1, &mut trainer_rng).unwrap();
        buffer.push(Transition {
            state: pair.online.features(&obs).unwrap(),
            raw_obs: obs,
            action: 1,
            reward: s.reward,
            next: pair.online.features(&s.obs).unwrap(),
            raw_next: s.obs,
            done: s.done,
        });
    }
    for t in buffer.iter() {
        let a = compute_target(t, &pair, 0.95, Algo::Dqn, true).unwrap();
        let b = compute_target(t, &pair, 0.95, Algo::Qddqn, true).unwrap();
        let c = compute_target(t, &pair, 0.95, Algo::CanonicalDdqn, true).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
    }
}

fn small_trainer(period: usize, tau: f64, lr: f64) -> Trainer {
    let mut rng = seeded_rng(8);
    let model = QPolicyModel::pure(3, 2, 1, Encoder::Scaled(RangeSpec::blackjack()), 1.0, &mut rng).unwrap();
    let config = TrainerConfig {
        hard_copy_every: period,
        tau,
        batch_size: 4,
        circuit_adam: AdamConfig::with_lr(lr),
        ..TrainerConfig::default()
    };
    Trainer::new(model, config, EpsilonSchedule::default()).unwrap()
}

#[test]
fn hard_copy_every_c_soft_update_otherwise() {
    let mut trainer = small_trainer(3, 0.75, 0.05);
    let mut env = EnvKind::Blackjack.make(200);
    let mut rng = seeded_rng(1);
    for episode in 1..=7 {
        let target_before = trainer.pair.target.params();
        trainer.run_episode(env.as_mut(), &mut rng).unwrap();
        let online = trainer.pair.online.params();
        let target = trainer.pair.target.params();
        if episode % 3 == 0 {
            assert_eq!(target, online, "episode {episode}");
        } else {
            let blended: Vec<f64> = target_before.iter().zip(&online).map(|(t, o)| 0.75 * t + 0.25 * o).collect();
            assert_eq!(target, blended, "episode {episode}");
            assert_ne!(target, online, "episode {episode}");
        }
    }
}

#[test]
fn soft_update_extremes() {
    let mut pair = TargetPair::from_parts(linear([1.0, 2.0], [3.0, 4.0]), linear([0.0; 2], [0.0; 2])).unwrap();
    pair.soft_update(1.0).unwrap();
    assert_eq!(pair.target.params(), vec![0.0; 4]);
    pair.soft_update(0.0).unwrap();
    assert_eq!(pair.target.params(), pair.online.params());
    assert!(pair.soft_update(1.5).is_err());
}

#[test]
fn epsilon_sequence_recorded_per_episode() {
    let mut trainer = small_trainer(10, 0.99, 0.0);
    let mut env = EnvKind::Blackjack.make(200);
    let records = trainer.train(env.as_mut(), 60, &mut seeded_rng(2)).unwrap();
    assert_eq!(records[0].epsilon, 1.0);
    assert_eq!(records[1].epsilon, 0.9);
    assert_eq!(records[2].epsilon, 0.9 * 0.9);
    let mut expected = 1.0f64;
    for (k, r) in records.iter().enumerate() {
        assert_eq!(r.episode, k + 1);
        assert_eq!(r.epsilon, expected);
        expected = (expected * 0.9).max(0.01);
    }
    // 0.9^43 > 0.01 > 0.9^44
    assert!(records[43].epsilon > 0.01);
    assert_eq!(records[44].epsilon, 0.01);
    assert_eq!(records[59].epsilon, 0.01);
    assert_eq!(trainer.schedule.value(), 0.01);
}

#[test]
fn zero_residual_batch_leaves_parameters() {
    let mut trainer = small_trainer(10, 0.99, 0.1);
    let features = trainer.pair.online.features(&[14.0, 7.0, 0.0]).unwrap();
    let q = trainer.pair.online.q_values(&features).unwrap();
    trainer.buffer.push(Transition {
        state: features.clone(),
        raw_obs: vec![14.0, 7.0, 0.0],
        action: 1,
        reward: q[1],
        next: features,
        raw_next: vec![14.0, 7.0, 0.0],
        done: true,
    });
    let before = trainer.pair.online.params();
    let loss = trainer.update(&mut seeded_rng(3)).unwrap();
    assert_eq!(loss, 0.0);
    assert_eq!(trainer.pair.online.params(), before);
}

#[test]
fn replay_sampling_is_uniform() {
    let mut buffer = ReplayBuffer::new(10).unwrap();
    for i in 0..10 {
        buffer.push(Transition { reward: i as f64, ..step(0.0, false) });
    }
    let mut rng = seeded_rng(99);
    let mut counts = [0u32; 10];
    for _ in 0..100_000 {
        counts[buffer.sample_indices(1, &mut rng).unwrap()[0]] += 1;
    }
    let expected = 10_000.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 9 degrees of freedom, p = 0.001
    assert!(chi2 < 27.88, "chi2 = {chi2}");

    // with replacement once the batch outgrows the buffer
    let mut counts = [0u32; 10];
    for _ in 0..5_000 {
        for i in buffer.sample_indices(20, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < 27.88, "chi2 = {chi2}");
}

#[test]
fn full_exploration_is_uniform() {
    let model = linear([0.0; 2], [0.0, 10.0]);
    let mut rng = seeded_rng(12);
    let ones: usize = (0..10_000).map(|_| select_action(&model, &[1.0], 1.0, &mut rng).unwrap()).sum();
    // 3σ = 150 for Binomial(10⁴, 1/2)
    assert!((ones as f64 - 5000.0).abs() <= 150.0, "{ones}");
}

#[test]
fn eviction_is_oldest_first() {
    let mut buffer = ReplayBuffer::new(4).unwrap();
    for i in 0..11 {
        buffer.push(Transition { reward: i as f64, ..step(0.0, false) });
        let mut held: Vec<f64> = buffer.iter().map(|t| t.reward).collect();
        held.sort_by(f64::total_cmp);
        let lo = (i as i64 - 3).max(0) as f64;
        let expected: Vec<f64> = (lo as usize..=i).map(|v| v as f64).collect();
        assert_eq!(held, expected);
    }
}
