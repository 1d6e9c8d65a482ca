use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn agent(space: ActionSpace) -> DqnAgent<f64> {
    DqnAgent::new(AgentConfig::for_space(space), 42).unwrap()
}

fn random_state(r: &mut ChaCha8Rng) -> [f64; STATE_DIM] {
    std::array::from_fn(|_| r.random())
}

#[test]
fn epsilon_schedule() {
    let c = AgentConfig::default();
    assert_eq!(c.epsilon_at(0), 0.5);
    assert_eq!(c.epsilon_at(1000), 0.1);
    assert_eq!(c.epsilon_at(50_000), 0.1);
    assert!((c.epsilon_at(500) - 0.3).abs() < 1e-15);
}

#[test]
fn default_rates_follow_action_space() {
    let ps = AgentConfig::for_space(ActionSpace::PhaseSelection);
    let te = AgentConfig::for_space(ActionSpace::TimeExtension);
    assert_eq!((ps.effective_learning_rate(), ps.effective_tau()), (1e-4, 0.005));
    assert_eq!((te.effective_learning_rate(), te.effective_tau()), (1e-3, 0.01));
    assert_eq!(ps.action_space.size(), 4);
    assert_eq!(te.action_space.size(), 9);
}

#[test]
fn config_validation() {
    let bad = AgentConfig { tau: Some(0.0), ..AgentConfig::default() };
    assert!(matches!(DqnAgent::<f64>::new(bad, 0), Err(AgentError::Config(_))));
    let bad = AgentConfig { batch_size: 64, replay_capacity: 32, ..AgentConfig::default() };
    assert!(bad.validate().is_err());
}

#[test]
fn extension_actions() {
    let c = AgentConfig::for_space(ActionSpace::TimeExtension);
    let g = [20.0; 4];
    assert_eq!(apply_extension(&c, g, 0), g);
    assert_eq!(apply_extension(&c, g, 2), [20.0, 25.0, 20.0, 20.0]);
    assert_eq!(apply_extension(&c, g, 7), [20.0, 20.0, 15.0, 20.0]);
    assert_eq!(apply_extension(&c, [10.0, 60.0, 20.0, 20.0], 5), [10.0, 60.0, 20.0, 20.0]);
    assert_eq!(apply_extension(&c, [10.0, 60.0, 20.0, 20.0], 2), [10.0, 60.0, 20.0, 20.0]);
}

#[test]
fn terminal_and_undiscounted_targets_equal_rewards() {
    let mut r = ChaCha8Rng::seed_from_u64(1);
    let a = agent(ActionSpace::PhaseSelection);
    let batch: Vec<Transition<f64>> = (0..32)
        .map(|i| Transition::new(&random_state(&mut r), i % 4, r.random_range(-5.0..5.0), &random_state(&mut r), true))
        .collect();
    let rewards: Vec<f64> = batch.iter().map(|t| t.reward).collect();
    assert_eq!(a.td_targets(&batch).unwrap(), rewards);

    let config = AgentConfig { gamma: 0.0, ..AgentConfig::default() };
    let a = DqnAgent::<f64>::new(config, 3).unwrap();
    let live: Vec<Transition<f64>> = batch.iter().cloned().map(|t| Transition { terminal: false, ..t }).collect();
    assert_eq!(a.td_targets(&live).unwrap(), rewards);
}

#[test]
fn train_step_skips_small_buffer() {
    let mut a = agent(ActionSpace::PhaseSelection);
    assert_eq!(a.train_step().unwrap(), TrainOutcome::Skipped);
    assert_eq!(a.train_steps(), 0);
}

#[test]
fn overfits_a_single_transition() {
    let config = AgentConfig {
        hidden: vec![8],
        dropout: 0.0,
        learning_rate: Some(1e-3),
        batch_size: 4,
        replay_capacity: 4,
        ..AgentConfig::default()
    };
    let mut a = DqnAgent::<f64>::new(config, 5).unwrap();
    let s = [0.3, 0.1, 0.0, 0.7, 0.2, 0.0, 0.5, 0.9];
    for _ in 0..4 {
        a.remember(Transition::new(&s, 2, 0.8, &s, true));
    }
    let mut losses = vec![];
    for _ in 0..100 {
        match a.train_step().unwrap() {
            TrainOutcome::Trained { loss } => losses.push(loss),
            TrainOutcome::Skipped => unreachable!(),
        }
    }
    // monotone descent until the fit is reached, no escape afterwards
    let reached = losses.iter().position(|&l| l < 1e-3).expect("never fit");
    for w in losses[..=reached].windows(2) {
        assert!(w[1] < w[0], "loss rose: {w:?}");
    }
    assert!(losses[reached..].iter().all(|&l| l < 1e-3));
}

#[test]
fn checkpoint_round_trip_preserves_q_values() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut a = agent(ActionSpace::TimeExtension);
    a.set_initial_greens([15.0, 30.0, 10.0, 25.0]);
    for _ in 0..40 {
        a.remember(Transition::new(
            &random_state(&mut r),
            r.random_range(0..9),
            r.random(),
            &random_state(&mut r),
            false,
        ));
    }
    for _ in 0..5 {
        a.train_step().unwrap();
    }
    let mut bytes = Vec::new();
    a.write_checkpoint(&mut bytes).unwrap();
    let b = DqnAgent::<f64>::read_checkpoint(bytes.as_slice(), 1).unwrap();
    for _ in 0..100 {
        let s = random_state(&mut r);
        assert_eq!(a.q_values(&s).unwrap(), b.q_values(&s).unwrap());
    }
    assert_eq!(b.net().target.params(), a.net().target.params());
    assert_eq!(b.train_steps(), 5);
    assert_eq!(b.initial_greens(), [15.0, 30.0, 10.0, 25.0]);
    assert!(b.replay().is_empty());
    // the replay cursor is the only field a reload resets
    a.begin_transfer(1);
    let (mut before, mut after) = (Vec::new(), Vec::new());
    a.write_checkpoint(&mut before).unwrap();
    b.write_checkpoint(&mut after).unwrap();
    assert!(before == after);
}

#[test]
fn damaged_checkpoint_is_rejected() {
    let a = agent(ActionSpace::PhaseSelection);
    let mut bytes = Vec::new();
    a.write_checkpoint(&mut bytes).unwrap();
    assert!(DqnAgent::<f64>::read_checkpoint(&bytes[..bytes.len() / 2], 0).is_err());
    let mut bad = bytes.clone();
    bad[4] = 9;
    let err = DqnAgent::<f64>::read_checkpoint(bad.as_slice(), 0).unwrap_err();
    assert!(err.to_string().contains("version 9"), "{err}");
    bad = bytes;
    bad[0] = 0;
    assert!(DqnAgent::<f64>::read_checkpoint(bad.as_slice(), 0).is_err());
}

#[test]
fn single_precision_agent_trains() {
    let mut r = ChaCha8Rng::seed_from_u64(10);
    let mut a = DqnAgent::<f32>::new(AgentConfig::default(), 1).unwrap();
    for _ in 0..64 {
        a.remember(Transition::new(
            &random_state(&mut r),
            r.random_range(0..4),
            r.random(),
            &random_state(&mut r),
            false,
        ));
    }
    assert!(matches!(a.train_step().unwrap(), TrainOutcome::Trained { loss } if loss.is_finite()));
}

mod properties {
    use proptest::prelude::*;

    use super::super::*;

    proptest! {
        #[test]
        fn advantage_shift_keeps_greedy_action(
            v in -10.0f64..10.0,
            a in proptest::collection::vec(-10.0f64..10.0, 2..10),
            k in -100.0f64..100.0,
        ) {
            let raw: Vec<f64> = std::iter::once(v).chain(a.iter().copied()).collect();
            let shifted: Vec<f64> = std::iter::once(v).chain(a.iter().map(|x| x + k)).collect();
            prop_assert_eq!(argmax(&dueling_q(&raw)), argmax(&dueling_q(&shifted)));
        }
    }
}
