use std::collections::HashSet;

use ebtl_core::envs::grid::{grid_decode, grid_observe, Direction, GridConfig, GridLayout, GridScenario, GridState};
use ebtl_core::numerics::AdamState;
use ebtl_core::policy::{ActorCriticParams, Architecture};
use ebtl_core::ppo::{ppo_update, PpoConfig, RolloutBatch, UpdateExtras};
use ebtl_core::rng;
use ebtl_core::transfer::finetune_init;
use ebtl_core::Tensor;

fn net(seed: u64) -> ActorCriticParams {
    let mut r = rng::stream(seed, rng::streams::INIT);
    ActorCriticParams::init(Architecture::dense(3, 2, &[8]), &mut r).unwrap()
}

/// Single-state two-armed bandit: action 0 pays 1, action 1 pays 0.
fn bandit_batch(p: &ActorCriticParams, n: usize, seed: u64) -> RolloutBatch {
    let obs = vec![1.0, 0.0, 0.5];
    let out = p.forward(&obs, &[true, true]).unwrap();
    let mut r = rng::stream(seed, 1);
    let mut b = RolloutBatch::default();
    for _ in 0..n {
        let (a, lp) = ebtl_core::policy::sample_action(&out, &mut r);
        let reward = if a == 0 { 1.0 } else { 0.0 };
        b.obs.push(obs.clone());
        b.masks.push(vec![true, true]);
        b.actions.push(a);
        b.behavior_log_probs.push(lp);
        b.teacher_flags.push(false);
        b.teacher_log_probs.push(None);
        b.values.push(out.value);
        b.advantages.push(reward - out.value);
        b.targets.push(reward);
    }
    b
}

fn small_config() -> PpoConfig {
    PpoConfig { train_batch: 64, minibatch: 32, n_envs: 1, lr: 1e-2, ..PpoConfig::grid() }
}

#[test]
fn bandit_update_raises_paying_action() {
    let mut p = net(1);
    let before = p.forward(&[1.0, 0.0, 0.5], &[true, true]).unwrap().probs()[0];
    let batch = bandit_batch(&p, 64, 2);
    let mut adam = AdamState::new(p.tensors());
    ppo_update(&mut p, &mut adam, &batch, &small_config(), &UpdateExtras::default(), &mut rng::stream(3, 2)).unwrap();
    let after = p.forward(&[1.0, 0.0, 0.5], &[true, true]).unwrap().probs()[0];
    assert!(after > before, "{} -> {}", before, after);
}

#[test]
fn update_is_deterministic() {
    let run = || {
        let mut p = net(4);
        let batch = bandit_batch(&p, 64, 5);
        let mut adam = AdamState::new(p.tensors());
        ppo_update(&mut p, &mut adam, &batch, &small_config(), &UpdateExtras::default(), &mut rng::stream(6, 2)).unwrap();
        p
    };
    let (a, b) = (run(), run());
    for (x, y) in a.tensors().iter().zip(b.tensors()) {
        assert!(x.data().iter().zip(y.data()).all(|(u, v)| u.to_bits() == v.to_bits()));
    }
}

#[test]
fn zero_advantage_moves_only_value_path() {
    let mut p = net(7);
    let mut batch = bandit_batch(&p, 64, 8);
    batch.advantages.iter_mut().for_each(|a| *a = 0.0);
    let cfg = PpoConfig { entropy_coeff: 0.0, sgd_iters: 1, minibatch: 64, ..small_config() };
    let before = p.clone();
    let mut adam = AdamState::new(p.tensors());
    ppo_update(&mut p, &mut adam, &batch, &cfg, &UpdateExtras::default(), &mut rng::stream(9, 2)).unwrap();
    assert_eq!(p.get("policy.weight"), before.get("policy.weight"));
    assert_eq!(p.get("policy.bias"), before.get("policy.bias"));
    assert_ne!(p.get("value.weight"), before.get("value.weight"));
}

#[test]
fn first_epoch_ratios_are_one() {
    let mut p = net(10);
    let batch = bandit_batch(&p, 64, 11);
    let cfg = PpoConfig { sgd_iters: 1, minibatch: 64, ..small_config() };
    let mut adam = AdamState::new(p.tensors());
    let stats = ppo_update(&mut p, &mut adam, &batch, &cfg, &UpdateExtras::default(), &mut rng::stream(12, 2)).unwrap();
    assert!((stats.mean_ratio - 1.0).abs() < 1e-12);
    assert_eq!(stats.clip_fraction, 0.0);
}

#[test]
fn frozen_encoder_is_bitwise_unchanged() {
    let teacher = net(13);
    let (mut student, frozen) = finetune_init(&teacher, true);
    let mut adam = AdamState::new(student.tensors());
    for k in 0..5 {
        let batch = bandit_batch(&student, 64, 20 + k);
        let extras = UpdateExtras { frozen: Some(&frozen), ..UpdateExtras::default() };
        ppo_update(&mut student, &mut adam, &batch, &small_config(), &extras, &mut rng::stream(30 + k, 2)).unwrap();
    }
    for (i, name) in student.names().iter().enumerate() {
        let same = student.tensors()[i] == teacher.tensors()[i];
        assert_eq!(same, frozen[i], "{}", name);
    }
    let (mut free, none) = finetune_init(&teacher, false);
    let mut adam = AdamState::new(free.tensors());
    let batch = bandit_batch(&free, 64, 40);
    let extras = UpdateExtras { frozen: Some(&none), ..UpdateExtras::default() };
    ppo_update(&mut free, &mut adam, &batch, &small_config(), &extras, &mut rng::stream(41, 2)).unwrap();
    for (i, name) in free.names().iter().enumerate() {
        assert_ne!(free.tensors()[i], teacher.tensors()[i], "{}", name);
    }
}

#[test]
fn teacher_rows_need_teacher_log_probs() {
    let mut p = net(14);
    let mut batch = bandit_batch(&p, 64, 15);
    batch.teacher_flags[3] = true;
    let mut adam = AdamState::new(p.tensors());
    let err = ppo_update(&mut p, &mut adam, &batch, &small_config(), &UpdateExtras::default(), &mut rng::stream(1, 2));
    assert_eq!(err.unwrap_err(), ebtl_core::Error::MissingTeacherLogProb);
}

#[test]
fn distinct_small_grid_states_encode_distinctly() {
    for scenario in [GridScenario::AlternatingGoalTarget, GridScenario::LockedTarget] {
        let cfg = GridConfig { width: 7, height: 7, ..GridConfig::new(scenario, 0) };
        let layout = GridLayout::new(&cfg).unwrap();
        let free = layout.free_cells();
        let mut agents = free.clone();
        agents.extend(layout.door);
        let keys: Vec<(Option<(usize, usize)>, bool, bool)> = if scenario.has_door() {
            vec![(Some(free[0]), false, true), (None, true, true), (None, true, false)]
        } else {
            vec![(None, false, false)]
        };
        let mut seen: HashSet<Vec<u64>> = HashSet::new();
        let mut states = 0;
        for &agent in &agents {
            for dir in Direction::ALL {
                for &goal in &free {
                    for &(key_pos, carrying_key, door_locked) in &keys {
                        if goal == agent || key_pos == Some(agent) || key_pos == Some(goal) {
                            continue;
                        }
                        if Some(agent) == layout.door && door_locked {
                            continue;
                        }
                        let s = GridState { agent_pos: agent, agent_dir: dir, goal_pos: goal, key_pos, carrying_key, door_locked, step: 0 };
                        let obs = grid_observe(&s, &layout);
                        assert_eq!(grid_decode(&obs, &layout, scenario).unwrap(), s);
                        seen.insert(obs.iter().map(|v| v.to_bits()).collect());
                        states += 1;
                    }
                }
            }
        }
        assert_eq!(seen.len(), states, "{:?}", scenario);
    }
}

#[test]
fn tensor_rows_round_trip() {
    let t = Tensor::stack_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
    assert_eq!(t.row(1), &[3.0, 4.0]);
}
