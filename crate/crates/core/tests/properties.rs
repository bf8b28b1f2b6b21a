use ebtl_core::energy::{calibrate_threshold, energy_score, free_energy, TauTable};
use ebtl_core::envs::grid::{GridConfig, GridScenario, GridWorld};
use ebtl_core::envs::overcooked::{
    Ingredient, KitchenLayoutKind, Overcooked, OvercookedConfig, POT_CAPACITY, REWARD_ANY_DELIVERY, REWARD_CORRECT_DELIVERY,
};
use ebtl_core::envs::Environment;
use ebtl_core::numerics::kernels;
use ebtl_core::ppo::{clipped_surrogate, compute_gae};
use ebtl_core::rng;
use ebtl_core::{Tape, Tensor};
use proptest::prelude::*;
use rand::Rng;

/// Exponentially weighted blend of n-step advantages, written out term by
/// term. Past the end of the segment the longest available return is reused.
fn gae_brute_force(r: &[f64], v: &[f64], terminal: bool, bootstrap: f64, gamma: f64, lam: f64) -> Vec<f64> {
    let n = r.len();
    let value_at = |i: usize| if i < n { v[i] } else if terminal { 0.0 } else { bootstrap };
    let n_step = |t: usize, k: usize| {
        let mut g = 0.0;
        for j in 0..k {
            g += gamma.powi(j as i32) * r[t + j];
        }
        g + gamma.powi(k as i32) * value_at(t + k) - v[t]
    };
    (0..n)
        .map(|t| {
            let horizon = n - t;
            let mut a = 0.0;
            for k in 1..horizon {
                a += (1.0 - lam) * lam.powi(k as i32 - 1) * n_step(t, k);
            }
            a + lam.powi(horizon as i32 - 1) * n_step(t, horizon)
        })
        .collect()
}

fn run_grid(seed: u64, scenario: GridScenario, steps: usize) -> Vec<(Vec<f64>, f64, bool)> {
    let mut env = GridWorld::new(GridConfig::new(scenario, seed), 0).unwrap();
    let mut r = rng::stream(seed, 77);
    let mut out = Vec::new();
    for _ in 0..steps {
        let mask = env.action_mask();
        let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
        let a = legal[r.gen_range(0..legal.len())];
        let s = env.step(a).unwrap();
        out.push((s.obs.clone(), s.reward, s.done));
        if s.done {
            env.reset();
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn lse_single_logit_is_exact(x in -1e6f64..1e6) {
        prop_assert_eq!(kernels::log_sum_exp_slice(&[x]), x);
    }

    #[test]
    fn lse_shift_invariance(xs in prop::collection::vec(-50.0f64..50.0, 1..10), c in -100.0f64..100.0) {
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        let d = kernels::log_sum_exp_slice(&shifted) - kernels::log_sum_exp_slice(&xs) - c;
        prop_assert!(d.abs() < 1e-10, "{}", d);
    }

    #[test]
    fn energy_is_negated_free_energy(xs in prop::collection::vec(-30.0f64..30.0, 1..8), t in 0.1f64..5.0) {
        prop_assert_eq!(energy_score(&xs, t).unwrap(), -free_energy(&xs, t).unwrap());
    }

    #[test]
    fn raising_a_logit_raises_phi(xs in prop::collection::vec(-20.0f64..20.0, 1..8), i in 0usize..8, d in 0.01f64..5.0) {
        let i = i % xs.len();
        let mut ys = xs.clone();
        ys[i] += d;
        let (before, after) = (energy_score(&xs, 1.0).unwrap(), energy_score(&ys, 1.0).unwrap());
        // strict unless the change is below double precision
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if xs[i] > max - 20.0 {
            prop_assert!(after > before);
        } else {
            prop_assert!(after >= before);
        }
    }

    #[test]
    fn low_temperature_tends_to_max(xs in prop::collection::vec(-20.0f64..20.0, 1..8)) {
        let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((energy_score(&xs, 1e-4).unwrap() - max).abs() < 1e-3);
    }

    #[test]
    fn threshold_coverage(scores in prop::collection::vec(-50.0f64..50.0, 1..400), q in 0.0f64..=1.0) {
        let tau = calibrate_threshold(&scores, q).unwrap();
        let n = scores.len() as f64;
        let frac = scores.iter().filter(|&&s| s >= tau).count() as f64 / n;
        prop_assert!((frac - (1.0 - q)).abs() <= 1.0 / n + 1e-12, "frac {} q {}", frac, q);
    }

    #[test]
    fn tau_table_matches_direct_calibration(scores in prop::collection::vec(-50.0f64..50.0, 1..200)) {
        let table = TauTable::calibrate(&scores).unwrap();
        for &(q, tau) in &table.entries {
            prop_assert_eq!(tau, calibrate_threshold(&scores, q).unwrap());
        }
    }

    #[test]
    fn gae_matches_brute_force(
        r in prop::collection::vec(-2.0f64..2.0, 1..=6),
        v in prop::collection::vec(-2.0f64..2.0, 6),
        terminal in any::<bool>(),
        bootstrap in -2.0f64..2.0,
        gamma in 0.0f64..0.999,
        lam in 0.0f64..=1.0,
    ) {
        let n = r.len();
        let v = &v[..n];
        let mut dones = vec![false; n];
        dones[n - 1] = terminal;
        let (adv, targets) = compute_gae(&r, v, &dones, bootstrap, gamma, lam).unwrap();
        let oracle = gae_brute_force(&r, v, terminal, bootstrap, gamma, lam);
        for t in 0..n {
            prop_assert!((adv[t] - oracle[t]).abs() < 1e-10, "t {} {} vs {}", t, adv[t], oracle[t]);
            prop_assert_eq!(targets[t], adv[t] + v[t]);
        }
    }

    #[test]
    fn gae_lambda_zero_is_td(r in prop::collection::vec(-2.0f64..2.0, 1..=6), v in prop::collection::vec(-2.0f64..2.0, 6), b in -2.0f64..2.0) {
        let n = r.len();
        let (adv, _) = compute_gae(&r, &v[..n], &vec![false; n], b, 0.9, 0.0).unwrap();
        for t in 0..n {
            let next = if t + 1 < n { v[t + 1] } else { b };
            prop_assert!((adv[t] - (r[t] + 0.9 * next - v[t])).abs() < 1e-12);
        }
    }

    #[test]
    fn surrogate_bound(ratio in 0.0f64..5.0, adv in -5.0f64..5.0, eps in 0.05f64..0.5) {
        let s = clipped_surrogate(ratio, adv, eps);
        let bound = (ratio * adv).max((1.0 + eps) * adv).max((1.0 - eps) * adv);
        prop_assert!(s <= bound + 1e-12);
        prop_assert_eq!(clipped_surrogate(1.0, adv, eps), adv);
    }

    #[test]
    fn backward_is_deterministic(xs in prop::collection::vec(-3.0f64..3.0, 2..12)) {
        let grads = || {
            let mut t = Tape::new();
            let x = t.param(Tensor::vector(xs.clone())).unwrap();
            let y = t.log_softmax(x).unwrap();
            let y = t.exp(y).unwrap();
            let z = t.tanh(x).unwrap();
            let w = t.mul(y, z).unwrap();
            let l = t.sum(w).unwrap();
            let mut g = t.backward(l).unwrap();
            g.take(x).unwrap().into_data()
        };
        let a = grads();
        let b = grads();
        prop_assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn grid_runs_are_deterministic(seed in 0u64..1000) {
        prop_assert_eq!(run_grid(seed, GridScenario::LockedTarget, 300), run_grid(seed, GridScenario::LockedTarget, 300));
    }

    #[test]
    fn grid_episode_returns_are_binary(seed in 0u64..1000) {
        let mut ret = 0.0;
        for (_, r, done) in run_grid(seed, GridScenario::AlternatingGoalTarget, 2000) {
            ret += r;
            if done {
                prop_assert!(ret == 0.0 || ret == 1.0);
                ret = 0.0;
            }
        }
    }

    #[test]
    fn alternating_goal_label_is_constant_per_episode(seed in 0u64..1000) {
        let mut env = GridWorld::new(GridConfig::new(GridScenario::AlternatingGoalTarget, seed), 0).unwrap();
        let mut r = rng::stream(seed, 5);
        let mut label = env.ground_truth_id();
        for _ in 0..1500 {
            let mask = env.action_mask();
            let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            let s = env.step(legal[r.gen_range(0..legal.len())]).unwrap();
            if s.done {
                env.reset();
                label = env.ground_truth_id();
            } else {
                prop_assert_eq!(env.ground_truth_id(), label);
            }
        }
    }

    #[test]
    fn kitchen_invariants_under_random_play(seed in 0u64..1000, ring in any::<bool>()) {
        let layout = if ring { KitchenLayoutKind::RingRoom } else { KitchenLayoutKind::SimpleRoom };
        let cfg = OvercookedConfig::new(layout, &Ingredient::ALL, &[Ingredient::Onion, Ingredient::Tomato], seed);
        let run = || {
            let mut env = Overcooked::new(cfg.clone(), 3).unwrap();
            let mut r = rng::stream(seed, 9);
            let mut trace = Vec::new();
            for _ in 0..1200 {
                let s = env.step(r.gen_range(0..6)).unwrap();
                let st = env.state();
                assert!(st.pot.contents.len() <= POT_CAPACITY);
                assert!(st.pot.cook_timer.is_none() || st.pot.contents.len() == POT_CAPACITY);
                assert!(!st.pot.ready || st.pot.cook_timer == Some(0));
                assert!(cfg.allowed_recipes.contains(&st.active_recipe));
                assert!((0.0..=REWARD_ANY_DELIVERY + REWARD_CORRECT_DELIVERY).contains(&s.reward));
                trace.push((s.obs, s.reward.to_bits(), s.done));
                if s.done {
                    env.reset();
                }
            }
            trace
        };
        prop_assert_eq!(run(), run());
    }
}
