//! Batched experience collection with teacher guidance, and evaluation.

use ebtl_core::energy::energy_score;
use ebtl_core::envs::Environment;
use ebtl_core::policy::{sample_action, ActorCriticParams, PolicyOutput};
use ebtl_core::ppo::{compute_gae, PpoConfig, RolloutBatch};
use ebtl_core::rng::{self, streams, ChaCha8Rng};
use ebtl_core::transfer::{aa_select, decay, ebtl_select, jsrl_select, GuidanceEvent, Selection, Strategy, TransferConfig};
use ebtl_core::Tensor;

use crate::envspec::{eval_env_index, EnvSpec};

/// Frozen teacher plus the schedule that governs its guidance.
#[derive(Clone, Debug)]
pub struct Guide<'a> {
    pub teacher: &'a ActorCriticParams,
    pub transfer: &'a TransferConfig,
    /// Energy threshold; `-inf` admits every state.
    pub tau: f64,
    pub temperature: f64,
    pub total_steps: u64,
    pub max_steps: usize,
}

impl Guide<'_> {
    /// Guidance probability at global step `t`.
    pub fn delta(&self, t: u64) -> f64 {
        let d0 = self.transfer.delta0;
        decay(t, d0, self.transfer.kappa(d0, self.total_steps))
    }

    /// Jump-start prefix length at global step `t`.
    pub fn jsrl_horizon(&self, t: u64) -> f64 {
        let h0 = self.transfer.jsrl_h0.unwrap_or(self.max_steps as f64);
        decay(t, h0, self.transfer.kappa(h0, self.total_steps))
    }

    /// Distillation weight at global step `t`.
    pub fn ksrl_weight(&self, t: u64) -> f64 {
        let w0 = self.transfer.ksrl_weight;
        decay(t, w0, self.transfer.kappa(w0, self.total_steps))
    }
}

/// One collected batch and what happened while collecting it.
#[derive(Clone, Debug, Default)]
pub struct Rollout {
    pub batch: RolloutBatch,
    pub events: Vec<GuidanceEvent>,
    /// Returns of episodes that finished during collection.
    pub episode_returns: Vec<f64>,
    /// Ground-truth labels of the collected states, row-aligned with `batch`.
    pub ground_truth: Vec<bool>,
}

/// Parallel environment workers with persistent episode state.
pub struct Collector {
    envs: Vec<Box<dyn Environment>>,
    obs: Vec<Vec<f64>>,
    returns: Vec<f64>,
    rng: ChaCha8Rng,
    global_step: u64,
}

impl Collector {
    pub fn new(spec: &EnvSpec, n_envs: usize) -> ebtl_core::Result<Self> {
        let mut envs = (0..n_envs as u64).map(|i| spec.make(i)).collect::<ebtl_core::Result<Vec<_>>>()?;
        let obs = envs.iter_mut().map(|e| e.observe()).collect();
        Ok(Self { envs, obs, returns: vec![0.0; n_envs], rng: rng::stream(spec.seed(), streams::SELECT), global_step: 0 })
    }

    pub fn global_step(&self) -> u64 {
        self.global_step
    }

    pub fn n_envs(&self) -> usize {
        self.envs.len()
    }

    /// Steps every worker `steps / n_envs` times. Actions follow `strategy`;
    /// guidance strategies need a `guide`.
    pub fn collect(
        &mut self,
        student: &ActorCriticParams,
        guide: Option<&Guide<'_>>,
        strategy: Strategy,
        config: &PpoConfig,
        steps: usize,
    ) -> ebtl_core::Result<Rollout> {
        let n = self.envs.len();
        let horizon = steps / n;
        let needs_teacher = matches!(strategy, Strategy::Ebtl | Strategy::ActionAdvising | Strategy::Jsrl | Strategy::Ksrl);
        let guide = if needs_teacher {
            Some(guide.ok_or_else(|| ebtl_core::Error::InvalidConfig(format!("{} needs a teacher", strategy.as_str())))?)
        } else {
            None
        };

        let mut per_env: Vec<Segment> = (0..n).map(|_| Segment::default()).collect();
        let mut out = Rollout::default();
        for _ in 0..horizon {
            let masks: Vec<Vec<bool>> = self.envs.iter().map(|e| e.action_mask()).collect();
            let obs_t = Tensor::stack_rows(&self.obs)?;
            let students = student.forward_batch(&obs_t, &masks)?;
            let teachers = match guide {
                Some(g) => Some(g.teacher.forward_batch(&obs_t, &masks)?),
                None => None,
            };
            for e in 0..n {
                let t = self.global_step;
                let env = &mut self.envs[e];
                env.set_global_step(t);
                let gt = env.ground_truth_id();
                let episode_step = env.episode_step();
                let s = &students[e];
                let (sel, phi) = match (strategy, guide, &teachers) {
                    (Strategy::Ebtl, Some(g), Some(ts)) => {
                        let (sel, phi) = ebtl_select(&ts[e], s, g.tau, g.delta(t), g.temperature, &mut self.rng)?;
                        (sel, Some(phi))
                    }
                    (Strategy::ActionAdvising, Some(g), Some(ts)) => {
                        (aa_select(&ts[e], s, g.delta(t), &mut self.rng), Some(energy_score(&ts[e].logits, g.temperature)?))
                    }
                    (Strategy::Jsrl, Some(g), Some(ts)) => (
                        jsrl_select(episode_step, &ts[e], s, g.jsrl_horizon(t), &mut self.rng),
                        Some(energy_score(&ts[e].logits, g.temperature)?),
                    ),
                    _ => (student_selection(s, &mut self.rng), None),
                };
                if let (Some(phi), Some(g)) = (phi, guide) {
                    out.events.push(GuidanceEvent {
                        global_step: t,
                        episode_step,
                        phi,
                        tau: g.tau,
                        issued: sel.teacher_flag,
                        ground_truth_id: gt,
                    });
                }
                let step = env.step(sel.action)?;
                let seg = &mut per_env[e];
                seg.obs.push(std::mem::replace(&mut self.obs[e], step.obs));
                seg.masks.push(masks[e].clone());
                seg.sel.push(sel);
                seg.values.push(s.value);
                seg.rewards.push(step.reward);
                seg.dones.push(step.done);
                seg.gt.push(gt);
                if strategy == Strategy::Ksrl {
                    seg.teacher_probs.push(teachers.as_ref().expect("teacher present")[e].probs());
                }
                self.returns[e] += step.reward;
                if step.done {
                    out.episode_returns.push(std::mem::take(&mut self.returns[e]));
                    self.obs[e] = env.reset();
                }
                self.global_step += 1;
            }
        }

        let (_, bootstrap) = student.forward_raw(&Tensor::stack_rows(&self.obs)?)?;
        let b = &mut out.batch;
        if strategy == Strategy::Ksrl {
            b.teacher_probs = Some(Vec::with_capacity(horizon * n));
        }
        for (e, seg) in per_env.into_iter().enumerate() {
            let (adv, targets) =
                compute_gae(&seg.rewards, &seg.values, &seg.dones, bootstrap[e], config.gamma, config.gae_lambda)?;
            b.obs.extend(seg.obs);
            b.masks.extend(seg.masks);
            for sel in &seg.sel {
                b.actions.push(sel.action);
                b.behavior_log_probs.push(sel.behavior_log_prob);
                b.teacher_flags.push(sel.teacher_flag);
                b.teacher_log_probs.push(sel.teacher_log_prob);
            }
            b.values.extend(seg.values);
            b.advantages.extend(adv);
            b.targets.extend(targets);
            out.ground_truth.extend(seg.gt);
            if let Some(tp) = b.teacher_probs.as_mut() {
                tp.extend(seg.teacher_probs);
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct Segment {
    obs: Vec<Vec<f64>>,
    masks: Vec<Vec<bool>>,
    sel: Vec<Selection>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    gt: Vec<bool>,
    teacher_probs: Vec<Vec<f64>>,
}

fn student_selection(s: &PolicyOutput, rng: &mut ChaCha8Rng) -> Selection {
    let (action, lp) = sample_action(s, rng);
    Selection { action, teacher_flag: false, behavior_log_prob: lp, teacher_log_prob: None }
}

/// Undiscounted returns of `episodes` episodes played by sampling from
/// `policy`, without shaping or guidance. Round `round` fixes the action
/// stream; the start states are the same every round.
pub fn evaluate(policy: &ActorCriticParams, spec: &EnvSpec, episodes: usize, round: u64) -> ebtl_core::Result<Vec<f64>> {
    let mut envs = (0..episodes as u64).map(|i| spec.make(eval_env_index(i))).collect::<ebtl_core::Result<Vec<_>>>()?;
    for env in &mut envs {
        env.set_eval_mode(true);
    }
    let mut rng = rng::stream(spec.seed(), streams::EVAL_ROUND_BASE + round);
    let mut obs: Vec<Vec<f64>> = envs.iter().map(|e| e.observe()).collect();
    let mut returns = vec![0.0; episodes];
    let mut live: Vec<usize> = (0..episodes).collect();
    while !live.is_empty() {
        let rows: Vec<&[f64]> = live.iter().map(|&i| obs[i].as_slice()).collect();
        let masks: Vec<Vec<bool>> = live.iter().map(|&i| envs[i].action_mask()).collect();
        let outs = policy.forward_batch(&Tensor::stack_rows(&rows)?, &masks)?;
        let mut still = Vec::with_capacity(live.len());
        for (k, &i) in live.iter().enumerate() {
            let (a, _) = sample_action(&outs[k], &mut rng);
            let step = envs[i].step(a)?;
            returns[i] += step.reward;
            obs[i] = step.obs;
            if !step.done {
                still.push(i);
            }
        }
        live = still;
    }
    Ok(returns)
}

/// Uniform-random play over enabled actions, returning every observation
/// and its ground-truth label.
pub fn random_rollouts(spec: &EnvSpec, episodes: usize, seed_stream: u64) -> ebtl_core::Result<Vec<(Vec<f64>, bool)>> {
    let mut out = Vec::new();
    for_each_random_state(spec, episodes, seed_stream, |env| out.push((env.observe(), env.ground_truth_id())))?;
    Ok(out)
}

/// Uniform-random play over enabled actions, calling `visit` on every state
/// before acting.
pub fn for_each_random_state<F>(spec: &EnvSpec, episodes: usize, seed_stream: u64, mut visit: F) -> ebtl_core::Result<()>
where
    F: FnMut(&dyn Environment),
{
    let mut rng = rng::stream(spec.seed(), seed_stream);
    for i in 0..episodes as u64 {
        let mut env = spec.make(crate::envspec::ood_env_index(i))?;
        loop {
            visit(env.as_ref());
            let mask = env.action_mask();
            let legal: Vec<usize> = (0..mask.len()).filter(|&a| mask[a]).collect();
            let a = legal[rng::index(&mut rng, legal.len())];
            if env.step(a)?.done {
                break;
            }
        }
    }
    Ok(())
}
