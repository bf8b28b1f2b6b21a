//! Proximal policy optimisation with generalised advantage estimation.
//!
//! Rollouts may mix student and teacher actions. Each row carries the flag
//! `teacher_flag`; the importance ratio compares the current student against
//! whichever policy actually chose the action, and the same (detached) ratio
//! weights the value loss.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::energy::{energy_reg_loss_tape, energy_score_tape, EnergyGateConfig};
use crate::numerics::{adam_step, AdamState, Tape, Tensor, Var};
use crate::policy::{masked_log_softmax_tape, ActorCriticParams};
use crate::rng;
use crate::{Error, Result};

/// Upper bound applied to importance ratios before use.
pub const RATIO_CAP: f64 = 1e4;

#[derive(Clone, Debug, PartialEq)]
pub struct PpoConfig {
    pub lr: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub clip_eps: f64,
    pub vf_clip: f64,
    pub vf_coeff: f64,
    pub entropy_coeff: f64,
    pub train_batch: usize,
    pub minibatch: usize,
    pub sgd_iters: usize,
    pub n_envs: usize,
    pub normalize_advantage: bool,
}

impl PpoConfig {
    /// Grid-world hyperparameters.
    pub fn grid() -> Self {
        Self {
            lr: 5e-4,
            gamma: 0.9,
            gae_lambda: 0.8,
            clip_eps: 0.2,
            vf_clip: 10.0,
            vf_coeff: 0.5,
            entropy_coeff: 0.01,
            train_batch: 256,
            minibatch: 128,
            sgd_iters: 4,
            n_envs: 8,
            normalize_advantage: false,
        }
    }

    /// Overcooked hyperparameters; the learning rate depends on the layout.
    pub fn overcooked(lr: f64) -> Self {
        Self {
            lr,
            gamma: 0.99,
            gae_lambda: 0.6,
            clip_eps: 0.2,
            vf_clip: 10.0,
            vf_coeff: 0.5,
            entropy_coeff: 0.1,
            train_batch: 9600,
            minibatch: 1600,
            sgd_iters: 8,
            n_envs: 24,
            normalize_advantage: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must lie in [0, 1]");
        }
        if !(self.clip_eps > 0.0) || !(self.vf_clip > 0.0) {
            return bad("clip parameters must be positive");
        }
        if self.minibatch == 0 || self.train_batch == 0 || !self.train_batch.is_multiple_of(self.minibatch) {
            return bad("minibatch must divide train_batch");
        }
        if self.n_envs == 0 || !self.train_batch.is_multiple_of(self.n_envs) {
            return bad("n_envs must divide train_batch");
        }
        if self.sgd_iters == 0 {
            return bad("sgd_iters must be positive");
        }
        Ok(())
    }
}

/// Advantages and value targets for one contiguous trajectory segment.
/// `bootstrap_value` is the value of the state following the last step.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::invalid("compute_gae", "rewards, values and dones must have equal length"));
    }
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        next_adv = delta + gamma * gae_lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let targets = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((adv, targets))
}

/// `exp(current - reference)` where the reference is the teacher's
/// log-probability for teacher actions and the behaviour log-probability
/// otherwise, capped at [`RATIO_CAP`].
pub fn importance_ratio(
    teacher_flag: bool,
    behavior_log_prob: f64,
    teacher_log_prob: Option<f64>,
    current_log_prob: f64,
) -> Result<f64> {
    let reference = reference_log_prob(teacher_flag, behavior_log_prob, teacher_log_prob)?;
    Ok(f64::min(libm::exp(current_log_prob - reference), RATIO_CAP))
}

fn reference_log_prob(teacher_flag: bool, behavior_log_prob: f64, teacher_log_prob: Option<f64>) -> Result<f64> {
    if teacher_flag {
        teacher_log_prob.ok_or(Error::MissingTeacherLogProb)
    } else {
        Ok(behavior_log_prob)
    }
}

/// Per-sample clipped surrogate `min(r A, clip(r, 1 - eps, 1 + eps) A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip_eps: f64) -> f64 {
    f64::min(ratio * advantage, ratio.clamp(1.0 - clip_eps, 1.0 + clip_eps) * advantage)
}

/// Negated mean clipped surrogate minus the entropy bonus.
pub fn actor_loss(ratios: &[f64], advantages: &[f64], entropies: &[f64], clip_eps: f64, entropy_coeff: f64) -> Result<f64> {
    if ratios.is_empty() || ratios.len() != advantages.len() || entropies.len() != ratios.len() {
        return Err(Error::invalid("actor_loss", "inputs must be non-empty and aligned"));
    }
    let n = ratios.len() as f64;
    let surr: f64 = ratios.iter().zip(advantages).map(|(&r, &a)| clipped_surrogate(r, a, clip_eps)).sum::<f64>() / n;
    let ent: f64 = entropies.iter().sum::<f64>() / n;
    Ok(-surr - entropy_coeff * ent)
}

/// Ratio-weighted squared error, each term clipped at `vf_clip`.
pub fn value_loss(ratios: &[f64], values: &[f64], targets: &[f64], vf_clip: f64) -> Result<f64> {
    if values.is_empty() || values.len() != targets.len() || ratios.len() != values.len() {
        return Err(Error::invalid("value_loss", "inputs must be non-empty and aligned"));
    }
    let s: f64 = ratios
        .iter()
        .zip(values.iter().zip(targets))
        .map(|(&r, (&v, &t))| r * f64::min((v - t) * (v - t), vf_clip))
        .sum();
    Ok(s / values.len() as f64)
}

/// A collected batch ready for an update.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBatch {
    /// `[N, obs_dim]`.
    pub obs: Vec<Vec<f64>>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub behavior_log_probs: Vec<f64>,
    pub teacher_flags: Vec<bool>,
    pub teacher_log_probs: Vec<Option<f64>>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub targets: Vec<f64>,
    /// Teacher action distributions, present for distillation.
    pub teacher_probs: Option<Vec<Vec<f64>>>,
    /// Fixed value-loss weights replacing the detached current ratio.
    pub value_weights: Option<Vec<f64>>,
}

impl RolloutBatch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let aligned = [
            self.obs.len(),
            self.masks.len(),
            self.behavior_log_probs.len(),
            self.teacher_flags.len(),
            self.teacher_log_probs.len(),
            self.values.len(),
            self.advantages.len(),
            self.targets.len(),
        ]
        .iter()
        .all(|&l| l == n);
        let optional_ok = self.teacher_probs.as_ref().is_none_or(|p| p.len() == n)
            && self.value_weights.as_ref().is_none_or(|w| w.len() == n);
        if !aligned || !optional_ok {
            return Err(Error::invalid("ppo_update", "batch columns have different lengths"));
        }
        if n == 0 {
            return Err(Error::Empty("ppo_update"));
        }
        if self.advantages.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite { op: "advantages" });
        }
        for (f, t) in self.teacher_flags.iter().zip(&self.teacher_log_probs) {
            if *f && t.is_none() {
                return Err(Error::MissingTeacherLogProb);
            }
        }
        Ok(())
    }
}

/// Margin regularisation of the energy score during teacher training.
pub struct EnergyTerm<'a> {
    pub config: &'a EnergyGateConfig,
    /// Recent teacher observations (in-distribution pool).
    pub id_pool: &'a [Vec<f64>],
    /// Fixed out-of-distribution observations.
    pub ood_pool: &'a [Vec<f64>],
    /// Samples drawn from each pool per minibatch.
    pub batch: usize,
}

/// Optional additions to the PPO loss.
#[derive(Default)]
pub struct UpdateExtras<'a> {
    pub energy: Option<EnergyTerm<'a>>,
    /// Weight of the teacher cross-entropy; needs `teacher_probs`.
    pub ksrl_weight: f64,
    /// Parameters whose gradient is zeroed before each optimiser step.
    pub frozen: Option<&'a [bool]>,
}

/// Mean loss components over all minibatches of an update.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct UpdateStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub energy_loss: f64,
    pub ksrl_loss: f64,
    pub total_loss: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

/// Scalar components of one minibatch loss.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossParts {
    pub policy: f64,
    pub value: f64,
    pub entropy: f64,
    pub energy: f64,
    pub ksrl: f64,
    pub total: f64,
    pub clip_fraction: f64,
    pub mean_ratio: f64,
}

fn rows_tensor(rows: &[&[f64]]) -> Result<Tensor> {
    Tensor::stack_rows(rows)
}

/// Records the total loss of one minibatch on `tape`. `rows` indexes the
/// batch; `energy_rows` gives the (id, ood) pool rows for the margin term.
pub fn minibatch_loss(
    tape: &mut Tape,
    params: &ActorCriticParams,
    vars: &[Var],
    batch: &RolloutBatch,
    rows: &[usize],
    config: &PpoConfig,
    extras: &UpdateExtras<'_>,
    energy_rows: Option<(&[usize], &[usize])>,
) -> Result<(Var, LossParts)> {
    let m = rows.len();
    let obs: Vec<&[f64]> = rows.iter().map(|&i| batch.obs[i].as_slice()).collect();
    let obs = tape.constant(rows_tensor(&obs)?)?;
    let out = params.forward_tape(tape, vars, obs)?;
    let masks: Vec<Vec<bool>> = rows.iter().map(|&i| batch.masks[i].clone()).collect();
    let log_probs = masked_log_softmax_tape(tape, out.logits, &masks)?;
    let actions: Vec<usize> = rows.iter().map(|&i| batch.actions[i]).collect();
    let lp = tape.gather(log_probs, &actions)?;

    let mut refs = Vec::with_capacity(m);
    for &i in rows {
        refs.push(reference_log_prob(batch.teacher_flags[i], batch.behavior_log_probs[i], batch.teacher_log_probs[i])?);
    }
    let mut adv: Vec<f64> = rows.iter().map(|&i| batch.advantages[i]).collect();
    if config.normalize_advantage && m > 1 {
        let mean = adv.iter().sum::<f64>() / m as f64;
        let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / m as f64;
        let sd = libm::sqrt(var) + 1e-8;
        adv.iter_mut().for_each(|a| *a = (*a - mean) / sd);
    }
    let refs_v = tape.constant(Tensor::vector(refs))?;
    let log_ratio = tape.sub(lp, refs_v)?;
    let log_ratio = tape.clip(log_ratio, f64::NEG_INFINITY, libm::log(RATIO_CAP))?;
    let ratio = tape.exp(log_ratio)?;
    let ratio_vals = tape.value(ratio)?.data().to_vec();

    let adv_v = tape.constant(Tensor::vector(adv))?;
    let surr1 = tape.mul(ratio, adv_v)?;
    let clipped = tape.clip(ratio, 1.0 - config.clip_eps, 1.0 + config.clip_eps)?;
    let surr2 = tape.mul(clipped, adv_v)?;
    let surr = tape.minimum(surr1, surr2)?;
    let surr = tape.mean(surr)?;
    let policy_loss = tape.neg(surr)?;

    // entropy of the masked distribution: -sum p log p
    let p = tape.exp(log_probs)?;
    let plogp = tape.mul(p, log_probs)?;
    let neg_ent = tape.sum_rows(plogp)?;
    let ent = tape.mean(neg_ent)?;
    let ent = tape.neg(ent)?;

    let targets = tape.constant(Tensor::vector(rows.iter().map(|&i| batch.targets[i]).collect()))?;
    let err = tape.sub(out.value, targets)?;
    let err = tape.square(err)?;
    let err = tape.clip(err, 0.0, config.vf_clip)?;
    let weights = match &batch.value_weights {
        Some(w) => rows.iter().map(|&i| w[i]).collect(),
        None => ratio_vals.clone(),
    };
    let weights = tape.constant(Tensor::vector(weights))?;
    let vl = tape.mul(err, weights)?;
    let vl = tape.mean(vl)?;

    let ent_term = tape.scale(ent, config.entropy_coeff)?;
    let mut total = tape.sub(policy_loss, ent_term)?;
    let vf_term = tape.scale(vl, config.vf_coeff)?;
    total = tape.add(total, vf_term)?;

    let mut parts = LossParts {
        policy: tape.value(policy_loss)?.item(),
        value: tape.value(vl)?.item(),
        entropy: tape.value(ent)?.item(),
        clip_fraction: ratio_vals.iter().filter(|r| (**r - 1.0).abs() > config.clip_eps).count() as f64 / m as f64,
        mean_ratio: ratio_vals.iter().sum::<f64>() / m as f64,
        ..LossParts::default()
    };

    if let (Some(term), Some((id_rows, ood_rows))) = (&extras.energy, energy_rows) {
        if term.config.weight > 0.0 {
            let id: Vec<&[f64]> = id_rows.iter().map(|&i| term.id_pool[i].as_slice()).collect();
            let ood: Vec<&[f64]> = ood_rows.iter().map(|&i| term.ood_pool[i].as_slice()).collect();
            let id = tape.constant(rows_tensor(&id)?)?;
            let ood = tape.constant(rows_tensor(&ood)?)?;
            let id_out = params.forward_tape(tape, vars, id)?;
            let ood_out = params.forward_tape(tape, vars, ood)?;
            let phi_in = energy_score_tape(tape, id_out.logits, term.config.temperature)?;
            let phi_out = energy_score_tape(tape, ood_out.logits, term.config.temperature)?;
            let el = energy_reg_loss_tape(tape, phi_in, phi_out, term.config.margin_in, term.config.margin_out)?;
            parts.energy = tape.value(el)?.item();
            let el = tape.scale(el, term.config.weight)?;
            total = tape.add(total, el)?;
        }
    }

    if extras.ksrl_weight > 0.0 {
        let probs = batch.teacher_probs.as_ref().ok_or(Error::invalid("ksrl", "batch lacks teacher distributions"))?;
        let k = masks[0].len();
        let flat: Vec<f64> = rows.iter().flat_map(|&i| probs[i].iter().copied()).collect();
        let tp = tape.constant(Tensor::new(vec![m, k], flat)?)?;
        let ce = tape.mul(tp, log_probs)?;
        let ce = tape.sum_rows(ce)?;
        let ce = tape.mean(ce)?;
        let ce = tape.neg(ce)?;
        parts.ksrl = tape.value(ce)?.item();
        let ce = tape.scale(ce, extras.ksrl_weight)?;
        total = tape.add(total, ce)?;
    }

    parts.total = tape.value(total)?.item();
    for (component, value) in [
        ("policy", parts.policy),
        ("value", parts.value),
        ("entropy", parts.entropy),
        ("energy", parts.energy),
        ("ksrl", parts.ksrl),
        ("total", parts.total),
    ] {
        if !value.is_finite() {
            return Err(Error::NonFiniteLoss { component, value });
        }
    }
    Ok((total, parts))
}

/// `sgd_iters` epochs of shuffled minibatches, one Adam step each.
pub fn ppo_update<R: Rng + ?Sized>(
    params: &mut ActorCriticParams,
    adam: &mut AdamState,
    batch: &RolloutBatch,
    config: &PpoConfig,
    extras: &UpdateExtras<'_>,
    rng: &mut R,
) -> Result<UpdateStats> {
    batch.validate()?;
    if let Some(f) = extras.frozen {
        if f.len() != params.tensors().len() {
            return Err(Error::invalid("ppo_update", "frozen mask length differs from parameter count"));
        }
    }
    if let Some(term) = &extras.energy {
        term.config.validate()?;
        if term.config.weight > 0.0 && (term.id_pool.is_empty() || term.ood_pool.is_empty() || term.batch == 0) {
            return Err(Error::Empty("energy regularisation pools"));
        }
    }
    let n = batch.len();
    let mb = config.minibatch.min(n);
    let names = params.names().to_vec();
    let name_refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();

    let mut tape = Tape::new();
    let mut stats = UpdateStats::default();
    let mut count = 0usize;
    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..config.sgd_iters {
        for i in (1..n).rev() {
            let j = rng::index(rng, i + 1);
            order.swap(i, j);
        }
        for chunk in order.chunks(mb) {
            let energy_rows = match &extras.energy {
                Some(term) if term.config.weight > 0.0 => {
                    let id: Vec<usize> = (0..term.batch).map(|_| rng::index(rng, term.id_pool.len())).collect();
                    let ood: Vec<usize> = (0..term.batch).map(|_| rng::index(rng, term.ood_pool.len())).collect();
                    Some((id, ood))
                }
                _ => None,
            };
            tape.clear();
            let vars = params.to_tape(&mut tape)?;
            let (loss, parts) = minibatch_loss(
                &mut tape,
                params,
                &vars,
                batch,
                chunk,
                config,
                extras,
                energy_rows.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
            )?;
            let mut grads = tape.backward(loss)?;
            let mut g: Vec<Tensor> = Vec::with_capacity(vars.len());
            for (k, v) in vars.iter().enumerate() {
                let mut t = grads.take(*v).expect("parameter gradient");
                if extras.frozen.is_some_and(|f| f[k]) {
                    t.data_mut().iter_mut().for_each(|x| *x = 0.0);
                }
                g.push(t);
            }
            adam_step(params.tensors_mut(), &g, &name_refs, adam, config.lr)?;
            stats.policy_loss += parts.policy;
            stats.value_loss += parts.value;
            stats.entropy += parts.entropy;
            stats.energy_loss += parts.energy;
            stats.ksrl_loss += parts.ksrl;
            stats.total_loss += parts.total;
            stats.clip_fraction += parts.clip_fraction;
            stats.mean_ratio += parts.mean_ratio;
            count += 1;
        }
    }
    let c = count as f64;
    stats.policy_loss /= c;
    stats.value_loss /= c;
    stats.entropy /= c;
    stats.energy_loss /= c;
    stats.ksrl_loss /= c;
    stats.total_loss /= c;
    stats.clip_fraction /= c;
    stats.mean_ratio /= c;
    Ok(stats)
}
