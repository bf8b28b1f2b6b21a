//! Teacher-student action selection.
//!
//! Every strategy turns a (teacher, student) pair of policy outputs into one
//! executed action plus the bookkeeping PPO needs: which policy acted and the
//! log-probability it assigned to the action.

use alloc::vec::Vec;

use rand::Rng;

use crate::energy::energy_score;
use crate::policy::{sample_action, ActorCriticParams, PolicyOutput};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Strategy {
    NoTransfer,
    Ebtl,
    ActionAdvising,
    FineTune,
    Ksrl,
    Jsrl,
}

impl Strategy {
    pub const ALL: [Strategy; 6] =
        [Strategy::NoTransfer, Strategy::Ebtl, Strategy::ActionAdvising, Strategy::FineTune, Strategy::Ksrl, Strategy::Jsrl];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::NoTransfer => "no_transfer",
            Strategy::Ebtl => "ebtl",
            Strategy::ActionAdvising => "aa",
            Strategy::FineTune => "finetune",
            Strategy::Ksrl => "ksrl",
            Strategy::Jsrl => "jsrl",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::InvalidConfig(alloc::format!("unknown strategy {:?}", s)))
    }

    /// Whether the teacher may act during rollouts.
    pub fn issues_guidance(self) -> bool {
        matches!(self, Strategy::Ebtl | Strategy::ActionAdvising | Strategy::Jsrl)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransferConfig {
    pub strategy: Strategy,
    /// Initial guidance probability.
    pub delta0: f64,
    /// Fraction of the run after which guidance (or distillation) reaches zero.
    pub decay_fraction: f64,
    /// Quantile selecting the energy threshold; negative disables the gate.
    pub quantile: f64,
    /// Initial JSRL prefix length; `None` uses the episode limit.
    pub jsrl_h0: Option<f64>,
    /// Initial weight of the distillation cross-entropy.
    pub ksrl_weight: f64,
    pub freeze_encoder: bool,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Ebtl,
            delta0: 1.0,
            decay_fraction: 0.5,
            quantile: 0.5,
            jsrl_h0: None,
            ksrl_weight: 1.0,
            freeze_encoder: true,
        }
    }
}

impl TransferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.delta0) {
            return Err(Error::InvalidConfig("delta0 must lie in [0, 1]".into()));
        }
        if !(self.decay_fraction > 0.0 && self.decay_fraction <= 1.0) {
            return Err(Error::InvalidConfig("decay_fraction must lie in (0, 1]".into()));
        }
        if self.quantile > 1.0 {
            return Err(Error::InvalidConfig("quantile must not exceed 1".into()));
        }
        if !(self.ksrl_weight >= 0.0) || self.jsrl_h0.is_some_and(|h| !(h >= 0.0)) {
            return Err(Error::InvalidConfig("ksrl_weight and jsrl_h0 must be non-negative".into()));
        }
        Ok(())
    }

    /// Decay rate reaching zero after `decay_fraction * total_steps` steps.
    pub fn kappa(&self, start: f64, total_steps: u64) -> f64 {
        start / (self.decay_fraction * total_steps as f64)
    }
}

/// Linear schedule `max(0, delta0 - kappa t)`.
pub fn decay(t: u64, delta0: f64, kappa: f64) -> f64 {
    f64::max(0.0, delta0 - kappa * t as f64)
}

/// Executed action and the information PPO needs about who chose it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub action: usize,
    /// True when the teacher chose the action.
    pub teacher_flag: bool,
    /// Log-probability under the policy that chose the action.
    pub behavior_log_prob: f64,
    pub teacher_log_prob: Option<f64>,
}

/// One guidance decision, recorded for every rollout step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GuidanceEvent {
    pub global_step: u64,
    pub episode_step: usize,
    pub phi: f64,
    pub tau: f64,
    pub issued: bool,
    pub ground_truth_id: bool,
}

fn teacher_acts<R: Rng + ?Sized>(teacher: &PolicyOutput, rng: &mut R) -> Selection {
    let (action, lp) = sample_action(teacher, rng);
    Selection { action, teacher_flag: true, behavior_log_prob: lp, teacher_log_prob: Some(lp) }
}

fn student_acts<R: Rng + ?Sized>(student: &PolicyOutput, rng: &mut R) -> Selection {
    let (action, lp) = sample_action(student, rng);
    Selection { action, teacher_flag: false, behavior_log_prob: lp, teacher_log_prob: None }
}

/// Energy-gated selection: the teacher acts iff `phi >= tau` and a uniform
/// draw falls below `delta_t`. Returns the selection and `phi`.
pub fn ebtl_select<R: Rng + ?Sized>(
    teacher: &PolicyOutput,
    student: &PolicyOutput,
    tau: f64,
    delta_t: f64,
    temperature: f64,
    rng: &mut R,
) -> Result<(Selection, f64)> {
    let phi = energy_score(&teacher.logits, temperature)?;
    let p: f64 = rng.gen();
    Ok((ebtl_decide(phi, tau, p, delta_t, teacher, student, rng), phi))
}

/// The gate with an explicit uniform draw `p`.
pub fn ebtl_decide<R: Rng + ?Sized>(
    phi: f64,
    tau: f64,
    p: f64,
    delta_t: f64,
    teacher: &PolicyOutput,
    student: &PolicyOutput,
    rng: &mut R,
) -> Selection {
    if phi >= tau && p < delta_t {
        teacher_acts(teacher, rng)
    } else {
        student_acts(student, rng)
    }
}

/// Action advising: the teacher acts iff a uniform draw falls below `delta_t`.
pub fn aa_select<R: Rng + ?Sized>(teacher: &PolicyOutput, student: &PolicyOutput, delta_t: f64, rng: &mut R) -> Selection {
    let p: f64 = rng.gen();
    if p < delta_t {
        teacher_acts(teacher, rng)
    } else {
        student_acts(student, rng)
    }
}

/// Jump-start: the teacher acts for the first `h_t` steps of each episode.
pub fn jsrl_select<R: Rng + ?Sized>(
    episode_step: usize,
    teacher: &PolicyOutput,
    student: &PolicyOutput,
    h_t: f64,
    rng: &mut R,
) -> Selection {
    if (episode_step as f64) < h_t {
        teacher_acts(teacher, rng)
    } else {
        student_acts(student, rng)
    }
}

/// `weight * mean_t [ -sum_a pi_T(a|s_t) log pi_S(a|s_t) ]`. Actions the
/// teacher gives zero probability contribute nothing, even if masked.
pub fn ksrl_aux_loss(student_log_probs: &[Vec<f64>], teacher_probs: &[Vec<f64>], weight: f64) -> Result<f64> {
    if student_log_probs.len() != teacher_probs.len() || student_log_probs.is_empty() {
        return Err(Error::invalid("ksrl_aux_loss", "need aligned non-empty batches"));
    }
    if weight == 0.0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (s, t) in student_log_probs.iter().zip(teacher_probs) {
        if s.len() != t.len() {
            return Err(Error::ShapeMismatch { op: "ksrl_aux_loss", lhs: alloc::vec![s.len()], rhs: alloc::vec![t.len()] });
        }
        total -= s.iter().zip(t).filter(|(_, &p)| p > 0.0).map(|(&lp, &p)| p * lp).sum::<f64>();
    }
    Ok(weight * total / student_log_probs.len() as f64)
}

/// Student initialised as a copy of the teacher, with the frozen-parameter
/// mask for encoder freezing.
pub fn finetune_init(teacher: &ActorCriticParams, freeze_encoder: bool) -> (ActorCriticParams, Vec<bool>) {
    let student = teacher.clone();
    let frozen_names = teacher.arch().frozen_encoder_names();
    let mask = teacher.names().iter().map(|n| freeze_encoder && frozen_names.contains(n)).collect();
    (student, mask)
}

/// Checks that a student architecture can be initialised from a teacher.
pub fn check_compatible(teacher: &ActorCriticParams, obs_dim: usize, num_actions: usize) -> Result<()> {
    let a = teacher.arch();
    if a.obs_dim != obs_dim || a.num_actions != num_actions {
        return Err(Error::ShapeMismatch {
            op: "finetune_init",
            lhs: alloc::vec![a.obs_dim, a.num_actions],
            rhs: alloc::vec![obs_dim, num_actions],
        });
    }
    Ok(())
}
