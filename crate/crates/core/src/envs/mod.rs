//! Simulated domains: a four-room gridworld and a single-agent kitchen.

use alloc::vec::Vec;

use crate::numerics::Tensor;
use crate::Result;

pub mod grid;
pub mod layout;
pub mod overcooked;

pub use grid::{GridConfig, GridScenario, GridState, GridWorld};
pub use layout::KitchenLayout;
pub use overcooked::{shaping_coeff, Ingredient, Overcooked, OvercookedConfig, OvercookedState};

/// Outcome of one environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub obs: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// Common interface of the simulated domains.
pub trait Environment {
    fn num_actions(&self) -> usize;
    fn obs_dim(&self) -> usize;
    /// Starts a new episode and returns its first observation.
    fn reset(&mut self) -> Vec<f64>;
    fn step(&mut self, action: usize) -> Result<StepResult>;
    fn action_mask(&self) -> Vec<bool>;
    fn observe(&self) -> Vec<f64>;
    /// Whether the current state lies in the teacher's training distribution.
    fn ground_truth_id(&self) -> bool;
    /// Informs the environment of the learner's global step (reward schedules).
    fn set_global_step(&mut self, _t: u64) {}
    /// Evaluation mode disables shaped rewards.
    fn set_eval_mode(&mut self, _eval: bool) {}
    fn episode_step(&self) -> usize;
    fn max_steps(&self) -> usize;
    /// Discrete key identifying the current state, for visitation counting.
    fn state_key(&self) -> Vec<u32>;
}

impl<E: Environment + ?Sized> Environment for alloc::boxed::Box<E> {
    fn num_actions(&self) -> usize {
        (**self).num_actions()
    }
    fn obs_dim(&self) -> usize {
        (**self).obs_dim()
    }
    fn reset(&mut self) -> Vec<f64> {
        (**self).reset()
    }
    fn step(&mut self, action: usize) -> Result<StepResult> {
        (**self).step(action)
    }
    fn action_mask(&self) -> Vec<bool> {
        (**self).action_mask()
    }
    fn observe(&self) -> Vec<f64> {
        (**self).observe()
    }
    fn ground_truth_id(&self) -> bool {
        (**self).ground_truth_id()
    }
    fn set_global_step(&mut self, t: u64) {
        (**self).set_global_step(t)
    }
    fn set_eval_mode(&mut self, eval: bool) {
        (**self).set_eval_mode(eval)
    }
    fn episode_step(&self) -> usize {
        (**self).episode_step()
    }
    fn max_steps(&self) -> usize {
        (**self).max_steps()
    }
    fn state_key(&self) -> Vec<u32> {
        (**self).state_key()
    }
}

/// One recorded step of a rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Tensor,
    pub mask: Vec<bool>,
    pub action: usize,
    pub reward: f64,
    pub next_obs: Tensor,
    pub done: bool,
    /// Log-probability of `action` under the policy that chose it.
    pub behavior_log_prob: f64,
    /// Set when the teacher chose the action.
    pub teacher_flag: bool,
    /// Present exactly when `teacher_flag` is set.
    pub teacher_log_prob: Option<f64>,
    pub ground_truth_id: bool,
}

impl Transition {
    pub fn is_consistent(&self) -> bool {
        self.teacher_flag == self.teacher_log_prob.is_some() && self.reward.is_finite()
    }
}
