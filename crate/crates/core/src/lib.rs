//! Allocation-only core for energy-gated teacher-student transfer in
//! reinforcement learning.
//!
//! Everything here is pure computation: a small tape-based autodiff engine,
//! two simulated environment families, a masked actor-critic, free-energy
//! out-of-distribution scoring, PPO with mixed-policy importance correction,
//! and the action-selection strategies that decide when a frozen teacher
//! acts on behalf of a learning student. File formats, configuration and the
//! command line live in the `ebtl` companion crate.

#![no_std]
#![deny(rust_2018_idioms)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod energy;
pub mod envs;
mod error;
pub mod numerics;
pub mod policy;
pub mod ppo;
pub mod rng;
pub mod transfer;

pub use error::{Error, Result};
pub use numerics::{Tape, Tensor, Var};
