//! Environment factories shared by training, transfer and evaluation.

use ebtl_core::envs::grid::NUM_GRID_ACTIONS;
use ebtl_core::envs::overcooked::NUM_OC_ACTIONS;
use ebtl_core::envs::{Environment, GridConfig, GridWorld, Ingredient, Overcooked, OvercookedConfig};
use ebtl_core::rng::streams;

/// One concrete environment distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum EnvSpec {
    Grid(GridConfig),
    Kitchen {
        config: OvercookedConfig,
        /// Recipes the teacher trained on; drives the ground-truth label.
        source_recipes: Vec<Ingredient>,
    },
}

/// Worker index whose stream is `EVAL_ENV_BASE + i`.
pub fn eval_env_index(i: u64) -> u64 {
    streams::EVAL_ENV_BASE - streams::ENV_BASE + i
}

/// Worker index whose stream is `OOD_ENV_BASE + i`.
pub fn ood_env_index(i: u64) -> u64 {
    streams::OOD_ENV_BASE - streams::ENV_BASE + i
}

impl EnvSpec {
    pub fn seed(&self) -> u64 {
        match self {
            EnvSpec::Grid(c) => c.seed,
            EnvSpec::Kitchen { config, .. } => config.seed,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut s = self.clone();
        match &mut s {
            EnvSpec::Grid(c) => c.seed = seed,
            EnvSpec::Kitchen { config, .. } => config.seed = seed,
        }
        s
    }

    pub fn validate(&self) -> ebtl_core::Result<()> {
        match self {
            EnvSpec::Grid(c) => c.validate(),
            EnvSpec::Kitchen { config, .. } => config.validate(),
        }
    }

    pub fn make(&self, env_index: u64) -> ebtl_core::Result<Box<dyn Environment>> {
        Ok(match self {
            EnvSpec::Grid(c) => Box::new(GridWorld::new(c.clone(), env_index)?),
            EnvSpec::Kitchen { config, source_recipes } => {
                Box::new(Overcooked::new(config.clone(), env_index)?.with_source_recipes(source_recipes.clone()))
            }
        })
    }

    pub fn num_actions(&self) -> usize {
        match self {
            EnvSpec::Grid(_) => NUM_GRID_ACTIONS,
            EnvSpec::Kitchen { .. } => NUM_OC_ACTIONS,
        }
    }

    pub fn obs_dim(&self) -> ebtl_core::Result<usize> {
        Ok(self.make(0)?.obs_dim())
    }

    pub fn max_steps(&self) -> usize {
        match self {
            EnvSpec::Grid(c) => c.max_steps,
            EnvSpec::Kitchen { config, .. } => config.max_steps,
        }
    }

    /// Return range of one episode, used to validate evaluation rows.
    pub fn return_bounds(&self) -> (f64, f64) {
        match self {
            EnvSpec::Grid(_) => (0.0, 1.0),
            EnvSpec::Kitchen { config, .. } => {
                let per_delivery = ebtl_core::envs::overcooked::REWARD_CORRECT_DELIVERY;
                (0.0, per_delivery * config.max_steps as f64)
            }
        }
    }
}
