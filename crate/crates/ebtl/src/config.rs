//! Declarative experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use ebtl_core::energy::EnergyGateConfig;
use ebtl_core::envs::grid::{GridConfig, GridScenario};
use ebtl_core::envs::overcooked::KitchenLayoutKind;
use ebtl_core::envs::{Ingredient, OvercookedConfig};
use ebtl_core::ppo::PpoConfig;
use ebtl_core::transfer::{Strategy, TransferConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::envspec::EnvSpec;
use crate::Error;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Student training horizon in environment steps.
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    /// Evaluate every this many PPO batches.
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_eval_episodes")]
    pub eval_episodes: usize,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub env: EnvSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub ppo: PpoSection,
    #[serde(default)]
    pub energy: EnergySection,
    #[serde(default)]
    pub teacher: TeacherSection,
    #[serde(default)]
    pub transfer: TransferSection,
}

fn default_seeds() -> Vec<u64> {
    vec![0, 1, 2, 3, 4]
}
fn default_total_steps() -> u64 {
    200_000
}
fn default_eval_every() -> usize {
    10
}
fn default_eval_episodes() -> usize {
    20
}
fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridTask {
    AlternatingGoal,
    Locked,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KitchenName {
    SimpleRoom,
    RingRoom,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IngredientName {
    Onion,
    Tomato,
    Fish,
}

impl From<IngredientName> for Ingredient {
    fn from(i: IngredientName) -> Self {
        match i {
            IngredientName::Onion => Ingredient::Onion,
            IngredientName::Tomato => Ingredient::Tomato,
            IngredientName::Fish => Ingredient::Fish,
        }
    }
}

fn ingredients(v: &[IngredientName]) -> Vec<Ingredient> {
    v.iter().map(|&i| i.into()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EnvSection {
    Grid {
        task: GridTask,
        #[serde(default = "default_grid_size")]
        size: usize,
        #[serde(default = "default_max_steps")]
        max_steps: usize,
    },
    Overcooked {
        layout: KitchenName,
        source_ingredients: Vec<IngredientName>,
        source_recipes: Vec<IngredientName>,
        target_ingredients: Vec<IngredientName>,
        target_recipes: Vec<IngredientName>,
        #[serde(default = "default_cook_time")]
        cook_time: u32,
        #[serde(default = "default_max_steps")]
        max_steps: usize,
        /// Steps over which shaped rewards decay; defaults to the run length.
        shaping_horizon: Option<u64>,
    },
}

fn default_grid_size() -> usize {
    13
}
fn default_max_steps() -> usize {
    400
}
fn default_cook_time() -> u32 {
    20
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Source,
    Target,
}

impl EnvSection {
    pub fn is_grid(&self) -> bool {
        matches!(self, EnvSection::Grid { .. })
    }

    /// Environment of the given phase; `horizon` is the run length used as
    /// the default shaping horizon.
    pub fn spec(&self, phase: Phase, seed: u64, horizon: u64) -> EnvSpec {
        match self {
            EnvSection::Grid { task, size, max_steps } => {
                let scenario = match (task, phase) {
                    (GridTask::AlternatingGoal, Phase::Source) => GridScenario::AlternatingGoalSource,
                    (GridTask::AlternatingGoal, Phase::Target) => GridScenario::AlternatingGoalTarget,
                    (GridTask::Locked, Phase::Source) => GridScenario::LockedSource,
                    (GridTask::Locked, Phase::Target) => GridScenario::LockedTarget,
                };
                let mut c = GridConfig::new(scenario, seed);
                c.width = *size;
                c.height = *size;
                c.max_steps = *max_steps;
                EnvSpec::Grid(c)
            }
            EnvSection::Overcooked {
                layout,
                source_ingredients,
                source_recipes,
                target_ingredients,
                target_recipes,
                cook_time,
                max_steps,
                shaping_horizon,
            } => {
                let kind = match layout {
                    KitchenName::SimpleRoom => KitchenLayoutKind::SimpleRoom,
                    KitchenName::RingRoom => KitchenLayoutKind::RingRoom,
                };
                let (ing, rec) = match phase {
                    Phase::Source => (source_ingredients, source_recipes),
                    Phase::Target => (target_ingredients, target_recipes),
                };
                let mut c = OvercookedConfig::new(kind, &ingredients(ing), &ingredients(rec), seed);
                c.cook_time = *cook_time;
                c.max_steps = *max_steps;
                c.shaping_horizon = shaping_horizon.unwrap_or(horizon);
                EnvSpec::Kitchen { config: c, source_recipes: ingredients(source_recipes) }
            }
        }
    }

    /// Where out-of-distribution states are drawn: the target task, with
    /// grid starts spread over every room.
    pub fn ood_spec(&self, seed: u64, horizon: u64) -> EnvSpec {
        match self.spec(Phase::Target, seed, horizon) {
            EnvSpec::Grid(mut c) => {
                c.start_anywhere = true;
                EnvSpec::Grid(c)
            }
            other => other,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

impl Default for NetworkSection {
    fn default() -> Self {
        Self { hidden: default_hidden() }
    }
}

/// Overrides of the per-domain PPO defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PpoSection {
    pub lr: Option<f64>,
    pub gamma: Option<f64>,
    pub gae_lambda: Option<f64>,
    pub clip_eps: Option<f64>,
    pub vf_clip: Option<f64>,
    pub vf_coeff: Option<f64>,
    pub entropy_coeff: Option<f64>,
    pub train_batch: Option<usize>,
    pub minibatch: Option<usize>,
    pub sgd_iters: Option<usize>,
    pub n_envs: Option<usize>,
    pub normalize_advantage: Option<bool>,
}

/// Overrides of the per-domain energy defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergySection {
    pub temperature: Option<f64>,
    pub margin_in: Option<f64>,
    pub margin_out: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSection {
    #[serde(default = "default_total_steps")]
    pub total_steps: u64,
    #[serde(default = "yes")]
    pub energy_regularization: bool,
    #[serde(default = "default_ood_episodes")]
    pub ood_episodes: usize,
    /// Size of the rolling buffer of recent training frames.
    #[serde(default = "default_id_buffer")]
    pub id_buffer: usize,
    /// In- and out-of-distribution rows drawn per minibatch for the margin loss.
    #[serde(default = "default_energy_batch")]
    pub energy_batch: usize,
    /// Save a checkpoint every this many steps.
    pub checkpoint_every: Option<u64>,
    /// Stop once the mean evaluation return reaches this value.
    pub stop_at_return: Option<f64>,
}

fn yes() -> bool {
    true
}
fn default_ood_episodes() -> usize {
    100
}
fn default_id_buffer() -> usize {
    3000
}
fn default_energy_batch() -> usize {
    64
}

impl Default for TeacherSection {
    fn default() -> Self {
        Self {
            total_steps: default_total_steps(),
            energy_regularization: true,
            ood_episodes: default_ood_episodes(),
            id_buffer: default_id_buffer(),
            energy_batch: default_energy_batch(),
            checkpoint_every: None,
            stop_at_return: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    #[serde(default = "default_decay_fraction")]
    pub decay_fraction: f64,
    #[serde(default = "default_quantile")]
    pub quantile: f64,
    /// Quantiles expanded by `sweep`.
    #[serde(default = "default_sweep")]
    pub sweep_quantiles: Vec<f64>,
    pub jsrl_h0: Option<f64>,
    #[serde(default = "default_delta0")]
    pub ksrl_weight: f64,
    #[serde(default = "yes")]
    pub freeze_encoder: bool,
}

fn default_strategy() -> String {
    "ebtl".into()
}
fn default_delta0() -> f64 {
    1.0
}
fn default_decay_fraction() -> f64 {
    0.5
}
fn default_quantile() -> f64 {
    0.5
}
fn default_sweep() -> Vec<f64> {
    ebtl_core::energy::TAU_QUANTILES.to_vec()
}

impl Default for TransferSection {
    fn default() -> Self {
        Self {
            strategy: default_strategy(),
            delta0: 1.0,
            decay_fraction: default_decay_fraction(),
            quantile: default_quantile(),
            sweep_quantiles: default_sweep(),
            jsrl_h0: None,
            ksrl_weight: 1.0,
            freeze_encoder: true,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, Error> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML form without the output directory, hex
    /// encoded.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        hex(&Sha256::digest(c.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.seeds.is_empty() {
            return bad("seeds must be non-empty");
        }
        if self.eval_every == 0 || self.eval_episodes == 0 {
            return bad("eval_every and eval_episodes must be positive");
        }
        if self.network.hidden.is_empty() || self.network.hidden.contains(&0) {
            return bad("network.hidden needs at least one non-zero layer");
        }
        if self.teacher.id_buffer == 0 || self.teacher.energy_batch == 0 || self.teacher.ood_episodes == 0 {
            return bad("teacher buffer, energy batch and ood episodes must be positive");
        }
        let ppo = self.ppo_config();
        ppo.validate()?;
        if self.total_steps < ppo.train_batch as u64 {
            return bad("total_steps must cover at least one batch");
        }
        self.energy_config().validate()?;
        self.transfer_config()?.validate()?;
        for phase in [Phase::Source, Phase::Target] {
            self.env.spec(phase, 0, self.total_steps).validate()?;
        }
        Ok(())
    }

    pub fn ppo_config(&self) -> PpoConfig {
        let base = if self.env.is_grid() {
            PpoConfig::grid()
        } else {
            let lr = match &self.env {
                EnvSection::Overcooked { layout: KitchenName::RingRoom, .. } => 6e-4,
                _ => 1e-3,
            };
            PpoConfig::overcooked(lr)
        };
        let p = &self.ppo;
        PpoConfig {
            lr: p.lr.unwrap_or(base.lr),
            gamma: p.gamma.unwrap_or(base.gamma),
            gae_lambda: p.gae_lambda.unwrap_or(base.gae_lambda),
            clip_eps: p.clip_eps.unwrap_or(base.clip_eps),
            vf_clip: p.vf_clip.unwrap_or(base.vf_clip),
            vf_coeff: p.vf_coeff.unwrap_or(base.vf_coeff),
            entropy_coeff: p.entropy_coeff.unwrap_or(base.entropy_coeff),
            train_batch: p.train_batch.unwrap_or(base.train_batch),
            minibatch: p.minibatch.unwrap_or(base.minibatch),
            sgd_iters: p.sgd_iters.unwrap_or(base.sgd_iters),
            n_envs: p.n_envs.unwrap_or(base.n_envs),
            normalize_advantage: p.normalize_advantage.unwrap_or(base.normalize_advantage),
        }
    }

    pub fn energy_config(&self) -> EnergyGateConfig {
        let base = if self.env.is_grid() { EnergyGateConfig::grid() } else { EnergyGateConfig::overcooked() };
        let e = &self.energy;
        EnergyGateConfig {
            temperature: e.temperature.unwrap_or(base.temperature),
            quantile: self.transfer.quantile,
            margin_in: e.margin_in.unwrap_or(base.margin_in),
            margin_out: e.margin_out.unwrap_or(base.margin_out),
            weight: e.weight.unwrap_or(base.weight),
        }
    }

    pub fn strategy(&self) -> Result<Strategy, Error> {
        Ok(Strategy::parse(&self.transfer.strategy)?)
    }

    pub fn transfer_config(&self) -> Result<TransferConfig, Error> {
        let t = &self.transfer;
        Ok(TransferConfig {
            strategy: self.strategy()?,
            delta0: t.delta0,
            decay_fraction: t.decay_fraction,
            quantile: t.quantile,
            jsrl_h0: t.jsrl_h0,
            ksrl_weight: t.ksrl_weight,
            freeze_encoder: t.freeze_encoder,
        })
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{:02x}", b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const GRID: &str = r#"
        seeds = [3]
        total_steps = 5120
        [env]
        kind = "grid"
        task = "alternating_goal"
    "#;

    #[test]
    fn defaults_follow_domain_tables() {
        let c = ExperimentConfig::from_toml(GRID).unwrap();
        assert_eq!(c.ppo_config(), PpoConfig::grid());
        assert_eq!(c.energy_config().margin_out, 15.0);
        assert_eq!(c.eval_every, 10);
        assert_eq!(c.eval_episodes, 20);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::from_toml(GRID).unwrap();
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(ExperimentConfig::from_toml(&format!("{}\nbogus = 1", GRID)).is_err());
        assert!(ExperimentConfig::from_toml(&GRID.replace("[3]", "[]")).is_err());
        let bad = format!("{}\n[transfer]\nstrategy = \"nope\"", GRID);
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn overcooked_layout_sets_learning_rate() {
        let text = r#"
            total_steps = 9600
            [env]
            kind = "overcooked"
            layout = "ring_room"
            source_ingredients = ["onion", "tomato", "fish"]
            source_recipes = ["onion"]
            target_ingredients = ["onion", "tomato", "fish"]
            target_recipes = ["onion", "tomato", "fish"]
        "#;
        let c = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(c.ppo_config().lr, 6e-4);
        assert_eq!(c.energy_config().margin_in, 12.0);
    }
}
