#![allow(dead_code)]

use ebtl::config::ExperimentConfig;

/// A seconds-scale grid experiment.
pub fn tiny(strategy: &str, extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        r#"
        seeds = [0]
        total_steps = 1024
        eval_every = 2
        eval_episodes = 2
        [env]
        kind = "grid"
        task = "alternating_goal"
        size = 7
        max_steps = 40
        [network]
        hidden = [16]
        [teacher]
        total_steps = 1024
        ood_episodes = 3
        id_buffer = 300
        energy_batch = 16
        [transfer]
        strategy = "{strategy}"
        {extra}
        "#
    ))
    .unwrap()
}
