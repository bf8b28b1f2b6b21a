use std::path::Path;

use ebtl::config::{ExperimentConfig, Phase};

#[test]
fn shipped_configs_load_and_build_their_environments() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "toml") {
            continue;
        }
        let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        cfg.validate().unwrap();
        for phase in [Phase::Source, Phase::Target] {
            let spec = cfg.env.spec(phase, cfg.seeds[0], cfg.total_steps);
            let arch = ebtl::harness::architecture(&cfg, &spec).unwrap();
            assert_eq!(arch.num_actions, spec.num_actions());
            spec.make(0).unwrap();
        }
        seen += 1;
    }
    assert!(seen >= 3);
}
