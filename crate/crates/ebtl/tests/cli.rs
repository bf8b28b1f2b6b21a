use std::path::{Path, PathBuf};
use std::process::Command;

const CONFIG: &str = r#"
seeds = [1]
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
checkpoint_every = 512
[transfer]
sweep_quantiles = [0.0, 0.5]
"#;

fn ebtl(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_ebtl")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = ebtl(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn full_run(dir: &Path, name: &str) -> PathBuf {
    let cfg = dir.join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let out = dir.join(name);
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    ok(&["train-teacher", c, "--out", o]);
    ok(&["collect-ood", c, "--out", o]);
    ok(&["transfer", c, "--out", o, "--strategy", "no_transfer"]);
    ok(&["transfer", c, "--out", o, "--strategy", "aa"]);
    ok(&["sweep", c, "--out", o]);
    ok(&["evaluate", c, "--out", o]);
    ok(&["plot", c, "--out", o]);
    out
}

#[test]
fn identical_invocations_write_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = full_run(dir.path(), "a");
    let b = full_run(dir.path(), "b");
    let fa = files(&a);
    assert_eq!(fa, files(&b));
    for f in [
        "teacher/seed-1/teacher.ckpt",
        "teacher/seed-1/best.ckpt",
        "teacher/seed-1/step-512.ckpt",
        "teacher/seed-1/progress.csv",
        "ood/seed-1.csv",
        "transfer/no_transfer/seed-1/metrics.csv",
        "transfer/aa/seed-1/events.csv",
        "transfer/ebtl-q0.0/seed-1/metrics.csv",
        "transfer/ebtl-q0.5/seed-1/events.csv",
        "evaluate/seed-1/scores.csv",
        "evaluate/seed-1/heatmap.csv",
        "evaluate/seed-1/divergence.csv",
        "plots/transfer_returns.svg",
        "plots/energy_hist_seed-1.svg",
        "plots/heatmap_seed-1.svg",
    ] {
        assert!(fa.contains(&PathBuf::from(f)), "missing {f}");
    }
    for f in &fa {
        assert!(std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }
}

#[test]
fn overrides_change_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let o = dir.path().join("o");
    let (c, os) = (cfg.to_str().unwrap(), o.to_str().unwrap());
    ok(&["transfer", c, "--out", os, "--strategy", "no_transfer", "--seed", "4", "--total-steps", "512"]);
    let metrics = std::fs::read_to_string(o.join("transfer/no_transfer/seed-4/metrics.csv")).unwrap();
    assert!(metrics.lines().last().unwrap().starts_with("4,512,"), "{metrics}");
}

#[test]
fn errors_exit_nonzero_with_a_message() {
    let out = ebtl(&["train-teacher", "/nonexistent/exp.toml"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/exp.toml"));

    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(&cfg, CONFIG).unwrap();
    let c = cfg.to_str().unwrap();
    let o = dir.path().join("empty");
    let out = ebtl(&["transfer", c, "--out", o.to_str().unwrap(), "--strategy", "ebtl"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("teacher.ckpt"));

    let out = ebtl(&["transfer", c, "--strategy", "telepathy"]);
    assert!(!out.status.success());
    assert!(!out.stderr.is_empty());

    std::fs::write(&cfg, "seeds = []\n[env]\nkind = \"grid\"\ntask = \"locked\"\n").unwrap();
    let out = ebtl(&["plot", c]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("seeds"));
}
