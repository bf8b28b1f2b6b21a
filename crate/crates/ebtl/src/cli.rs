//! Command-line interface.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use ebtl_core::rng::streams;
use ebtl_core::transfer::Strategy;

use crate::checkpoint::Checkpoint;
use crate::config::ExperimentConfig;
use crate::harness::{collect_ood_set, evaluate_teacher, run_transfer, train_teacher, Evaluation, TeacherRun, TransferRun};
use crate::layout::{self, transfer_label, RunDir};
use crate::records::{write_csv, EventRow, OodRow};
use crate::rollout::for_each_random_state;
use crate::Result;

#[derive(Debug, Parser)]
#[command(name = "ebtl", version, about = "Energy-gated teacher-student transfer experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train source-task teachers and save their checkpoints.
    TrainTeacher(Common),
    /// Write the out-of-distribution state set of each seed.
    CollectOod(Common),
    /// Train students on the target task with one strategy.
    Transfer(TransferArgs),
    /// Run energy-gated transfer for every configured quantile.
    Sweep(TransferArgs),
    /// Score teachers against the target task.
    Evaluate(TransferArgs),
    /// Render plots of everything in the output directory.
    Plot(Common),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Experiment configuration (TOML).
    pub config: PathBuf,
    /// Run only this seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// One of no_transfer, ebtl, aa, jsrl, ksrl, finetune.
    #[arg(long)]
    pub strategy: Option<String>,
    /// Energy quantile for the guidance threshold.
    #[arg(long)]
    pub q: Option<f64>,
    /// Training horizon in environment steps (the teacher's for
    /// train-teacher, the student's otherwise).
    #[arg(long)]
    pub total_steps: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TransferArgs {
    #[command(flatten)]
    pub common: Common,
    /// Teacher checkpoint; defaults to the seed's trained teacher under the
    /// output directory.
    #[arg(long)]
    pub teacher: Option<PathBuf>,
}

impl Common {
    fn load(&self, teacher_phase: bool) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(s) = &self.strategy {
            cfg.transfer.strategy = s.clone();
        }
        if let Some(q) = self.q {
            cfg.transfer.quantile = q;
        }
        if let Some(n) = self.total_steps {
            if teacher_phase {
                cfg.teacher.total_steps = n;
            } else {
                cfg.total_steps = n;
            }
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Target-task steps scored by `evaluate`.
pub const EVAL_ROLLOUT_STEPS: usize = 20_000;
/// Source-task steps counted for the visitation correlation.
pub const EVAL_VISITATION_STEPS: usize = 50_000;

fn teacher_for(teacher: Option<&Path>, run: &RunDir, seed: u64) -> Result<Checkpoint> {
    match teacher {
        Some(p) => Checkpoint::load(p),
        None => Checkpoint::load(&run.teacher(seed).join(layout::TEACHER)),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::TrainTeacher(args) => {
            train_all(&args.load(true)?)?;
        }
        Command::CollectOod(args) => {
            let cfg = args.load(false)?;
            let run = RunDir::new(&cfg.out);
            for &seed in &cfg.seeds {
                let spec = cfg.env.ood_spec(seed, cfg.teacher.total_steps);
                let mut rows = Vec::new();
                for_each_random_state(&spec, cfg.teacher.ood_episodes, streams::OOD, |env| {
                    let key: Vec<String> = env.state_key().iter().map(u32::to_string).collect();
                    rows.push(OodRow { index: rows.len(), state_key: key.join(" "), ground_truth_id: env.ground_truth_id() });
                })?;
                let path = run.ood(seed);
                write_csv(&path, &rows)?;
                println!("seed {seed}: {} states -> {}", rows.len(), path.display());
            }
        }
        Command::Transfer(args) => {
            let cfg = args.common.load(false)?;
            transfer_all(&cfg, args.teacher.as_deref())?;
        }
        Command::Sweep(args) => {
            let base = args.common.load(false)?;
            for &q in &base.transfer.sweep_quantiles {
                let mut cfg = base.clone();
                cfg.transfer.strategy = Strategy::Ebtl.as_str().into();
                cfg.transfer.quantile = q;
                cfg.validate()?;
                transfer_all(&cfg, args.teacher.as_deref())?;
            }
        }
        Command::Evaluate(args) => {
            let cfg = args.common.load(false)?;
            evaluate_all(&cfg, args.teacher.as_deref())?;
        }
        Command::Plot(args) => {
            let cfg = args.load(false)?;
            for p in crate::plot::emit_plots(&RunDir::new(&cfg.out))? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

/// Trains and saves the teacher of every configured seed.
pub fn train_all(cfg: &ExperimentConfig) -> Result<Vec<TeacherRun>> {
    let run = RunDir::new(&cfg.out);
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let t = train_teacher(cfg, seed)?;
        let dir = run.teacher(seed);
        t.last.save(&dir.join(layout::TEACHER))?;
        t.best.save(&dir.join(layout::BEST))?;
        for c in &t.scheduled {
            c.save(&dir.join(format!("step-{}.ckpt", c.meta.steps)))?;
        }
        write_csv(&dir.join(layout::PROGRESS), &t.progress)?;
        let ret = t.last.meta.eval_return.unwrap_or(f64::NAN);
        println!("seed {seed}: teacher after {} steps, eval return {ret:.3} -> {}", t.last.meta.steps, dir.display());
        out.push(t);
    }
    Ok(out)
}

/// Runs and records the configured strategy for every seed. `teacher`
/// overrides the per-seed checkpoint under the output directory.
pub fn transfer_all(cfg: &ExperimentConfig, teacher: Option<&Path>) -> Result<Vec<(u64, TransferRun)>> {
    let run = RunDir::new(&cfg.out);
    let strategy = cfg.strategy()?;
    let label = transfer_label(strategy, cfg.transfer.quantile);
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let t = if strategy == Strategy::NoTransfer { None } else { Some(teacher_for(teacher, &run, seed)?) };
        let r = run_transfer(cfg, seed, t.as_ref())?;
        let dir = run.transfer(&label, seed);
        write_csv(&dir.join(layout::METRICS), &r.metrics)?;
        let events: Vec<EventRow> = r.events.iter().map(|e| EventRow::new(e, strategy.as_str())).collect();
        write_csv(&dir.join(layout::EVENTS), &events)?;
        let last = r.metrics.last().map(|m| m.mean_eval_return).unwrap_or(f64::NAN);
        println!("seed {seed}: {label} final eval return {last:.3}, auc {:.1} -> {}", crate::analysis::auc(&r.curve()), dir.display());
        out.push((seed, r));
    }
    Ok(out)
}

/// Evaluates and records the teacher of every configured seed.
pub fn evaluate_all(cfg: &ExperimentConfig, teacher: Option<&Path>) -> Result<Vec<(u64, Evaluation)>> {
    let run = RunDir::new(&cfg.out);
    let mut out = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let t = teacher_for(teacher, &run, seed)?;
        let ood = collect_ood_set(&cfg.env.ood_spec(seed, cfg.teacher.total_steps), cfg.teacher.ood_episodes)?;
        let e = evaluate_teacher(cfg, seed, &t, &ood, EVAL_ROLLOUT_STEPS, EVAL_VISITATION_STEPS)?;
        let dir = run.evaluate(seed);
        write_csv(&dir.join(layout::SCORES), &e.scores)?;
        write_csv(&dir.join(layout::HEATMAP), &e.heatmap)?;
        write_csv(&dir.join(layout::DIVERGENCE), &e.divergence)?;
        let rho = e.visitation_spearman.map(|r| format!("{r:.3}")).unwrap_or_else(|| "n/a".into());
        println!(
            "seed {seed}: auroc {:.3}, mean energy id {:.3} ood {:.3}, visitation spearman {rho} -> {}",
            e.auroc,
            e.mean_phi_id,
            e.mean_phi_ood,
            dir.display()
        );
        out.push((seed, e));
    }
    Ok(out)
}

/// Exits with status 1 and the error message on failure.
pub fn main_with(cli: Cli) -> std::process::ExitCode {
    match run(cli) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            std::process::ExitCode::FAILURE
        }
    }
}
