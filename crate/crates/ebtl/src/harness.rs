//! Teacher training, out-of-distribution set construction and transfer runs.

use ebtl_core::energy::{divergence, energy_score, shared_histograms, Divergence, ScoreOrigin, TauTable};
use ebtl_core::envs::grid::{GridLayout, GridScenario};
use ebtl_core::envs::Environment;
use ebtl_core::numerics::AdamState;
use ebtl_core::policy::{sample_action, ActorCriticParams, Architecture, PolicyOutput};
use ebtl_core::ppo::{ppo_update, EnergyTerm, UpdateExtras};
use ebtl_core::rng::{self, streams};
use ebtl_core::transfer::{check_compatible, finetune_init, GuidanceEvent, Strategy};
use ebtl_core::Tensor;

use crate::analysis::{
    energies, energy_quantile_heatmap, guidance_rates, source_states, visitation_energy_correlation, VisitationTable,
};
use crate::checkpoint::{ArchMeta, Checkpoint, CheckpointMeta};
use crate::config::{ExperimentConfig, Phase};
use crate::envspec::EnvSpec;
use crate::records::{DivergenceRow, HeatmapRow, MetricsRow, ProgressRow, ScoreRow};
use crate::rollout::{evaluate, random_rollouts, Collector, Guide};
use crate::{Error, Result};

/// Observations of uniform-random play in the target task, with labels.
pub fn collect_ood_set(spec: &EnvSpec, episodes: usize) -> Result<Vec<(Vec<f64>, bool)>> {
    if episodes == 0 {
        return Err(Error::Config("ood episodes must be at least 1".into()));
    }
    Ok(random_rollouts(spec, episodes, streams::OOD)?)
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

pub fn architecture(cfg: &ExperimentConfig, spec: &EnvSpec) -> Result<Architecture> {
    let arch = Architecture::dense(spec.obs_dim()?, spec.num_actions(), &cfg.network.hidden);
    arch.validate()?;
    Ok(arch)
}

/// Result of teacher training.
#[derive(Clone, Debug)]
pub struct TeacherRun {
    pub last: Checkpoint,
    /// Highest evaluation return seen (earliest on ties).
    pub best: Checkpoint,
    /// Snapshots on the `checkpoint_every` schedule.
    pub scheduled: Vec<Checkpoint>,
    pub progress: Vec<ProgressRow>,
    /// The final rolling buffer of training observations.
    pub id_buffer: Vec<Vec<f64>>,
    pub ood_set: Vec<Vec<f64>>,
}

/// PPO on the source task, optionally with the energy margin loss over the
/// rolling buffer of recent frames and a fixed out-of-distribution set.
pub fn train_teacher(cfg: &ExperimentConfig, seed: u64) -> Result<TeacherRun> {
    let horizon = cfg.teacher.total_steps;
    let spec = cfg.env.spec(Phase::Source, seed, horizon);
    let ppo = cfg.ppo_config();
    let energy = cfg.energy_config();
    let regularize = cfg.teacher.energy_regularization && energy.weight > 0.0;
    let arch = architecture(cfg, &spec)?;
    let mut params = ActorCriticParams::init(arch, &mut rng::stream(seed, streams::INIT))?;
    let mut adam = AdamState::new(params.tensors());
    let mut collector = Collector::new(&spec, ppo.n_envs)?;
    let mut shuffle = rng::stream(seed, streams::SHUFFLE);
    let ood_set: Vec<Vec<f64>> = if regularize {
        collect_ood_set(&cfg.env.ood_spec(seed, horizon), cfg.teacher.ood_episodes)?.into_iter().map(|(o, _)| o).collect()
    } else {
        Vec::new()
    };
    let probe: Vec<Vec<f64>> = ood_set.iter().step_by((ood_set.len() / 2000).max(1)).cloned().collect();

    let snapshot = |params: &ActorCriticParams, buffer: &[Vec<f64>], steps: u64, eval: Option<f64>| -> Result<Checkpoint> {
        let calibration = if buffer.is_empty() { Vec::new() } else { energies(params, buffer, energy.temperature)? };
        let tau_table = if calibration.is_empty() { Vec::new() } else { TauTable::calibrate(&calibration)?.entries };
        Ok(Checkpoint {
            meta: CheckpointMeta {
                seed,
                steps,
                config_hash: cfg.hash(),
                energy_regularized: regularize,
                temperature: energy.temperature,
                tau_table,
                eval_return: eval,
                arch: ArchMeta::from_arch(params.arch()),
            },
            params: params.clone(),
            calibration,
        })
    };

    let mut buffer: Vec<Vec<f64>> = Vec::with_capacity(cfg.teacher.id_buffer + ppo.train_batch);
    let mut progress = Vec::new();
    let mut scheduled = Vec::new();
    let mut best: Option<Checkpoint> = None;
    let n_batches = (horizon / ppo.train_batch as u64).max(1);
    let mut next_save = cfg.teacher.checkpoint_every;
    for b in 1..=n_batches {
        let rollout = collector.collect(&params, None, Strategy::NoTransfer, &ppo, ppo.train_batch)?;
        buffer.extend(rollout.batch.obs.iter().cloned());
        if buffer.len() > cfg.teacher.id_buffer {
            buffer.drain(..buffer.len() - cfg.teacher.id_buffer);
        }
        let extras = UpdateExtras {
            energy: regularize.then(|| EnergyTerm {
                config: &energy,
                id_pool: &buffer,
                ood_pool: &ood_set,
                batch: cfg.teacher.energy_batch,
            }),
            ..UpdateExtras::default()
        };
        let stats = ppo_update(&mut params, &mut adam, &rollout.batch, &ppo, &extras, &mut shuffle)?;
        let steps = collector.global_step();

        if let Some(every) = cfg.teacher.checkpoint_every {
            if next_save.is_some_and(|s| steps >= s) {
                scheduled.push(snapshot(&params, &buffer, steps, None)?);
                next_save = Some(steps + every);
            }
        }
        if b % cfg.eval_every as u64 == 0 || b == n_batches {
            let ret = mean(&evaluate(&params, &spec, cfg.eval_episodes, progress.len() as u64)?);
            let phi_id = mean(&energies(&params, &buffer, energy.temperature)?);
            let phi_ood = if probe.is_empty() { f64::NAN } else { mean(&energies(&params, &probe, energy.temperature)?) };
            progress.push(ProgressRow {
                seed,
                global_step: steps,
                mean_eval_return: ret,
                policy_loss: stats.policy_loss,
                value_loss: stats.value_loss,
                entropy: stats.entropy,
                energy_loss: stats.energy_loss,
                mean_phi_id: phi_id,
                mean_phi_ood: phi_ood,
            });
            if best.as_ref().and_then(|c| c.meta.eval_return).is_none_or(|r| ret > r) {
                best = Some(snapshot(&params, &buffer, steps, Some(ret))?);
            }
            if cfg.teacher.stop_at_return.is_some_and(|target| ret >= target) {
                break;
            }
        }
    }
    let last_eval = progress.last().map(|p| p.mean_eval_return);
    let last = snapshot(&params, &buffer, collector.global_step(), last_eval)?;
    Ok(TeacherRun { best: best.unwrap_or_else(|| last.clone()), last, scheduled, progress, id_buffer: buffer, ood_set })
}

/// Result of one transfer run.
#[derive(Clone, Debug)]
pub struct TransferRun {
    pub metrics: Vec<MetricsRow>,
    pub events: Vec<GuidanceEvent>,
    pub student: ActorCriticParams,
}

impl TransferRun {
    pub fn curve(&self) -> Vec<(u64, f64)> {
        self.metrics.iter().map(|m| (m.global_step, m.mean_eval_return)).collect()
    }
}

/// Trains a student on the target task with the configured strategy,
/// evaluating before training and every `eval_every` batches.
pub fn run_transfer(cfg: &ExperimentConfig, seed: u64, teacher: Option<&Checkpoint>) -> Result<TransferRun> {
    let spec = cfg.env.spec(Phase::Target, seed, cfg.total_steps);
    let ppo = cfg.ppo_config();
    let transfer = cfg.transfer_config()?;
    let strategy = transfer.strategy;
    let arch = architecture(cfg, &spec)?;
    let needs_teacher = strategy != Strategy::NoTransfer;
    let teacher = match (needs_teacher, teacher) {
        (true, None) => return Err(Error::Config(format!("strategy {} needs a teacher checkpoint", strategy.as_str()))),
        (true, Some(t)) => {
            check_compatible(&t.params, arch.obs_dim, arch.num_actions)?;
            Some(t)
        }
        (false, _) => None,
    };
    let (mut student, frozen) = match (strategy, teacher) {
        (Strategy::FineTune, Some(t)) => {
            let (s, mask) = finetune_init(&t.params, transfer.freeze_encoder);
            (s, Some(mask))
        }
        _ => (ActorCriticParams::init(arch, &mut rng::stream(seed, streams::INIT))?, None),
    };
    let tau = match (strategy, teacher) {
        (Strategy::Ebtl, Some(t)) => t.tau_table().tau(transfer.quantile)?,
        (_, Some(t)) if !t.calibration.is_empty() => t.tau_table().tau(transfer.quantile)?,
        _ => f64::NEG_INFINITY,
    };
    let guide = teacher.map(|t| Guide {
        teacher: &t.params,
        transfer: &transfer,
        tau,
        temperature: t.meta.temperature,
        total_steps: cfg.total_steps,
        max_steps: spec.max_steps(),
    });

    let mut adam = AdamState::new(student.tensors());
    let mut collector = Collector::new(&spec, ppo.n_envs)?;
    let mut shuffle = rng::stream(seed, streams::SHUFFLE);
    let mut metrics = Vec::new();
    let mut events = Vec::new();
    let mut window_start = 0usize;
    let mut eval_round = 0u64;
    let mut record = |student: &ActorCriticParams, events: &[GuidanceEvent], from: usize, step: u64| -> Result<MetricsRow> {
        let returns = evaluate(student, &spec, cfg.eval_episodes, eval_round)?;
        eval_round += 1;
        let window = &events[from..];
        let rates = guidance_rates(window);
        let phis = |id: bool| -> Vec<f64> { window.iter().filter(|e| e.ground_truth_id == id).map(|e| e.phi).collect() };
        Ok(MetricsRow {
            seed,
            global_step: step,
            mean_eval_return: mean(&returns),
            guidance_issue_rate: rates.issue,
            correct_guidance_rate: rates.correct,
            incorrect_guidance_rate: rates.incorrect,
            mean_phi_id: mean(&phis(true)),
            mean_phi_ood: mean(&phis(false)),
        })
    };
    metrics.push(record(&student, &events, 0, 0)?);

    let n_batches = (cfg.total_steps / ppo.train_batch as u64).max(1);
    for b in 1..=n_batches {
        let rollout = collector.collect(&student, guide.as_ref(), strategy, &ppo, ppo.train_batch)?;
        events.extend(rollout.events);
        let steps = collector.global_step();
        let extras = UpdateExtras {
            ksrl_weight: match (strategy, &guide) {
                (Strategy::Ksrl, Some(g)) => g.ksrl_weight(steps),
                _ => 0.0,
            },
            frozen: frozen.as_deref(),
            ..UpdateExtras::default()
        };
        ppo_update(&mut student, &mut adam, &rollout.batch, &ppo, &extras, &mut shuffle)?;
        if b % cfg.eval_every as u64 == 0 || b == n_batches {
            metrics.push(record(&student, &events, window_start, steps)?);
            window_start = events.len();
        }
    }
    Ok(TransferRun { metrics, events, student })
}

/// Plays `policy` (sampling its actions) for `steps` steps over `n_envs`
/// workers, calling `visit` on every state before acting.
pub fn play<F>(policy: &ActorCriticParams, spec: &EnvSpec, n_envs: usize, steps: usize, stream: u64, mut visit: F) -> Result<()>
where
    F: FnMut(&dyn Environment, &[f64], &PolicyOutput),
{
    let base = crate::envspec::ood_env_index(1 << 20);
    let mut envs = (0..n_envs as u64).map(|i| spec.make(base + i)).collect::<ebtl_core::Result<Vec<_>>>()?;
    let mut obs: Vec<Vec<f64>> = envs.iter().map(|e| e.observe()).collect();
    let mut rng = rng::stream(spec.seed(), stream);
    for _ in 0..steps.div_ceil(n_envs) {
        let masks: Vec<Vec<bool>> = envs.iter().map(|e| e.action_mask()).collect();
        let outs = policy.forward_batch(&Tensor::stack_rows(&obs)?, &masks)?;
        for (e, env) in envs.iter_mut().enumerate() {
            visit(env.as_ref(), &obs[e], &outs[e]);
            let (a, _) = sample_action(&outs[e], &mut rng);
            let s = env.step(a)?;
            obs[e] = if s.done { env.reset() } else { s.obs };
        }
    }
    Ok(())
}

/// Visit counts of the teacher's own rollouts.
pub fn teacher_visitation(teacher: &ActorCriticParams, spec: &EnvSpec, steps: usize) -> Result<VisitationTable> {
    let mut table = VisitationTable::default();
    play(teacher, spec, 8, steps, streams::ID_SAMPLE, |env, _, _| table.record(env.state_key()))?;
    Ok(table)
}

/// Teacher energy and ground-truth label of states visited by `policy`.
pub fn energy_samples(
    teacher: &ActorCriticParams,
    temperature: f64,
    policy: &ActorCriticParams,
    spec: &EnvSpec,
    steps: usize,
) -> Result<Vec<(f64, bool)>> {
    let mut obs = Vec::with_capacity(steps);
    let mut labels = Vec::with_capacity(steps);
    play(policy, spec, 8, steps, streams::ID_SAMPLE, |env, o, _| {
        obs.push(o.to_vec());
        labels.push(env.ground_truth_id());
    })?;
    let phi = energies(teacher, &obs, temperature)?;
    Ok(phi.into_iter().zip(labels).collect())
}

/// Energy of a single observation under the teacher.
pub fn phi_of(teacher: &ActorCriticParams, obs: &[f64], temperature: f64) -> Result<f64> {
    let (logits, _) = teacher.forward_raw(&Tensor::stack_rows(&[obs])?)?;
    Ok(energy_score(logits.data(), temperature)?)
}

/// Diagnostics of a teacher checkpoint against the target task.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub scores: Vec<ScoreRow>,
    pub heatmap: Vec<HeatmapRow>,
    pub divergence: Vec<DivergenceRow>,
    /// AUROC of the energy score as a classifier of in-distribution target
    /// states.
    pub auroc: f64,
    pub mean_phi_id: f64,
    pub mean_phi_ood: f64,
    /// Rank correlation of source-state visit counts with energy, for the
    /// alternating-goal grid.
    pub visitation_spearman: Option<f64>,
}

/// Scores the teacher's calibration states, its own rollouts in the target
/// task and the out-of-distribution set, and derives the separation
/// statistics, grid heatmap and divergences.
pub fn evaluate_teacher(
    cfg: &ExperimentConfig,
    seed: u64,
    teacher: &Checkpoint,
    ood_set: &[(Vec<f64>, bool)],
    rollout_steps: usize,
    visitation_steps: usize,
) -> Result<Evaluation> {
    let t = teacher.meta.temperature;
    let target = cfg.env.spec(Phase::Target, seed, cfg.total_steps);
    let mut obs = Vec::with_capacity(rollout_steps);
    let mut labels = Vec::with_capacity(rollout_steps);
    let mut cells = Vec::with_capacity(rollout_steps);
    play(&teacher.params, &target, 8, rollout_steps, streams::ID_SAMPLE, |env, o, _| {
        obs.push(o.to_vec());
        labels.push(env.ground_truth_id());
        let key = env.state_key();
        cells.push((key[0] as usize, key[1] as usize));
    })?;
    let phi = energies(&teacher.params, &obs, t)?;
    let auroc = ebtl_core::energy::auroc(&phi, &labels)?;
    let by_label = |id: bool| -> Vec<f64> { phi.iter().zip(&labels).filter(|p| *p.1 == id).map(|p| *p.0).collect() };

    let ood_obs: Vec<Vec<f64>> = ood_set.iter().map(|(o, _)| o.clone()).collect();
    let ood_phi = energies(&teacher.params, &ood_obs, t)?;
    let mut scores: Vec<ScoreRow> =
        teacher.calibration.iter().map(|&p| ScoreRow { phi: p, origin: ScoreOrigin::TeacherTrain.as_str().into(), ground_truth_id: None }).collect();
    scores.extend(phi.iter().zip(&labels).map(|(&p, &id)| ScoreRow {
        phi: p,
        origin: ScoreOrigin::TargetRollout.as_str().into(),
        ground_truth_id: Some(id),
    }));
    scores.extend(ood_phi.iter().zip(ood_set).map(|(&p, (_, id))| ScoreRow {
        phi: p,
        origin: ScoreOrigin::OodTrainSet.as_str().into(),
        ground_truth_id: Some(*id),
    }));

    let false_ood: Vec<f64> = ood_phi.iter().zip(ood_set).filter(|p| p.1 .1).map(|p| *p.0).collect();
    let true_ood: Vec<f64> = ood_phi.iter().zip(ood_set).filter(|p| !p.1 .1).map(|p| *p.0).collect();
    let divergence = if false_ood.is_empty() || true_ood.is_empty() {
        Vec::new()
    } else {
        let (hp, hq, _, _) = shared_histograms(&false_ood, &true_ood, crate::plot::HISTOGRAM_BINS);
        Divergence::ALL
            .iter()
            .map(|&k| Ok(DivergenceRow { seed, metric: k.as_str().into(), value: divergence(&hp, &hq, k)? }))
            .collect::<Result<Vec<_>>>()?
    };

    let (heatmap, visitation_spearman) = match &target {
        EnvSpec::Grid(g) => {
            let layout = GridLayout::new(g)?;
            let states: Vec<((usize, usize), Vec<f64>)> = cells.into_iter().zip(obs).collect();
            let heat = energy_quantile_heatmap(&teacher.params, &teacher.tau_table(), t, g.width, g.height, &states)?;
            let rho = if g.scenario == GridScenario::AlternatingGoalTarget && visitation_steps > 0 {
                let source = cfg.env.spec(Phase::Source, seed, cfg.teacher.total_steps);
                let table = teacher_visitation(&teacher.params, &source, visitation_steps)?;
                Some(visitation_energy_correlation(&teacher.params, &table, &source_states(&layout), &layout, t)?)
            } else {
                None
            };
            (heat, rho)
        }
        EnvSpec::Kitchen { .. } => (Vec::new(), None),
    };
    Ok(Evaluation {
        scores,
        heatmap,
        divergence,
        auroc,
        mean_phi_id: mean(&by_label(true)),
        mean_phi_ood: mean(&by_label(false)),
        visitation_spearman,
    })
}
