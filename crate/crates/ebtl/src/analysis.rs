//! Post-hoc metrics over curves, guidance events and teacher energies.

use std::collections::BTreeMap;

use ebtl_core::energy::{energy_score, spearman, TauTable};
use ebtl_core::envs::grid::{grid_observe, Direction, GridLayout, GridState, Room};
use ebtl_core::policy::ActorCriticParams;
use ebtl_core::transfer::GuidanceEvent;
use ebtl_core::Tensor;

use crate::records::HeatmapRow;
use crate::{Error, Result};

/// Trapezoidal area under `(step, value)` points.
pub fn auc(curve: &[(u64, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].0 - w[0].0) as f64 * (w[0].1 + w[1].1) / 2.0).sum()
}

/// `100 (AUC(strategy) - AUC(baseline)) / AUC(baseline)` over curves
/// sampled at the same steps.
pub fn relative_transfer_performance(strategy: &[(u64, f64)], baseline: &[(u64, f64)]) -> Result<f64> {
    if strategy.len() != baseline.len() || strategy.iter().zip(baseline).any(|(a, b)| a.0 != b.0) {
        return Err(Error::CurveMismatch);
    }
    let base = auc(baseline);
    if base == 0.0 {
        return Err(Error::ZeroBaseline);
    }
    Ok(100.0 * (auc(strategy) - base) / base)
}

/// Pointwise mean and population standard deviation of curves sampled at
/// the same steps.
pub fn mean_curve(curves: &[Vec<(u64, f64)>]) -> Vec<(u64, f64, f64)> {
    let Some(first) = curves.first() else { return Vec::new() };
    let n = curves.len() as f64;
    (0..first.len())
        .map(|i| {
            let vals: Vec<f64> = curves.iter().filter_map(|c| c.get(i).map(|p| p.1)).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            (first[i].0, mean, var.sqrt())
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GuidanceRates {
    pub issue: f64,
    pub correct: f64,
    pub incorrect: f64,
}

/// Fractions of steps on which guidance was issued, issued in
/// distribution, and issued out of distribution.
pub fn guidance_rates(events: &[GuidanceEvent]) -> GuidanceRates {
    if events.is_empty() {
        return GuidanceRates::default();
    }
    let n = events.len() as f64;
    let issued = events.iter().filter(|e| e.issued).count();
    let correct = events.iter().filter(|e| e.issued && e.ground_truth_id).count();
    GuidanceRates { issue: issued as f64 / n, correct: correct as f64 / n, incorrect: (issued - correct) as f64 / n }
}

/// Visit counts per discrete state key.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VisitationTable {
    counts: BTreeMap<Vec<u32>, u64>,
    total: u64,
}

impl VisitationTable {
    pub fn record(&mut self, key: Vec<u32>) {
        *self.counts.entry(key).or_insert(0) += 1;
        self.total += 1;
    }

    pub fn count(&self, key: &[u32]) -> u64 {
        self.counts.get(key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vec<u32>, &u64)> {
        self.counts.iter()
    }
}

/// Teacher energy of each observation, computed in chunks.
pub fn energies(teacher: &ActorCriticParams, obs: &[Vec<f64>], temperature: f64) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(obs.len());
    for chunk in obs.chunks(512) {
        let (logits, _) = teacher.forward_raw(&Tensor::stack_rows(chunk)?)?;
        let k = logits.cols();
        for r in 0..chunk.len() {
            out.push(energy_score(&logits.data()[r * k..(r + 1) * k], temperature)?);
        }
    }
    Ok(out)
}

/// Every alternating-goal source state: the agent on any free cell facing
/// any way, the goal anywhere else in room 1.
pub fn source_states(layout: &GridLayout) -> Vec<GridState> {
    let goals = layout.room_cells(Room::UpperLeft);
    let mut out = Vec::new();
    for agent in layout.free_cells() {
        for dir in Direction::ALL {
            for &goal in &goals {
                if goal != agent {
                    out.push(GridState {
                        agent_pos: agent,
                        agent_dir: dir,
                        goal_pos: goal,
                        key_pos: None,
                        carrying_key: false,
                        door_locked: false,
                        step: 0,
                    });
                }
            }
        }
    }
    out
}

/// Visitation key of a grid state, matching `Environment::state_key`.
pub fn grid_state_key(s: &GridState, layout: &GridLayout) -> Vec<u32> {
    vec![
        s.agent_pos.0 as u32,
        s.agent_pos.1 as u32,
        s.agent_dir.index() as u32,
        s.goal_pos.0 as u32,
        s.goal_pos.1 as u32,
        s.key_pos.map(|k| (k.1 * layout.width + k.0) as u32 + 1).unwrap_or(0),
        s.carrying_key as u32,
        s.door_locked as u32,
    ]
}

/// Spearman correlation between visit counts and teacher energy over the
/// given states, unvisited ones included.
pub fn visitation_energy_correlation(
    teacher: &ActorCriticParams,
    table: &VisitationTable,
    states: &[GridState],
    layout: &GridLayout,
    temperature: f64,
) -> Result<f64> {
    let obs: Vec<Vec<f64>> = states.iter().map(|s| grid_observe(s, layout)).collect();
    let phi = energies(teacher, &obs, temperature)?;
    let counts: Vec<f64> = states.iter().map(|s| table.count(&grid_state_key(s, layout)) as f64).collect();
    Ok(spearman(&counts, &phi)?)
}

/// Mean energy quantile (against the teacher's calibration scores) of the
/// states in each grid cell. Cells without states have no value.
pub fn energy_quantile_heatmap(
    teacher: &ActorCriticParams,
    table: &TauTable,
    temperature: f64,
    width: usize,
    height: usize,
    states: &[((usize, usize), Vec<f64>)],
) -> Result<Vec<HeatmapRow>> {
    let obs: Vec<Vec<f64>> = states.iter().map(|(_, o)| o.clone()).collect();
    let phi = energies(teacher, &obs, temperature)?;
    let mut sums = vec![(0.0, 0usize); width * height];
    for (((x, y), _), p) in states.iter().zip(phi) {
        let cell = &mut sums[y * width + x];
        cell.0 += table.rank(p);
        cell.1 += 1;
    }
    Ok((0..height)
        .flat_map(|y| (0..width).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (s, n) = sums[y * width + x];
            HeatmapRow { x, y, mean_quantile: (n > 0).then(|| s / n as f64), count: n }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(issued: bool, id: bool) -> GuidanceEvent {
        GuidanceEvent { global_step: 0, episode_step: 0, phi: 0.0, tau: 0.0, issued, ground_truth_id: id }
    }

    #[test]
    fn relative_performance_examples() {
        let base: Vec<(u64, f64)> = (0..5).map(|i| (i * 10, 0.1 + i as f64 * 0.2)).collect();
        assert_eq!(relative_transfer_performance(&base, &base).unwrap(), 0.0);
        let double: Vec<(u64, f64)> = base.iter().map(|&(s, v)| (s, 2.0 * v)).collect();
        assert!((relative_transfer_performance(&double, &base).unwrap() - 100.0).abs() < 1e-12);
        let linear = [(0, 0.0), (10, 1.0)];
        let flat = [(0, 0.5), (10, 0.5)];
        assert_eq!(relative_transfer_performance(&linear, &flat).unwrap(), 0.0);
        assert!(matches!(relative_transfer_performance(&flat, &[(0, 0.0), (10, 0.0)]), Err(Error::ZeroBaseline)));
        assert!(relative_transfer_performance(&flat, &[(0, 0.5), (20, 0.5)]).is_err());
    }

    #[test]
    fn guidance_rate_examples() {
        assert_eq!(guidance_rates(&[ev(false, true), ev(false, false)]), GuidanceRates::default());
        let all_id = guidance_rates(&[ev(true, true), ev(false, false)]);
        assert_eq!(all_id.incorrect, 0.0);
        let mut events = vec![ev(false, false); 90];
        events.extend(vec![ev(true, true); 7]);
        events.extend(vec![ev(true, false); 3]);
        let r = guidance_rates(&events);
        assert!((r.issue - 0.10).abs() < 1e-12 && (r.correct - 0.07).abs() < 1e-12 && (r.incorrect - 0.03).abs() < 1e-12);
        assert_eq!(r.issue, r.correct + r.incorrect);
    }

    #[test]
    fn visitation_totals() {
        let mut t = VisitationTable::default();
        t.record(vec![1, 2]);
        t.record(vec![1, 2]);
        t.record(vec![3]);
        assert_eq!((t.total(), t.distinct(), t.count(&[1, 2]), t.count(&[9])), (3, 2, 2, 0));
    }

    #[test]
    fn mean_curve_bands() {
        let c = mean_curve(&[vec![(0, 1.0), (5, 2.0)], vec![(0, 3.0), (5, 2.0)]]);
        assert_eq!(c, vec![(0, 2.0, 1.0), (5, 2.0, 0.0)]);
    }
}
