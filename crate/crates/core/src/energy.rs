//! Free-energy out-of-distribution scoring.
//!
//! A teacher's raw action logits `f_1..f_K` define the free energy
//! `E = -T log sum_i exp(f_i / T)`. The energy score `phi = -E` is high for
//! states the teacher visited often and low for unfamiliar ones, so a state
//! counts as in-distribution when `phi >= tau` for a threshold calibrated as
//! an empirical quantile of scores over the teacher's own training states.
//!
//! Also here: the squared-hinge margin loss that sharpens the separation
//! during teacher training, histogram divergences used to compare score
//! distributions, and rank statistics used by the diagnostics.

use alloc::vec;
use alloc::vec::Vec;

use crate::numerics::{kernels, Tape, Var};
use crate::{Error, Result};

/// Quantiles stored in every checkpoint's threshold table.
pub const TAU_QUANTILES: [f64; 10] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyGateConfig {
    pub temperature: f64,
    pub quantile: f64,
    pub margin_in: f64,
    pub margin_out: f64,
    /// Weight of the margin loss in the teacher's total loss.
    pub weight: f64,
}

impl EnergyGateConfig {
    /// Grid-world margins (10, 15).
    pub fn grid() -> Self {
        Self { temperature: 1.0, quantile: 0.5, margin_in: 10.0, margin_out: 15.0, weight: 0.1 }
    }

    /// Overcooked margins (12, 14).
    pub fn overcooked() -> Self {
        Self { margin_in: 12.0, margin_out: 14.0, ..Self::grid() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::invalid("energy", "temperature must be positive"));
        }
        if !(self.weight >= 0.0) {
            return Err(Error::invalid("energy", "weight must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScoreOrigin {
    TeacherTrain,
    TargetRollout,
    OodTrainSet,
}

impl ScoreOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            ScoreOrigin::TeacherTrain => "teacher_train",
            ScoreOrigin::TargetRollout => "target_rollout",
            ScoreOrigin::OodTrainSet => "ood_train_set",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScoreSample {
    pub phi: f64,
    pub origin: ScoreOrigin,
    pub ground_truth_id: Option<bool>,
}

fn check_logits(logits: &[f64], temperature: f64) -> Result<()> {
    if logits.is_empty() {
        return Err(Error::Empty("free_energy"));
    }
    if !(temperature > 0.0) {
        return Err(Error::invalid("free_energy", "temperature must be positive"));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { op: "free_energy" });
    }
    Ok(())
}

/// `E = -T * logsumexp(f / T)`.
pub fn free_energy(logits: &[f64], temperature: f64) -> Result<f64> {
    check_logits(logits, temperature)?;
    if temperature == 1.0 {
        return Ok(-kernels::log_sum_exp_slice(logits));
    }
    let scaled: Vec<f64> = logits.iter().map(|v| v / temperature).collect();
    Ok(-temperature * kernels::log_sum_exp_slice(&scaled))
}

/// `phi = -E`; higher means more familiar to the teacher.
pub fn energy_score(logits: &[f64], temperature: f64) -> Result<f64> {
    free_energy(logits, temperature).map(|e| -e)
}

/// Row-wise energy scores of a `[B, K]` logits variable, on the tape.
pub fn energy_score_tape(tape: &mut Tape, logits: Var, temperature: f64) -> Result<Var> {
    if temperature == 1.0 {
        return tape.log_sum_exp(logits);
    }
    let scaled = tape.scale(logits, 1.0 / temperature)?;
    let lse = tape.log_sum_exp(scaled)?;
    tape.scale(lse, temperature)
}

/// Linear-interpolation empirical quantile: index `q (n - 1)` of the sorted
/// scores.
pub fn calibrate_threshold(scores: &[f64], q: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Empty("calibrate_threshold"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::invalid("calibrate_threshold", "quantile must lie in [0, 1]"));
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    if frac == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + frac * (sorted[hi] - sorted[lo])
    }
}

/// Thresholds for every quantile in [`TAU_QUANTILES`], plus the sorted
/// calibration scores they came from.
#[derive(Clone, Debug, PartialEq)]
pub struct TauTable {
    pub entries: Vec<(f64, f64)>,
    sorted_scores: Vec<f64>,
}

impl TauTable {
    pub fn calibrate(scores: &[f64]) -> Result<Self> {
        if scores.is_empty() {
            return Err(Error::Empty("calibrate_threshold"));
        }
        let mut sorted = scores.to_vec();
        sorted.sort_by(f64::total_cmp);
        let entries = TAU_QUANTILES.iter().map(|&q| (q, quantile_sorted(&sorted, q))).collect();
        Ok(Self { entries, sorted_scores: sorted })
    }

    pub fn from_parts(entries: Vec<(f64, f64)>, scores: Vec<f64>) -> Self {
        let mut sorted_scores = scores;
        sorted_scores.sort_by(f64::total_cmp);
        Self { entries, sorted_scores }
    }

    pub fn scores(&self) -> &[f64] {
        &self.sorted_scores
    }

    /// Threshold for quantile `q`. Negative `q` means "guide everywhere".
    pub fn tau(&self, q: f64) -> Result<f64> {
        if q < 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        if let Some(&(_, t)) = self.entries.iter().find(|(eq, _)| (eq - q).abs() < 1e-12) {
            return Ok(t);
        }
        if self.sorted_scores.is_empty() {
            return Err(Error::Empty("calibrate_threshold"));
        }
        if q > 1.0 {
            return Err(Error::invalid("calibrate_threshold", "quantile must lie in [0, 1]"));
        }
        Ok(quantile_sorted(&self.sorted_scores, q))
    }

    /// Empirical quantile rank of `phi` among the calibration scores: the
    /// fraction of calibration scores strictly below it plus half the ties.
    pub fn rank(&self, phi: f64) -> f64 {
        quantile_rank(&self.sorted_scores, phi)
    }
}

/// Mid-rank of `x` within sorted `sorted`, in [0, 1].
pub fn quantile_rank(sorted: &[f64], x: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let below = sorted.partition_point(|&v| v < x);
    let not_above = sorted.partition_point(|&v| v <= x);
    (below as f64 + 0.5 * (not_above - below) as f64) / sorted.len() as f64
}

/// Squared-hinge margin loss, plain values.
pub fn energy_reg_loss(phi_in: &[f64], phi_out: &[f64], margin_in: f64, margin_out: f64) -> Result<f64> {
    if phi_in.is_empty() || phi_out.is_empty() {
        return Err(Error::Empty("energy_reg_loss"));
    }
    let hin: f64 = phi_in.iter().map(|&p| sq(f64::max(0.0, margin_in - p))).sum::<f64>() / phi_in.len() as f64;
    let hout: f64 = phi_out.iter().map(|&p| sq(f64::max(0.0, p - margin_out))).sum::<f64>() / phi_out.len() as f64;
    Ok(hin + hout)
}

fn sq(x: f64) -> f64 {
    x * x
}

/// Squared-hinge margin loss on the tape: `phi_in`, `phi_out` are `[B]`
/// energy-score variables.
pub fn energy_reg_loss_tape(tape: &mut Tape, phi_in: Var, phi_out: Var, margin_in: f64, margin_out: f64) -> Result<Var> {
    // max(0, m_in - phi_in)^2
    let a = tape.neg(phi_in)?;
    let a = tape.add_scalar(a, margin_in)?;
    let a = tape.relu(a)?;
    let a = tape.square(a)?;
    let a = tape.mean(a)?;
    // max(0, phi_out - m_out)^2
    let b = tape.add_scalar(phi_out, -margin_out)?;
    let b = tape.relu(b)?;
    let b = tape.square(b)?;
    let b = tape.mean(b)?;
    tape.add(a, b)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Divergence {
    KullbackLeibler,
    JensenShannon,
    TotalVariation,
    Hellinger,
}

impl Divergence {
    pub const ALL: [Divergence; 4] =
        [Divergence::JensenShannon, Divergence::TotalVariation, Divergence::Hellinger, Divergence::KullbackLeibler];

    pub fn as_str(self) -> &'static str {
        match self {
            Divergence::KullbackLeibler => "kl",
            Divergence::JensenShannon => "js",
            Divergence::TotalVariation => "tv",
            Divergence::Hellinger => "hellinger",
        }
    }
}

const KL_SMOOTHING: f64 = 1e-10;

fn normalized(h: &[f64]) -> Result<Vec<f64>> {
    let s: f64 = h.iter().sum();
    if !(s > 0.0) || h.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::invalid("divergence", "histogram must be non-negative with positive mass"));
    }
    Ok(h.iter().map(|v| v / s).collect())
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &qi)| pi * libm::log(pi / qi))
        .sum()
}

/// Divergence between two histograms over the same bins, in nats.
pub fn divergence(hist_p: &[f64], hist_q: &[f64], kind: Divergence) -> Result<f64> {
    if hist_p.len() != hist_q.len() || hist_p.is_empty() {
        return Err(Error::ShapeMismatch { op: "divergence", lhs: vec![hist_p.len()], rhs: vec![hist_q.len()] });
    }
    let p = normalized(hist_p)?;
    let q = normalized(hist_q)?;
    let v = match kind {
        Divergence::KullbackLeibler => {
            let smooth = |h: &[f64]| -> Vec<f64> {
                let s: f64 = h.iter().map(|v| v + KL_SMOOTHING).sum();
                h.iter().map(|v| (v + KL_SMOOTHING) / s).collect()
            };
            kl(&smooth(&p), &smooth(&q))
        }
        Divergence::JensenShannon => {
            let m: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
            0.5 * kl(&p, &m) + 0.5 * kl(&q, &m)
        }
        Divergence::TotalVariation => 0.5 * p.iter().zip(&q).map(|(a, b)| libm::fabs(a - b)).sum::<f64>(),
        Divergence::Hellinger => {
            let bc: f64 = p.iter().zip(&q).map(|(a, b)| libm::sqrt(a * b)).sum();
            libm::sqrt(f64::max(0.0, 1.0 - bc))
        }
    };
    Ok(v)
}

/// Equal-width histogram of `values` over `[lo, hi]`; the top edge is
/// inclusive.
pub fn histogram(values: &[f64], bins: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    if bins == 0 {
        return h;
    }
    let width = (hi - lo) / bins as f64;
    for &v in values {
        let b = if width > 0.0 { libm::floor((v - lo) / width) as isize } else { 0 };
        let b = b.clamp(0, bins as isize - 1) as usize;
        h[b] += 1.0;
    }
    h
}

/// Histograms of two score sets over a shared uniform binning of their
/// pooled range.
pub fn shared_histograms(a: &[f64], b: &[f64], bins: usize) -> (Vec<f64>, Vec<f64>, f64, f64) {
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    (histogram(a, bins, lo, hi), histogram(b, bins, lo, hi), lo, hi)
}

/// Average ranks (1-based), ties sharing their mean rank.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / libm::sqrt(sxx * syy)
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::invalid("spearman", "needs two equal-length samples of size >= 2"));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Area under the ROC curve of `scores` as a classifier for `labels`
/// (Mann-Whitney statistic, ties counted as one half).
pub fn auroc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("auroc", "scores and labels differ in length"));
    }
    let pos = labels.iter().filter(|&&l| l).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("auroc", "needs both positive and negative samples"));
    }
    let ranks = average_ranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l).map(|(r, _)| r).sum();
    let u = rank_sum - (pos * (pos + 1)) as f64 / 2.0;
    Ok(u / (pos * neg) as f64)
}
