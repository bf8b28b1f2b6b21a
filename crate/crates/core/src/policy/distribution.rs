use alloc::vec::Vec;

use rand::Rng;

use crate::numerics::{kernels, Tape, Tensor, Var};
use crate::{Error, Result};

/// Logit substituted for disabled actions before the softmax.
pub const MASK_LOGIT: f64 = -1e9;

/// Policy and value for one state.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyOutput {
    /// Raw, unmasked logits.
    pub logits: Vec<f64>,
    /// Log-probabilities after masking; disabled actions hold `-inf`.
    pub masked_log_probs: Vec<f64>,
    pub value: f64,
}

impl PolicyOutput {
    pub fn probs(&self) -> Vec<f64> {
        self.masked_log_probs.iter().map(|&lp| libm::exp(lp)).collect()
    }
}

pub fn masked_log_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::ShapeMismatch { op: "mask", lhs: alloc::vec![logits.len()], rhs: alloc::vec![mask.len()] });
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::AllMasked);
    }
    let z: Vec<f64> = logits.iter().zip(mask).map(|(&l, &m)| if m { l } else { MASK_LOGIT }).collect();
    let lse = kernels::log_sum_exp_slice(&z);
    Ok(z.iter().zip(mask).map(|(&v, &m)| if m { v - lse } else { f64::NEG_INFINITY }).collect())
}

/// Taped masked log-softmax of `logits [B, K]`. Disabled actions receive
/// `MASK_LOGIT` (finite, so the tape stays NaN-free) and no gradient.
pub fn masked_log_softmax_tape(tape: &mut Tape, logits: Var, masks: &[Vec<bool>]) -> Result<Var> {
    let shape = tape.value(logits)?.shape().to_vec();
    if shape.len() != 2 || shape[0] != masks.len() || masks.iter().any(|m| m.len() != shape[1]) {
        return Err(Error::invalid("mask", alloc::format!("masks do not match logits of shape {:?}", shape)));
    }
    if masks.iter().any(|m| !m.iter().any(|&b| b)) {
        return Err(Error::AllMasked);
    }
    if masks.iter().all(|m| m.iter().all(|&b| b)) {
        return tape.log_softmax(logits);
    }
    let keep: Vec<f64> = masks.iter().flatten().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let offset: Vec<f64> = masks.iter().flatten().map(|&b| if b { 0.0 } else { MASK_LOGIT }).collect();
    let keep = tape.constant(Tensor::new(shape.clone(), keep)?)?;
    let offset = tape.constant(Tensor::new(shape, offset)?)?;
    let z = tape.mul(logits, keep)?;
    let z = tape.add(z, offset)?;
    tape.log_softmax(z)
}

/// Categorical draw from the masked distribution, returning the action and
/// its log-probability.
pub fn sample_action<R: Rng + ?Sized>(output: &PolicyOutput, rng: &mut R) -> (usize, f64) {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (a, &lp) in output.masked_log_probs.iter().enumerate() {
        if lp == f64::NEG_INFINITY {
            continue;
        }
        last = a;
        acc += libm::exp(lp);
        if u < acc {
            return (a, lp);
        }
    }
    // rounding left u above the cumulative sum
    (last, output.masked_log_probs[last])
}

/// Shannon entropy of the masked distribution, in nats.
pub fn entropy(output: &PolicyOutput) -> f64 {
    -output
        .masked_log_probs
        .iter()
        .filter(|lp| lp.is_finite())
        .map(|&lp| libm::exp(lp) * lp)
        .sum::<f64>()
}
