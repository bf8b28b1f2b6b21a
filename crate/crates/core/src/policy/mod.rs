//! Actor-critic networks with masked categorical heads.
//!
//! A shared encoder feeds a policy head (one logit per action) and a value
//! head. Raw logits are kept alongside the masked log-probabilities because
//! the energy score is computed on the network's unmasked belief.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::numerics::{kernels, Tape, Tensor, Var};
use crate::rng;
use crate::{Error, Result};

mod distribution;

pub use distribution::{entropy, masked_log_softmax, masked_log_softmax_tape, sample_action, PolicyOutput, MASK_LOGIT};

/// Shape of the shared encoder.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Encoder {
    /// Fully connected ReLU stack.
    Dense { hidden: Vec<usize> },
    /// 3x3 same-padded ReLU convolutions over a `[channels, height, width]`
    /// observation, followed by one dense ReLU layer.
    Conv { channels: usize, height: usize, width: usize, filters: Vec<usize>, hidden: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Architecture {
    pub obs_dim: usize,
    pub num_actions: usize,
    pub encoder: Encoder,
}

impl Architecture {
    pub fn dense(obs_dim: usize, num_actions: usize, hidden: &[usize]) -> Self {
        Self { obs_dim, num_actions, encoder: Encoder::Dense { hidden: hidden.to_vec() } }
    }

    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.num_actions == 0 {
            return Err(Error::InvalidConfig("observation and action sizes must be positive".into()));
        }
        match &self.encoder {
            Encoder::Dense { hidden } => {
                if hidden.is_empty() || hidden.contains(&0) {
                    return Err(Error::InvalidConfig("dense encoder needs non-empty positive layer sizes".into()));
                }
            }
            Encoder::Conv { channels, height, width, filters, hidden } => {
                if channels * height * width != self.obs_dim {
                    return Err(Error::InvalidConfig(alloc::format!(
                        "conv input {}x{}x{} does not match observation size {}",
                        channels,
                        height,
                        width,
                        self.obs_dim
                    )));
                }
                if filters.is_empty() || filters.contains(&0) || *hidden == 0 {
                    return Err(Error::InvalidConfig("conv encoder needs positive filter and hidden sizes".into()));
                }
            }
        }
        Ok(())
    }

    /// Width of the encoder output.
    pub fn feature_dim(&self) -> usize {
        match &self.encoder {
            Encoder::Dense { hidden } => *hidden.last().expect("validated"),
            Encoder::Conv { hidden, .. } => *hidden,
        }
    }

    /// Parameter names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut fan_in = self.obs_dim;
        let dense: Vec<usize> = match &self.encoder {
            Encoder::Dense { hidden } => hidden.clone(),
            Encoder::Conv { channels, height, width, filters, hidden } => {
                let mut c = *channels;
                for (i, &f) in filters.iter().enumerate() {
                    out.push((alloc::format!("conv{}.weight", i), vec![f, c, 3, 3]));
                    out.push((alloc::format!("conv{}.bias", i), vec![f]));
                    c = f;
                }
                fan_in = c * height * width;
                vec![*hidden]
            }
        };
        for (i, &h) in dense.iter().enumerate() {
            out.push((alloc::format!("enc{}.weight", i), vec![fan_in, h]));
            out.push((alloc::format!("enc{}.bias", i), vec![h]));
            fan_in = h;
        }
        out.push(("policy.weight".to_string(), vec![fan_in, self.num_actions]));
        out.push(("policy.bias".to_string(), vec![self.num_actions]));
        out.push(("value.weight".to_string(), vec![fan_in, 1]));
        out.push(("value.bias".to_string(), vec![1]));
        out
    }

    /// Names of the parameters frozen by encoder-freezing fine-tuning: every
    /// convolution when present, otherwise the first dense layer.
    pub fn frozen_encoder_names(&self) -> Vec<String> {
        let layout = self.layout();
        let conv: Vec<String> = layout.iter().filter(|(n, _)| n.starts_with("conv")).map(|(n, _)| n.clone()).collect();
        if !conv.is_empty() {
            return conv;
        }
        vec!["enc0.weight".to_string(), "enc0.bias".to_string()]
    }
}

/// Named weights of an actor-critic network.
#[derive(Clone, Debug, PartialEq)]
pub struct ActorCriticParams {
    arch: Architecture,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// Output of a taped forward pass over a batch.
#[derive(Clone, Copy, Debug)]
pub struct TapeOutput {
    /// `[B, K]` raw logits.
    pub logits: Var,
    /// `[B]` state values.
    pub value: Var,
}

/// Orthogonal matrix `[rows, cols]` scaled by `gain`.
pub fn orthogonal<R: Rng + ?Sized>(rows: usize, cols: usize, gain: f64, rng: &mut R) -> Tensor {
    let (n, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n);
    while basis.len() < n {
        let mut v: Vec<f64> = (0..len).map(|_| rng::normal(rng)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in v.iter_mut().zip(b) {
                *x -= d * y;
            }
        }
        let norm = libm::sqrt(v.iter().map(|x| x * x).sum::<f64>());
        if norm < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
    let mut data = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            // columns are orthonormal when tall, rows when wide
            data[r * cols + c] = gain * if rows >= cols { basis[c][r] } else { basis[r][c] };
        }
    }
    Tensor::new(vec![rows, cols], data).expect("orthogonal shape")
}

impl ActorCriticParams {
    /// Orthogonal initialisation: gain sqrt(2) for hidden layers, 0.01 for
    /// the policy head and 1 for the value head; zero biases.
    pub fn init<R: Rng + ?Sized>(arch: Architecture, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for (name, shape) in arch.layout() {
            let t = if name.ends_with(".bias") {
                Tensor::zeros(&shape)
            } else {
                let gain = match name.as_str() {
                    "policy.weight" => 0.01,
                    "value.weight" => 1.0,
                    _ => core::f64::consts::SQRT_2,
                };
                let cols: usize = shape[1..].iter().product();
                orthogonal(shape[0], cols, gain, rng).reshape(&shape)?
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { arch, names, tensors })
    }

    /// Rebuilds parameters from named tensors, checking every shape.
    pub fn from_named(arch: Architecture, named: Vec<(String, Tensor)>) -> Result<Self> {
        arch.validate()?;
        let layout = arch.layout();
        if layout.len() != named.len() {
            return Err(Error::Layout(alloc::format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for ((want_name, want_shape), (name, t)) in layout.into_iter().zip(named) {
            if want_name != name {
                return Err(Error::Layout(alloc::format!("expected parameter {}, found {}", want_name, name)));
            }
            if t.shape() != want_shape.as_slice() {
                return Err(Error::ShapeMismatch { op: "load_parameters", lhs: want_shape, rhs: t.shape().to_vec() });
            }
            names.push(name);
            tensors.push(t);
        }
        Ok(Self { arch, names, tensors })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Places every parameter on the tape as a differentiable leaf.
    pub fn to_tape(&self, tape: &mut Tape) -> Result<Vec<Var>> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Taped forward pass over `obs [B, obs_dim]`.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], obs: Var) -> Result<TapeOutput> {
        let b = tape.value(obs)?.shape().first().copied().unwrap_or(0);
        let mut i = 0;
        let mut h = obs;
        if let Encoder::Conv { channels, height, width, filters, .. } = &self.arch.encoder {
            h = tape.reshape(h, &[b, *channels, *height, *width])?;
            let mut c = *channels;
            for &f in filters {
                h = tape.conv2d(h, vars[i], vars[i + 1])?;
                h = tape.relu(h)?;
                i += 2;
                c = f;
            }
            h = tape.reshape(h, &[b, c * height * width])?;
        }
        while self.names[i].starts_with("enc") {
            h = tape.matmul(h, vars[i])?;
            h = tape.add_row(h, vars[i + 1])?;
            h = tape.relu(h)?;
            i += 2;
        }
        let logits = tape.matmul(h, vars[i])?;
        let logits = tape.add_row(logits, vars[i + 1])?;
        let value = tape.matmul(h, vars[i + 2])?;
        let value = tape.add_row(value, vars[i + 3])?;
        let value = tape.reshape(value, &[b])?;
        Ok(TapeOutput { logits, value })
    }

    /// Tape-free forward pass returning `(logits [B, K], values [B])`.
    pub fn forward_raw(&self, obs: &Tensor) -> Result<(Tensor, Vec<f64>)> {
        if obs.ndim() != 2 || obs.shape()[1] != self.arch.obs_dim {
            return Err(Error::ShapeMismatch {
                op: "forward",
                lhs: vec![obs.shape().first().copied().unwrap_or(0), self.arch.obs_dim],
                rhs: obs.shape().to_vec(),
            });
        }
        let b = obs.shape()[0];
        let t = &self.tensors;
        let mut i = 0;
        let mut h = obs.clone();
        if let Encoder::Conv { channels, height, width, filters, .. } = &self.arch.encoder {
            h = h.reshape(&[b, *channels, *height, *width])?;
            let mut c = *channels;
            for &f in filters {
                h = kernels::relu(&kernels::conv2d(&h, &t[i], &t[i + 1])?);
                i += 2;
                c = f;
            }
            h = h.reshape(&[b, c * height * width])?;
        }
        while self.names[i].starts_with("enc") {
            h = kernels::relu(&kernels::add_row(&kernels::matmul(&h, &t[i])?, &t[i + 1])?);
            i += 2;
        }
        let logits = kernels::add_row(&kernels::matmul(&h, &t[i])?, &t[i + 1])?;
        let value = kernels::add_row(&kernels::matmul(&h, &t[i + 2])?, &t[i + 3])?;
        Ok((logits, value.into_data()))
    }

    /// Batched inference with per-row action masks.
    pub fn forward_batch(&self, obs: &Tensor, masks: &[Vec<bool>]) -> Result<Vec<PolicyOutput>> {
        let (logits, values) = self.forward_raw(obs)?;
        if masks.len() != values.len() {
            return Err(Error::invalid("forward", alloc::format!("{} masks for {} observations", masks.len(), values.len())));
        }
        let k = self.arch.num_actions;
        masks
            .iter()
            .enumerate()
            .map(|(r, mask)| {
                let row = logits.data()[r * k..(r + 1) * k].to_vec();
                let masked_log_probs = masked_log_softmax(&row, mask)?;
                Ok(PolicyOutput { logits: row, masked_log_probs, value: values[r] })
            })
            .collect()
    }

    /// Inference on one observation.
    pub fn forward(&self, obs: &[f64], mask: &[bool]) -> Result<PolicyOutput> {
        let obs = Tensor::matrix(1, obs.len(), obs.to_vec())?;
        Ok(self.forward_batch(&obs, &[mask.to_vec()])?.remove(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arch() -> Architecture {
        Architecture::dense(5, 3, &[8, 6])
    }

    #[test]
    fn layout_names_and_shapes() {
        let names: Vec<String> = arch().layout().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["enc0.weight", "enc0.bias", "enc1.weight", "enc1.bias", "policy.weight", "policy.bias", "value.weight", "value.bias"]
        );
    }

    #[test]
    fn orthogonal_columns() {
        let mut r = rng::stream(0, 0);
        let m = orthogonal(6, 3, 1.0, &mut r);
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..6).map(|i| m.data()[i * 3 + a] * m.data()[i * 3 + b]).sum();
                assert!((d - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
        let w = orthogonal(2, 5, 2.0, &mut r);
        let d: f64 = (0..5).map(|i| w.data()[i] * w.data()[5 + i]).sum();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn tape_and_raw_forward_agree() {
        let mut r = rng::stream(1, 0);
        let p = ActorCriticParams::init(arch(), &mut r).unwrap();
        let obs = Tensor::matrix(2, 5, (0..10).map(|i| i as f64 * 0.1 - 0.3).collect()).unwrap();
        let (logits, values) = p.forward_raw(&obs).unwrap();
        let mut tape = Tape::new();
        let vars = p.to_tape(&mut tape).unwrap();
        let o = tape.constant(obs).unwrap();
        let out = p.forward_tape(&mut tape, &vars, o).unwrap();
        assert_eq!(tape.value(out.logits).unwrap(), &logits);
        assert_eq!(tape.value(out.value).unwrap().data(), values.as_slice());
    }

    #[test]
    fn conv_forward_agrees() {
        let a = Architecture {
            obs_dim: 2 * 4 * 4,
            num_actions: 3,
            encoder: Encoder::Conv { channels: 2, height: 4, width: 4, filters: vec![3], hidden: 5 },
        };
        let mut r = rng::stream(2, 0);
        let p = ActorCriticParams::init(a, &mut r).unwrap();
        let obs = Tensor::matrix(1, 32, (0..32).map(|i| (i % 3) as f64).collect()).unwrap();
        let (logits, _) = p.forward_raw(&obs).unwrap();
        let mut tape = Tape::new();
        let vars = p.to_tape(&mut tape).unwrap();
        let o = tape.constant(obs).unwrap();
        let out = p.forward_tape(&mut tape, &vars, o).unwrap();
        assert_eq!(tape.value(out.logits).unwrap(), &logits);
    }

    #[test]
    fn zero_net_is_uniform() {
        let mut r = rng::stream(3, 0);
        let mut p = ActorCriticParams::init(arch(), &mut r).unwrap();
        for t in p.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let out = p.forward(&[0.0; 5], &[true, true, true]).unwrap();
        for lp in &out.masked_log_probs {
            assert!((lp + libm::log(3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn from_named_rejects_wrong_shape() {
        let mut r = rng::stream(4, 0);
        let p = ActorCriticParams::init(arch(), &mut r).unwrap();
        let mut named: Vec<(String, Tensor)> = p.names().iter().cloned().zip(p.tensors().iter().cloned()).collect();
        assert!(ActorCriticParams::from_named(arch(), named.clone()).is_ok());
        named[0].1 = Tensor::zeros(&[4, 8]);
        assert!(matches!(ActorCriticParams::from_named(arch(), named), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn wrong_observation_width() {
        let mut r = rng::stream(5, 0);
        let p = ActorCriticParams::init(arch(), &mut r).unwrap();
        assert!(matches!(p.forward(&[0.0; 4], &[true; 3]), Err(Error::ShapeMismatch { .. })));
    }
}
