use alloc::string::ToString;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

/// Bias-corrected Adam moments for a list of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let first_moment: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            second_moment: first_moment.clone(),
            first_moment,
            step_count: 0,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// One Adam update in place. `names` labels parameters in error messages.
pub fn adam_step(
    params: &mut [Tensor],
    grads: &[Tensor],
    names: &[&str],
    state: &mut AdamState,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::invalid("adam_step", "learning rate must be positive"));
    }
    if params.len() != grads.len() || params.len() != state.first_moment.len() {
        return Err(Error::invalid("adam_step", "parameter, gradient and moment counts differ"));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.first_moment[i].shape() {
            return Err(Error::ShapeMismatch { op: "adam_step", lhs: p.shape().to_vec(), rhs: g.shape().to_vec() });
        }
        if !g.is_finite() {
            let name = names.get(i).map(|n| n.to_string()).unwrap_or_else(|| alloc::format!("#{}", i));
            return Err(Error::NonFiniteGradient { name });
        }
    }

    state.step_count += 1;
    let t = state.step_count as f64;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.epsilon);
    let c1 = 1.0 - libm::pow(b1, t);
    let c2 = 1.0 - libm::pow(b2, t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let m = state.first_moment[i].data_mut();
        let v = state.second_moment[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (libm::sqrt(v_hat) + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_params_and_counts_step() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0])];
        let before = params.clone();
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::zeros(&[2])], &["w"], &mut st, 0.1).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient_sign() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut st = AdamState::new(&params);
        adam_step(&mut params, &[Tensor::vector(vec![3.0, -0.01])], &["w"], &mut st, 0.01).unwrap();
        assert!((params[0].data()[0] + 0.01).abs() < 1e-8);
        assert!((params[0].data()[1] - 0.01).abs() < 1e-5);
    }

    #[test]
    fn descends_parabola() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&params);
        for _ in 0..100 {
            let g = Tensor::scalar(2.0 * params[0].item());
            adam_step(&mut params, &[g], &["x"], &mut st, 0.1).unwrap();
        }
        assert!(params[0].item().abs() < 0.05, "x = {}", params[0].item());
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut params = vec![Tensor::scalar(1.0), Tensor::scalar(1.0)];
        let mut st = AdamState::new(&params);
        let err = adam_step(&mut params, &[Tensor::scalar(0.0), Tensor::scalar(f64::NAN)], &["a", "b"], &mut st, 0.1)
            .unwrap_err();
        assert_eq!(err, Error::NonFiniteGradient { name: "b".into() });
    }
}
