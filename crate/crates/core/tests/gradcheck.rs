use ebtl_core::energy::{energy_reg_loss_tape, energy_score_tape, EnergyGateConfig};
use ebtl_core::numerics::gradcheck::check_gradients;
use ebtl_core::policy::{ActorCriticParams, Architecture};
use ebtl_core::ppo::{minibatch_loss, EnergyTerm, PpoConfig, RolloutBatch, UpdateExtras};
use ebtl_core::rng::{self, ChaCha8Rng};
use ebtl_core::{Result, Tape, Tensor, Var};

const H: f64 = 1e-5;
const REL: f64 = 1e-4;

/// Normal entries kept at least `gap` away from every kink in `kinks`.
fn away_from(shape: &[usize], kinks: &[f64], gap: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| loop {
            let v = rng::normal(rng);
            if kinks.iter().all(|k| (v - k).abs() > gap) {
                break v;
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn randn(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    away_from(shape, &[], 0.0, rng)
}

/// Reduces any tensor to a scalar through fixed random weights, so every
/// output entry contributes a distinct sensitivity.
fn contract(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let shape = tape.value(v)?.shape().to_vec();
    let mut r = rng::stream(seed, 99);
    let w = tape.constant(randn(&shape, &mut r))?;
    let p = tape.mul(v, w)?;
    tape.sum(p)
}

fn assert_grad(name: &str, inputs: &[Tensor], build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
    let rep = check_gradients(inputs, H, build).unwrap();
    assert!(rep.passes(REL), "{}: {:?}", name, rep);
}

#[test]
fn elementwise_ops() {
    let mut r = rng::stream(11, 0);
    let a = randn(&[3, 4], &mut r);
    let b = randn(&[3, 4], &mut r);
    let pos = a.map(|v| v.abs() + 0.5);
    assert_grad("add", &[a.clone(), b.clone()], |t, v| {
        let o = t.add(v[0], v[1])?;
        contract(t, o, 1)
    });
    assert_grad("subtract", &[a.clone(), b.clone()], |t, v| {
        let o = t.sub(v[0], v[1])?;
        contract(t, o, 2)
    });
    assert_grad("multiply", &[a.clone(), b.clone()], |t, v| {
        let o = t.mul(v[0], v[1])?;
        contract(t, o, 3)
    });
    assert_grad("negate", std::slice::from_ref(&a), |t, v| {
        let o = t.neg(v[0])?;
        contract(t, o, 4)
    });
    assert_grad("scale", std::slice::from_ref(&a), |t, v| {
        let o = t.scale(v[0], -2.5)?;
        contract(t, o, 5)
    });
    assert_grad("add_scalar", std::slice::from_ref(&a), |t, v| {
        let o = t.add_scalar(v[0], 0.7)?;
        let o = t.square(o)?;
        contract(t, o, 6)
    });
    assert_grad("tanh", std::slice::from_ref(&a), |t, v| {
        let o = t.tanh(v[0])?;
        contract(t, o, 7)
    });
    assert_grad("exp", std::slice::from_ref(&a), |t, v| {
        let o = t.exp(v[0])?;
        contract(t, o, 8)
    });
    assert_grad("log", &[pos], |t, v| {
        let o = t.log(v[0])?;
        contract(t, o, 9)
    });
    assert_grad("square", &[a], |t, v| {
        let o = t.square(v[0])?;
        contract(t, o, 10)
    });
}

#[test]
fn kinked_ops_away_from_kinks() {
    let mut r = rng::stream(12, 0);
    let x = away_from(&[4, 5], &[0.0, -0.5, 0.5], 1e-3, &mut r);
    assert_grad("relu", std::slice::from_ref(&x), |t, v| {
        let o = t.relu(v[0])?;
        contract(t, o, 1)
    });
    assert_grad("clip", std::slice::from_ref(&x), |t, v| {
        let o = t.clip(v[0], -0.5, 0.5)?;
        contract(t, o, 2)
    });
    let y = loop {
        let y = randn(&[4, 5], &mut r);
        if x.data().iter().zip(y.data()).all(|(a, b)| (a - b).abs() > 1e-3) {
            break y;
        }
    };
    assert_grad("minimum", &[x.clone(), y.clone()], |t, v| {
        let o = t.minimum(v[0], v[1])?;
        contract(t, o, 3)
    });
    assert_grad("maximum", &[x, y], |t, v| {
        let o = t.maximum(v[0], v[1])?;
        contract(t, o, 4)
    });
}

#[test]
fn reductions_and_indexing() {
    let mut r = rng::stream(13, 0);
    let m = randn(&[3, 5], &mut r);
    let v = randn(&[6], &mut r);
    assert_grad("log_sum_exp rows", std::slice::from_ref(&m), |t, x| {
        let o = t.log_sum_exp(x[0])?;
        contract(t, o, 1)
    });
    assert_grad("log_sum_exp vector", std::slice::from_ref(&v), |t, x| t.log_sum_exp(x[0]));
    assert_grad("log_softmax", std::slice::from_ref(&m), |t, x| {
        let o = t.log_softmax(x[0])?;
        contract(t, o, 2)
    });
    assert_grad("gather rows", std::slice::from_ref(&m), |t, x| {
        let o = t.gather(x[0], &[4, 0, 2])?;
        contract(t, o, 3)
    });
    assert_grad("gather vector", std::slice::from_ref(&v), |t, x| {
        let o = t.gather(x[0], &[1, 1, 5])?;
        contract(t, o, 4)
    });
    assert_grad("sum_rows", std::slice::from_ref(&m), |t, x| {
        let o = t.sum_rows(x[0])?;
        contract(t, o, 5)
    });
    assert_grad("sum", std::slice::from_ref(&m), |t, x| {
        let o = t.square(x[0])?;
        t.sum(o)
    });
    assert_grad("mean", &[v], |t, x| {
        let o = t.exp(x[0])?;
        t.mean(o)
    });
    assert_grad("reshape", &[m], |t, x| {
        let o = t.reshape(x[0], &[5, 3])?;
        contract(t, o, 6)
    });
}

#[test]
fn linear_algebra_and_convolution() {
    let mut r = rng::stream(14, 0);
    let a = randn(&[3, 4], &mut r);
    let b = randn(&[4, 2], &mut r);
    let bias = randn(&[2], &mut r);
    assert_grad("matmul", &[a, b.clone()], |t, x| {
        let o = t.matmul(x[0], x[1])?;
        contract(t, o, 1)
    });
    assert_grad("add_row", &[b, bias], |t, x| {
        let o = t.add_row(x[0], x[1])?;
        contract(t, o, 2)
    });
    let img = randn(&[2, 2, 4, 3], &mut r);
    let k = randn(&[3, 2, 3, 3], &mut r);
    let kb = randn(&[3], &mut r);
    assert_grad("conv2d", &[img, k, kb], |t, x| {
        let o = t.conv2d(x[0], x[1], x[2])?;
        contract(t, o, 3)
    });
}

#[test]
fn two_layer_mlp_parameters() {
    let mut r = rng::stream(15, 0);
    let arch = Architecture::dense(6, 4, &[8, 5]);
    let p = ActorCriticParams::init(arch, &mut r).unwrap();
    let obs = randn(&[5, 6], &mut r);
    let inputs: Vec<Tensor> = p.tensors().to_vec();
    assert_grad("mlp", &inputs, |t, vars| {
        let o = t.constant(obs.clone())?;
        let out = p.forward_tape(t, vars, o)?;
        let lp = t.log_softmax(out.logits)?;
        let a = contract(t, lp, 1)?;
        let v = t.square(out.value)?;
        let v = t.mean(v)?;
        t.add(a, v)
    });
}

#[test]
fn energy_loss_through_network() {
    let mut r = rng::stream(16, 0);
    let arch = Architecture::dense(5, 3, &[6]);
    let mut p = ActorCriticParams::init(arch, &mut r).unwrap();
    // scale the head so scores straddle the margins
    for (n, t) in p.names().to_vec().iter().zip(p.tensors_mut()) {
        if n == "policy.weight" {
            *t = t.map(|v| v * 800.0);
        }
    }
    let id = randn(&[4, 5], &mut r);
    let ood = randn(&[4, 5], &mut r);
    let inputs: Vec<Tensor> = p.tensors().to_vec();
    assert_grad("energy", &inputs, |t, vars| {
        let a = t.constant(id.clone())?;
        let b = t.constant(ood.clone())?;
        let oa = p.forward_tape(t, vars, a)?;
        let ob = p.forward_tape(t, vars, b)?;
        let pa = energy_score_tape(t, oa.logits, 2.0)?;
        let pb = energy_score_tape(t, ob.logits, 2.0)?;
        energy_reg_loss_tape(t, pa, pb, 1.0, -1.0)
    });
}

#[test]
fn composed_ppo_energy_and_distillation_loss() {
    let mut r = rng::stream(17, 0);
    let arch = Architecture::dense(5, 3, &[7, 6]);
    let mut p = ActorCriticParams::init(arch, &mut r).unwrap();
    for t in p.tensors_mut() {
        *t = t.map(|v| v * 1.5);
    }
    let n = 6;
    let obs: Vec<Vec<f64>> = (0..n).map(|_| randn(&[5], &mut r).into_data()).collect();
    let masks = [vec![true, true, true], vec![true, false, true], vec![false, true, true]];
    let masks: Vec<Vec<bool>> = (0..n).map(|i| masks[i % 3].clone()).collect();
    let outs = p.forward_batch(&Tensor::stack_rows(&obs).unwrap(), &masks).unwrap();
    let actions: Vec<usize> = (0..n).map(|i| if masks[i][0] { 0 } else { 2 }).collect();
    // behaviour log-probs near the current ones keep ratios inside the clip range
    let behavior: Vec<f64> = (0..n).map(|i| outs[i].masked_log_probs[actions[i]] + 0.05 * rng::normal(&mut r)).collect();
    let flags: Vec<bool> = (0..n).map(|i| i % 2 == 0).collect();
    let teacher: Vec<Option<f64>> = (0..n).map(|i| flags[i].then_some(behavior[i])).collect();
    let values: Vec<f64> = outs.iter().map(|o| o.value).collect();
    let targets: Vec<f64> = values.iter().map(|v| v + 0.8 * rng::normal(&mut r)).collect();
    let teacher_probs: Vec<Vec<f64>> = masks
        .iter()
        .map(|m| {
            let k = m.iter().filter(|b| **b).count() as f64;
            m.iter().map(|&b| if b { 1.0 / k } else { 0.0 }).collect()
        })
        .collect();
    let mut batch = RolloutBatch {
        obs,
        masks,
        actions,
        behavior_log_probs: behavior,
        teacher_flags: flags,
        teacher_log_probs: teacher,
        values: values.clone(),
        advantages: (0..n).map(|_| rng::normal(&mut r)).collect(),
        targets,
        teacher_probs: Some(teacher_probs),
        value_weights: None,
    };
    // the value loss treats the ratio as a constant; pin it for the
    // finite-difference side
    let ratios: Vec<f64> = (0..n)
        .map(|i| {
            let reference = batch.teacher_log_probs[i].unwrap_or(batch.behavior_log_probs[i]);
            (outs[i].masked_log_probs[batch.actions[i]] - reference).exp()
        })
        .collect();
    batch.value_weights = Some(ratios);
    let id_pool: Vec<Vec<f64>> = (0..4).map(|_| randn(&[5], &mut r).into_data()).collect();
    let ood_pool: Vec<Vec<f64>> = (0..4).map(|_| randn(&[5], &mut r).into_data()).collect();
    let ecfg = EnergyGateConfig { margin_in: 2.0, margin_out: 0.0, weight: 0.3, ..EnergyGateConfig::grid() };
    let extras = UpdateExtras {
        energy: Some(EnergyTerm { config: &ecfg, id_pool: &id_pool, ood_pool: &ood_pool, batch: 4 }),
        ksrl_weight: 0.4,
        frozen: None,
    };
    let cfg = PpoConfig { entropy_coeff: 0.05, ..PpoConfig::grid() };
    let rows: Vec<usize> = (0..n).collect();
    let er: Vec<usize> = (0..4).collect();
    let inputs: Vec<Tensor> = p.tensors().to_vec();
    assert_grad("ppo total loss", &inputs, |t, vars| {
        let (loss, parts) = minibatch_loss(t, &p, vars, &batch, &rows, &cfg, &extras, Some((&er, &er)))?;
        assert!(parts.energy > 0.0 && parts.ksrl > 0.0);
        Ok(loss)
    });
}
