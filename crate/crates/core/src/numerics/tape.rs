//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Every operation appends a node holding its value and the ids of its
//! inputs, so the node list is topologically ordered by construction.
//! `backward` walks the list in reverse, accumulating vector-Jacobian
//! products only into nodes that transitively depend on a parameter leaf.

use alloc::vec;
use alloc::vec::Vec;

use super::kernels;
use super::Tensor;
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    epoch: u64,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    Relu(usize),
    Tanh(usize),
    Exp(usize),
    Log(usize),
    Square(usize),
    Clip(usize, f64, f64),
    Minimum(usize, usize),
    Maximum(usize, usize),
    LogSumExp(usize),
    LogSoftmax(usize),
    Gather(usize, Vec<usize>),
    SumRows(usize),
    Sum(usize),
    Mean(usize),
    Reshape(usize),
    Conv2d(usize, usize, usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
    is_param: bool,
}

/// Recorded computation graph. Cleared between optimisation steps.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    epoch: u64,
}

/// Gradients produced by [`Tape::backward`], indexed by variable.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    epoch: u64,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`. Parameter leaves always
    /// have an entry (zeros when the loss does not depend on them).
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        if var.epoch != self.epoch {
            return None;
        }
        self.grads.get(var.id).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        if var.epoch != self.epoch {
            return None;
        }
        self.grads.get_mut(var.id).and_then(|g| g.take())
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if cfg!(debug_assertions) && !t.is_finite() {
        return Err(Error::NonFinite { op });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Drops all recorded nodes. Outstanding [`Var`]s become invalid.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.epoch += 1;
    }

    fn idx(&self, v: Var) -> Result<usize> {
        if v.epoch != self.epoch || v.id >= self.nodes.len() {
            return Err(Error::StaleTape);
        }
        Ok(v.id)
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let i = self.idx(v)?;
        Ok(&self.nodes[i].value)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor, op: Op, inputs: &[usize]) -> Result<Var> {
        check_finite(op_name, &value)?;
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node { value, op, needs_grad, is_param: false });
        Ok(Var { id: self.nodes.len() - 1, epoch: self.epoch })
    }

    /// Differentiable leaf; `backward` always reports its gradient.
    pub fn param(&mut self, value: Tensor) -> Result<Var> {
        check_finite("param", &value)?;
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: true, is_param: true });
        Ok(Var { id: self.nodes.len() - 1, epoch: self.epoch })
    }

    /// Non-differentiable input (observations, targets, masks).
    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        check_finite("constant", &value)?;
        self.nodes.push(Node { value, op: Op::Leaf, needs_grad: false, is_param: false });
        Ok(Var { id: self.nodes.len() - 1, epoch: self.epoch })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = kernels::matmul(&self.nodes[ia].value, &self.nodes[ib].value)?;
        self.push("matmul", v, Op::MatMul(ia, ib), &[ia, ib])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "add", |x, y| x + y)?;
        self.push("add", v, Op::Add(ia, ib), &[ia, ib])
    }

    /// `[m, n] + [n]` with the bias broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(bias)?);
        let v = kernels::add_row(&self.nodes[ia].value, &self.nodes[ib].value)?;
        self.push("add_row", v, Op::AddRow(ia, ib), &[ia, ib])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "subtract", |x, y| x - y)?;
        self.push("subtract", v, Op::Sub(ia, ib), &[ia, ib])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "multiply", |x, y| x * y)?;
        self.push("multiply", v, Op::Mul(ia, ib), &[ia, ib])
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| -x);
        self.push("negate", v, Op::Neg(ia), &[ia])
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x * c);
        self.push("scale", v, Op::Scale(ia, c), &[ia])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x + c);
        self.push("add_scalar", v, Op::AddScalar(ia), &[ia])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = kernels::relu(&self.nodes[ia].value);
        self.push("relu", v, Op::Relu(ia), &[ia])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(libm::tanh);
        self.push("tanh", v, Op::Tanh(ia), &[ia])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(libm::exp);
        self.push("exp", v, Op::Exp(ia), &[ia])
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(libm::log);
        self.push("log", v, Op::Log(ia), &[ia])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x * x);
        self.push("square", v, Op::Square(ia), &[ia])
    }

    pub fn clip(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        if lo > hi || lo.is_nan() || hi.is_nan() {
            return Err(Error::invalid("clip", alloc::format!("requires lo <= hi, got [{}, {}]", lo, hi)));
        }
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.map(|x| x.clamp(lo, hi));
        self.push("clip", v, Op::Clip(ia, lo, hi), &[ia])
    }

    /// Elementwise minimum; at ties the gradient goes to `a`.
    pub fn minimum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "minimum", |x, y| if y < x { y } else { x })?;
        self.push("minimum", v, Op::Minimum(ia, ib), &[ia, ib])
    }

    /// Elementwise maximum; at ties the gradient goes to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a)?, self.idx(b)?);
        let v = self.nodes[ia].value.zip_map(&self.nodes[ib].value, "maximum", |x, y| if y > x { y } else { x })?;
        self.push("maximum", v, Op::Maximum(ia, ib), &[ia, ib])
    }

    /// Row-wise log-sum-exp: `[n] -> []`, `[m, n] -> [m]`.
    pub fn log_sum_exp(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = kernels::log_sum_exp(&self.nodes[ia].value)?;
        self.push("log_sum_exp", v, Op::LogSumExp(ia), &[ia])
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = kernels::log_softmax(&self.nodes[ia].value)?;
        self.push("log_softmax", v, Op::LogSoftmax(ia), &[ia])
    }

    /// Picks one column per row (`[m, n] -> [m]`), or arbitrary entries of a
    /// vector (`[n] -> [k]`).
    pub fn gather(&mut self, a: Var, indices: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let src = &self.nodes[ia].value;
        let out = match src.shape() {
            [n] => {
                if let Some(&bad) = indices.iter().find(|&&i| i >= *n) {
                    return Err(Error::invalid("gather", alloc::format!("index {} out of range {}", bad, n)));
                }
                Tensor::vector(indices.iter().map(|&i| src.data()[i]).collect())
            }
            [m, n] => {
                if indices.len() != *m {
                    return Err(Error::ShapeMismatch { op: "gather", lhs: src.shape().to_vec(), rhs: vec![indices.len()] });
                }
                if let Some(&bad) = indices.iter().find(|&&i| i >= *n) {
                    return Err(Error::invalid("gather", alloc::format!("index {} out of range {}", bad, n)));
                }
                Tensor::vector(indices.iter().enumerate().map(|(r, &c)| src.data()[r * n + c]).collect())
            }
            s => return Err(Error::invalid("gather", alloc::format!("unsupported shape {:?}", s))),
        };
        self.push("gather", out, Op::Gather(ia, indices.to_vec()), &[ia])
    }

    /// Row sums: `[m, n] -> [m]`, `[n] -> []`.
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let (m, n, shape) = kernels::row_layout("sum_rows", &self.nodes[ia].value)?;
        let d = self.nodes[ia].value.data();
        let v = Tensor::new(shape, (0..m).map(|i| d[i * n..(i + 1) * n].iter().sum()).collect())?;
        self.push("sum_rows", v, Op::SumRows(ia), &[ia])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = Tensor::scalar(self.nodes[ia].value.sum());
        self.push("sum", v, Op::Sum(ia), &[ia])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a)?;
        let t = &self.nodes[ia].value;
        if t.is_empty() {
            return Err(Error::Empty("mean"));
        }
        let v = Tensor::scalar(t.sum() / t.len() as f64);
        self.push("mean", v, Op::Mean(ia), &[ia])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let ia = self.idx(a)?;
        let v = self.nodes[ia].value.clone().reshape(shape)?;
        self.push("reshape", v, Op::Reshape(ia), &[ia])
    }

    /// Same-padded stride-1 convolution, see [`kernels::conv2d`].
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, iw, ib) = (self.idx(x)?, self.idx(w)?, self.idx(b)?);
        let v = kernels::conv2d(&self.nodes[ix].value, &self.nodes[iw].value, &self.nodes[ib].value)?;
        self.push("conv2d", v, Op::Conv2d(ix, iw, ib), &[ix, iw, ib])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let root = self.idx(loss)?;
        let lv = &self.nodes[root].value;
        if lv.len() != 1 {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; root + 1];
        grads[root] = Some(Tensor::full(lv.shape(), 1.0));

        for id in (0..=root).rev() {
            let node = &self.nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            // keep intermediate gradients available to callers
            grads[id] = Some(g);
        }

        for (id, node) in self.nodes.iter().enumerate().take(root + 1) {
            if node.is_param && grads[id].is_none() {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        grads.resize(self.nodes.len(), None);
        for (id, node) in self.nodes.iter().enumerate().skip(root + 1) {
            if node.is_param {
                grads[id] = Some(Tensor::zeros(node.value.shape()));
            }
        }
        Ok(Gradients { grads, epoch: self.epoch })
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let out = &node.value;
        let val = |i: usize| &self.nodes[i].value;
        let wants = |i: usize| self.nodes[i].needs_grad;
        let mut acc = |i: usize, t: Tensor| accumulate(grads, i, t);

        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if wants(*a) {
                    acc(*a, kernels::matmul_nt(g, val(*b)));
                }
                if wants(*b) {
                    acc(*b, kernels::matmul_tn(val(*a), g));
                }
            }
            Op::Add(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.clone());
                }
            }
            Op::AddRow(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    let n = val(*b).len();
                    let mut db = vec![0.0; n];
                    for (i, v) in g.data().iter().enumerate() {
                        db[i % n] += v;
                    }
                    acc(*b, Tensor::vector(db));
                }
            }
            Op::Sub(a, b) => {
                if wants(*a) {
                    acc(*a, g.clone());
                }
                if wants(*b) {
                    acc(*b, g.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    acc(*a, g.zip_map(val(*b), "multiply", |x, y| x * y)?);
                }
                if wants(*b) {
                    acc(*b, g.zip_map(val(*a), "multiply", |x, y| x * y)?);
                }
            }
            Op::Neg(a) => acc(*a, g.map(|v| -v)),
            Op::Scale(a, c) => {
                let c = *c;
                acc(*a, g.map(|v| v * c))
            }
            Op::AddScalar(a) => acc(*a, g.clone()),
            Op::Relu(a) => acc(*a, g.zip_map(val(*a), "relu", |gv, x| if x >= 0.0 { gv } else { 0.0 })?),
            Op::Tanh(a) => acc(*a, g.zip_map(out, "tanh", |gv, y| gv * (1.0 - y * y))?),
            Op::Exp(a) => acc(*a, g.zip_map(out, "exp", |gv, y| gv * y)?),
            Op::Log(a) => acc(*a, g.zip_map(val(*a), "log", |gv, x| gv / x)?),
            Op::Square(a) => acc(*a, g.zip_map(val(*a), "square", |gv, x| 2.0 * x * gv)?),
            Op::Clip(a, lo, hi) => {
                let (lo, hi) = (*lo, *hi);
                acc(*a, g.zip_map(val(*a), "clip", |gv, x| if x >= lo && x <= hi { gv } else { 0.0 })?)
            }
            Op::Minimum(a, b) | Op::Maximum(a, b) => {
                let is_min = matches!(node.op, Op::Minimum(..));
                let (va, vb) = (val(*a).data(), val(*b).data());
                let to_a = |i: usize| if is_min { va[i] <= vb[i] } else { va[i] >= vb[i] };
                if wants(*a) {
                    let d = g.data().iter().enumerate().map(|(i, &gv)| if to_a(i) { gv } else { 0.0 }).collect();
                    acc(*a, Tensor::new(g.shape().to_vec(), d)?);
                }
                if wants(*b) {
                    let d = g.data().iter().enumerate().map(|(i, &gv)| if to_a(i) { 0.0 } else { gv }).collect();
                    acc(*b, Tensor::new(g.shape().to_vec(), d)?);
                }
            }
            Op::LogSumExp(a) => {
                let x = val(*a);
                let (m, n, _) = kernels::row_layout("log_sum_exp", x)?;
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let lse = out.data()[i];
                    for j in 0..n {
                        d[i * n + j] = g.data()[i] * libm::exp(x.data()[i * n + j] - lse);
                    }
                }
                acc(*a, Tensor::new(x.shape().to_vec(), d)?)
            }
            Op::LogSoftmax(a) => {
                let (m, n, _) = kernels::row_layout("log_softmax", out)?;
                let mut d = vec![0.0; m * n];
                for i in 0..m {
                    let gs: f64 = g.data()[i * n..(i + 1) * n].iter().sum();
                    for j in 0..n {
                        let k = i * n + j;
                        d[k] = g.data()[k] - libm::exp(out.data()[k]) * gs;
                    }
                }
                acc(*a, Tensor::new(out.shape().to_vec(), d)?)
            }
            Op::Gather(a, indices) => {
                let x = val(*a);
                let mut d = Tensor::zeros(x.shape());
                match x.shape() {
                    [_] => {
                        for (k, &i) in indices.iter().enumerate() {
                            d.data_mut()[i] += g.data()[k];
                        }
                    }
                    [_, n] => {
                        let n = *n;
                        for (r, &c) in indices.iter().enumerate() {
                            d.data_mut()[r * n + c] += g.data()[r];
                        }
                    }
                    _ => unreachable!("gather validated on forward"),
                }
                acc(*a, d)
            }
            Op::SumRows(a) => {
                let x = val(*a);
                let (m, n, _) = kernels::row_layout("sum_rows", x)?;
                let d = (0..m * n).map(|k| g.data()[k / n]).collect();
                acc(*a, Tensor::new(x.shape().to_vec(), d)?)
            }
            Op::Sum(a) => acc(*a, Tensor::full(val(*a).shape(), g.item())),
            Op::Mean(a) => {
                let x = val(*a);
                acc(*a, Tensor::full(x.shape(), g.item() / x.len() as f64))
            }
            Op::Reshape(a) => acc(*a, g.clone().reshape(val(*a).shape())?),
            Op::Conv2d(x, w, b) => {
                let (dx, dw, db) = kernels::conv2d_backward(val(*x), val(*w), val(*b), g)?;
                if wants(*x) {
                    acc(*x, dx);
                }
                if wants(*w) {
                    acc(*w, dw);
                }
                if wants(*b) {
                    acc(*b, db);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Tensor>], i: usize, t: Tensor) {
    match &mut grads[i] {
        Some(existing) => {
            for (e, v) in existing.data_mut().iter_mut().zip(t.data()) {
                *e += v;
            }
        }
        slot @ None => *slot = Some(t),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_derivative() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0)).unwrap();
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().item(), 6.0);
    }

    #[test]
    fn lse_gradient_is_softmax() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let y = tape.log_sum_exp(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.5, 0.5]);
    }

    #[test]
    fn relu_subgradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![-1.0, 2.0])).unwrap();
        let y = tape.relu(x).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0]);
    }

    #[test]
    fn clip_passes_through_at_boundary() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![-2.0, -1.0, 0.5, 1.0, 3.0])).unwrap();
        let y = tape.clip(x, -1.0, 1.0).unwrap();
        let s = tape.sum(y).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn clip_rejects_inverted_bounds() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(0.0)).unwrap();
        assert!(tape.clip(x, 1.0, -1.0).is_err());
    }

    #[test]
    fn minimum_ties_go_to_first_operand() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, 2.0, 3.0])).unwrap();
        let b = tape.param(Tensor::vector(vec![1.0, 1.0, 5.0])).unwrap();
        let m = tape.minimum(a, b).unwrap();
        let s = tape.sum(m).unwrap();
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 0.0, 1.0]);
        assert_eq!(g.get(b).unwrap().data(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn unused_param_gets_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0)).unwrap();
        let unused = tape.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
        let y = tape.square(x).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.get(unused).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![1.0, 2.0])).unwrap();
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn cleared_tape_rejects_old_vars() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0)).unwrap();
        let y = tape.square(x).unwrap();
        tape.clear();
        assert_eq!(tape.backward(y).unwrap_err(), Error::StaleTape);
        assert_eq!(tape.square(x).unwrap_err(), Error::StaleTape);
    }

    #[test]
    fn shape_errors_name_the_op() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(&[2])).unwrap();
        let b = tape.param(Tensor::zeros(&[3])).unwrap();
        let err = tape.add(a, b).unwrap_err();
        assert_eq!(err, Error::ShapeMismatch { op: "add", lhs: vec![2], rhs: vec![3] });
    }

    #[test]
    fn non_finite_values_are_caught_in_debug() {
        if !cfg!(debug_assertions) {
            return;
        }
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(-1.0)).unwrap();
        assert!(matches!(tape.log(x), Err(Error::NonFinite { op: "log" })));
    }
}
