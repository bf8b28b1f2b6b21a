//! Plain tensor kernels shared by the tape and by tape-free inference, so both
//! paths produce bitwise-identical values.

use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch { op, lhs: a.shape().to_vec(), rhs: b.shape().to_vec() }
}

/// `[m, k] x [k, n] -> [m, n]`. Zero entries of the left operand are skipped,
/// which makes one-hot observation batches cheap.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(mismatch("matmul", a, b));
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let (ad, bd) = (a.data(), b.data());
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * n..(p + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// `g [m, n] x b^T` where `b` is `[k, n]`: the left-operand gradient of matmul.
pub fn matmul_nt(g: &Tensor, b: &Tensor) -> Tensor {
    let (m, n) = (g.shape()[0], g.shape()[1]);
    let k = b.shape()[0];
    let (gd, bd) = (g.data(), b.data());
    let mut out = vec![0.0; m * k];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let brow = &bd[p * n..(p + 1) * n];
            out[i * k + p] = grow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    Tensor::new(vec![m, k], out).expect("matmul_nt shape")
}

/// `a^T x g` where `a` is `[m, k]`, `g` is `[m, n]`: the right-operand gradient.
pub fn matmul_tn(a: &Tensor, g: &Tensor) -> Tensor {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = g.shape()[1];
    let (ad, gd) = (a.data(), g.data());
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let grow = &gd[i * n..(i + 1) * n];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, &gv) in orow.iter_mut().zip(grow) {
                *o += av * gv;
            }
        }
    }
    Tensor::new(vec![k, n], out).expect("matmul_tn shape")
}

/// `[m, n] + [n]`, bias broadcast over rows.
pub fn add_row(a: &Tensor, bias: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || bias.ndim() != 1 || a.shape()[1] != bias.shape()[0] {
        return Err(mismatch("add_row", a, bias));
    }
    let n = bias.len();
    let bd = bias.data();
    let mut out = a.clone();
    for (i, v) in out.data_mut().iter_mut().enumerate() {
        *v += bd[i % n];
    }
    Ok(out)
}

pub fn relu(a: &Tensor) -> Tensor {
    a.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// Row layout of a 1-D or 2-D tensor: `(rows, width, output shape)`.
pub(crate) fn row_layout(op: &'static str, a: &Tensor) -> Result<(usize, usize, Vec<usize>)> {
    match a.shape() {
        [n] if *n > 0 => Ok((1, *n, Vec::new())),
        [m, n] if *n > 0 => Ok((*m, *n, vec![*m])),
        s => Err(Error::invalid(op, alloc::format!("expects a non-empty vector or matrix, got {:?}", s))),
    }
}

/// Max-shifted log-sum-exp of one row.
pub fn log_sum_exp_slice(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let s: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
    max + libm::log(s)
}

/// Row-wise log-sum-exp: `[n] -> []`, `[m, n] -> [m]`.
pub fn log_sum_exp(a: &Tensor) -> Result<Tensor> {
    let (m, n, shape) = row_layout("log_sum_exp", a)?;
    let d = a.data();
    let out = (0..m).map(|i| log_sum_exp_slice(&d[i * n..(i + 1) * n])).collect();
    Tensor::new(shape, out)
}

/// Row-wise log-softmax, same shape as the input.
pub fn log_softmax(a: &Tensor) -> Result<Tensor> {
    let (m, n, _) = row_layout("log_softmax", a)?;
    let d = a.data();
    let mut out = Vec::with_capacity(d.len());
    for i in 0..m {
        let row = &d[i * n..(i + 1) * n];
        let lse = log_sum_exp_slice(row);
        out.extend(row.iter().map(|&v| v - lse));
    }
    Tensor::new(a.shape().to_vec(), out)
}

/// Output spatial geometry of a same-padded, stride-1 convolution.
fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<(usize, usize, usize, usize, usize, usize, usize)> {
    if x.ndim() != 4 || w.ndim() != 4 || b.ndim() != 1 {
        return Err(mismatch("conv2d", x, w));
    }
    let (bs, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, ci, kh, kw) = (w.shape()[0], w.shape()[1], w.shape()[2], w.shape()[3]);
    if ci != c || b.shape()[0] != o || kh % 2 == 0 || kw % 2 == 0 {
        return Err(mismatch("conv2d", x, w));
    }
    Ok((bs, c, h, wd, o, kh, kw))
}

/// Same-padded stride-1 2-D convolution:
/// `x [B, C, H, W]`, `w [O, C, kh, kw]`, `b [O]` -> `[B, O, H, W]`.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (bs, c, h, wd, o, kh, kw) = conv_dims(x, w, b)?;
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wdt, bd) = (x.data(), w.data(), b.data());
    let mut out = vec![0.0; bs * o * h * wd];
    for n in 0..bs {
        for oc in 0..o {
            let obase = (n * o + oc) * h * wd;
            for v in &mut out[obase..obase + h * wd] {
                *v = bd[oc];
            }
            for ic in 0..c {
                let xbase = (n * c + ic) * h * wd;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = wdt[((oc * c + ic) * kh + ky) * kw + kx];
                        for y in 0..h {
                            let sy = y as isize + ky as isize - ph as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for xx in 0..wd {
                                let sx = xx as isize + kx as isize - pw as isize;
                                if sx < 0 || sx >= wd as isize {
                                    continue;
                                }
                                let xv = xd[xbase + sy as usize * wd + sx as usize];
                                if xv != 0.0 {
                                    out[obase + y * wd + xx] += wv * xv;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![bs, o, h, wd], out)
}

/// Gradients of [`conv2d`] with respect to input, kernel and bias.
pub fn conv2d_backward(x: &Tensor, w: &Tensor, b: &Tensor, g: &Tensor) -> Result<(Tensor, Tensor, Tensor)> {
    let (bs, c, h, wd, o, kh, kw) = conv_dims(x, w, b)?;
    let (ph, pw) = (kh / 2, kw / 2);
    let (xd, wdt, gd) = (x.data(), w.data(), g.data());
    let mut dx = vec![0.0; xd.len()];
    let mut dw = vec![0.0; wdt.len()];
    let mut db = vec![0.0; o];
    for n in 0..bs {
        for oc in 0..o {
            let gbase = (n * o + oc) * h * wd;
            db[oc] += gd[gbase..gbase + h * wd].iter().sum::<f64>();
            for ic in 0..c {
                let xbase = (n * c + ic) * h * wd;
                for ky in 0..kh {
                    for kx in 0..kw {
                        let widx = ((oc * c + ic) * kh + ky) * kw + kx;
                        let wv = wdt[widx];
                        let mut acc = 0.0;
                        for y in 0..h {
                            let sy = y as isize + ky as isize - ph as isize;
                            if sy < 0 || sy >= h as isize {
                                continue;
                            }
                            for xx in 0..wd {
                                let sx = xx as isize + kx as isize - pw as isize;
                                if sx < 0 || sx >= wd as isize {
                                    continue;
                                }
                                let gv = gd[gbase + y * wd + xx];
                                let xi = xbase + sy as usize * wd + sx as usize;
                                acc += gv * xd[xi];
                                dx[xi] += gv * wv;
                            }
                        }
                        dw[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(x.shape().to_vec(), dx)?,
        Tensor::new(w.shape().to_vec(), dw)?,
        Tensor::new(vec![o], db)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_of_equal_logits_is_log_n() {
        let t = Tensor::vector(vec![0.0; 4]);
        let v = log_sum_exp(&t).unwrap().item();
        assert!((v - libm::log(4.0)).abs() < 1e-12);
    }

    #[test]
    fn lse_survives_large_logits() {
        let t = Tensor::vector(vec![1000.0, 1000.0]);
        let v = log_sum_exp(&t).unwrap().item();
        assert!((v - (1000.0 + libm::log(2.0))).abs() < 1e-9);
    }

    #[test]
    fn matmul_shape_error_names_op() {
        let a = Tensor::zeros(&[2, 3]);
        let b = Tensor::zeros(&[2, 3]);
        match matmul(&a, &b) {
            Err(Error::ShapeMismatch { op, lhs, rhs }) => {
                assert_eq!(op, "matmul");
                assert_eq!(lhs, vec![2, 3]);
                assert_eq!(rhs, vec![2, 3]);
            }
            other => panic!("unexpected {:?}", other),
        }
    }

    #[test]
    fn conv_with_centered_delta_kernel_is_identity() {
        let x = Tensor::new(vec![1, 1, 3, 3], (0..9).map(|v| v as f64).collect()).unwrap();
        let mut w = Tensor::zeros(&[1, 1, 3, 3]);
        w.data_mut()[4] = 1.0;
        let y = conv2d(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.data(), x.data());
    }
}
