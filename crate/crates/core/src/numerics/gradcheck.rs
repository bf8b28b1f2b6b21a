//! Central finite-difference checks of tape gradients.

use alloc::vec::Vec;

use super::{Tape, Tensor, Var};
use crate::Result;

/// Worst discrepancy between analytic and numeric gradients.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradCheckReport {
    /// Largest relative error over entries whose absolute error is at
    /// least [`ABS_TOL`].
    pub max_rel_err: f64,
    /// Largest absolute error over all entries.
    pub max_abs_err: f64,
    pub entries: usize,
}

/// Absolute error under which an entry passes regardless of scale.
pub const ABS_TOL: f64 = 1e-6;

impl GradCheckReport {
    /// Every entry is within `rel` relative error or [`ABS_TOL`] absolute.
    pub fn passes(&self, rel: f64) -> bool {
        self.max_rel_err < rel
    }
}

/// Compares `d build(inputs) / d inputs` from the tape against central
/// differences with step `h`. `build` must return a scalar.
pub fn check_gradients<F>(inputs: &[Tensor], h: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect::<Result<_>>()?;
    let loss = build(&mut tape, &vars)?;
    let mut grads = tape.backward(loss)?;
    let analytic: Vec<Tensor> = vars.iter().map(|v| grads.take(*v).expect("param gradient")).collect();

    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut t = Tape::new();
        let vs: Vec<Var> = xs.iter().map(|x| t.constant(x.clone())).collect::<Result<_>>()?;
        let l = build(&mut t, &vs)?;
        Ok(t.value(l)?.item())
    };

    let mut report = GradCheckReport::default();
    let mut xs: Vec<Tensor> = inputs.to_vec();
    for i in 0..xs.len() {
        for j in 0..xs[i].len() {
            let orig = xs[i].data()[j];
            xs[i].data_mut()[j] = orig + h;
            let up = eval(&xs)?;
            xs[i].data_mut()[j] = orig - h;
            let down = eval(&xs)?;
            xs[i].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[i].data()[j];
            let abs = (a - numeric).abs();
            report.max_abs_err = report.max_abs_err.max(abs);
            if abs >= ABS_TOL {
                report.max_rel_err = report.max_rel_err.max(abs / a.abs().max(numeric.abs()));
            }
            report.entries += 1;
        }
    }
    Ok(report)
}
