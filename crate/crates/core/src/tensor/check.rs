//! Central finite-difference gradient checking, the oracle every primitive op
//! is verified against.

use crate::error::{Error, Result};

use super::{Tape, Tensor, Value};

fn eval_scalar<F>(f: &F, point: Value) -> Result<f64>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    let tape = Tape::new();
    let x = tape.constant(point);
    f(&tape, &x)?.item()
}

/// Compare the analytic gradient of `f` at `point` against central finite
/// differences, returning the max over coordinates of
/// `|analytic − numeric| / max(1, |analytic|)`.
///
/// `f` must produce a scalar; it is re-evaluated on a fresh tape for every
/// perturbed coordinate, so it has to be a pure function of its input.
pub fn grad_check<F>(f: F, point: &Value, step: f64) -> Result<f64>
where
    F: Fn(&Tape, &Tensor) -> Result<Tensor>,
{
    if step <= 0.0 {
        return Err(Error::parameter("grad_check step must be > 0"));
    }
    let tape = Tape::new();
    let x = tape.var(point.clone());
    let out = f(&tape, &x)?;
    if out.numel() != 1 {
        return Err(Error::contract(format!(
            "grad_check requires a scalar function, got output shape {:?}",
            out.shape()
        )));
    }
    let analytic = out.backward()?.get(&x);

    let mut max_err: f64 = 0.0;
    for i in 0..point.numel() {
        let mut plus = point.clone();
        plus.data_mut()[i] += step;
        let mut minus = point.clone();
        minus.data_mut()[i] -= step;
        let numeric = (eval_scalar(&f, plus)? - eval_scalar(&f, minus)?) / (2.0 * step);
        let a = analytic.data()[i];
        let err = (a - numeric).abs() / a.abs().max(1.0);
        max_err = max_err.max(err);
    }
    Ok(max_err)
}
