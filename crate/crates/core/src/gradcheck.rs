//! Central finite-difference gradient checking (f64 only).

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error with denominator `max(|a|, |b|, 1e-8)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Worst coordinate-wise [`relative_error`] between two gradients.
pub fn max_relative_error(analytic: &Tensor<f64>, numeric: &Tensor<f64>) -> f64 {
    analytic
        .data()
        .iter()
        .zip(numeric.data())
        .map(|(&a, &b)| relative_error(a, b))
        .fold(0.0, f64::max)
}

fn eval_scalar<G>(f: &G, x: &Tensor<f64>) -> Result<f64>
where
    G: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let out = f(&tape, tape.constant(x.clone()))?;
    let v = out.value();
    v.item()
        .ok_or_else(|| Error::InvalidArgument(format!("gradient check needs a scalar, got {:?}", v.shape())))
}

/// `(f(x+h·e_i) − f(x−h·e_i)) / 2h` for every coordinate `i`.
pub fn numerical_gradient<G>(f: &G, x: &Tensor<f64>, h: f64) -> Result<Tensor<f64>>
where
    G: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let mut probe = x.clone();
    let mut grad = Vec::with_capacity(x.numel());
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = eval_scalar(f, &probe)?;
        probe.data_mut()[i] = orig - h;
        let down = eval_scalar(f, &probe)?;
        probe.data_mut()[i] = orig;
        grad.push((up - down) / (2.0 * h));
    }
    Tensor::new(x.shape().to_vec(), grad)
}

/// Gradient of `f` at `x` from one backward pass.
pub fn analytic_gradient<G>(f: &G, x: &Tensor<f64>) -> Result<Tensor<f64>>
where
    G: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let tape = Tape::new();
    let xv = tape.param(x.clone());
    let out = f(&tape, xv)?;
    tape.backward(out)?;
    Ok(tape.grad(xv).unwrap_or_else(|| Tensor::zeros(x.shape())))
}

/// Worst relative error between backward() and central differences.
pub fn grad_check<G>(f: G, x: &Tensor<f64>, h: f64) -> Result<f64>
where
    G: for<'t> Fn(&'t Tape<f64>, Var<'t, f64>) -> Result<Var<'t, f64>>,
{
    let analytic = analytic_gradient(&f, x)?;
    let numeric = numerical_gradient(&f, x, h)?;
    Ok(max_relative_error(&analytic, &numeric))
}
