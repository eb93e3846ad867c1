//! Central finite-difference gradient checking in double precision.

use super::{Graph, Tensor, Var};
use crate::error::{Error, Result};

/// Default finite-difference step.
pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// `max |analytic - numeric| / max(1, |analytic|)` over all coordinates.
    pub max_rel_error: f64,
    /// `(input index, flat coordinate)` of the worst coordinate.
    pub worst: (usize, usize),
    pub coordinates: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

fn evaluate<F>(f: &F, inputs: &[Tensor<f64>], track: bool) -> Result<(f64, Vec<Tensor<f64>>)>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone(), track)).collect();
    let out = f(&g, &vars)?;
    let value = {
        let v = g.value(out);
        if v.len() != 1 {
            return Err(Error::Shape(format!("gradient check needs a scalar function, got {}", v.shape())));
        }
        v.item()
    };
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("function value {value}")));
    }
    if !track {
        return Ok((value, Vec::new()));
    }
    let mut grads = g.backward(out)?;
    let grads = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| grads.take_or_zeros(v, t.shape()))
        .collect();
    Ok((value, grads))
}

/// Compares the analytic gradient of `f` with respect to every input against
/// central differences with step `epsilon`.
pub fn grad_check_many<F>(f: F, inputs: &[Tensor<f64>], epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, &[Var]) -> Result<Var>,
{
    let (_, analytic) = evaluate(&f, inputs, true)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: (0, 0),
        coordinates: 0,
    };
    let mut probe: Vec<Tensor<f64>> = inputs.to_vec();
    for (i, grad) in analytic.iter().enumerate() {
        if !grad.all_finite() {
            return Err(Error::NonFinite(format!("analytic gradient of input {i}")));
        }
        for k in 0..grad.len() {
            let orig = probe[i].data()[k];
            probe[i].data_mut()[k] = orig + epsilon;
            let (plus, _) = evaluate(&f, &probe, false)?;
            probe[i].data_mut()[k] = orig - epsilon;
            let (minus, _) = evaluate(&f, &probe, false)?;
            probe[i].data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * epsilon);
            let a = grad.data()[k];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if !err.is_finite() {
                return Err(Error::NonFinite(format!("difference quotient at input {i}[{k}]")));
            }
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = (i, k);
            }
            report.coordinates += 1;
        }
    }
    Ok(report)
}

/// Single-input form of [`grad_check_many`].
pub fn grad_check<F>(f: F, x: &Tensor<f64>, epsilon: f64) -> Result<GradCheckReport>
where
    F: Fn(&Graph<f64>, Var) -> Result<Var>,
{
    grad_check_many(|g, v| f(g, v[0]), std::slice::from_ref(x), epsilon)
}
