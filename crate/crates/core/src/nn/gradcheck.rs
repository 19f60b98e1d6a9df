use alloc::vec::Vec;

use super::{Graph, Tensor, Var};
use crate::error::{invalid, Error, Result};

/// Where a gradient check disagreed the most.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub input: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

fn eval<F>(f: &F, inputs: &[Tensor]) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.input(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(invalid!("grad_check needs a scalar function"));
    }
    Ok(g.scalar(out))
}

/// Compares tape gradients with central differences; see [`grad_check`].
pub fn grad_check_report<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(invalid!("finite-difference step must lie in [1e-7, 1e-3], got {eps}"));
    }
    let mut g = Graph::new();
    let vars = inputs.iter().map(|t| g.input(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut g, &vars)?;
    if g.value(out).len() != 1 {
        return Err(invalid!("grad_check needs a scalar function"));
    }
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| alloc::vec![0.0; t.len()]))
        .collect();

    let mut worst = GradCheckReport {
        max_rel_error: 0.0,
        input: 0,
        index: 0,
        analytic: 0.0,
        numeric: 0.0,
    };
    let mut probe: Vec<Tensor> = inputs.to_vec();
    for (ii, t) in inputs.iter().enumerate() {
        for k in 0..t.len() {
            let x0 = t.data()[k];
            probe[ii].data_mut()[k] = x0 + eps;
            let fp = eval(&f, &probe)?;
            probe[ii].data_mut()[k] = x0 - eps;
            let fm = eval(&f, &probe)?;
            probe[ii].data_mut()[k] = x0;
            let numeric = (fp - fm) / (2.0 * eps);
            if !numeric.is_finite() {
                return Err(Error::NonFinite("finite difference".into()));
            }
            let a = analytic[ii][k];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst.max_rel_error {
                worst = GradCheckReport {
                    max_rel_error: rel,
                    input: ii,
                    index: k,
                    analytic: a,
                    numeric,
                };
            }
        }
    }
    Ok(worst)
}

/// Maximum relative error between tape gradients and central finite differences
/// `(f(x + eps) - f(x - eps)) / 2 eps`, with denominator `max(|a|, |b|, 1e-8)`.
pub fn grad_check<F>(f: F, inputs: &[Tensor], eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    grad_check_report(f, inputs, eps).map(|r| r.max_rel_error)
}
