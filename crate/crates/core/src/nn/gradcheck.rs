//! Central finite-difference checks for graph gradients.

use ndarray::Array2;

use super::{Graph, ParamStore, Var};
use crate::error::Result;

/// Gradients with magnitude below this floor are compared in absolute terms.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub checked: usize,
    pub max_relative_error: f64,
}

impl GradCheck {
    fn new() -> Self {
        Self {
            checked: 0,
            max_relative_error: 0.0,
        }
    }

    fn push(&mut self, analytic: f64, numeric: f64) {
        let scale = analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR);
        self.max_relative_error = self
            .max_relative_error
            .max((analytic - numeric).abs() / scale);
        self.checked += 1;
    }
}

fn sample_indices(n: usize, per: usize) -> Vec<usize> {
    if n <= per {
        return (0..n).collect();
    }
    (0..per).map(|k| k * n / per).collect()
}

/// Compares parameter gradients of a scalar built by `f` with central differences,
/// probing up to `per_param` entries of every parameter.
pub fn check_param_gradients<F>(
    store: &ParamStore,
    per_param: usize,
    step: f64,
    f: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph) -> Result<Var>,
{
    let analytic = {
        let mut g = Graph::new(store);
        let out = f(&mut g)?;
        g.backward(out).into_param_grads(store)
    };
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new(s);
        let out = f(&mut g)?;
        Ok(g.scalar(out))
    };
    let mut work = store.clone();
    let mut report = GradCheck::new();
    for (pi, id) in store.ids().enumerate() {
        let n = store.value(id).len();
        for i in sample_indices(n, per_param) {
            let orig = store.value(id).as_slice().expect("standard layout")[i];
            work.value_mut(id).as_slice_mut().expect("standard layout")[i] = orig + step;
            let plus = eval(&work)?;
            work.value_mut(id).as_slice_mut().expect("standard layout")[i] = orig - step;
            let minus = eval(&work)?;
            work.value_mut(id).as_slice_mut().expect("standard layout")[i] = orig;
            let a = analytic[pi].as_slice().expect("standard layout")[i];
            report.push(a, (plus - minus) / (2.0 * step));
        }
    }
    Ok(report)
}

/// Compares the gradient with respect to an input matrix `x` with central differences on every entry.
pub fn check_input_gradient<F>(
    store: &ParamStore,
    x: &Array2<f64>,
    step: f64,
    f: F,
) -> Result<GradCheck>
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    let eval = |x: Array2<f64>| -> Result<(f64, Option<Array2<f64>>)> {
        let mut g = Graph::new(store);
        let v = g.input(x);
        let out = f(&mut g, v)?;
        let grad = g.backward(out).wrt(v).cloned();
        Ok((g.scalar(out), grad))
    };
    let (_, grad) = eval(x.clone())?;
    let grad = grad.unwrap_or_else(|| Array2::zeros(x.dim()));
    let mut report = GradCheck::new();
    for (idx, a) in grad.indexed_iter() {
        let mut xp = x.clone();
        xp[idx] += step;
        let mut xm = x.clone();
        xm[idx] -= step;
        let numeric = (eval(xp)?.0 - eval(xm)?.0) / (2.0 * step);
        report.push(*a, numeric);
    }
    Ok(report)
}
