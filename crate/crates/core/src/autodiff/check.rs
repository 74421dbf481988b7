//! Finite-difference checks for graph derivatives.

use alloc::vec::Vec;

use super::{Bindings, Graph, NodeId, VarId};
use crate::{Error, Result};

/// Central differences of the scalar `root` with respect to every coordinate
/// of the variable `var`, around the values currently bound in `bindings`.
pub fn finite_difference(g: &Graph, root: NodeId, var: VarId, bindings: &Bindings, step: f64) -> Result<Vec<f64>> {
    let name = &g.var(var).name;
    let base = bindings.get(var).ok_or_else(|| Error::UnboundVariable(name.clone()))?.to_vec();
    let mut b = bindings.clone();
    let mut x = base.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        x[i] = base[i] + step;
        b.set(var, &x);
        let hi = g.eval_scalar(root, &b)?;
        x[i] = base[i] - step;
        b.set(var, &x);
        let lo = g.eval_scalar(root, &b)?;
        x[i] = base[i];
        out.push((hi - lo) / (2.0 * step));
    }
    Ok(out)
}

/// Builds `∂root/∂var` and evaluates it at `bindings`.
pub fn analytic_gradient(g: &mut Graph, root: NodeId, var: VarId, bindings: &Bindings) -> Result<Vec<f64>> {
    let d = g.grad_var(root, var)?;
    g.eval(d, bindings)
}

/// Largest ratio `|a − b| / max(rel · max(|a|, |b|), abs)` over coordinates.
/// Values at most 1 mean the vectors agree at the given tolerances.
pub fn tolerance_ratio(a: &[f64], b: &[f64], rel: f64, abs: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let scale = (rel * x.abs().max(y.abs())).max(abs);
            if x.is_finite() && y.is_finite() {
                (x - y).abs() / scale
            } else {
                f64::INFINITY
            }
        })
        .fold(0.0, f64::max)
}
