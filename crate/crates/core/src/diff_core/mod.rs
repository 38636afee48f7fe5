//! Differentiable parameter storage, reverse-mode gradients, Adam, and a
//! central-difference oracle used to validate every hand-derived backward
//! pass in the crate.

mod adam;
mod param;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use param::ParamBlock;
pub use tape::{Primitive, Tape, Var};

use crate::error::{Error, Result};
use crate::real::Real;

/// Evaluates `loss` on a fresh tape with every parameter value registered as
/// a leaf, then returns the loss and its gradient per block. Parameters are
/// not modified.
pub fn forward_backward<T, F>(loss: F, params: &[ParamBlock<T>]) -> Result<(T, Vec<Vec<T>>)>
where
    T: Real,
    F: for<'t> Fn(&'t Tape<T>, &[Vec<Var<'t, T>>]) -> Result<Var<'t, T>>,
{
    let tape = Tape::new();
    let vars: Vec<Vec<Var<'_, T>>> = params
        .iter()
        .map(|p| p.values().iter().map(|&v| tape.var(v)).collect())
        .collect();
    let out = loss(&tape, &vars)?;
    if !out.value().is_finite() {
        return Err(Error::Divergence {
            iteration: 0,
            loss: out.value().as_f64(),
        });
    }
    let adj = tape.gradient(out);
    let grads = vars
        .iter()
        .map(|block| block.iter().map(|v| adj[v.index()]).collect())
        .collect();
    Ok((out.value(), grads))
}

/// Central differences `(f(p + eps) - f(p - eps)) / (2 eps)` per coordinate.
pub fn finite_difference_grad<T, F>(
    mut f: F,
    params: &[ParamBlock<T>],
    eps: T,
) -> Result<Vec<Vec<T>>>
where
    T: Real,
    F: FnMut(&[ParamBlock<T>]) -> Result<T>,
{
    if !(eps >= T::lit(1e-7) && eps <= T::lit(1e-3)) {
        return Err(Error::InvalidArgument(format!(
            "finite-difference step {eps} outside [1e-7, 1e-3]"
        )));
    }
    let mut work = params.to_vec();
    let mut grads = Vec::with_capacity(params.len());
    for b in 0..params.len() {
        let mut g = Vec::with_capacity(params[b].len());
        for i in 0..params[b].len() {
            let orig = params[b].values()[i];
            work[b].values_mut()[i] = orig + eps;
            let fp = f(&work)?;
            work[b].values_mut()[i] = orig - eps;
            let fm = f(&work)?;
            work[b].values_mut()[i] = orig;
            g.push((fp - fm) / (eps + eps));
        }
        grads.push(g);
    }
    Ok(grads)
}

/// Finite differences of a tape-built loss, using forward values only.
pub fn finite_difference_grad_tape<T, F>(
    loss: F,
    params: &[ParamBlock<T>],
    eps: T,
) -> Result<Vec<Vec<T>>>
where
    T: Real,
    F: for<'t> Fn(&'t Tape<T>, &[Vec<Var<'t, T>>]) -> Result<Var<'t, T>>,
{
    finite_difference_grad(
        |ps| {
            let tape = Tape::new();
            let vars: Vec<Vec<Var<'_, T>>> = ps
                .iter()
                .map(|p| p.values().iter().map(|&v| tape.var(v)).collect())
                .collect();
            Ok(loss(&tape, &vars)?.value())
        },
        params,
        eps,
    )
}

/// Largest `|a - b| / max(|a|, |b|, floor)` over all entries.
pub fn max_relative_error<T: Real>(a: &[Vec<T>], b: &[Vec<T>], floor: T) -> T {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(T::zero(), T::max)
}
