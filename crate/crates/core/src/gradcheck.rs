//! Central-difference gradient checking against the autodiff tape.

use crate::error::Result;
use crate::graph::{Graph, Var};
use crate::params::ParameterStore;

/// Compare autodiff gradients of a scalar function with central differences
/// over every trainable parameter element.
///
/// Returns `max |autodiff − numeric| / max(1, |numeric|)`. `f` must be
/// deterministic (dropout in infer mode).
pub fn grad_check<F>(f: F, store: &mut ParameterStore, eps: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var>,
{
    store.zero_grads();
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    g.backward(loss, store)?;

    let names: Vec<String> = store.iter().filter(|e| e.trainable).map(|e| e.name.clone()).collect();
    let mut worst: f64 = 0.0;
    for name in names {
        let analytic = store.grad(&name)?.clone();
        for i in 0..analytic.len() {
            let orig = store.value(&name)?.data()[i];
            store.value_mut(&name)?.data_mut()[i] = orig + eps;
            let plus = eval(&f, store)?;
            store.value_mut(&name)?.data_mut()[i] = orig - eps;
            let minus = eval(&f, store)?;
            store.value_mut(&name)?.data_mut()[i] = orig;
            let numeric = (plus - minus) / (2.0 * eps);
            let err = (analytic.data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    store.zero_grads();
    Ok(worst)
}

fn eval<F>(f: &F, store: &ParameterStore) -> Result<f64>
where
    F: Fn(&mut Graph, &ParameterStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let v = f(&mut g, store)?;
    Ok(g.scalar(v))
}
