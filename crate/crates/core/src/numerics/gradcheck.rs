//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const FD_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Denominator floor of the relative error; keeps near-zero gradients from
/// turning round-off into large ratios.
pub const REL_FLOOR: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(tensor index, element index)` of the worst entry.
    pub worst: Option<(usize, usize)>,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

pub fn compare(analytic: &[Tensor], numeric: &[Tensor], tolerance: f64) -> Result<GradCheckReport> {
    if analytic.len() != numeric.len() {
        return Err(Error::shape("gradcheck", "gradient count mismatch"));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance,
        passed: true,
    };
    for (ti, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        if a.shape() != n.shape() {
            return Err(Error::shape("gradcheck", format!("tensor {ti}")));
        }
        for (ei, (&av, &nv)) in a.data().iter().zip(n.data()).enumerate() {
            if !av.is_finite() || !nv.is_finite() {
                return Err(Error::NonFinite(format!("gradient entry {ti}/{ei}")));
            }
            let err = relative_error(av, nv);
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((ti, ei));
            }
            report.checked += 1;
        }
    }
    report.passed = report.max_rel_error < tolerance;
    Ok(report)
}

fn scalar_output(g: &Graph, out: Var) -> Result<f64> {
    let v = g.value(out);
    if v.shape() != [1, 1] {
        return Err(Error::shape("gradcheck", "model output must be 1x1"));
    }
    let x = v.item();
    if !x.is_finite() {
        return Err(Error::NonFinite("model output".into()));
    }
    Ok(x)
}

/// Analytic gradients of `f` with respect to each input tensor (bound as
/// trainable leaves in order).
pub fn analytic_gradients<F>(f: &mut F, inputs: &[Tensor]) -> Result<Vec<Tensor>>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    scalar_output(&g, out)?;
    let grads = g.backward(out)?;
    Ok(vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| {
            grads
                .get(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.rows(), t.cols()))
        })
        .collect())
}

pub fn numeric_gradients<F>(f: &mut F, inputs: &[Tensor], h: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        scalar_output(&g, out)
    };
    let mut work = inputs.to_vec();
    let mut out = Vec::with_capacity(inputs.len());
    for ti in 0..inputs.len() {
        let mut grad = Tensor::zeros(inputs[ti].rows(), inputs[ti].cols());
        for ei in 0..inputs[ti].len() {
            let orig = inputs[ti].data()[ei];
            work[ti].data_mut()[ei] = orig + h;
            let plus = eval(&work)?;
            work[ti].data_mut()[ei] = orig - h;
            let minus = eval(&work)?;
            work[ti].data_mut()[ei] = orig;
            grad.data_mut()[ei] = (plus - minus) / (2.0 * h);
        }
        out.push(grad);
    }
    Ok(out)
}

/// Compares analytic and central-difference gradients of the scalar
/// function `f` at `inputs`. Dropout must be disabled inside `f`.
pub fn check_gradients<F>(mut f: F, inputs: &[Tensor], tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &[Var]) -> Result<Var>,
{
    let analytic = analytic_gradients(&mut f, inputs)?;
    let numeric = numeric_gradients(&mut f, inputs, FD_STEP)?;
    compare(&analytic, &numeric, tolerance)
}

/// Same check over every parameter of a store, for model-level closures
/// that bind parameters by name through [`Graph::param`].
pub fn check_store_gradients<F>(
    store: &mut ParamStore,
    mut f: F,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph, &ParamStore) -> Result<Var>,
{
    let names: Vec<String> = store.names().map(str::to_string).collect();

    let mut g = Graph::new();
    let out = f(&mut g, store)?;
    scalar_output(&g, out)?;
    let grads = g.backward(out)?;
    store.zero_grads();
    store.accumulate(&g, &grads, 1.0);
    let analytic: Vec<Tensor> = names
        .iter()
        .map(|n| store.get(n).expect("listed").grad.clone())
        .collect();

    let mut numeric = Vec::with_capacity(names.len());
    for name in &names {
        let len = store.value(name).expect("listed").len();
        let mut grad = store.value(name).expect("listed").clone();
        for ei in 0..len {
            let orig = store.value(name).expect("listed").data()[ei];
            let mut eval = |store: &mut ParamStore, x: f64| -> Result<f64> {
                store.get_mut(name).expect("listed").value.data_mut()[ei] = x;
                let mut g = Graph::new();
                let out = f(&mut g, store)?;
                scalar_output(&g, out)
            };
            let plus = eval(store, orig + FD_STEP)?;
            let minus = eval(store, orig - FD_STEP)?;
            store.get_mut(name).expect("listed").value.data_mut()[ei] = orig;
            grad.data_mut()[ei] = (plus - minus) / (2.0 * FD_STEP);
        }
        numeric.push(grad);
    }
    compare(&analytic, &numeric, tolerance)
}
