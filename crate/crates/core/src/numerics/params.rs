use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{Grads, Graph};
use super::rng::RngState;
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Optimizer group. Fusion parameters (CGE weights, mixing weights) and the
/// seq2seq backbone train with separate learning rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Backbone,
    Fusion,
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub group: ParamGroup,
}

impl Parameter {
    pub fn new(name: impl Into<String>, value: Tensor, group: ParamGroup) -> Self {
        let grad = Tensor::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            grad,
            group,
        }
    }
}

/// Uniform half-width used for weight initialization.
pub const INIT_RANGE: f64 = 0.08;

/// Named parameters in deterministic (sorted) order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: BTreeMap<String, Parameter>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Parameter) {
        self.params.insert(p.name.clone(), p);
    }

    /// Adds a `rows x cols` parameter drawn uniformly from `[-0.08, 0.08]`.
    pub fn init_uniform(
        &mut self,
        name: &str,
        rows: usize,
        cols: usize,
        group: ParamGroup,
        rng: &mut RngState,
    ) {
        let data = (0..rows * cols)
            .map(|_| rng.uniform(-INIT_RANGE, INIT_RANGE))
            .collect();
        let value = Tensor::from_vec(rows, cols, data).expect("sized init");
        self.insert(Parameter::new(name, value, group));
    }

    pub fn init_const(&mut self, name: &str, rows: usize, cols: usize, v: f64, group: ParamGroup) {
        self.insert(Parameter::new(name, Tensor::filled(rows, cols, v), group));
    }

    pub fn get(&self, name: &str) -> Option<&Parameter> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Parameter> {
        self.params.get_mut(name)
    }

    pub fn value(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name).map(|p| &p.value)
    }

    pub fn set_value(&mut self, name: &str, value: Tensor) -> Result<()> {
        let p = self
            .params
            .get_mut(name)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown parameter {name:?}")))?;
        if p.value.shape() != value.shape() {
            return Err(Error::shape(
                "set_value",
                format!("{name}: {:?} vs {:?}", p.value.shape(), value.shape()),
            ));
        }
        p.value = value;
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.values_mut()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.fill(0.0);
        }
    }

    /// Adds the gradients of every parameter bound in `graph`, scaled by `weight`.
    pub fn accumulate(&mut self, graph: &Graph, grads: &Grads, weight: f64) {
        for (name, var) in graph.bindings() {
            if let (Some(p), Some(g)) = (self.params.get_mut(name), grads.get(var)) {
                for (acc, v) in p.grad.data_mut().iter_mut().zip(g.data()) {
                    *acc += weight * v;
                }
            }
        }
    }
}
