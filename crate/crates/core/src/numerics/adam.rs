use std::collections::BTreeMap;

use super::params::{ParamGroup, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `value` in place; `t` starts at 1.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    value: &mut Tensor,
    grad: &Tensor,
    m: &mut Tensor,
    v: &mut Tensor,
    lr: f64,
    cfg: AdamConfig,
    t: u64,
) -> Result<()> {
    if t == 0 {
        return Err(Error::InvalidArgument("adam step t must be >= 1".into()));
    }
    let shape = value.shape();
    if grad.shape() != shape || m.shape() != shape || v.shape() != shape {
        return Err(Error::shape(
            "adam",
            format!("value {shape:?}, grad {:?}", grad.shape()),
        ));
    }
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (((w, &g), mi), vi) in value
        .data_mut()
        .iter_mut()
        .zip(grad.data())
        .zip(m.data_mut())
        .zip(v.data_mut())
    {
        *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
        *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
        let m_hat = *mi / c1;
        let v_hat = *vi / c2;
        *w -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over a [`ParamStore`] with a learning rate per parameter group.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    moments: BTreeMap<String, (Tensor, Tensor)>,
}

impl Adam {
    pub fn new(cfg: AdamConfig) -> Self {
        Self {
            cfg,
            t: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, lr: impl Fn(ParamGroup) -> f64) -> Result<()> {
        self.t += 1;
        for p in store.iter_mut() {
            let (rows, cols) = (p.value.rows(), p.value.cols());
            let (m, v) = self
                .moments
                .entry(p.name.clone())
                .or_insert_with(|| (Tensor::zeros(rows, cols), Tensor::zeros(rows, cols)));
            adam_update(&mut p.value, &p.grad, m, v, lr(p.group), self.cfg, self.t)?;
        }
        Ok(())
    }
}
