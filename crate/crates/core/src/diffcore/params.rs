//! Named parameter tensors with paired gradient accumulators and Adam state.

use crate::error::{Error, Result};

use super::tensor::Tensor2;

/// Adam hyperparameters. Defaults follow the usual 0.9 / 0.999 / 1e-8.
#[derive(Debug, Clone, Copy)]
pub struct AdamParams {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamParams {
    pub fn with_lr(lr: f64) -> Self {
        AdamParams {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Slot {
    name: String,
    value: Tensor2,
    grad: Tensor2,
    m: Tensor2,
    v: Tensor2,
}

/// Ordered collection of named parameters. Insertion order is fixed, so
/// iteration (and therefore every update and serialization) is deterministic.
#[derive(Default)]
pub struct ParamStore {
    slots: Vec<Slot>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, value: Tensor2) {
        assert!(
            self.index_of(name).is_none(),
            "duplicate parameter {name}"
        );
        let (r, c) = value.shape();
        self.slots.push(Slot {
            name: name.to_string(),
            grad: Tensor2::zeros(r, c),
            m: Tensor2::zeros(r, c),
            v: Tensor2::zeros(r, c),
            value,
        });
    }

    fn index_of(&self, name: &str) -> Option<usize> {
        self.slots.iter().position(|s| s.name == name)
    }

    pub fn get(&self, name: &str) -> Result<&Tensor2> {
        self.index_of(name)
            .map(|i| &self.slots[i].value)
            .ok_or_else(|| Error::InvalidParameter(format!("no parameter named {name}")))
    }

    pub fn grad(&self, name: &str) -> Result<&Tensor2> {
        self.index_of(name)
            .map(|i| &self.slots[i].grad)
            .ok_or_else(|| Error::InvalidParameter(format!("no parameter named {name}")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.slots.iter().map(|s| s.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn zero_grads(&mut self) {
        for slot in &mut self.slots {
            slot.grad.data_mut().fill(0.0);
        }
    }

    /// Add `delta` into the gradient accumulator of `name`.
    pub fn accumulate_grad(&mut self, name: &str, delta: &Tensor2) -> Result<()> {
        let i = self
            .index_of(name)
            .ok_or_else(|| Error::InvalidParameter(format!("no parameter named {name}")))?;
        let slot = &mut self.slots[i];
        if slot.grad.shape() != delta.shape() {
            return Err(Error::Shape(format!(
                "gradient for {name}: {:?} vs {:?}",
                slot.grad.shape(),
                delta.shape()
            )));
        }
        for (g, d) in slot.grad.data_mut().iter_mut().zip(delta.data().iter()) {
            *g += d;
        }
        Ok(())
    }

    /// Snapshot of all parameter tensors in insertion order.
    pub fn export(&self) -> Vec<(String, Tensor2)> {
        self.slots
            .iter()
            .map(|s| (s.name.clone(), s.value.clone()))
            .collect()
    }

    /// Overwrite parameter values from a snapshot produced by [`export`].
    pub fn import(&mut self, snapshot: &[(String, Tensor2)]) -> Result<()> {
        for (name, value) in snapshot {
            let i = self
                .index_of(name)
                .ok_or_else(|| Error::InvalidParameter(format!("no parameter named {name}")))?;
            if self.slots[i].value.shape() != value.shape() {
                return Err(Error::Shape(format!(
                    "import of {name}: {:?} vs {:?}",
                    self.slots[i].value.shape(),
                    value.shape()
                )));
            }
            self.slots[i].value = value.clone();
        }
        Ok(())
    }
}

/// One Adam update with bias correction, consuming the accumulated gradients.
/// `t` is the 1-based step index; moments persist in the store.
pub fn adam_step(store: &mut ParamStore, hp: &AdamParams, t: u64) -> Result<()> {
    if t < 1 {
        return Err(Error::InvalidParameter("adam step index must be >= 1".into()));
    }
    let t_i = t as i32;
    let bc1 = 1.0 - hp.beta1.powi(t_i);
    let bc2 = 1.0 - hp.beta2.powi(t_i);
    for slot in &mut store.slots {
        for idx in 0..slot.value.len() {
            let g = slot.grad.data()[idx];
            let m = hp.beta1 * slot.m.data()[idx] + (1.0 - hp.beta1) * g;
            let v = hp.beta2 * slot.v.data()[idx] + (1.0 - hp.beta2) * g * g;
            slot.m.data_mut()[idx] = m;
            slot.v.data_mut()[idx] = v;
            let m_hat = m / bc1;
            let v_hat = v / bc2;
            slot.value.data_mut()[idx] -= hp.lr * m_hat / (v_hat.sqrt() + hp.eps);
        }
    }
    store.step = t;
    Ok(())
}
