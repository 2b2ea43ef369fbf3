//! Numeric primitives: rank-2 tensors, a reverse-mode gradient tape, and the
//! Adam-backed parameter store. Everything trainable in the crate is built on
//! these pieces.

mod params;
mod tape;
mod tensor;

pub use params::{adam_step, AdamParams, ParamStore};
pub use tape::{Tape, VarId};
pub use tensor::{
    add, add_row_broadcast, bce_loss, elu, leaky_relu, matmul, mul, relu, sigmoid, softmax_rows,
    stable_sum, BoolMat, Tensor2, BCE_EPS,
};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::Result;

/// Functional inverted dropout with its own seeded generator.
/// Eval mode (`train = false`) and rate 0 return the input unchanged.
pub fn dropout(x: &Tensor2, rate: f64, seed: u64, train: bool) -> Result<Tensor2> {
    let mut tape = Tape::new();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let a = tape.leaf(x.clone());
    let out = tape.dropout(a, rate, train, &mut rng)?;
    Ok(tape.value(out).clone())
}

/// Bridges a [`ParamStore`] and a [`Tape`]: binds parameters as leaves going
/// in, harvests their gradients coming back.
#[derive(Default)]
pub struct Binder {
    bound: Vec<(String, VarId)>,
}

impl Binder {
    pub fn new() -> Self {
        Binder::default()
    }

    pub fn bind(&mut self, tape: &mut Tape, store: &ParamStore, name: &str) -> Result<VarId> {
        let var = tape.leaf(store.get(name)?.clone());
        self.bound.push((name.to_string(), var));
        Ok(var)
    }

    /// Accumulate every bound leaf's gradient back into the store.
    pub fn harvest(&self, tape: &Tape, store: &mut ParamStore) -> Result<()> {
        for (name, var) in &self.bound {
            store.accumulate_grad(name, tape.grad(*var))?;
        }
        Ok(())
    }
}
