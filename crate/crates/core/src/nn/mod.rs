//! Minimal differentiable building blocks for the point network.

mod checkpoint;
mod graph;
mod optim;
mod tensor;

pub use checkpoint::Checkpoint;
pub use graph::{BatchStats, Graph, Mode, Var, BN_EPS};
pub use optim::{adam_step, he_uniform, AdamConfig, Moments, ParamStore};
pub use tensor::{Tensor, MAX_AXES};

use crate::error::Result;

/// Affine map followed by ReLU at every position of a `[..., Cin]` tensor.
pub fn shared_mlp(g: &mut Graph, x: Var, w: Var, b: Var) -> Result<Var> {
    let y = g.linear(x, w, b)?;
    Ok(g.relu(y))
}

/// Running statistics update `r ← momentum · r + (1 − momentum) · batch`.
pub fn update_running(running: &mut [f64], batch: &[f64], momentum: f64) {
    for (r, b) in running.iter_mut().zip(batch) {
        *r = momentum * *r + (1.0 - momentum) * b;
    }
}

pub const BN_MOMENTUM: f64 = 0.9;
