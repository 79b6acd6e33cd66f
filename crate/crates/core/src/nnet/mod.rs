//! Dense tanh networks over flat parameter vectors with hand-written
//! reverse-mode gradients.

mod adam;
pub(crate) mod layers;
mod mlp;
mod shape;

pub use adam::{adam_step, Adam, DEFAULT_LR};
pub(crate) use mlp::dropout_mask;
pub use mlp::{
    backward, forward, forward_batch, grad, init_params, init_with, loss_and_grad, nll_loss,
    predict, Batch, Mode, ParamVector, Tape,
};
pub use shape::{param_count, LayerSlots, MatrixSlot, NetShape};
