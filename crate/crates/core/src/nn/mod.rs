//! Small double-precision neural-network core.
//!
//! Layers are explicit forward/backward pairs rather than a general autodiff
//! graph. Every parameterized layer exposes its tensors in a fixed order
//! through [`Params`]; gradients are returned as `Vec<Tensor>` in the same
//! order, which is what [`Adam`] and the gradient checker consume.

mod activation;
mod adam;
mod checkpoint;
mod conv;
mod dense;
mod gradcheck;
pub mod init;
mod loss;
mod lstm;
mod pool;
mod tensor;

pub use activation::{
    dropout, dropout_mask, relu, relu_backward, sigmoid, softmax, softmax_rows, tanh_backward,
};
pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use conv::{Conv2d, Padding};
pub use dense::Dense;
pub use gradcheck::{grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use loss::{sparse_ce_loss, hinge_loss};
pub use lstm::{CellMode, LstmCache, LstmCell, LstmState, GATES};
pub use pool::{maxpool2_backward, maxpool2_forward};
pub use tensor::{mat_vec, outer_acc, vec_mat, Tensor};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Ordered access to a model's learnable tensors.
pub trait Params {
    fn params(&self) -> Vec<&Tensor>;
    fn params_mut(&mut self) -> Vec<&mut Tensor>;

    fn param_count(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.params().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    fn set_flat_params(&mut self, flat: &[f64]) {
        let mut off = 0;
        for t in self.params_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        assert_eq!(off, flat.len(), "flat parameter vector has wrong length");
    }

    fn all_finite(&self) -> bool {
        self.params().iter().all(|t| t.all_finite())
    }
}

/// Zero tensors shaped like `model`'s parameters.
pub fn zeros_like<P: Params + ?Sized>(model: &P) -> Vec<Tensor> {
    model.params().iter().map(|t| Tensor::zeros(t.shape())).collect()
}

pub fn flatten_grads(grads: &[Tensor]) -> Vec<f64> {
    grads.iter().flat_map(|t| t.data().iter().copied()).collect()
}

pub fn accumulate(into: &mut [Tensor], from: &[Tensor]) {
    for (a, b) in into.iter_mut().zip(from) {
        a.add_assign(b);
    }
}
