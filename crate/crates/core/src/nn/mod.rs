//! Layers with hand-derived gradients.
//!
//! Each layer exposes a functional forward/backward pair plus a stateful
//! wrapper that caches what its backward pass needs. Gradients are written
//! (not accumulated) by every backward call.

mod activation;
mod batchnorm;
mod conv;
mod dense;
mod gradcheck;
mod init;
mod loss;
mod pool;

pub use activation::{safe_log_backward, safe_log_forward, square_backward, square_forward, Dropout, LOG_FLOOR};
pub use batchnorm::{BatchNorm, BN_EPSILON, BN_MOMENTUM};
pub use conv::{
    conv2d_backward, conv2d_backward_batch_last, conv2d_forward, conv2d_forward_batch_last, Conv2d, Conv2dGrads,
};
pub use dense::{dense_backward, dense_forward, Dense, DenseGrads};
pub use gradcheck::{check_gradients, grad_check, GradCheckReport, GRAD_CHECK_STEP};
pub use init::fan_in_uniform;
pub use loss::softmax_cross_entropy;
pub use pool::{mean_pool_backward, mean_pool_forward, pooled_len};

use alloc::string::String;

use crate::Tensor;

/// Mutable view of one trainable tensor and its gradient.
#[derive(Debug)]
pub struct ParamMut<'a, T> {
    pub name: String,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a mut Tensor<T>,
}

/// Anything that owns trainable tensors and non-trainable state.
pub trait Parameterized<T: crate::Real> {
    /// Trainable tensors in a fixed order.
    fn params_mut(&mut self) -> alloc::vec::Vec<ParamMut<'_, T>>;

    /// Non-trainable state (batch-norm running statistics).
    fn buffers_mut(&mut self) -> alloc::vec::Vec<(String, &mut Tensor<T>)> {
        alloc::vec::Vec::new()
    }

    fn trainable_parameter_count(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.value.len()).sum()
    }
}
