//! Topographic representation module (TRM) for convolutional EEG decoders.
//!
//! Raw EEG arrives as a `[channels × time]` matrix. The TRM scatters each time
//! slice onto a scalp grid described by a [`Montage`], convolves the resulting
//! 3-D topographic map with a stack of kernels that shrinks the grid to a
//! single cell, and hands back a tensor of the original `[channels × time]`
//! shape. Any host network that consumes raw EEG can therefore take the TRM
//! as a front end without changing its own structure.
//!
//! The crate is `no_std` (with `alloc`). File formats, wall-clock timing and
//! the command-line interface live in the companion `trm` crate.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
mod real;
mod tensor;

pub mod data;
pub mod fit;
pub mod hostnet;
pub mod metrics;
pub mod montage;
pub mod nn;
pub mod optim;
pub mod split;
pub mod trm;

pub use error::{Error, Result};
pub use montage::{Electrode, Montage, TopographicTensor};
pub use real::{Precision, Real};
pub use tensor::Tensor;

/// Forward-pass behaviour of layers that differ between fitting and scoring.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics in batch norm, dropout active.
    Train,
    /// Running statistics in batch norm, dropout disabled.
    Eval,
}
