//! Hebbian convolutional feature learning without backpropagation.
//!
//! The crate is organised around a small dense-tensor kernel layer
//! ([`tensor`]), the local plasticity rules and competition mechanisms
//! ([`hebbian`]), declarative network construction and the two-phase
//! training drivers ([`arch`]), dataset ingestion and whitening
//! ([`data`]), and the supervised linear evaluation head
//! ([`classifier`]).
//!
//! Feature extraction is purely local: each convolutional layer updates
//! its own weights from pre/post-synaptic activity during a single
//! unsupervised epoch, after which the weights are frozen and a linear
//! head is trained on the flattened features.

pub mod arch;
pub mod checkpoint;
pub mod classifier;
pub mod data;
pub mod error;
pub mod hebbian;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{ConvGeometry, Tensor4};
