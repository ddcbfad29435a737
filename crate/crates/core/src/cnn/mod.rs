//! Desk-scale convolutional network: NHWC tensors, same-padded Conv/Pool,
//! fully-connected layers, softmax cross-entropy and momentum SGD.

pub mod gradcheck;
mod layers;
mod model;
mod scalar;
mod tensor;

pub use layers::{
    relu_backward, relu_forward, same_padding, xavier_uniform, Conv2d, Dense, Layer, Param, Pool2d,
};
pub use model::{softmax, softmax_cross_entropy, Model};
pub use scalar::{matmul, Scalar};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CnnError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("label {label} outside [0, {num_classes})")]
    Label { label: usize, num_classes: usize },
}
