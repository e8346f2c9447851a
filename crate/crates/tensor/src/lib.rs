//! Minimal tensor library with reverse-mode automatic differentiation,
//! sized for convolutional recurrent video models on a CPU.

mod error;
pub mod float;
pub mod graph;
pub mod kernels;
pub mod optim;
mod params;
mod tensor;

pub use error::TensorError;
pub use float::Float;
pub use graph::{Gradients, Graph, Var};
pub use optim::{clip_grad_norm, Adam};
pub use params::ParamStore;
pub use tensor::Tensor;

/// Fan-in scaled normal initialisation (He et al.) for a conv kernel `(o, c, kh, kw)`.
pub fn he_init<T: Float, R: rand::Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Tensor<T> {
    let fan_in = (shape[1] * shape[2] * shape[3]).max(1) as f64;
    Tensor::randn(shape.to_vec(), (2.0 / fan_in).sqrt(), rng)
}

/// Fan-in scaled normal initialisation for layers followed by saturating gates.
pub fn lecun_init<T: Float, R: rand::Rng + ?Sized>(shape: [usize; 4], rng: &mut R) -> Tensor<T> {
    let fan_in = (shape[1] * shape[2] * shape[3]).max(1) as f64;
    Tensor::randn(shape.to_vec(), (1.0 / fan_in).sqrt(), rng)
}
