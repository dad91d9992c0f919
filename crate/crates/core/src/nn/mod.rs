//! Minimal tensor and reverse-mode autodiff engine used by the encoders.

pub mod arch;
pub mod conv;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;

pub use arch::{Architecture, Backbone};
pub use graph::{Activation, Gradients, Graph, Mode, Var};
pub use optim::AdamW;
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;
