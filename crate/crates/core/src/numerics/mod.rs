//! Deterministic `f64` tensor core: dense matrices, a reverse-mode tape,
//! standard layers, Adam and a finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod params;
pub mod rng;
pub mod tensor;

pub use adam::{adam_update, Adam, AdamConfig};
pub use gradcheck::{check_gradients, check_store_gradients, GradCheckReport};
pub use graph::{Grads, Graph, Var};
pub use layers::{dropout, layer_norm, linear, softmax_rows, DropoutCtx};
pub use params::{ParamGroup, ParamStore, Parameter};
pub use rng::RngState;
pub use tensor::Tensor;
