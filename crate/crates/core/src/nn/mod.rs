//! Dense math, autodiff and the decoder backbone.

pub mod checkpoint;
pub mod graph;
pub mod mat;
pub mod model;
pub mod params;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, ParamGrads, Var};
pub use mat::Mat;
pub use model::{last_hidden, lm_nll, BackboneConfig, Bound, ForwardOutput, Model, ModelConfig};
pub use params::{Group, ParamStore, Trainable};
