//! A recurrent recommender whose user state has two parts: a conscious state
//! driven by a GRU over consumed items, and an unconscious state that floats
//! through a gravitational field spanned by the item embeddings between
//! consumptions. A gate blends the two into a decision state, and items are
//! scored by their distance to it.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix it to `f64`, which the gradient checks need.

// `!(x > 0)` is the NaN-rejecting form used in argument checks; kernels index explicitly
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod conscious;
pub mod data;
pub mod decision;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod training;
pub mod unconscious;

pub use error::{FancError, Result};
pub use model::{Dims, FancModel, ModelConfig, ModelParameters, PARAM_NAMES};
pub use numerics::Scalar;

pub type Model = model::FancModel<f64>;
pub type Params = model::ModelParameters<f64>;
pub type Config = model::ModelConfig<f64>;
pub type Sequence = data::BehaviourSequence<f64>;
pub type Split = data::DatasetSplit<f64>;
pub type TrainSettings = training::TrainConfig<f64>;
pub type Field = unconscious::GravityField<f64>;
pub type Array = numerics::RealArray<f64>;
