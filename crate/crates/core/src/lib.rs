//! Corpus bias auditing and bias-aware example reweighting.

pub mod corpus;
pub mod error;
pub mod explain;
pub mod model;
pub mod overlap;
pub mod stats;
pub mod synth;
pub mod tendency;
pub mod trainer;
pub mod weights;

pub use corpus::{Dataset, Example, LabelSpace, TokenizerMode, TokenizerSpec};
pub use error::{Error, Result};
