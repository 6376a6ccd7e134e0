//! Coreference-aware abstractive dialogue summarization.

pub mod coref;
pub mod corpus;
pub mod dialogue;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod model;
pub mod numerics;
pub mod structures;

pub use error::{Error, Result};
