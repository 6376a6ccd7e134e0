//! Toy sequence-to-sequence summarizer: configuration, transformer,
//! decoding, training and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod decode;
pub mod train;
pub mod transformer;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::{apply_config_text, render_config, ModelConfig, TrainingConfig, Variant};
pub use decode::{decode_greedy, summarize, ModelStepper, StepLogits};
pub use train::{train, EpochRecord, PreparedExample, TrainOutcome, Trainer};
pub use transformer::{CorefInputs, Encoded, Summarizer};

#[cfg(test)]
mod tests;
