//! Single-channel EEG sleep staging: a residual CNN with a channel-gated
//! feature pyramid, a Markov-chain sequence corrector, evaluation metrics,
//! EDF ingestion and a synthetic hypnogram generator.

pub mod config;
pub mod edf;
pub mod error;
pub mod metrics;
pub mod msc;
pub mod ndsignal;
pub mod network;
pub mod plot;
pub mod stage;
pub mod store;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
pub use stage::{Stage, NUM_STAGES};
