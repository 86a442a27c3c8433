//! Task-hardness-aware episodic meta-learning.
//!
//! Tasks are sampled from a feature dictionary, adapted with one inner
//! gradient step, scored for hardness from the adapted learner's features,
//! and combined into a meta-update whose per-task weights favour easy tasks
//! early in training and hard tasks later.

pub mod cli;
pub mod episode;
pub mod error;
pub mod hardness;
pub mod learner;
pub mod metatrain;
pub mod rng;
pub mod synth;
pub mod taxonomy;
pub mod toy;

pub use error::{Error, Result};
