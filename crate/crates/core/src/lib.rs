//! Task-aware feature embeddings.
//!
//! A meta-learner maps a task description (class attributes, concatenated
//! word embeddings, a one-hot id, or exemplar features) to per-task gains
//! for the fully connected feature layers of a prediction network. The
//! resulting task-aware embedding feeds one task-independent binary
//! classifier, and scores across tasks are calibrated into a multi-class
//! prediction.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod optim;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
