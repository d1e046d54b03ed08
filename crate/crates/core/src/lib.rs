//! Focus analysis and refocusing for point-cloud classifiers.
//!
//! The crate measures how concentrated a max-pooling classifier's influence
//! is over its input points (the *focus*), and uses it to filter the most
//! influential points before re-classifying. Around that core it provides
//! a synthetic shape benchmark, corruption generators, a small hand-trained
//! classifier, baseline filters and evaluation tooling.

pub mod baselines;
pub mod cli;
pub mod corruptions;
pub mod error;
pub mod evaluation;
pub mod focus;
pub mod geometry;
pub mod influence;
pub mod network;
pub mod refocus;
pub mod rng;

pub use error::{Error, Result};
