//! Time-adaptive transformer operator with a learned neural Taylor expansion.

pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod rollout;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
