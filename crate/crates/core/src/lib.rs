//! Discrete-event simulation of gradient clock synchronisation with two-way
//! offset measurement, plus a ground-truth oracle for its invariants and
//! skew bounds.
//!
//! The usual entry point is [`scenario::Scenario::from_json`] followed by
//! [`engine::run`].

pub mod clocks;
pub mod engine;
pub mod error;
pub mod gcs;
pub mod metrics;
pub mod scenario;
pub mod topology;
pub mod trace;
pub mod twoway;

pub use error::{Error, Result};
