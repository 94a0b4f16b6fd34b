//! Scene-aware full-body reaching motion synthesis.
//!
//! The pipeline initializes a naive motion from a start pose and a wrist
//! goal, encodes the surrounding scene per frame, and refines the sequence
//! with a transformer. Evaluation metrics, capture post-processing tools and
//! a procedural synthetic corpus round out the toolkit.

pub mod capture;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod encoding;
pub mod init;
pub mod io;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod refiner;
pub mod scene;
pub mod spatial;

pub use error::{Error, Result};
pub use exec::Execution;
