//! Std companion to `sot3d-core`: the on-disk dataset format, recipe-driven synthetic
//! data generation, and the experiment harness behind the `sot3d` CLI.

pub mod dataio;
pub mod error;
pub mod harness;
pub mod recipe;

pub use error::{LabError, Result};
