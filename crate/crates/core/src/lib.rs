//! Core algorithms for generic 9DoF single object tracking on point clouds.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (an allocator is required). File formats, the CLI and
//! wall-clock concerns live in the `sot3d-lab` companion crate.
//!
//! * [`baselines`]: static and crop-centroid reference trackers.
//! * [`geom`]: oriented boxes, containment, polytope intersection volume,
//!   plain and symmetry-aware 3D IoU, farthest point sampling.
//! * [`metrics`]: AO/SR per sequence and class-balanced mAO/mSR reports.
//! * [`nn`]: a small reverse-mode autodiff tape with the layers the tracker needs.
//! * [`synth`]: deterministic synthetic sequence generation and attribute labels.
//! * [`tracker`]: the progressive spatial-temporal tracker, its loss and training loop.
#![no_std]

extern crate alloc;

pub mod error;
pub mod baselines;
pub mod geom;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod synth;
pub mod tracker;

pub use error::{Error, Result};
pub use geom::{Box9DoF, PointSet, SymmetryAxis, SymmetrySpec};
