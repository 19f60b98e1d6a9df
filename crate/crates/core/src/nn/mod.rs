//! Minimal deterministic tensor substrate with reverse-mode differentiation.

mod adam;
mod gradcheck;
mod graph;
pub mod layers;
mod params;
mod tensor;
pub mod voxel;

pub use adam::Adam;
pub use gradcheck::{grad_check, grad_check_report, GradCheckReport};
pub use graph::{Graph, TrilinearTap, Var};
pub use layers::{attention, conv1d, edge_conv, knn, layer_norm, linear, mlp2};
pub use params::{Binding, Initializer, ParamStore};
pub use tensor::Tensor;
pub use voxel::{voxel_conv_gather, VoxelGrid};
