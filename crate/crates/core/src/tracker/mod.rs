//! Progressive spatial-temporal tracker: memory of past frames, cascaded
//! transformer stages that vote for the target center, and a 9DoF box head.

mod config;
mod loss;
mod memory;
pub mod model;
mod track;
mod train;

pub use config::{BoxDof, StageSupervision, TrackerConfig};
pub use loss::{loss_total, FrameTarget, LossBreakdown};
pub use memory::{view_from_parts, MemoryEntry, TrackerMemory};
pub use model::{
    backbone, decode_box, forward_search, ftb_forward, head_forward, init_params, region_grid, resample_indices,
    spt_forward, spt_inputs, spt_layer, stage_forward, Encoded, MemoryView, SearchForward, SptInputs, StageOutput,
    TrackOutput, MIN_SIZE,
};
pub use track::{track_sequence, AnnotatedSource, FrameSource, Step, Tracker};
pub use train::{
    apply_batch, sample_tuples, train, tuple_gradients, tuple_loss, BatchRunner, EpochLog, MemoryFrame, SerialRunner,
    TrainOutcome, TrainingTuple, TupleOutcome,
};
