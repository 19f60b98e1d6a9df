//! On-disk sequence format, result files, split manifests and checkpoints.
//!
//! A sequence directory holds `meta.json`, `anno.jsonl` (one object per 0-based frame)
//! and `frames/NNNNNN.bin` clouds. Result files are `results/<id>.jsonl`.

mod anno;
mod checkpoint;
mod cloud;
mod meta;
mod results;
mod sequence;
mod split;
mod validate;

pub use anno::{decode_annotations, encode_annotations, parse_box, AbsenceReason, AnnoLine, FrameRecord};
pub use checkpoint::{
    config_hash, decode_checkpoint, encode_checkpoint, read_checkpoint, sha256_hex, write_checkpoint, Checkpoint,
};
pub use cloud::{decode_cloud, encode_cloud, frame_file, read_frame_cloud, write_frame_cloud};
pub use meta::{decode_meta, encode_meta, MetaFile, SequenceMeta};
pub use results::{decode_results, encode_results, read_results, write_results};
pub use sequence::{list_sequences, read_sequence, write_generated, LoadedSequence, Sequence, ANNO_FILE, META_FILE};
pub use split::{decode_split, encode_split, make_split, SplitManifest, SplitOutcome};
pub use validate::{validate_sequence, Violation};
