//! Clip records, annotation files, corpus organisation, synthetic data and
//! checkpoints.

pub mod annotations;
pub mod archive;
pub mod checkpoint;
pub mod clip;
pub mod clipset;
pub mod split;
pub mod synth;

pub use annotations::{load_annotations, save_annotations};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, OptimizerState};
pub use clip::{ClipRecord, EventType};
pub use clipset::{build_player_centric_set, PlayerCentricSet};
pub use split::{split_by_game, SplitSpec};
pub use synth::{synth_generate, SynthConfig, SynthCorpus};
