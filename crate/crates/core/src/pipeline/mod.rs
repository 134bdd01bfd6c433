//! Data preparation, two-stage training, closed-loop inference and sweeps.

pub mod config;
pub mod corpus;
pub mod gradients;
pub mod infer;
pub mod manifest;
pub mod records;
pub mod segments;
pub mod sweep;
pub mod train;

pub use config::RunConfig;
pub use corpus::{Corpus, PointData};
pub use gradients::gradient_suite;
pub use infer::{random_checkpoint, run_inference};
pub use manifest::Manifest;
pub use records::{load_trajectories, save_trajectories, speed_filter, trajectories_from_world, Trajectory, TrajectoryRecord};
pub use segments::{chronological_split, segment_trajectories, Segment};
pub use sweep::{alpha_sweep, view_ablation};
pub use train::{
    load_stage1, prepare, require_stage1, run_stage1, run_stage2, run_training, CorpusEpisode, Prepared, Stage1Report,
    Stage2Report, TrainingOutcome,
};
