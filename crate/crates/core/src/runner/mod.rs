//! Configuration, checkpoints, sweeps and reports.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod output;
pub mod sweep;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance};
pub use config::{Decoding, ExperimentConfig, Method};
pub use output::{emit_front_csv, emit_report, front_csv, parse_front_csv, render_report};
pub use sweep::{run_sweep, ArtifactStore, Artifacts, Selection, SweepResult};
