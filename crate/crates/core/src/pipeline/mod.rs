//! Batch driver: discovers eyes, computes every heatmap family and scale,
//! fuses them with the projection, and records a manifest.

pub mod config;
pub mod manifest;
pub mod run;
pub mod stats;

pub use config::{Binarize, HeatmapNormalization, ImpulseSupport, PipelineConfig, Preprocess};
pub use manifest::{EyeRecord, EyeStatus, HeatmapSidecar, FusedSidecar, RunManifest, RunStatus, MANIFEST_FILE};
pub use run::{analyze_eye, discover_eyes, eye_stats, process_eye, run_pipeline};
pub use stats::{emit_stats, STATS_FILE};
