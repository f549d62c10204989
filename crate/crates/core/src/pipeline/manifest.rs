use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fusion::AttentionBounds;
use crate::raster::VesselType;
use crate::tortuosity::Family;

use super::config::{HeatmapNormalization, PipelineConfig};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Heatmap,
    HeatmapSidecar,
    Fused,
    FusedSidecar,
    SegmentStats,
    GraphDump,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Relative to the output root, `/`-separated.
    pub path: String,
    pub kind: OutputKind,
}

/// Sidecar written next to every heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapSidecar {
    pub eye_id: String,
    pub vessel_type: VesselType,
    pub family: Family,
    pub factor: f64,
    pub sigma: f64,
    pub max_dim: usize,
    pub impulse_mass: f64,
    /// Attention map had no nonzero pixel.
    pub degenerate: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub percentile: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub beta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub selected_segments: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub excess_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub normalization: Option<HeatmapNormalization>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub disk_radius: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sparsity_threshold: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub p99: Option<f64>,
}

/// Sidecar written next to every fused image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedSidecar {
    pub eye_id: String,
    pub vessel_type: VesselType,
    pub family: Family,
    pub factor: f64,
    pub bounds: AttentionBounds,
    pub heatmap: String,
    pub bit_depth: u8,
    /// Heatmap was resampled to the projection size.
    pub resampled: bool,
    /// Pixels above 1 before saving.
    pub clamped_pixels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EyeStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EyeRecord {
    pub eye_id: String,
    pub status: EyeStatus,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
    pub inputs: Vec<InputRecord>,
    pub outputs: Vec<OutputRecord>,
    pub heatmaps: Vec<HeatmapSidecar>,
    pub warnings: Vec<String>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Success,
    Partial,
    Failed,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Success => 0,
            RunStatus::Partial => 3,
            RunStatus::Failed => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub config: PipelineConfig,
    pub status: RunStatus,
    pub eyes: Vec<EyeRecord>,
    pub elapsed_ms: u64,
}

impl RunManifest {
    pub fn new(config: PipelineConfig, eyes: Vec<EyeRecord>, elapsed_ms: u64) -> Self {
        let failed = eyes.iter().filter(|e| e.status == EyeStatus::Failed).count();
        let status = match failed {
            0 => RunStatus::Success,
            n if n == eyes.len() => RunStatus::Failed,
            _ => RunStatus::Partial,
        };
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            status,
            eyes,
            elapsed_ms,
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.status.exit_code()
    }

    /// Every output path, in manifest order.
    pub fn output_paths(&self) -> impl Iterator<Item = &str> {
        self.eyes.iter().flat_map(|e| e.outputs.iter().map(|o| o.path.as_str()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn eye(status: EyeStatus) -> EyeRecord {
        EyeRecord {
            eye_id: "e".into(),
            status,
            error: None,
            inputs: vec![],
            outputs: vec![],
            heatmaps: vec![],
            warnings: vec![],
            elapsed_ms: 0,
        }
    }

    #[test]
    fn status_and_exit_codes() {
        let c = PipelineConfig::default();
        let ok = RunManifest::new(c.clone(), vec![eye(EyeStatus::Ok), eye(EyeStatus::Ok)], 0);
        assert_eq!(ok.exit_code(), 0);
        let partial = RunManifest::new(c.clone(), vec![eye(EyeStatus::Ok), eye(EyeStatus::Failed)], 0);
        assert_eq!(partial.exit_code(), 3);
        let failed = RunManifest::new(c, vec![eye(EyeStatus::Failed)], 0);
        assert_eq!(failed.exit_code(), 4);
    }

    #[test]
    fn sha256_of_known_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("abc");
        std::fs::write(&p, b"abc").unwrap();
        assert_eq!(
            sha256_file(&p).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn manifest_json_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let m = RunManifest::new(PipelineConfig::default(), vec![eye(EyeStatus::Ok)], 12);
        m.write(&p).unwrap();
        assert_eq!(RunManifest::read(&p).unwrap(), m);
    }
}
