use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::density::{DEFAULT_DISK_RADIUS, DEFAULT_SPARSITY_THRESHOLD};
use crate::error::{Error, Result};
use crate::fusion::AttentionBounds;
use crate::graph::DEFAULT_MIN_EDGE_PIXELS;
use crate::raster::{LabelMapping, PerVessel, UnmappedPolicy};
use crate::tortuosity::{TortuosityParams, DEFAULT_SCALE_FACTORS};

/// How a smoothed tortuosity map becomes an attention map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeatmapNormalization {
    /// Min-max over the nonzero support.
    #[default]
    NonzeroMinMax,
    /// Divide by the 99th percentile and clamp, then nonzero min-max.
    P99,
}

/// Pixels that may carry a sparsity impulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImpulseSupport {
    #[default]
    Mask,
    Skeleton,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Binarize {
    /// Masks holding only two values are used as is; anything else goes
    /// through Otsu.
    #[default]
    Auto,
    Otsu,
    Nonzero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Preprocess {
    pub binarize: Binarize,
    pub remove_small_components: bool,
}

impl Default for Preprocess {
    fn default() -> Self {
        Preprocess {
            binarize: Binarize::Auto,
            remove_small_components: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputLayout {
    /// File name of the projection image inside each eye directory.
    pub projection: String,
    /// File name of the multilabel raster inside each eye directory.
    pub labels: String,
    /// Optional glob patterns, relative to the eye directory, selecting a
    /// per-type mask file that replaces the label raster for that type.
    pub masks: PerVessel<Option<String>>,
    /// Channel to read from multi-channel inputs.
    pub channel: Option<usize>,
}

impl Default for InputLayout {
    fn default() -> Self {
        InputLayout {
            projection: "projection.png".into(),
            labels: "labels.png".into(),
            masks: PerVessel::splat(None),
            channel: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TortuosityConfig {
    pub percentile: f64,
    pub alpha: f64,
    pub beta: f64,
    pub min_edge_pixels: usize,
    pub normalization: HeatmapNormalization,
}

impl Default for TortuosityConfig {
    fn default() -> Self {
        let p = TortuosityParams::default();
        TortuosityConfig {
            percentile: p.percentile,
            alpha: p.alpha,
            beta: p.beta,
            min_edge_pixels: DEFAULT_MIN_EDGE_PIXELS,
            normalization: HeatmapNormalization::default(),
        }
    }
}

impl TortuosityConfig {
    pub fn params(&self) -> TortuosityParams {
        TortuosityParams {
            percentile: self.percentile,
            alpha: self.alpha,
            beta: self.beta,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    #[serde(deserialize_with = "disk_radii")]
    pub disk_radius: PerVessel<usize>,
    pub sparsity_threshold: f64,
    pub impulse_support: ImpulseSupport,
}

impl Default for DensityConfig {
    fn default() -> Self {
        DensityConfig {
            disk_radius: PerVessel::splat(DEFAULT_DISK_RADIUS),
            sparsity_threshold: DEFAULT_SPARSITY_THRESHOLD,
            impulse_support: ImpulseSupport::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    /// Eyes processed concurrently; 0 uses one worker per core.
    pub workers: usize,
    pub scale_factors: Vec<f64>,
    pub min_component_size: usize,
    /// Write a JSON graph dump per eye and vessel type.
    pub dump_graphs: bool,
    pub unmapped_labels: UnmappedPolicy,
    pub layout: InputLayout,
    pub labels: LabelMapping,
    pub tortuosity: TortuosityConfig,
    pub density: DensityConfig,
    pub attention: AttentionBounds,
    #[serde(deserialize_with = "preprocess")]
    pub preprocess: PerVessel<Preprocess>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            input: PathBuf::from("input"),
            output: PathBuf::from("output"),
            workers: 1,
            scale_factors: DEFAULT_SCALE_FACTORS.to_vec(),
            min_component_size: 5,
            dump_graphs: false,
            unmapped_labels: UnmappedPolicy::default(),
            layout: InputLayout::default(),
            labels: LabelMapping::default(),
            tortuosity: TortuosityConfig::default(),
            density: DensityConfig::default(),
            attention: AttentionBounds::default(),
            preprocess: PerVessel {
                artery: Preprocess::default(),
                vein: Preprocess::default(),
                capillary: Preprocess {
                    binarize: Binarize::Auto,
                    remove_small_components: true,
                },
            },
        }
    }
}

/// Per-vessel table where missing types keep their default.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialPerVessel<T> {
    artery: Option<T>,
    vein: Option<T>,
    capillary: Option<T>,
}

impl<T> PartialPerVessel<T> {
    fn or(self, d: PerVessel<T>) -> PerVessel<T> {
        PerVessel {
            artery: self.artery.unwrap_or(d.artery),
            vein: self.vein.unwrap_or(d.vein),
            capillary: self.capillary.unwrap_or(d.capillary),
        }
    }
}

fn disk_radii<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PerVessel<usize>, D::Error> {
    Ok(PartialPerVessel::deserialize(d)?.or(DensityConfig::default().disk_radius))
}

fn preprocess<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PerVessel<Preprocess>, D::Error> {
    Ok(PartialPerVessel::deserialize(d)?.or(PipelineConfig::default().preprocess))
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(msg()))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tortuosity;
        check((0.0..=100.0).contains(&t.percentile), || {
            format!("tortuosity.percentile {} outside [0, 100]", t.percentile)
        })?;
        for (name, v) in [("alpha", t.alpha), ("beta", t.beta)] {
            check(v.is_finite() && v >= 0.0, || format!("tortuosity.{name} must be finite and >= 0"))?;
        }
        check(t.min_edge_pixels >= 2, || "tortuosity.min_edge_pixels must be at least 2".into())?;
        check(!self.scale_factors.is_empty(), || "scale_factors is empty".into())?;
        for (i, &f) in self.scale_factors.iter().enumerate() {
            check(f.is_finite() && f > 0.0, || format!("scale factor {f} must be positive"))?;
            check(!self.scale_factors[..i].contains(&f), || format!("scale factor {f} repeated"))?;
        }
        for (ty, &r) in self.density.disk_radius.iter() {
            check(r >= 1, || format!("density.disk_radius.{ty} must be at least 1"))?;
        }
        let ts = self.density.sparsity_threshold;
        check((0.0..=1.0).contains(&ts), || format!("density.sparsity_threshold {ts} outside [0, 1]"))?;
        check(self.min_component_size >= 1, || "min_component_size must be at least 1".into())?;
        self.attention.validate()?;
        self.labels.validate()
    }

    /// Scale factor as it appears in output file names.
    pub fn factor_label(factor: f64) -> String {
        format!("{factor}")
    }
}
