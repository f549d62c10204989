//! Bounded multiplicative attention: heatmap to weights, weights times image.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{GrayRaster, VesselType};
use crate::tortuosity::Family;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttentionBounds {
    pub min: f64,
    pub max: f64,
}

impl Default for AttentionBounds {
    fn default() -> Self {
        AttentionBounds { min: 0.5, max: 1.5 }
    }
}

impl AttentionBounds {
    pub fn validate(&self) -> Result<()> {
        if self.min > 0.0 && self.min <= self.max && self.max.is_finite() {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "attention bounds must satisfy 0 < min <= max, got ({}, {})",
                self.min, self.max
            )))
        }
    }

    #[inline]
    pub fn weight(&self, a: f64) -> f64 {
        self.min + a * (self.max - self.min)
    }
}

/// Maps a `[0, 1]` attention map affinely onto `[bounds.min, bounds.max]`.
pub fn attention_weights(attention: &GrayRaster, bounds: &AttentionBounds) -> Result<GrayRaster> {
    bounds.validate()?;
    if let Some(&bad) = attention.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::AttentionOutOfRange { value: bad });
    }
    Ok(attention.map(|a| bounds.weight(a)))
}

/// Pointwise product. The result is not clamped; values above 1 are
/// clamped only when written to disk.
pub fn fuse(image: &GrayRaster, weights: &GrayRaster) -> Result<GrayRaster> {
    image.check_same_dims(weights)?;
    let data = image
        .data()
        .iter()
        .zip(weights.data())
        .map(|(r, w)| r * w)
        .collect();
    GrayRaster::new(image.width(), image.height(), data)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub eye_id: String,
    pub vessel_type: VesselType,
    pub family: Family,
    /// Scale factor as written in file names, e.g. `0.02`.
    pub factor: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedRaster {
    pub raster: GrayRaster,
    pub provenance: Provenance,
}

/// Bilinear resampling with pixel-center alignment and edge clamping.
pub fn resample_bilinear(raster: &GrayRaster, width: usize, height: usize) -> GrayRaster {
    let (sw, sh) = raster.dims();
    if (sw, sh) == (width, height) {
        return raster.clone();
    }
    let sx = sw as f64 / width as f64;
    let sy = sh as f64 / height as f64;
    GrayRaster::from_fn(width, height, |x, y| {
        let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (sw - 1) as f64);
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (sh - 1) as f64);
        let (x0, y0) = (fx.floor() as usize, fy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
        let (tx, ty) = (fx - x0 as f64, fy - y0 as f64);
        let top = raster.get(x0, y0) * (1.0 - tx) + raster.get(x1, y0) * tx;
        let bottom = raster.get(x0, y1) * (1.0 - tx) + raster.get(x1, y1) * tx;
        top * (1.0 - ty) + bottom * ty
    })
}
