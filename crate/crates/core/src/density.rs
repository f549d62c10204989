//! Local vessel density, sparsity, and low-density (dropout) heatmaps.

use crate::error::{Error, Result};
use crate::quantile::percentile;
use crate::raster::{BinaryMask, GrayRaster, VesselType};
use crate::tortuosity::{gaussian_multiscale, Family, HeatmapSet, ImpulseMap};

pub const DEFAULT_DISK_RADIUS: usize = 10;
pub const DEFAULT_SPARSITY_THRESHOLD: f64 = 0.6;
pub const NORMALIZATION_PERCENTILE: f64 = 99.0;

/// Half-width of the discrete disk of radius `r` on row offset `dy`:
/// the largest `k` with `k^2 + dy^2 <= r^2`.
fn half_width(r: usize, dy: usize) -> usize {
    let rem = r * r - dy * dy;
    let mut k = (rem as f64).sqrt() as usize;
    while k * k > rem {
        k -= 1;
    }
    while (k + 1) * (k + 1) <= rem {
        k += 1;
    }
    k
}

/// Number of pixels in the discrete disk `dx^2 + dy^2 <= r^2`.
pub fn disk_size(r: usize) -> usize {
    (0..=r)
        .map(|dy| {
            let row = 2 * half_width(r, dy) + 1;
            if dy == 0 {
                row
            } else {
                2 * row
            }
        })
        .sum()
}

/// Vessel-pixel counts within a disk around every pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub counts: GrayRaster,
    pub radius: usize,
    pub kernel_size: usize,
}

/// Counts foreground pixels within Euclidean distance `r` of each pixel,
/// treating the outside of the raster as background.
pub fn local_density(mask: &BinaryMask, r: usize) -> Result<DensityField> {
    if r < 1 {
        return Err(Error::Config("disk radius must be at least 1".into()));
    }
    let (w, h) = mask.dims();
    // prefix[y][x] = foreground count in row y over columns [0, x)
    let mut prefix = vec![0u32; (w + 1) * h];
    for y in 0..h {
        let row = &mut prefix[y * (w + 1)..(y + 1) * (w + 1)];
        for x in 0..w {
            row[x + 1] = row[x] + u32::from(mask.get(x, y));
        }
    }
    let widths: Vec<usize> = (0..=r).map(|dy| half_width(r, dy)).collect();
    let mut counts = vec![0.0; w * h];
    for y in 0..h {
        let y_lo = y.saturating_sub(r);
        let y_hi = (y + r).min(h.saturating_sub(1));
        for ys in y_lo..=y_hi {
            let hw = widths[ys.abs_diff(y)];
            let row = &prefix[ys * (w + 1)..(ys + 1) * (w + 1)];
            for x in 0..w {
                let lo = x.saturating_sub(hw);
                let hi = (x + hw + 1).min(w);
                counts[y * w + x] += f64::from(row[hi] - row[lo]);
            }
        }
    }
    Ok(DensityField {
        counts: GrayRaster::new(w, h, counts)?,
        radius: r,
        kernel_size: disk_size(r),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityField {
    pub raster: GrayRaster,
    /// The density was zero everywhere; sparsity is 1 everywhere.
    pub degenerate: bool,
}

/// `1 - D / max(D)`; all ones when the density is identically zero.
pub fn sparsity(density: &DensityField) -> SparsityField {
    let max = density.counts.max_value();
    if !(max > 0.0) {
        log::warn!("density is zero everywhere; sparsity is uniformly 1");
        return SparsityField {
            raster: density.counts.map(|_| 1.0),
            degenerate: true,
        };
    }
    SparsityField {
        raster: density.counts.map(|d| 1.0 - d / max),
        degenerate: false,
    }
}

/// Sparsity values on `support` pixels whose sparsity reaches `threshold`.
pub fn sparsity_impulse(support: &BinaryMask, sparsity: &SparsityField, threshold: f64) -> Result<ImpulseMap> {
    if support.dims() != sparsity.raster.dims() {
        return Err(Error::DimensionMismatch {
            expected: sparsity.raster.dims(),
            actual: support.dims(),
        });
    }
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::Config(format!("sparsity threshold {threshold} outside [0, 1]")));
    }
    let (w, h) = support.dims();
    let data = support
        .data()
        .iter()
        .zip(sparsity.raster.data())
        .map(|(&m, &s)| if m && s >= threshold { s } else { 0.0 })
        .collect();
    Ok(ImpulseMap::from_raster(GrayRaster::new(w, h, data)?))
}

pub fn dropout_multiscale(impulse: &ImpulseMap, factors: &[f64], vessel_type: VesselType) -> Result<HeatmapSet> {
    gaussian_multiscale(impulse, factors, vessel_type, Family::Dropout)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentileNormalized {
    pub raster: GrayRaster,
    pub p99: f64,
    pub degenerate: bool,
}

/// Divides by the 99th percentile over all pixels and clamps to `[0, 1]`.
pub fn normalize_p99(map: &GrayRaster) -> PercentileNormalized {
    let p99 = percentile(map.data(), NORMALIZATION_PERCENTILE).unwrap_or(0.0);
    if !(p99 > 0.0) {
        return PercentileNormalized {
            raster: map.map(|_| 0.0),
            p99,
            degenerate: true,
        };
    }
    PercentileNormalized {
        raster: map.map(|v| (v / p99).clamp(0.0, 1.0)),
        p99,
        degenerate: false,
    }
}
