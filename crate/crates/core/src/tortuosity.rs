//! High-tortuosity segment selection, weighted impulse maps, and the
//! multi-scale Gaussian heatmaps shared with the dropout family.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::gaussian::{gaussian_blur, sigma_for};
use crate::graph::{Pixel, SegmentStats, VesselGraph};
use crate::quantile::percentile;
use crate::raster::{GrayRaster, VesselType};

pub const DEFAULT_SCALE_FACTORS: [f64; 4] = [0.02, 0.04, 0.06, 0.08];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Tortuosity,
    Dropout,
}

impl Family {
    pub const ALL: [Family; 2] = [Family::Tortuosity, Family::Dropout];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::Tortuosity => "tortuosity",
            Family::Dropout => "dropout",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TortuosityParams {
    pub percentile: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Default for TortuosityParams {
    fn default() -> Self {
        TortuosityParams {
            percentile: 85.0,
            alpha: 1.0,
            beta: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Indices into the stats slice, ascending.
    pub indices: Vec<usize>,
    /// Percentile of the excess-tortuosity distribution; `None` when no
    /// segment was eligible.
    pub threshold: Option<f64>,
}

/// Segments whose excess tortuosity lies strictly above the given
/// percentile of the eligible distribution.
pub fn select_high_tortuosity(stats: &[SegmentStats], pct: f64) -> Selection {
    let values: Vec<f64> = stats
        .iter()
        .filter(|s| s.eligible)
        .filter_map(|s| s.excess)
        .collect();
    let Some(threshold) = percentile(&values, pct) else {
        log::warn!("no eligible segments; tortuosity selection is empty");
        return Selection {
            indices: Vec::new(),
            threshold: None,
        };
    };
    let indices = stats
        .iter()
        .enumerate()
        .filter(|(_, s)| s.eligible && s.excess.is_some_and(|e| e > threshold))
        .map(|(i, _)| i)
        .collect();
    Selection {
        indices,
        threshold: Some(threshold),
    }
}

/// `pixel_count^alpha * excess^beta`.
pub fn segment_weight(pixel_count: usize, excess: f64, alpha: f64, beta: f64) -> f64 {
    (pixel_count as f64).powf(alpha) * excess.max(0.0).powf(beta)
}

/// Raster that is zero except on selected vessel pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseMap {
    raster: GrayRaster,
}

impl ImpulseMap {
    pub fn from_raster(raster: GrayRaster) -> Self {
        ImpulseMap { raster }
    }

    pub fn raster(&self) -> &GrayRaster {
        &self.raster
    }

    pub fn into_raster(self) -> GrayRaster {
        self.raster
    }

    pub fn total_mass(&self) -> f64 {
        self.raster.sum()
    }
}

/// Spreads each segment's weight uniformly over its pixels; overlapping
/// pixels accumulate.
pub fn build_impulse_map<'a>(
    segments: impl IntoIterator<Item = (&'a [Pixel], f64)>,
    width: usize,
    height: usize,
) -> ImpulseMap {
    let mut raster = GrayRaster::zeros(width, height);
    for (pixels, weight) in segments {
        if pixels.is_empty() {
            continue;
        }
        let share = weight / pixels.len() as f64;
        for &(x, y) in pixels {
            let v = raster.get(x, y);
            raster.set(x, y, v + share);
        }
    }
    ImpulseMap { raster }
}

/// Selects, weights and rasterizes the tortuous segments of `graph`.
/// Updates `selected` and `weight` in `stats` (unselected segments get
/// weight 0).
pub fn tortuosity_impulse(
    graph: &VesselGraph,
    stats: &mut [SegmentStats],
    params: &TortuosityParams,
) -> (ImpulseMap, Selection) {
    let selection = select_high_tortuosity(stats, params.percentile);
    for s in stats.iter_mut() {
        s.selected = false;
        s.weight = 0.0;
    }
    for &i in &selection.indices {
        let s = &mut stats[i];
        s.selected = true;
        s.weight = segment_weight(s.pixel_count, s.excess.unwrap_or(0.0), params.alpha, params.beta);
    }
    let impulse = build_impulse_map(
        selection
            .indices
            .iter()
            .map(|&i| (graph.edges[i].pixels.as_slice(), stats[i].weight)),
        graph.width,
        graph.height,
    );
    (impulse, selection)
}

/// Smoothed maps at several scales for one vessel type and family.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapSet {
    pub vessel_type: VesselType,
    pub family: Family,
    pub scale_factors: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub maps: Vec<GrayRaster>,
}

/// Blurs the impulse map once per scale factor with
/// `sigma = factor * max(width, height)`.
pub fn gaussian_multiscale(
    impulse: &ImpulseMap,
    factors: &[f64],
    vessel_type: VesselType,
    family: Family,
) -> Result<HeatmapSet> {
    let (w, h) = impulse.raster.dims();
    let sigmas: Vec<f64> = factors.iter().map(|&f| sigma_for(f, w, h)).collect();
    let maps = sigmas
        .iter()
        .map(|&s| gaussian_blur(&impulse.raster, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(HeatmapSet {
        vessel_type,
        family,
        scale_factors: factors.to_vec(),
        sigmas,
        maps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub raster: GrayRaster,
    /// The input was all zero (or otherwise had nothing to scale).
    pub degenerate: bool,
}

/// Min-max scaling over the nonzero support; zeros stay zero. A constant
/// nonzero support maps to 1.
pub fn normalize_attention(map: &GrayRaster) -> Normalized {
    let (lo, hi) = map
        .data()
        .iter()
        .filter(|&&v| v != 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return Normalized {
            raster: map.clone(),
            degenerate: true,
        };
    }
    let span = hi - lo;
    let raster = map.map(|v| {
        if v == 0.0 {
            0.0
        } else if span > 0.0 {
            (v - lo) / span
        } else {
            1.0
        }
    });
    Normalized {
        raster,
        degenerate: false,
    }
}
