//! Raster containers shared by every stage of the pipeline.
//!
//! [`GrayRaster`] is a row-major `f64` field. Rasters loaded from disk keep
//! their raw integer intensities together with the declared bit depth; every
//! derived field (normalized images, densities, heatmaps) carries no bit depth.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VesselType {
    Artery,
    Vein,
    Capillary,
}

impl VesselType {
    pub const ALL: [VesselType; 3] = [VesselType::Artery, VesselType::Vein, VesselType::Capillary];

    pub fn as_str(self) -> &'static str {
        match self {
            VesselType::Artery => "artery",
            VesselType::Vein => "vein",
            VesselType::Capillary => "capillary",
        }
    }
}

impl fmt::Display for VesselType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VesselType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "artery" => Ok(VesselType::Artery),
            "vein" => Ok(VesselType::Vein),
            "capillary" => Ok(VesselType::Capillary),
            other => Err(Error::Config(format!("unknown vessel type `{other}`"))),
        }
    }
}

/// One value per vessel type.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerVessel<T> {
    pub artery: T,
    pub vein: T,
    pub capillary: T,
}

impl<T> PerVessel<T> {
    pub fn splat(value: T) -> Self
    where
        T: Clone,
    {
        PerVessel {
            artery: value.clone(),
            vein: value.clone(),
            capillary: value,
        }
    }

    pub fn from_fn(mut f: impl FnMut(VesselType) -> T) -> Self {
        PerVessel {
            artery: f(VesselType::Artery),
            vein: f(VesselType::Vein),
            capillary: f(VesselType::Capillary),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (VesselType, &T)> {
        VesselType::ALL.into_iter().map(move |t| (t, &self[t]))
    }
}

impl<T> Index<VesselType> for PerVessel<T> {
    type Output = T;

    fn index(&self, t: VesselType) -> &T {
        match t {
            VesselType::Artery => &self.artery,
            VesselType::Vein => &self.vein,
            VesselType::Capillary => &self.capillary,
        }
    }
}

impl<T> IndexMut<VesselType> for PerVessel<T> {
    fn index_mut(&mut self, t: VesselType) -> &mut T {
        match t {
            VesselType::Artery => &mut self.artery,
            VesselType::Vein => &mut self.vein,
            VesselType::Capillary => &mut self.capillary,
        }
    }
}

/// Row-major scalar raster.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayRaster {
    width: usize,
    height: usize,
    data: Vec<f64>,
    bit_depth: Option<u8>,
}

impl GrayRaster {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(GrayRaster {
            width,
            height,
            data,
            bit_depth: None,
        })
    }

    /// Raw intensities as stored in an 8- or 16-bit container.
    pub fn with_bit_depth(width: usize, height: usize, data: Vec<f64>, bit_depth: u8) -> Result<Self> {
        if bit_depth != 8 && bit_depth != 16 {
            return Err(Error::BitDepth(bit_depth));
        }
        let mut raster = GrayRaster::new(width, height, data)?;
        raster.bit_depth = Some(bit_depth);
        Ok(raster)
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        GrayRaster {
            width,
            height,
            data: vec![0.0; width * height],
            bit_depth: None,
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        GrayRaster {
            width,
            height,
            data,
            bit_depth: None,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// `Some(8 | 16)` for raw loaded intensities, `None` for derived fields.
    pub fn bit_depth(&self) -> Option<u8> {
        self.bit_depth
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayRaster {
        GrayRaster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
            bit_depth: None,
        }
    }

    /// Declared value range: `[0, 2^bits - 1]` for raw rasters, otherwise
    /// `[0, 1]` unless the data escapes it.
    pub fn declared_range(&self) -> (f64, f64) {
        match self.bit_depth {
            Some(bits) => (0.0, max_for_depth(bits)),
            None => {
                let lo = self.min_value().min(0.0);
                let hi = self.max_value().max(1.0);
                (lo, hi)
            }
        }
    }

    /// Divides raw intensities by the maximum of the declared bit depth.
    /// Derived fields are returned unchanged.
    pub fn normalize(&self) -> GrayRaster {
        match self.bit_depth {
            Some(bits) => {
                let max = max_for_depth(bits);
                self.map(|v| v / max)
            }
            None => self.clone(),
        }
    }

    pub(crate) fn check_same_dims(&self, other: &GrayRaster) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                actual: other.dims(),
            });
        }
        Ok(())
    }
}

pub(crate) fn max_for_depth(bits: u8) -> f64 {
    ((1u32 << bits) - 1) as f64
}

/// Integer label raster as found in multilabel segmentation files.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl LabelRaster {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(LabelRaster { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }
}

/// Binary foreground/background mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: (width, height),
                actual: (data.len(), 1),
            });
        }
        Ok(BinaryMask { width, height, data })
    }

    pub fn empty(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        BinaryMask { width, height, data }
    }

    /// Foreground wherever the raster is nonzero.
    pub fn from_nonzero(raster: &GrayRaster) -> Self {
        BinaryMask {
            width: raster.width(),
            height: raster.height(),
            data: raster.data().iter().map(|&v| v != 0.0).collect(),
        }
    }

    /// Foreground wherever `v > threshold`.
    pub fn from_threshold(raster: &GrayRaster, threshold: f64) -> Self {
        BinaryMask {
            width: raster.width(),
            height: raster.height(),
            data: raster.data().iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Bounds-checked lookup with signed coordinates; outside is background.
    #[inline]
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as usize) < self.width
            && (y as usize) < self.height
            && self.data[y as usize * self.width + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v).count()
    }

    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.data.iter().zip(&other.data).all(|(&a, &b)| !a || b)
    }

    /// Foreground coordinates in row-major order.
    pub fn foreground(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.width;
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(move |(i, _)| (i % w, i / w))
    }

    pub fn to_gray(&self) -> GrayRaster {
        GrayRaster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect(),
            bit_depth: None,
        }
    }

    /// True when the raster holds only two distinct values, one of them zero
    /// (or a single value), i.e. it is already a binary mask.
    pub fn is_binary_raster(raster: &GrayRaster) -> bool {
        let mut nonzero: Option<f64> = None;
        for &v in raster.data() {
            if v == 0.0 {
                continue;
            }
            match nonzero {
                None => nonzero = Some(v),
                Some(n) if n == v => {}
                Some(_) => return false,
            }
        }
        true
    }
}

/// Label values assigned to each vessel type, plus values that are accepted
/// but routed nowhere (for example a FAZ label).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelMapping {
    pub artery: BTreeSet<u16>,
    pub vein: BTreeSet<u16>,
    pub capillary: BTreeSet<u16>,
    #[serde(default)]
    pub ignored: BTreeSet<u16>,
}

impl Default for LabelMapping {
    /// Placeholder encoding (1 artery, 2 vein, 3 capillary, 4 ignored). The
    /// real values are dataset specific and must be set in the configuration.
    fn default() -> Self {
        LabelMapping {
            artery: [1].into(),
            vein: [2].into(),
            capillary: [3].into(),
            ignored: [4].into(),
        }
    }
}

impl LabelMapping {
    pub fn set(&self, t: VesselType) -> &BTreeSet<u16> {
        match t {
            VesselType::Artery => &self.artery,
            VesselType::Vein => &self.vein,
            VesselType::Capillary => &self.capillary,
        }
    }

    /// Rejects any label value claimed by more than one set.
    pub fn validate(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for set in [&self.artery, &self.vein, &self.capillary, &self.ignored] {
            for &v in set {
                if v == 0 || !seen.insert(v) {
                    return Err(Error::OverlappingLabels(v));
                }
            }
        }
        Ok(())
    }

    fn is_known(&self, v: u16) -> bool {
        v == 0
            || self.artery.contains(&v)
            || self.vein.contains(&v)
            || self.capillary.contains(&v)
            || self.ignored.contains(&v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnmappedPolicy {
    #[default]
    Error,
    Warn,
}

#[derive(Debug, Clone)]
pub struct SplitLabels {
    pub masks: PerVessel<GrayRaster>,
    /// Label values present in the raster but absent from the mapping.
    /// Only populated under [`UnmappedPolicy::Warn`].
    pub unmapped: BTreeSet<u16>,
}

/// Splits a multilabel raster into one 0/1 raster per vessel type.
pub fn split_labels(labels: &LabelRaster, mapping: &LabelMapping, policy: UnmappedPolicy) -> Result<SplitLabels> {
    mapping.validate()?;
    let mut unmapped = BTreeSet::new();
    for &v in labels.data() {
        if !mapping.is_known(v) {
            match policy {
                UnmappedPolicy::Error => return Err(Error::UnmappedLabel(v)),
                UnmappedPolicy::Warn => {
                    unmapped.insert(v);
                }
            }
        }
    }
    let masks = PerVessel::from_fn(|t| {
        let set = mapping.set(t);
        GrayRaster {
            width: labels.width,
            height: labels.height,
            data: labels
                .data
                .iter()
                .map(|v| if set.contains(v) { 1.0 } else { 0.0 })
                .collect(),
            bit_depth: None,
        }
    });
    Ok(SplitLabels { masks, unmapped })
}
