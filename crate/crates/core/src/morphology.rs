//! Binarization, small-component filtering and thinning of vessel masks.
//!
//! All neighborhoods are 8-connected. Thinning removes simple points only
//! (Yokoi 8-connectivity number equal to 1) and never removes a pixel with
//! fewer than two foreground neighbors, so the number of 8-connected
//! components is preserved.

use std::collections::VecDeque;

use crate::raster::{BinaryMask, GrayRaster};

/// Histogram resolution used for Otsu thresholding.
pub const OTSU_BINS: usize = 256;

/// 8-neighborhood offsets, clockwise from east (y grows downward).
pub const NEIGHBORS_8: [(i64, i64); 8] = [
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
];

/// A mask whose foreground is a 1-pixel-wide thinned structure.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Skeleton(BinaryMask);

impl Skeleton {
    /// Wraps a mask that is already thin. No thinning is performed.
    pub fn from_thin_mask(mask: BinaryMask) -> Self {
        Skeleton(mask)
    }

    pub fn mask(&self) -> &BinaryMask {
        &self.0
    }

    pub fn into_mask(self) -> BinaryMask {
        self.0
    }

    /// Number of foreground 8-neighbors of `(x, y)`.
    pub fn degree(&self, x: usize, y: usize) -> usize {
        neighbor_count(&self.0, x, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OtsuThreshold {
    /// Binarize with `v > value`.
    pub value: f64,
    /// No split of the histogram separates two nonempty classes.
    pub degenerate: bool,
}

#[inline]
pub(crate) fn histogram_bin(v: f64, lo: f64, hi: f64) -> usize {
    if hi <= lo {
        return 0;
    }
    let b = ((v - lo) / (hi - lo) * OTSU_BINS as f64).floor();
    (b.max(0.0) as usize).min(OTSU_BINS - 1)
}

/// 256-bin histogram over the raster's declared range.
pub fn histogram(raster: &GrayRaster) -> [u64; OTSU_BINS] {
    let (lo, hi) = raster.declared_range();
    let mut hist = [0u64; OTSU_BINS];
    for &v in raster.data() {
        hist[histogram_bin(v, lo, hi)] += 1;
    }
    hist
}

/// Otsu's threshold: the histogram split maximizing between-class variance.
///
/// The returned value is the largest intensity falling in the lower class,
/// so `v > value` reproduces the split exactly. For rasters where no split
/// exists (a constant raster, or all mass in one bin) the maximum intensity
/// is returned with `degenerate = true`, which yields an empty mask.
pub fn otsu_threshold(raster: &GrayRaster) -> OtsuThreshold {
    let hist = histogram(raster);
    let total: u64 = hist.iter().sum();
    let weighted_total: u64 = hist.iter().enumerate().map(|(i, &h)| i as u64 * h).sum();

    let mut best: Option<(usize, f64)> = None;
    let (mut n0, mut s0) = (0u64, 0u64);
    for (t, &h) in hist.iter().enumerate() {
        n0 += h;
        s0 += t as u64 * h;
        if n0 == 0 {
            continue;
        }
        let n1 = total - n0;
        if n1 == 0 {
            break;
        }
        let mu0 = s0 as f64 / n0 as f64;
        let mu1 = (weighted_total - s0) as f64 / n1 as f64;
        let between = n0 as f64 * n1 as f64 * (mu0 - mu1) * (mu0 - mu1);
        if best.is_none_or(|(_, b)| between > b) {
            best = Some((t, between));
        }
    }

    let max = raster.max_value();
    match best {
        Some((t, _)) => {
            let (lo, hi) = raster.declared_range();
            let value = raster
                .data()
                .iter()
                .copied()
                .filter(|&v| histogram_bin(v, lo, hi) <= t)
                .fold(f64::NEG_INFINITY, f64::max);
            OtsuThreshold {
                value,
                degenerate: false,
            }
        }
        None => {
            log::warn!("otsu: raster has no two-class split; threshold = {max}");
            OtsuThreshold {
                value: if max.is_finite() { max } else { 0.0 },
                degenerate: true,
            }
        }
    }
}

pub fn binarize_otsu(raster: &GrayRaster) -> (BinaryMask, OtsuThreshold) {
    let t = otsu_threshold(raster);
    (BinaryMask::from_threshold(raster, t.value), t)
}

/// Labels 8-connected foreground components in row-major discovery order.
/// Returns per-pixel labels (0 = background, components from 1) and the
/// pixel count of each component.
pub fn label_components(mask: &BinaryMask) -> (Vec<u32>, Vec<usize>) {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut sizes = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data()[start] || labels[start] != 0 {
            continue;
        }
        let label = sizes.len() as u32 + 1;
        labels[start] = label;
        queue.push_back(start);
        let mut size = 0;
        while let Some(i) = queue.pop_front() {
            size += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in NEIGHBORS_8 {
                let (nx, ny) = (x + dx, y + dy);
                if mask.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}

pub fn component_count(mask: &BinaryMask) -> usize {
    label_components(mask).1.len()
}

/// Zeroes every 8-connected component with fewer than `min_size` pixels.
pub fn remove_small_components(mask: &BinaryMask, min_size: usize) -> BinaryMask {
    let (labels, sizes) = label_components(mask);
    let (w, h) = mask.dims();
    let data = labels
        .iter()
        .map(|&l| l != 0 && sizes[l as usize - 1] >= min_size)
        .collect();
    BinaryMask::new(w, h, data).expect("same dimensions")
}

#[inline]
fn neighbor_count(mask: &BinaryMask, x: usize, y: usize) -> usize {
    let (x, y) = (x as i64, y as i64);
    NEIGHBORS_8
        .iter()
        .filter(|(dx, dy)| mask.get_signed(x + dx, y + dy))
        .count()
}

/// Yokoi connectivity number for 8-connected foreground. A pixel is simple
/// (removable without changing topology) iff this equals 1.
fn connectivity_number(mask: &BinaryMask, x: usize, y: usize) -> u8 {
    let (x, y) = (x as i64, y as i64);
    // counterclockwise from east: E, NE, N, NW, W, SW, S, SE
    const RING: [(i64, i64); 8] = [
        (1, 0),
        (1, -1),
        (0, -1),
        (-1, -1),
        (-1, 0),
        (-1, 1),
        (0, 1),
        (1, 1),
    ];
    let bg: [u8; 8] = std::array::from_fn(|k| {
        let (dx, dy) = RING[k];
        u8::from(!mask.get_signed(x + dx, y + dy))
    });
    (0..8)
        .step_by(2)
        .map(|k| bg[k] - bg[k] * bg[(k + 1) % 8] * bg[(k + 2) % 8])
        .sum()
}

/// Thins a mask to a 1-pixel-wide skeleton.
///
/// Directional sub-iterations (north, south, east, west borders) collect
/// border candidates, then delete them one at a time while each remains a
/// simple point with at least two neighbors. Iterates to a fixed point, so
/// thinning a skeleton again returns it unchanged.
pub fn skeletonize(mask: &BinaryMask) -> Skeleton {
    let mut out = mask.clone();
    let (w, h) = out.dims();
    let directions: [(i64, i64); 4] = [(0, -1), (0, 1), (1, 0), (-1, 0)];
    let mut candidates = Vec::new();
    loop {
        let mut changed = false;
        for (dx, dy) in directions {
            candidates.clear();
            for y in 0..h {
                for x in 0..w {
                    if out.get(x, y) && !out.get_signed(x as i64 + dx, y as i64 + dy) {
                        candidates.push((x, y));
                    }
                }
            }
            for &(x, y) in &candidates {
                if neighbor_count(&out, x, y) >= 2 && connectivity_number(&out, x, y) == 1 {
                    out.set(x, y, false);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    Skeleton(out)
}
