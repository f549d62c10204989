//! Separable Gaussian smoothing with zero padding.

use crate::error::{Error, Result};
use crate::raster::GrayRaster;

/// Smallest standard deviation accepted, in pixels.
pub const MIN_SIGMA: f64 = 0.5;

/// Kernel support in standard deviations.
pub const TRUNCATE_SIGMAS: f64 = 3.0;

/// Standard deviation for scale factor `factor` on a `width x height`
/// raster: `factor * max(width, height)`.
pub fn sigma_for(factor: f64, width: usize, height: usize) -> f64 {
    factor * width.max(height) as f64
}

/// Sampled 1D Gaussian over `|u| <= 3 sigma`, renormalized to unit sum.
/// The outer product of two of these is the renormalized, truncated 2D kernel.
pub fn kernel_1d(sigma: f64) -> Result<Vec<f64>> {
    if !(sigma >= MIN_SIGMA) {
        return Err(Error::ScaleTooSmall { sigma });
    }
    let radius = (TRUNCATE_SIGMAS * sigma).floor().max(1.0) as i64;
    let two_var = 2.0 * sigma * sigma;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|u| (-((u * u) as f64) / two_var).exp())
        .collect();
    let sum: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= sum);
    Ok(k)
}

/// Convolves `raster` with the truncated Gaussian of std `sigma`.
/// Pixels outside the raster count as zero, so mass within `3 sigma` of a
/// border is partly lost.
pub fn gaussian_blur(raster: &GrayRaster, sigma: f64) -> Result<GrayRaster> {
    let kernel = kernel_1d(sigma)?;
    let (w, h) = raster.dims();
    let radius = (kernel.len() / 2) as i64;
    let src = raster.data();

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        let out = &mut horizontal[y * w..(y + 1) * w];
        for (x, &v) in row.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            // scatter: cheap on the sparse impulse maps this is fed
            let lo = (x as i64 - radius).max(0) as usize;
            let hi = (x as i64 + radius).min(w as i64 - 1) as usize;
            for (xo, o) in out.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *o += v * kernel[(xo as i64 - x as i64 + radius) as usize];
            }
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        let lo = (y as i64 - radius).max(0) as usize;
        let hi = (y as i64 + radius).min(h as i64 - 1) as usize;
        let dst = &mut out[y * w..(y + 1) * w];
        for ys in lo..=hi {
            let kv = kernel[(ys as i64 - y as i64 + radius) as usize];
            let row = &horizontal[ys * w..(ys + 1) * w];
            for (d, &s) in dst.iter_mut().zip(row) {
                *d += kv * s;
            }
        }
    }
    GrayRaster::new(w, h, out)
}
