//! Rasterized vessel phantoms with known geometry.
//!
//! Open-curve phantoms (line, arc, sine arch) come with a closed-form or
//! quadrature arc-chord ratio that tests use as ground truth for the
//! measured tortuosity.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Pixel;
use crate::io::{save_gray, save_labels};
use crate::raster::{BinaryMask, GrayRaster, LabelMapping, LabelRaster, VesselType};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhantomKind {
    StraightLine {
        from: [f64; 2],
        to: [f64; 2],
    },
    CircularArc {
        center: [f64; 2],
        radius: f64,
        #[serde(default)]
        start_angle: f64,
        sweep: f64,
    },
    /// `y = origin.y + amplitude * sin(2 pi x / wavelength)` over
    /// `half_periods` arches starting at `origin.x`.
    SineArch {
        origin: [f64; 2],
        amplitude: f64,
        wavelength: f64,
        #[serde(default = "one")]
        half_periods: u32,
    },
    Grid {
        spacing: usize,
        line_width: usize,
    },
    RandomWalkVessel {
        start: [f64; 2],
        step_count: usize,
        turn_sigma: f64,
        seed: u64,
        #[serde(default = "two")]
        step_length: f64,
    },
}

fn one() -> u32 {
    1
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    #[serde(flatten)]
    pub kind: PhantomKind,
    pub width: usize,
    pub height: usize,
}

impl PhantomSpec {
    pub fn new(kind: PhantomKind, width: usize, height: usize) -> Self {
        PhantomSpec { kind, width, height }
    }

    fn is_open_curve(&self) -> bool {
        match self.kind {
            PhantomKind::StraightLine { from, to } => from != to,
            PhantomKind::CircularArc { radius, sweep, .. } => radius > 0.0 && sweep.abs() > 0.0 && sweep.abs() < 2.0 * PI,
            PhantomKind::SineArch {
                wavelength, half_periods, ..
            } => wavelength > 0.0 && half_periods > 0,
            PhantomKind::Grid { .. } | PhantomKind::RandomWalkVessel { .. } => false,
        }
    }

    /// Point on an open curve at parameter `t` in `[0, 1]`.
    fn point(&self, t: f64) -> [f64; 2] {
        match self.kind {
            PhantomKind::StraightLine { from, to } => [from[0] + t * (to[0] - from[0]), from[1] + t * (to[1] - from[1])],
            PhantomKind::CircularArc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let a = start_angle + t * sweep;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
            PhantomKind::SineArch {
                origin,
                amplitude,
                wavelength,
                half_periods,
            } => {
                let x = t * half_periods as f64 * wavelength / 2.0;
                [origin[0] + x, origin[1] + amplitude * (2.0 * PI * x / wavelength).sin()]
            }
            _ => unreachable!("not a parametric curve"),
        }
    }
}

/// Arc-length over chord of the continuous curve.
pub fn analytic_tortuosity(spec: &PhantomSpec) -> Result<f64> {
    if !spec.is_open_curve() {
        return Err(Error::NotOpenCurve);
    }
    Ok(match spec.kind {
        PhantomKind::StraightLine { .. } => 1.0,
        PhantomKind::CircularArc { sweep, .. } => {
            let s = sweep.abs();
            s / (2.0 * (s / 2.0).sin())
        }
        PhantomKind::SineArch {
            amplitude,
            wavelength,
            half_periods,
            ..
        } => {
            let k = 2.0 * PI / wavelength;
            let span = half_periods as f64 * wavelength / 2.0;
            let integrand = |x: f64| (1.0 + (amplitude * k * (k * x).cos()).powi(2)).sqrt();
            adaptive_simpson(&integrand, 0.0, span, 1e-12, 50) / span
        }
        _ => unreachable!(),
    })
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(f: &impl Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &impl Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        whole: f64,
        m: f64,
        fm: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, fa, m, fm, left, lm, flm, tol / 2.0, depth - 1)
            + recurse(f, m, fm, b, fb, right, rm, frm, tol / 2.0, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    recurse(f, a, fa, b, fb, whole, m, fm, tol, depth)
}

fn adjacent(a: Pixel, b: Pixel) -> bool {
    a != b && a.0.abs_diff(b.0) <= 1 && a.1.abs_diff(b.1) <= 1
}

/// Integer line between two pixels, both inclusive.
fn bresenham(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (dx, dy) = ((b.0 - a.0).abs(), -(b.1 - a.1).abs());
    let (sx, sy) = ((b.0 - a.0).signum(), (b.1 - a.1).signum());
    let (mut x, mut y, mut err) = (a.0, a.1, dx + dy);
    let mut out = vec![(x, y)];
    while (x, y) != b {
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
        out.push((x, y));
    }
    out
}

/// Turns densely sampled points into an 8-connected chain: rounds to
/// pixels, fills gaps, and drops corner pixels whose neighbors already touch.
fn chain_from_points(points: &[[f64; 2]], width: usize, height: usize) -> Result<Vec<Pixel>> {
    let mut raw: Vec<(i64, i64)> = Vec::with_capacity(points.len());
    for p in points {
        let q = (p[0].round() as i64, p[1].round() as i64);
        match raw.last() {
            Some(&last) if last == q => {}
            Some(&last) if (last.0 - q.0).abs() > 1 || (last.1 - q.1).abs() > 1 => {
                raw.extend(bresenham(last, q).into_iter().skip(1));
            }
            _ => raw.push(q),
        }
    }
    if raw
        .iter()
        .any(|&(x, y)| x < 0 || y < 0 || x >= width as i64 || y >= height as i64)
    {
        return Err(Error::PhantomOutOfBounds { width, height });
    }
    let mut chain: Vec<Pixel> = raw.into_iter().map(|(x, y)| (x as usize, y as usize)).collect();
    loop {
        let mut out: Vec<Pixel> = Vec::with_capacity(chain.len());
        let mut i = 0;
        while i < chain.len() {
            let p = chain[i];
            let redundant = i > 0 && i + 1 < chain.len() && adjacent(*out.last().unwrap(), chain[i + 1]);
            if !redundant {
                out.push(p);
            }
            i += 1;
        }
        if out.len() == chain.len() {
            return Ok(out);
        }
        chain = out;
    }
}

fn sample_curve(spec: &PhantomSpec) -> Vec<[f64; 2]> {
    // coarse length estimate picks a sampling density of >= 8 per pixel
    let coarse = 1000;
    let pts: Vec<[f64; 2]> = (0..=coarse).map(|i| spec.point(i as f64 / coarse as f64)).collect();
    let len: f64 = pts
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .sum();
    let n = (len * 8.0).ceil().max(2.0) as usize;
    (0..=n).map(|i| spec.point(i as f64 / n as f64)).collect()
}

fn polyline_points(vertices: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut out = Vec::new();
    for w in vertices.windows(2) {
        let len = ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt();
        let n = (len * 8.0).ceil().max(1.0) as usize;
        for i in 0..n {
            let t = i as f64 / n as f64;
            out.push([w[0][0] + t * (w[1][0] - w[0][0]), w[0][1] + t * (w[1][1] - w[0][1])]);
        }
    }
    if let Some(&last) = vertices.last() {
        out.push(last);
    }
    out
}

fn random_walk_vertices(
    spec: &PhantomSpec,
    start: [f64; 2],
    step_count: usize,
    turn_sigma: f64,
    seed: u64,
    step_length: f64,
) -> Result<Vec<[f64; 2]>> {
    let (w, h) = (spec.width as f64, spec.height as f64);
    let inside = |p: [f64; 2]| p[0] >= 1.0 && p[1] >= 1.0 && p[0] <= w - 2.0 && p[1] <= h - 2.0;
    if !inside(start) {
        return Err(Error::PhantomOutOfBounds {
            width: spec.width,
            height: spec.height,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let turn = Normal::new(0.0, turn_sigma.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let mut heading: f64 = rng.random_range(0.0..2.0 * PI);
    let mut pos = start;
    let mut vertices = vec![pos];
    for _ in 0..step_count {
        heading += turn.sample(&mut rng);
        let mut next = [pos[0] + step_length * heading.cos(), pos[1] + step_length * heading.sin()];
        if !inside(next) {
            heading += PI;
            next = [pos[0] + step_length * heading.cos(), pos[1] + step_length * heading.sin()];
            if !inside(next) {
                next = [next[0].clamp(1.0, w - 2.0), next[1].clamp(1.0, h - 2.0)];
            }
        }
        pos = next;
        vertices.push(pos);
    }
    Ok(vertices)
}

/// Ordered pixel chain of a phantom curve (open curves and random walks).
pub fn curve_pixels(spec: &PhantomSpec) -> Result<Vec<Pixel>> {
    match spec.kind {
        PhantomKind::Grid { .. } => Err(Error::NotOpenCurve),
        PhantomKind::RandomWalkVessel {
            start,
            step_count,
            turn_sigma,
            seed,
            step_length,
        } => {
            let v = random_walk_vertices(spec, start, step_count, turn_sigma, seed, step_length)?;
            chain_from_points(&polyline_points(&v), spec.width, spec.height)
        }
        _ => {
            if !spec.is_open_curve() {
                return Err(Error::NotOpenCurve);
            }
            chain_from_points(&sample_curve(spec), spec.width, spec.height)
        }
    }
}

/// Rasterizes a phantom into a binary mask.
pub fn rasterize(spec: &PhantomSpec) -> Result<BinaryMask> {
    let (w, h) = (spec.width, spec.height);
    if let PhantomKind::Grid { spacing, line_width } = spec.kind {
        if spacing == 0 || line_width == 0 || line_width >= spacing {
            return Err(Error::Config("grid needs 0 < line_width < spacing".into()));
        }
        return Ok(BinaryMask::from_fn(w, h, |x, y| {
            x % spacing < line_width || y % spacing < line_width
        }));
    }
    let mut mask = BinaryMask::empty(w, h);
    for (x, y) in curve_pixels(spec)? {
        mask.set(x, y, true);
    }
    Ok(mask)
}

/// Projection image and multilabel raster for one synthetic eye.
#[derive(Debug, Clone)]
pub struct SyntheticEye {
    pub projection: GrayRaster,
    pub labels: LabelRaster,
}

fn dilate(mask: &BinaryMask, radius: i64) -> BinaryMask {
    let (w, h) = mask.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        (-radius..=radius).any(|dy| {
            (-radius..=radius)
                .any(|dx| dx * dx + dy * dy <= radius * radius && mask.get_signed(x as i64 + dx, y as i64 + dy))
        })
    })
}

/// Builds a synthetic eye: tortuous artery and vein random walks, a
/// capillary lattice with a rarefied patch, and an 8-bit projection that is
/// bright on vessels. Label values come from the first element of each
/// mapping set.
pub fn synthetic_eye(width: usize, height: usize, seed: u64, mapping: &LabelMapping) -> Result<SyntheticEye> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let label_of = |t: VesselType| -> Result<u16> {
        mapping
            .set(t)
            .iter()
            .next()
            .copied()
            .ok_or_else(|| Error::Config(format!("no label value for {t}")))
    };
    let (fw, fh) = (width as f64, height as f64);
    let mut walk = |turn_sigma: f64| -> Result<BinaryMask> {
        let spec = PhantomSpec::new(
            PhantomKind::RandomWalkVessel {
                start: [rng.random_range(0.3..0.7) * fw, rng.random_range(0.3..0.7) * fh],
                step_count: (width + height) / 3,
                turn_sigma,
                seed: rng.random(),
                step_length: 2.0,
            },
            width,
            height,
        );
        rasterize(&spec)
    };
    let mut artery = BinaryMask::empty(width, height);
    let mut vein = BinaryMask::empty(width, height);
    for k in 0..3 {
        let a = dilate(&walk(0.25 + 0.1 * k as f64)?, 1);
        let v = dilate(&walk(0.15 + 0.05 * k as f64)?, 1);
        for (x, y) in a.foreground().collect::<Vec<_>>() {
            artery.set(x, y, true);
        }
        for (x, y) in v.foreground().collect::<Vec<_>>() {
            vein.set(x, y, true);
        }
    }

    // capillary lattice with jittered gaps and a dropout patch
    let spacing = 6 + (seed % 3) as usize;
    let hole = (
        rng.random_range(0.2..0.8) * fw,
        rng.random_range(0.2..0.8) * fh,
        0.15 * fw.max(fh),
    );
    let mut capillary = BinaryMask::from_fn(width, height, |x, y| {
        let on_line = x % spacing == 0 || y % spacing == 0;
        let (dx, dy) = (x as f64 - hole.0, y as f64 - hole.1);
        on_line && dx * dx + dy * dy > hole.2 * hole.2
    });
    let gaps: Vec<Pixel> = capillary
        .foreground()
        .filter(|_| rng.random_bool(0.04))
        .collect();
    for (x, y) in gaps {
        capillary.set(x, y, false);
    }

    let (a, v, c) = (
        label_of(VesselType::Artery)?,
        label_of(VesselType::Vein)?,
        label_of(VesselType::Capillary)?,
    );
    let mut labels = vec![0u16; width * height];
    let mut projection = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            let i = y * width + x;
            let noise: f64 = rng.random_range(0.0..20.0);
            let (label, brightness) = if artery.get(x, y) {
                (a, 200.0)
            } else if vein.get(x, y) {
                (v, 170.0)
            } else if capillary.get(x, y) {
                (c, 120.0)
            } else {
                (0, 30.0)
            };
            labels[i] = label;
            projection[i] = (brightness + noise).round().min(255.0);
        }
    }
    Ok(SyntheticEye {
        projection: GrayRaster::with_bit_depth(width, height, projection, 8)?,
        labels: LabelRaster::new(width, height, labels)?,
    })
}

/// Writes `eyes` synthetic eye directories (`eye000`, `eye001`, ...) with a
/// projection and a label raster each, in the default input layout.
pub fn write_synthetic_corpus(
    root: &Path,
    eyes: usize,
    width: usize,
    height: usize,
    seed: u64,
    mapping: &LabelMapping,
) -> Result<Vec<String>> {
    let mut ids = Vec::with_capacity(eyes);
    for k in 0..eyes {
        let id = format!("eye{k:03}");
        let dir = root.join(&id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let eye = synthetic_eye(width, height, seed.wrapping_add(k as u64), mapping)?;
        save_gray(&eye.projection, dir.join("projection.png"))?;
        save_labels(&eye.labels, dir.join("labels.png"))?;
        ids.push(id);
    }
    Ok(ids)
}
