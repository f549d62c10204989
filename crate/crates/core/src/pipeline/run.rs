use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::density::{local_density, normalize_p99, sparsity, sparsity_impulse, DensityField};
use crate::error::{Error, Result};
use crate::fusion::{attention_weights, fuse, resample_bilinear};
use crate::gaussian::{gaussian_blur, sigma_for};
use crate::graph::{extract_graph, graph_json, measure_graph, SegmentStats, VesselGraph};
use crate::io::{load_gray_channel, load_labels, save_unit};
use crate::morphology::{binarize_otsu, remove_small_components, skeletonize, Skeleton};
use crate::raster::{split_labels, BinaryMask, GrayRaster, PerVessel, VesselType};
use crate::tortuosity::{normalize_attention, tortuosity_impulse, Family, ImpulseMap, Selection};

use super::config::{Binarize, HeatmapNormalization, ImpulseSupport, PipelineConfig};
use super::manifest::{
    sha256_file, EyeRecord, EyeStatus, FusedSidecar, HeatmapSidecar, InputRecord, OutputKind, OutputRecord,
    RunManifest, MANIFEST_FILE,
};
use super::stats::{emit_stats, STATS_FILE};

/// Sorted eye directories under the input root. Hidden entries and plain
/// files are skipped.
pub fn discover_eyes(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut eyes = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with('.') || !entry.path().is_dir() {
            continue;
        }
        eyes.push((name, entry.path()));
    }
    eyes.sort();
    if eyes.is_empty() {
        return Err(Error::NoEyes(root.to_path_buf()));
    }
    Ok(eyes)
}

/// Loaded inputs of one eye.
#[derive(Debug, Clone)]
pub struct EyeInputs {
    pub projection: GrayRaster,
    /// Vessel masks before binarization (0/1 when they come from labels).
    pub masks: PerVessel<GrayRaster>,
    pub files: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

fn find_one(eye_dir: &Path, pattern: &str) -> Result<PathBuf> {
    let full = eye_dir.join(pattern);
    let full = full.to_string_lossy();
    let mut hits: Vec<PathBuf> = glob::glob(&full)
        .map_err(|e| Error::Config(format!("bad mask pattern {pattern:?}: {e}")))?
        .filter_map(|p| p.ok())
        .collect();
    hits.sort();
    match hits.len() {
        1 => Ok(hits.remove(0)),
        0 => Err(Error::Config(format!("no file matches {pattern:?} in {}", eye_dir.display()))),
        n => Err(Error::Config(format!(
            "{n} files match {pattern:?} in {}",
            eye_dir.display()
        ))),
    }
}

pub fn load_eye(config: &PipelineConfig, eye_dir: &Path) -> Result<EyeInputs> {
    let layout = &config.layout;
    let mut warnings = Vec::new();
    let projection_path = eye_dir.join(&layout.projection);
    let projection = load_gray_channel(&projection_path, layout.channel)?;
    let mut files = vec![projection_path];

    let needs_labels = layout.masks.iter().any(|(_, p)| p.is_none());
    let from_labels = if needs_labels {
        let labels_path = eye_dir.join(&layout.labels);
        let labels = load_labels(&labels_path, layout.channel)?;
        files.push(labels_path);
        let split = split_labels(&labels, &config.labels, config.unmapped_labels)?;
        if !split.unmapped.is_empty() {
            warnings.push(format!("unmapped label values {:?}", split.unmapped));
        }
        Some(split.masks)
    } else {
        None
    };

    let mut masks = Vec::with_capacity(3);
    for ty in VesselType::ALL {
        let mask = match &layout.masks[ty] {
            Some(pattern) => {
                let path = find_one(eye_dir, pattern)?;
                let m = load_gray_channel(&path, layout.channel)?;
                files.push(path);
                m
            }
            None => from_labels.as_ref().expect("labels loaded")[ty].clone(),
        };
        masks.push(mask);
    }
    let mut it = masks.into_iter();
    let masks = PerVessel {
        artery: it.next().unwrap(),
        vein: it.next().unwrap(),
        capillary: it.next().unwrap(),
    };
    Ok(EyeInputs {
        projection,
        masks,
        files,
        warnings,
    })
}

/// Everything derived from one vessel mask.
#[derive(Debug, Clone)]
pub struct VesselAnalysis {
    pub mask: BinaryMask,
    pub skeleton: Skeleton,
    pub graph: VesselGraph,
    pub stats: Vec<SegmentStats>,
    pub selection: Selection,
    pub tortuosity_impulse: ImpulseMap,
    pub density: DensityField,
    pub sparsity_impulse: ImpulseMap,
    pub sparsity_degenerate: bool,
}

fn binarize(raster: &GrayRaster, mode: Binarize, warnings: &mut Vec<String>, ty: VesselType) -> BinaryMask {
    let otsu = |warnings: &mut Vec<String>| {
        let (mask, t) = binarize_otsu(raster);
        if t.degenerate {
            warnings.push(format!("{ty}: constant mask, Otsu threshold is degenerate"));
        }
        mask
    };
    match mode {
        Binarize::Nonzero => BinaryMask::from_nonzero(raster),
        Binarize::Otsu => otsu(warnings),
        Binarize::Auto if BinaryMask::is_binary_raster(raster) => BinaryMask::from_nonzero(raster),
        Binarize::Auto => otsu(warnings),
    }
}

pub fn analyze_vessel(
    raster: &GrayRaster,
    ty: VesselType,
    config: &PipelineConfig,
    warnings: &mut Vec<String>,
) -> Result<VesselAnalysis> {
    let pre = config.preprocess[ty];
    let mut mask = binarize(raster, pre.binarize, warnings, ty);
    if pre.remove_small_components {
        mask = remove_small_components(&mask, config.min_component_size);
    }
    let skeleton = skeletonize(&mask);
    let graph = extract_graph(&skeleton);
    let mut stats = measure_graph(&graph, config.tortuosity.min_edge_pixels);
    let (tortuosity_impulse, selection) = tortuosity_impulse(&graph, &mut stats, &config.tortuosity.params());
    if selection.indices.is_empty() {
        warnings.push(format!("{ty}: no segment above the tortuosity percentile"));
    }

    let density = local_density(&mask, config.density.disk_radius[ty])?;
    let s = sparsity(&density);
    if s.degenerate {
        warnings.push(format!("{ty}: empty mask, sparsity is uniformly 1"));
    }
    let support = match config.density.impulse_support {
        ImpulseSupport::Mask => &mask,
        ImpulseSupport::Skeleton => skeleton.mask(),
    };
    let sparsity_impulse = sparsity_impulse(support, &s, config.density.sparsity_threshold)?;
    Ok(VesselAnalysis {
        mask,
        skeleton,
        graph,
        stats,
        selection,
        tortuosity_impulse,
        density,
        sparsity_impulse,
        sparsity_degenerate: s.degenerate,
    })
}

pub fn analyze_eye(config: &PipelineConfig, eye_dir: &Path) -> Result<(EyeInputs, PerVessel<VesselAnalysis>)> {
    let mut inputs = load_eye(config, eye_dir)?;
    let mut run = |ty| analyze_vessel(&inputs.masks[ty], ty, config, &mut inputs.warnings);
    let analysis = PerVessel {
        artery: run(VesselType::Artery)?,
        vein: run(VesselType::Vein)?,
        capillary: run(VesselType::Capillary)?,
    };
    Ok((inputs, analysis))
}

/// One attention map with its sidecar, ready to write.
#[derive(Debug, Clone)]
pub struct AttentionMap {
    pub vessel_type: VesselType,
    pub family: Family,
    pub factor: f64,
    pub raster: GrayRaster,
    pub sidecar: HeatmapSidecar,
}

impl AttentionMap {
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_f{}",
            self.vessel_type,
            self.family,
            PipelineConfig::factor_label(self.factor)
        )
    }
}

/// Smoothed, normalized maps for every family and scale of one vessel type.
pub fn attention_maps(
    eye_id: &str,
    ty: VesselType,
    analysis: &VesselAnalysis,
    config: &PipelineConfig,
) -> Result<Vec<AttentionMap>> {
    let (w, h) = analysis.mask.dims();
    let max_dim = w.max(h);
    let mut out = Vec::with_capacity(2 * config.scale_factors.len());
    for family in Family::ALL {
        let impulse = match family {
            Family::Tortuosity => &analysis.tortuosity_impulse,
            Family::Dropout => &analysis.sparsity_impulse,
        };
        for &factor in &config.scale_factors {
            let sigma = sigma_for(factor, w, h);
            let blurred = gaussian_blur(impulse.raster(), sigma)?;
            let use_p99 =
                family == Family::Dropout || config.tortuosity.normalization == HeatmapNormalization::P99;
            let (pre, p99) = if use_p99 {
                let n = normalize_p99(&blurred);
                (n.raster, Some(n.p99))
            } else {
                (blurred, None)
            };
            let norm = normalize_attention(&pre);
            let mut sidecar = HeatmapSidecar {
                eye_id: eye_id.to_string(),
                vessel_type: ty,
                family,
                factor,
                sigma,
                max_dim,
                impulse_mass: impulse.total_mass(),
                degenerate: norm.degenerate,
                percentile: None,
                alpha: None,
                beta: None,
                selected_segments: None,
                excess_threshold: None,
                normalization: None,
                disk_radius: None,
                sparsity_threshold: None,
                p99,
            };
            match family {
                Family::Tortuosity => {
                    let t = &config.tortuosity;
                    sidecar.percentile = Some(t.percentile);
                    sidecar.alpha = Some(t.alpha);
                    sidecar.beta = Some(t.beta);
                    sidecar.selected_segments = Some(analysis.selection.indices.len());
                    sidecar.excess_threshold = analysis.selection.threshold;
                    sidecar.normalization = Some(t.normalization);
                }
                Family::Dropout => {
                    sidecar.disk_radius = Some(analysis.density.radius);
                    sidecar.sparsity_threshold = Some(config.density.sparsity_threshold);
                }
            }
            out.push(AttentionMap {
                vessel_type: ty,
                family,
                factor,
                raster: norm.raster,
                sidecar,
            });
        }
    }
    Ok(out)
}

fn rel(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Writes into a staging directory while recording paths as they will
/// read after the staging directory is moved into place.
struct EyeWriter<'a> {
    out_root: &'a Path,
    staging: &'a Path,
    final_dir: &'a Path,
    outputs: Vec<OutputRecord>,
}

impl EyeWriter<'_> {
    fn final_path(&self, path: &Path) -> String {
        let inside = path.strip_prefix(self.staging).expect("inside staging");
        rel(&self.final_dir.join(inside), self.out_root)
    }

    fn record(&mut self, path: &Path, kind: OutputKind) {
        let path = self.final_path(path);
        self.outputs.push(OutputRecord { path, kind });
    }

    fn json(&mut self, path: &Path, value: &impl serde::Serialize, kind: OutputKind) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        fs::write(path, text).map_err(|e| Error::io(path, e))?;
        self.record(path, kind);
        Ok(())
    }
}

fn write_eye(
    config: &PipelineConfig,
    eye_id: &str,
    staging: &Path,
    final_dir: &Path,
    inputs: &EyeInputs,
    analysis: &PerVessel<VesselAnalysis>,
    warnings: &mut Vec<String>,
) -> Result<(Vec<OutputRecord>, Vec<HeatmapSidecar>)> {
    let heat_dir = staging.join("heatmaps");
    fs::create_dir_all(&heat_dir).map_err(|e| Error::io(&heat_dir, e))?;
    let mut writer = EyeWriter {
        out_root: &config.output,
        staging,
        final_dir,
        outputs: Vec::new(),
    };

    let projection = inputs.projection.normalize();
    let bits = inputs.projection.bit_depth().unwrap_or(8);
    let mut sidecars = Vec::new();
    for (ty, a) in analysis.iter() {
        let maps = attention_maps(eye_id, ty, a, config)?;
        for map in maps {
            let stem = map.stem();
            let heat_png = heat_dir.join(format!("{stem}.png"));
            save_unit(&map.raster, &heat_png, 16)?;
            writer.record(&heat_png, OutputKind::Heatmap);
            let heat_json = heat_dir.join(format!("{stem}.json"));
            writer.json(&heat_json, &map.sidecar, OutputKind::HeatmapSidecar)?;

            let resampled = map.raster.dims() != projection.dims();
            if resampled {
                warnings.push(format!("{stem}: heatmap resampled to projection size"));
            }
            let a = resample_bilinear(&map.raster, projection.width(), projection.height())
                .map(|v| v.clamp(0.0, 1.0));
            let fused = fuse(&projection, &attention_weights(&a, &config.attention)?)?;
            let clamped_pixels = fused.data().iter().filter(|&&v| v > 1.0).count();
            let fused_png = staging.join(format!("{stem}.png"));
            save_unit(&fused, &fused_png, bits)?;
            writer.record(&fused_png, OutputKind::Fused);
            let fused_json = staging.join(format!("{stem}.json"));
            let fused_sidecar = FusedSidecar {
                eye_id: eye_id.to_string(),
                vessel_type: ty,
                family: map.family,
                factor: map.factor,
                bounds: config.attention,
                heatmap: writer.final_path(&heat_png),
                bit_depth: bits,
                resampled,
                clamped_pixels,
            };
            writer.json(&fused_json, &fused_sidecar, OutputKind::FusedSidecar)?;
            sidecars.push(map.sidecar);
        }
    }

    let stats_path = staging.join(STATS_FILE);
    let segments = PerVessel::from_fn(|ty| analysis[ty].stats.clone());
    let mut buf = Vec::new();
    emit_stats(eye_id, &segments, &mut buf)?;
    fs::write(&stats_path, buf).map_err(|e| Error::io(&stats_path, e))?;
    writer.record(&stats_path, OutputKind::SegmentStats);

    if config.dump_graphs {
        let graph_dir = staging.join("graphs");
        fs::create_dir_all(&graph_dir).map_err(|e| Error::io(&graph_dir, e))?;
        for (ty, a) in analysis.iter() {
            let p = graph_dir.join(format!("{ty}.json"));
            writer.json(&p, &graph_json(&a.graph, &a.stats), OutputKind::GraphDump)?;
        }
    }
    Ok((writer.outputs, sidecars))
}

fn failed(eye_id: &str, inputs: Vec<InputRecord>, warnings: Vec<String>, error: String, start: Instant) -> EyeRecord {
    log::error!("{eye_id}: {error}");
    EyeRecord {
        eye_id: eye_id.to_string(),
        status: EyeStatus::Failed,
        error: Some(error),
        inputs,
        outputs: Vec::new(),
        heatmaps: Vec::new(),
        warnings,
        elapsed_ms: start.elapsed().as_millis() as u64,
    }
}

/// Processes one eye end to end. Outputs are written to a staging
/// directory that replaces `<output>/<eye_id>` only on success, so a failed
/// eye leaves nothing behind.
pub fn process_eye(config: &PipelineConfig, eye_id: &str, eye_dir: &Path) -> EyeRecord {
    let start = Instant::now();
    log::info!("{eye_id}: processing");
    let (inputs, analysis) = match analyze_eye(config, eye_dir) {
        Ok(v) => v,
        Err(e) => return failed(eye_id, Vec::new(), Vec::new(), e.to_string(), start),
    };
    let mut warnings = inputs.warnings.clone();
    let mut records = Vec::new();
    for f in &inputs.files {
        match sha256_file(f) {
            Ok(sha256) => records.push(InputRecord {
                path: rel(f, &config.input),
                sha256,
            }),
            Err(e) => return failed(eye_id, records, warnings, e.to_string(), start),
        }
    }

    let final_dir = config.output.join(eye_id);
    let staging = config.output.join(format!(".{eye_id}.staging"));
    let _ = fs::remove_dir_all(&staging);
    let written = write_eye(config, eye_id, &staging, &final_dir, &inputs, &analysis, &mut warnings).and_then(|r| {
        if final_dir.exists() {
            fs::remove_dir_all(&final_dir).map_err(|e| Error::io(&final_dir, e))?;
        }
        fs::rename(&staging, &final_dir).map_err(|e| Error::io(&final_dir, e))?;
        Ok(r)
    });
    match written {
        Ok((outputs, heatmaps)) => {
            for w in &warnings {
                log::warn!("{eye_id}: {w}");
            }
            EyeRecord {
                eye_id: eye_id.to_string(),
                status: EyeStatus::Ok,
                error: None,
                inputs: records,
                outputs,
                heatmaps,
                warnings,
                elapsed_ms: start.elapsed().as_millis() as u64,
            }
        }
        Err(e) => {
            let _ = fs::remove_dir_all(&staging);
            failed(eye_id, records, warnings, e.to_string(), start)
        }
    }
}

/// Runs every discovered eye on a pool of `config.workers` threads and
/// writes `<output>/manifest.json`.
pub fn run_pipeline(config: &PipelineConfig) -> Result<RunManifest> {
    config.validate()?;
    let start = Instant::now();
    let eyes = discover_eyes(&config.input)?;
    fs::create_dir_all(&config.output).map_err(|e| Error::io(&config.output, e))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let records: Vec<EyeRecord> = pool.install(|| {
        eyes.par_iter()
            .map(|(id, dir)| {
                let t = Instant::now();
                catch_unwind(AssertUnwindSafe(|| process_eye(config, id, dir)))
                    .unwrap_or_else(|_| failed(id, Vec::new(), Vec::new(), "internal panic".into(), t))
            })
            .collect()
    });
    let manifest = RunManifest::new(config.clone(), records, start.elapsed().as_millis() as u64);
    manifest.write(config.output.join(MANIFEST_FILE))?;
    Ok(manifest)
}

/// Segment statistics of one eye, with selection and weights applied.
pub fn eye_stats(config: &PipelineConfig, eye_id: &str) -> Result<PerVessel<Vec<SegmentStats>>> {
    let dir = config.input.join(eye_id);
    if !dir.is_dir() {
        return Err(Error::Config(format!("eye {eye_id:?} not found under {}", config.input.display())));
    }
    let (_, analysis) = analyze_eye(config, &dir)?;
    Ok(PerVessel::from_fn(|ty| analysis[ty].stats.clone()))
}
