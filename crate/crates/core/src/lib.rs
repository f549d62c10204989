//! Vessel-attention maps for OCTA projections: segmentation cleanup,
//! skeleton graphs, tortuosity and dropout heatmaps, and bounded
//! multiplicative fusion with the source image.

pub mod density;
pub mod error;
pub mod fusion;
pub mod gaussian;
pub mod graph;
pub mod io;
pub mod morphology;
pub mod phantom;
pub mod pipeline;
pub mod quantile;
pub mod raster;
pub mod report;
pub mod tortuosity;

pub use density::{local_density, normalize_p99, sparsity, sparsity_impulse, DensityField, SparsityField};
pub use error::{Error, Result};
pub use fusion::{attention_weights, fuse, AttentionBounds, FusedRaster, Provenance};
pub use gaussian::{gaussian_blur, sigma_for};
pub use graph::{extract_graph, measure_graph, Pixel, SegmentStats, VesselEdge, VesselGraph};
pub use morphology::{binarize_otsu, otsu_threshold, remove_small_components, skeletonize, Skeleton};
pub use phantom::{analytic_tortuosity, rasterize, PhantomKind, PhantomSpec};
pub use raster::{
    split_labels, BinaryMask, GrayRaster, LabelMapping, LabelRaster, PerVessel, UnmappedPolicy, VesselType,
};
pub use tortuosity::{
    gaussian_multiscale, normalize_attention, select_high_tortuosity, tortuosity_impulse, Family, HeatmapSet,
    ImpulseMap, TortuosityParams,
};
pub use pipeline::{run_pipeline, PipelineConfig, RunManifest};
