//! Fixtures shared by the benchmarks.

use vesselmark::phantom::synthetic_eye;
use vesselmark::{split_labels, BinaryMask, LabelMapping, UnmappedPolicy, VesselType};

/// Capillary and artery masks of a synthetic `size`-square eye.
pub fn masks(size: usize, seed: u64) -> (BinaryMask, BinaryMask) {
    let mapping = LabelMapping::default();
    let eye = synthetic_eye(size, size, seed, &mapping).expect("synthetic eye");
    let split = split_labels(&eye.labels, &mapping, UnmappedPolicy::Error).expect("labels");
    (
        BinaryMask::from_nonzero(&split.masks[VesselType::Capillary]),
        BinaryMask::from_nonzero(&split.masks[VesselType::Artery]),
    )
}
