use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::graph::SegmentStats;
use crate::raster::PerVessel;

pub const STATS_FILE: &str = "segments.csv";
pub const STATS_COLUMNS: [&str; 10] = [
    "eye_id",
    "vessel_type",
    "edge_id",
    "N",
    "L",
    "C",
    "T",
    "T_excess",
    "selected",
    "w",
];

fn opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io("<csv>", io),
        other => Error::Config(format!("csv: {other:?}")),
    }
}

/// Writes one CSV row per edge, vessel types in artery, vein, capillary
/// order. Degenerate edges leave `T` and `T_excess` empty.
pub fn emit_stats(eye_id: &str, segments: &PerVessel<Vec<SegmentStats>>, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STATS_COLUMNS).map_err(csv_err)?;
    for (ty, stats) in segments.iter() {
        for (i, s) in stats.iter().enumerate() {
            w.write_record([
                eye_id.to_string(),
                ty.to_string(),
                i.to_string(),
                s.pixel_count.to_string(),
                s.curve_length.to_string(),
                s.chord_length.to_string(),
                opt(s.tortuosity),
                opt(s.excess),
                s.selected.to_string(),
                s.weight.to_string(),
            ])
            .map_err(csv_err)?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn write_stats_file(path: &Path, eye_id: &str, segments: &PerVessel<Vec<SegmentStats>>) -> Result<()> {
    let mut buf = Vec::new();
    emit_stats(eye_id, segments, &mut buf)?;
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
