//! Aggregates per-fold classifier metrics into one CSV row per vessel
//! type, heatmap family and scale.
//!
//! Expected layout: `<metrics>/<vessel>_<family>_f<factor>/fold<k>.json`,
//! each file holding `balanced_accuracy`, `sensitivity`, `specificity` and
//! `auroc`. Missing runs produce rows with empty metric cells.

use std::io::Write;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pipeline::PipelineConfig;
use crate::raster::VesselType;
use crate::tortuosity::Family;

pub const METRICS: [&str; 4] = ["balanced_accuracy", "sensitivity", "specificity", "auroc"];

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct FoldMetrics {
    pub balanced_accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub auroc: f64,
}

impl FoldMetrics {
    fn values(&self) -> [f64; 4] {
        [self.balanced_accuracy, self.sensitivity, self.specificity, self.auroc]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub family: Family,
    pub vessel_type: VesselType,
    pub factor: f64,
    pub folds: usize,
    /// `(mean, std)` per metric in [`METRICS`] order; `None` without folds.
    pub summary: Option<[(f64, f64); 4]>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn read_folds(dir: &Path) -> Result<Vec<FoldMetrics>> {
    if !dir.is_dir() {
        return Ok(Vec::new());
    }
    let pattern = dir.join("fold*.json");
    let mut paths: Vec<_> = glob::glob(&pattern.to_string_lossy())
        .map_err(|e| Error::Config(e.to_string()))?
        .filter_map(|p| p.ok())
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            Ok(serde_json::from_str(&text)?)
        })
        .collect()
}

/// One row per family, vessel type and factor, tortuosity rows first.
pub fn table2_rows(metrics_root: &Path, factors: &[f64]) -> Result<Vec<ReportRow>> {
    let mut rows = Vec::new();
    for family in Family::ALL {
        for ty in VesselType::ALL {
            for &factor in factors {
                let dir = metrics_root.join(format!("{ty}_{family}_f{}", PipelineConfig::factor_label(factor)));
                let folds = read_folds(&dir)?;
                let summary = (!folds.is_empty()).then(|| {
                    std::array::from_fn(|k| mean_std(&folds.iter().map(|f| f.values()[k]).collect::<Vec<_>>()))
                });
                rows.push(ReportRow {
                    family,
                    vessel_type: ty,
                    factor,
                    folds: folds.len(),
                    summary,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_table2(rows: &[ReportRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["family".to_string(), "vessel_type".into(), "factor".into(), "folds".into()];
    for m in METRICS {
        header.push(format!("{m}_mean"));
        header.push(format!("{m}_std"));
    }
    let err = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(&header).map_err(err)?;
    for r in rows {
        let mut rec = vec![
            r.family.to_string(),
            r.vessel_type.to_string(),
            PipelineConfig::factor_label(r.factor),
            r.folds.to_string(),
        ];
        match &r.summary {
            Some(s) => rec.extend(s.iter().flat_map(|(m, sd)| [format!("{m:.4}"), format!("{sd:.4}")])),
            None => rec.extend(std::iter::repeat_n(String::new(), 2 * METRICS.len())),
        }
        w.write_record(&rec).map_err(err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_examples() {
        assert_eq!(mean_std(&[2.0, 4.0]), (3.0, 1.0));
        assert_eq!(mean_std(&[0.5; 5]), (0.5, 0.0));
    }

    #[test]
    fn twenty_four_rows_with_blanks_for_missing() {
        let dir = tempfile::tempdir().unwrap();
        let run = dir.path().join("capillary_dropout_f0.04");
        std::fs::create_dir_all(&run).unwrap();
        for (k, ba) in [0.8, 0.9].iter().enumerate() {
            std::fs::write(
                run.join(format!("fold{k}.json")),
                format!(r#"{{"balanced_accuracy": {ba}, "sensitivity": 0.7, "specificity": 0.9, "auroc": 0.85}}"#),
            )
            .unwrap();
        }
        let rows = table2_rows(dir.path(), &[0.02, 0.04, 0.06, 0.08]).unwrap();
        assert_eq!(rows.len(), 24);
        assert_eq!(rows.iter().filter(|r| r.family == Family::Tortuosity).count(), 12);
        let hit = rows.iter().find(|r| r.folds == 2).unwrap();
        assert_eq!((hit.vessel_type, hit.family, hit.factor), (VesselType::Capillary, Family::Dropout, 0.04));
        let (m, s) = hit.summary.unwrap()[0];
        assert!((m - 0.85).abs() < 1e-12 && (s - 0.05).abs() < 1e-12);

        let mut buf = Vec::new();
        write_table2(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 25);
        assert!(text.contains("dropout,capillary,0.04,2,0.8500,0.0500"));
        assert!(text.contains("tortuosity,artery,0.02,0,,,,,,,,"));
    }
}
