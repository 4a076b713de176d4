//! CSV tables for curves, metrics and cross-sections.
//!
//! Only deterministic quantities go into CSV files; timings live in the run
//! manifest so that re-running a manifest reproduces every table byte for byte.

use std::path::Path;

use serde::Serialize;

use super::write_atomic;
use crate::error::{Error, Result};
use crate::gradcheck::GradcheckReport;
use crate::metrics::{Axis, CrossSection, MetricReport};
use crate::scene::SceneImage;
use crate::trainer::{EpochRecord, TrainingRecord};

/// Serializes `rows` with a header line; returns the SHA-256 of the file.
pub fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<String> {
    let bytes = to_csv_bytes(rows).map_err(|e| Error::io(path, std::io::Error::other(e)))?;
    write_atomic(path, &bytes)?;
    Ok(super::sha256_hex(&bytes))
}

pub fn to_csv_bytes<T: Serialize>(rows: &[T]) -> std::result::Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainingRow {
    pub epoch: usize,
    pub loss_mean: f64,
    pub waveform_error: Option<f64>,
    pub threshold: f64,
    pub data_mismatch: Option<f64>,
    pub image_error: Option<f64>,
    pub contrast: Option<f64>,
}

impl From<&EpochRecord> for TrainingRow {
    fn from(e: &EpochRecord) -> Self {
        Self {
            epoch: e.epoch,
            loss_mean: e.loss_mean,
            waveform_error: e.waveform_error,
            threshold: e.threshold,
            data_mismatch: e.test_metrics.map(|m| m.data_mismatch),
            image_error: e.test_metrics.map(|m| m.image_error),
            contrast: e.test_metrics.and_then(|m| m.contrast),
        }
    }
}

/// One row per epoch, starting with the untrained state as epoch 0.
pub fn training_rows(record: &TrainingRecord) -> Vec<TrainingRow> {
    std::iter::once(&record.initial).chain(&record.epochs).map(TrainingRow::from).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    /// `sample`, `mean_of_metrics` or `metrics_of_mean_image`.
    pub kind: &'static str,
    pub sample: Option<usize>,
    pub epoch: usize,
    pub data_mismatch: f64,
    pub image_error: f64,
    pub contrast: Option<f64>,
    pub waveform_error: f64,
}

impl MetricRow {
    pub fn new(kind: &'static str, sample: Option<usize>, r: &MetricReport) -> Self {
        Self {
            kind,
            sample,
            epoch: r.epoch,
            data_mismatch: r.data_mismatch,
            image_error: r.image_error,
            contrast: r.contrast,
            waveform_error: r.waveform_error,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionRow<'a> {
    pub source: &'a str,
    pub axis: Axis,
    pub index: usize,
    pub position: usize,
    pub value: f64,
    pub log10_value: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CrossSectionSummary<'a> {
    pub source: &'a str,
    pub axis: Axis,
    pub index: usize,
    pub peak: f64,
    pub peak_index: usize,
    pub mean_background: f64,
    pub peak_to_background_db: f64,
}

pub fn cross_section_rows<'a>(source: &'a str, axis: Axis, index: usize, cs: &CrossSection) -> Vec<CrossSectionRow<'a>> {
    let logs = crate::metrics::log10_values(&cs.values);
    cs.values
        .iter()
        .zip(logs)
        .enumerate()
        .map(|(position, (&value, log10_value))| CrossSectionRow {
            source,
            axis,
            index,
            position,
            value,
            log10_value,
        })
        .collect()
}

pub fn cross_section_summary<'a>(source: &'a str, axis: Axis, index: usize, cs: &CrossSection) -> CrossSectionSummary<'a> {
    CrossSectionSummary {
        source,
        axis,
        index,
        peak: cs.peak,
        peak_index: cs.peak_index,
        mean_background: cs.mean_background,
        peak_to_background_db: 10.0 * (cs.peak / cs.mean_background).log10(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckRow {
    pub seed: u64,
    pub threshold: f64,
    pub margin: f64,
    pub waveform_relative_error: f64,
    pub threshold_relative_error: f64,
    pub pass: bool,
}

pub fn gradcheck_rows(report: &GradcheckReport) -> Vec<GradcheckRow> {
    report
        .cases
        .iter()
        .map(|c| GradcheckRow {
            seed: c.seed,
            threshold: c.threshold,
            margin: c.margin,
            waveform_relative_error: c.waveform_error,
            threshold_relative_error: c.threshold_error,
            pass: c.passes(report.tolerance),
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct PixelRow {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

pub fn image_rows(image: &SceneImage) -> Vec<PixelRow> {
    (0..image.side)
        .flat_map(|row| (0..image.side).map(move |col| (row, col)))
        .map(|(row, col)| PixelRow {
            row,
            col,
            value: image.get(row, col),
        })
        .collect()
}
