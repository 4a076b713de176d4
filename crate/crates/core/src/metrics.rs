//! Figures of merit for reconstructed images and learned waveforms.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::network::{decode, NetworkParams};
use crate::scene::SceneImage;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub data_mismatch: f64,
    pub image_error: f64,
    /// `None` when the background variance vanishes.
    pub contrast: Option<f64>,
    pub waveform_error: f64,
    pub epoch: usize,
}

/// `||diag(w) F~ rho* - d||^2 / ||d||^2`.
pub fn data_mismatch(params: &NetworkParams, rho_star: &[f64], data: &[Complex64]) -> Result<f64> {
    let denom: f64 = data.iter().map(|v| v.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("measurement vector"));
    }
    let synthesized = decode(params, rho_star)?;
    check_len("data_mismatch", synthesized.len(), data.len())?;
    let num: f64 = synthesized.iter().zip(data).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(num / denom)
}

/// `||rho* - rho||^2 / ||rho||^2`.
pub fn image_error(rho_star: &[f64], truth: &[f64]) -> Result<f64> {
    check_len("image_error", truth.len(), rho_star.len())?;
    let denom: f64 = truth.iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("ground-truth image"));
    }
    Ok(rho_star.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / denom)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// `|E[fg] - E[bg]|^2 / var[bg]` with the population variance of the background.
pub fn contrast(rho_star: &[f64], foreground: &[bool]) -> Result<f64> {
    check_len("contrast", rho_star.len(), foreground.len())?;
    let (fg, bg): (Vec<(f64, bool)>, Vec<(f64, bool)>) =
        rho_star.iter().copied().zip(foreground.iter().copied()).partition(|&(_, f)| f);
    let fg: Vec<f64> = fg.into_iter().map(|(v, _)| v).collect();
    let bg: Vec<f64> = bg.into_iter().map(|(v, _)| v).collect();
    if fg.is_empty() {
        return Err(Error::EmptyMaskRegion("foreground"));
    }
    if bg.is_empty() {
        return Err(Error::EmptyMaskRegion("background"));
    }
    let bg_mean = mean(&bg);
    let variance = bg.iter().map(|v| (v - bg_mean).powi(2)).sum::<f64>() / bg.len() as f64;
    if variance == 0.0 {
        return Err(Error::UndefinedContrast);
    }
    Ok((mean(&fg) - bg_mean).powi(2) / variance)
}

/// `||w_t - w||^2 / ||w_t||^2`.
pub fn waveform_error(truth: &[Complex64], w: &[Complex64]) -> Result<f64> {
    check_len("waveform_error", truth.len(), w.len())?;
    let denom: f64 = truth.iter().map(|v| v.norm_sqr()).sum();
    if denom == 0.0 {
        return Err(Error::ZeroNorm("ground-truth waveform"));
    }
    Ok(truth.iter().zip(w).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>() / denom)
}

/// All four metrics for one reconstruction.
pub fn report(
    params: &NetworkParams,
    rho_star: &[f64],
    data: &[Complex64],
    truth_scene: &SceneImage,
    truth_waveform: &[Complex64],
    epoch: usize,
) -> Result<MetricReport> {
    let contrast = match contrast(rho_star, &truth_scene.support()) {
        Ok(c) => Some(c),
        Err(Error::UndefinedContrast) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricReport {
        data_mismatch: data_mismatch(params, rho_star, data)?,
        image_error: image_error(rho_star, &truth_scene.values)?,
        contrast,
        waveform_error: waveform_error(truth_waveform, params.waveform.as_slice())?,
        epoch,
    })
}

/// Entry-wise mean of several reports; contrast averages the defined values.
pub fn mean_report(reports: &[MetricReport]) -> Option<MetricReport> {
    let first = reports.first()?;
    let n = reports.len() as f64;
    let defined: Vec<f64> = reports.iter().filter_map(|r| r.contrast).collect();
    Some(MetricReport {
        data_mismatch: reports.iter().map(|r| r.data_mismatch).sum::<f64>() / n,
        image_error: reports.iter().map(|r| r.image_error).sum::<f64>() / n,
        contrast: if defined.is_empty() {
            None
        } else {
            Some(mean(&defined))
        },
        waveform_error: reports.iter().map(|r| r.waveform_error).sum::<f64>() / n,
        epoch: first.epoch,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Row,
    Column,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub values: Vec<f64>,
    pub peak: f64,
    /// Position of the peak along the slice (lowest on ties).
    pub peak_index: usize,
    pub mean_background: f64,
}

/// Extracts row or column `index`. Pixels flagged in `target_mask` are excluded
/// from the background mean.
pub fn cross_section(image: &SceneImage, axis: Axis, index: usize, target_mask: Option<&[bool]>) -> Result<CrossSection> {
    let side = image.side;
    if index >= side {
        return Err(Error::IndexOutOfRange { index, len: side });
    }
    if let Some(mask) = target_mask {
        check_len("cross_section mask", image.values.len(), mask.len())?;
    }
    let flat = |k: usize| match axis {
        Axis::Row => index * side + k,
        Axis::Column => k * side + index,
    };
    let values: Vec<f64> = (0..side).map(|k| image.values[flat(k)]).collect();
    let background: Vec<f64> = (0..side)
        .filter(|&k| target_mask.is_none_or(|m| !m[flat(k)]))
        .map(|k| values[k])
        .collect();
    let peak_index = crate::backprop::argmax(&values).unwrap_or(0);
    Ok(CrossSection {
        peak: values.get(peak_index).copied().unwrap_or(0.0),
        peak_index,
        mean_background: if background.is_empty() { 0.0 } else { mean(&background) },
        values,
    })
}

/// `log10` for plotting; zeros map to negative infinity.
pub fn log10_values(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.log10()).collect()
}
