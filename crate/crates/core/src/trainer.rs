//! Projected stochastic gradient descent over `{w, tau}`.

use std::time::Instant;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop::{compute_gradients, GradientBundle};
use crate::error::{Error, Result};
use crate::metrics::{mean_report, report, MetricReport};
use crate::network::{forward_encode, NetworkParams};
use crate::scene::{derive_seed, SceneImage};
use crate::waveform::{project_unit_modulus_slice, WaveformCoefficients};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Zero means full batch.
    pub batch_size: usize,
    pub learning_rate_w: f64,
    pub learning_rate_tau: f64,
    pub seed: u64,
    pub enforce_stationarity: bool,
    /// Keep a waveform snapshot every this many epochs (0 disables).
    pub snapshot_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 0,
            learning_rate_w: 1e-4,
            learning_rate_tau: 1e-6,
            seed: 0,
            enforce_stationarity: false,
            snapshot_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.learning_rate_w > 0.0) || !(self.learning_rate_tau > 0.0) {
            return Err(Error::InvalidConfig("learning rates must be positive".into()));
        }
        Ok(())
    }
}

/// Held-out measurements of a known scene, re-evaluated after every epoch.
#[derive(Debug, Clone)]
pub struct Evaluation<'a> {
    pub samples: &'a [Vec<Complex64>],
    pub scene: &'a SceneImage,
    pub truth_waveform: &'a [Complex64],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss at the parameters used for this epoch's gradients.
    pub loss_mean: f64,
    pub waveform_error: Option<f64>,
    pub threshold: f64,
    /// Mean test metrics after the epoch's updates.
    pub test_metrics: Option<MetricReport>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRecord {
    /// State before any update (epoch 0).
    pub initial: EpochRecord,
    pub epochs: Vec<EpochRecord>,
    pub final_params: NetworkParams,
    pub snapshots: Vec<(usize, WaveformCoefficients)>,
    pub config: TrainConfig,
}

/// Per-sample gradients in sample order.
fn batch_gradients(params: &NetworkParams, batch: &[&[Complex64]]) -> Result<Vec<GradientBundle>> {
    batch.par_iter().map(|d| compute_gradients(params, d)).collect()
}

fn average_stationary(grad: &mut [Complex64], frequency_count: usize) {
    if frequency_count == 0 || grad.len() % frequency_count != 0 {
        return;
    }
    let blocks = grad.len() / frequency_count;
    for i in 0..frequency_count {
        let mean = (0..blocks).map(|j| grad[j * frequency_count + i]).sum::<Complex64>() / blocks as f64;
        for j in 0..blocks {
            grad[j * frequency_count + i] = mean;
        }
    }
}

/// Applies averaged gradients followed by the constraint projections.
pub fn apply_update(
    params: &NetworkParams,
    grads: &[GradientBundle],
    config: &TrainConfig,
) -> Result<NetworkParams> {
    if grads.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    for (i, g) in grads.iter().enumerate() {
        let finite = g.threshold_gradient.is_finite()
            && g.waveform_gradient.iter().all(|v| v.re.is_finite() && v.im.is_finite());
        if !finite {
            return Err(Error::NonFiniteGradient { sample: i });
        }
    }
    let count = grads.len() as f64;
    let mut grad_w = vec![Complex64::new(0.0, 0.0); params.measurements()];
    let mut grad_tau = 0.0;
    for g in grads {
        for (acc, v) in grad_w.iter_mut().zip(&g.waveform_gradient) {
            *acc += v;
        }
        grad_tau += g.threshold_gradient;
    }
    grad_w.iter_mut().for_each(|v| *v /= count);
    grad_tau /= count;
    if config.enforce_stationarity {
        average_stationary(&mut grad_w, params.sensing.frequency_count);
    }

    let stepped: Vec<Complex64> = params
        .waveform
        .values
        .iter()
        .zip(&grad_w)
        .map(|(w, g)| w - config.learning_rate_w * g)
        .collect();
    let mut next = params.clone();
    next.waveform = WaveformCoefficients {
        values: project_unit_modulus_slice(&stepped),
        stationary: params.waveform.stationary && config.enforce_stationarity,
    };
    next.threshold = (params.threshold - config.learning_rate_tau * grad_tau).max(0.0);
    // Q depends on w only through |w|^2, which the projection keeps at one.
    Ok(next)
}

/// One projected SGD update from a batch of measurement vectors.
pub fn sgd_step(params: &NetworkParams, batch: &[&[Complex64]], config: &TrainConfig) -> Result<NetworkParams> {
    if batch.is_empty() {
        return Err(Error::InvalidConfig("empty batch".into()));
    }
    let grads = batch_gradients(params, batch)?;
    apply_update(params, &grads, config)
}

/// Mean test metrics of the current parameters.
pub fn evaluate(params: &NetworkParams, eval: &Evaluation<'_>, epoch: usize) -> Result<MetricReport> {
    let reports: Vec<MetricReport> = eval
        .samples
        .par_iter()
        .map(|d| {
            let trace = forward_encode(params, d)?;
            report(params, &trace.final_normalized, d, eval.scene, eval.truth_waveform, epoch)
        })
        .collect::<Result<_>>()?;
    mean_report(&reports).ok_or(Error::InvalidConfig("evaluation set is empty".into()))
}

fn waveform_error_of(params: &NetworkParams, truth: Option<&[Complex64]>) -> Result<Option<f64>> {
    truth
        .map(|t| crate::metrics::waveform_error(t, params.waveform.as_slice()))
        .transpose()
}

/// Trains for `config.epochs` epochs of `ceil(T / |B|)` projected SGD steps.
pub fn train(
    params: &NetworkParams,
    dataset: &[Vec<Complex64>],
    config: &TrainConfig,
    truth_waveform: Option<&[Complex64]>,
    evaluation: Option<&Evaluation<'_>>,
) -> Result<TrainingRecord> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidConfig("training set is empty".into()));
    }
    let batch_size = if config.batch_size == 0 {
        dataset.len()
    } else {
        config.batch_size.min(dataset.len())
    };
    let with_epoch = |epoch: usize| move |e: Error| Error::Training { epoch, source: Box::new(e) };

    let start = Instant::now();
    let initial_losses = batch_gradients(params, &dataset.iter().map(Vec::as_slice).collect::<Vec<_>>())
        .map_err(with_epoch(0))?;
    let initial = EpochRecord {
        epoch: 0,
        loss_mean: initial_losses.iter().map(|g| g.loss).sum::<f64>() / dataset.len() as f64,
        waveform_error: waveform_error_of(params, truth_waveform)?,
        threshold: params.threshold,
        test_metrics: evaluation.map(|e| evaluate(params, e, 0)).transpose().map_err(with_epoch(0))?,
        wall_time_s: start.elapsed().as_secs_f64(),
    };

    let mut current = params.clone();
    let mut epochs = Vec::with_capacity(config.epochs);
    let mut snapshots = Vec::new();
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 1..=config.epochs {
        let started = Instant::now();
        if batch_size < dataset.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, epoch as u64));
            order.shuffle(&mut rng);
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&[Complex64]> = chunk.iter().map(|&i| dataset[i].as_slice()).collect();
            let grads = batch_gradients(&current, &batch).map_err(with_epoch(epoch))?;
            loss_sum += grads.iter().map(|g| g.loss).sum::<f64>();
            current = apply_update(&current, &grads, config).map_err(|e| match e {
                Error::NonFiniteGradient { sample } => Error::Training {
                    epoch,
                    source: Box::new(Error::NonFiniteGradient { sample: chunk[sample] }),
                },
                other => with_epoch(epoch)(other),
            })?;
        }
        if config.snapshot_every > 0 && epoch % config.snapshot_every == 0 {
            snapshots.push((epoch, current.waveform.clone()));
        }
        epochs.push(EpochRecord {
            epoch,
            loss_mean: loss_sum / dataset.len() as f64,
            waveform_error: waveform_error_of(&current, truth_waveform)?,
            threshold: current.threshold,
            test_metrics: evaluation
                .map(|e| evaluate(&current, e, epoch))
                .transpose()
                .map_err(with_epoch(epoch))?,
            wall_time_s: started.elapsed().as_secs_f64(),
        });
    }
    Ok(TrainingRecord {
        initial,
        epochs,
        final_params: current,
        snapshots,
        config: config.clone(),
    })
}
