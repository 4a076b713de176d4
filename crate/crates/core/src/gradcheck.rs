//! Analytic-versus-finite-difference gradient comparison on small instances.

use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backprop::{
    boundary_margin, compute_gradients, finite_difference_gradient, relative_error, scalar_relative_error,
};
use crate::error::{Error, Result};
use crate::forward_model::{apply_forward, build_gram, SensingMatrix};
use crate::network::{encoder_bias, forward_encode, NetworkParams};
use crate::scene::derive_seed;
use crate::waveform::{generate_qpsk, random_unit_modulus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradcheckSettings {
    /// Number of accepted cases to collect.
    pub cases: usize,
    /// Upper bound on seeds tried while collecting cases.
    pub max_attempts: usize,
    pub step: f64,
    pub tolerance: f64,
}

impl Default for GradcheckSettings {
    fn default() -> Self {
        Self {
            cases: 20,
            max_attempts: 200,
            step: 1e-6,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradcheckCase {
    pub seed: u64,
    pub threshold: f64,
    pub margin: f64,
    pub waveform_error: f64,
    pub threshold_error: f64,
}

impl GradcheckCase {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.waveform_error <= tolerance && self.threshold_error <= tolerance
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub cases: Vec<GradcheckCase>,
    /// Seeds rejected by the boundary-proximity precondition.
    pub skipped: Vec<u64>,
    pub tolerance: f64,
}

impl GradcheckReport {
    pub fn all_pass(&self) -> bool {
        !self.cases.is_empty() && self.cases.iter().all(|c| c.passes(self.tolerance))
    }

    pub fn worst(&self) -> (f64, f64) {
        self.cases.iter().fold((0.0, 0.0), |(w, t), c| {
            (f64::max(w, c.waveform_error), f64::max(t, c.threshold_error))
        })
    }
}

/// Random nonnegative scene with roughly half its pixels zero.
fn random_sparse_scene(pixels: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut rho: Vec<f64> = (0..pixels)
        .map(|_| if rng.random_bool(0.5) { rng.random_range(0.1..1.0) } else { 0.0 })
        .collect();
    if rho.iter().all(|&v| v == 0.0) {
        rho[0] = 1.0;
    }
    rho
}

/// Picks the threshold among midpoints of the sorted first-layer magnitudes
/// that leaves the widest boundary margin.
fn pick_threshold(params: &mut NetworkParams, data: &[Complex64]) -> Result<f64> {
    let mut mags: Vec<f64> = encoder_bias(params, data)?.iter().map(|v| v.norm()).collect();
    mags.sort_by(f64::total_cmp);
    let mut best = (f64::NEG_INFINITY, params.threshold);
    for pair in mags.windows(2).skip(1) {
        let tau = 0.5 * (pair[0] + pair[1]);
        params.threshold = tau;
        let trace = forward_encode(params, data)?;
        if trace.degenerate {
            continue;
        }
        let margin = boundary_margin(params, &trace);
        if margin > best.0 {
            best = (margin, tau);
        }
    }
    params.threshold = best.1;
    Ok(best.0)
}

/// Builds one randomized instance on `sensing`: a random unit-modulus current
/// waveform, data simulated with a QPSK truth, and a threshold chosen away
/// from the activation kinks.
pub fn random_instance(
    sensing: &Arc<SensingMatrix>,
    step_size: f64,
    regularization: f64,
    layers: usize,
    seed: u64,
) -> Result<(NetworkParams, Vec<Complex64>)> {
    let m = sensing.measurements();
    let w0 = random_unit_modulus(m, derive_seed(seed, 0));
    let truth = generate_qpsk(sensing.frequency_count, sensing.slow_time_count, derive_seed(seed, 1));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let rho = random_sparse_scene(sensing.pixels(), &mut rng);
    let data = apply_forward(sensing, truth.as_slice(), &rho)?;
    let gram = Arc::new(build_gram(sensing, w0.as_slice(), step_size)?);
    let mut params = NetworkParams::new(sensing.clone(), gram, w0, regularization, layers)?;
    pick_threshold(&mut params, &data)?;
    Ok((params, data))
}

/// Compares analytic and finite-difference gradients on one instance.
pub fn check_instance(params: &NetworkParams, data: &[Complex64], step: f64, seed: u64) -> Result<GradcheckCase> {
    let analytic = compute_gradients(params, data)?;
    let (fd_w, fd_tau) = finite_difference_gradient(params, data, step)?;
    let trace = forward_encode(params, data)?;
    Ok(GradcheckCase {
        seed,
        threshold: params.threshold,
        margin: boundary_margin(params, &trace),
        waveform_error: relative_error(&analytic.waveform_gradient, &fd_w),
        threshold_error: scalar_relative_error(analytic.threshold_gradient, fd_tau),
    })
}

/// Runs seeds `base, base+1, ...` until `settings.cases` instances pass the
/// precondition or `max_attempts` seeds have been tried.
pub fn run_gradcheck(
    sensing: &Arc<SensingMatrix>,
    step_size: f64,
    regularization: f64,
    layers: usize,
    base_seed: u64,
    settings: &GradcheckSettings,
) -> Result<GradcheckReport> {
    if settings.cases == 0 {
        return Err(Error::InvalidConfig("gradcheck needs at least one case".into()));
    }
    let mut cases = Vec::with_capacity(settings.cases);
    let mut skipped = Vec::new();
    for seed in (base_seed..).take(settings.max_attempts) {
        if cases.len() == settings.cases {
            break;
        }
        let (params, data) = random_instance(sensing, step_size, regularization, layers, seed)?;
        match check_instance(&params, &data, settings.step, seed) {
            Ok(case) => cases.push(case),
            Err(Error::UnstableCheck { .. }) => skipped.push(seed),
            Err(e) => return Err(e),
        }
    }
    Ok(GradcheckReport {
        cases,
        skipped,
        tolerance: settings.tolerance,
    })
}
