//! Analytic Wirtinger gradients of the reconstruction loss with respect to the
//! waveform `w` and the threshold `tau`, plus a central-difference oracle.
//!
//! Notation: `g^k = dl/drho^k` is the (real) loss gradient with respect to the
//! layer-`k` representation, `u^k_i = z^k_i / |z^k_i|` is the phase of the
//! pre-activation, and the active set of layer `k` is `{i : y^k_i > tau}`.
//!
//! * Loss to image: `dl/drho* = 2 Re(F^H (d* - d))`.
//! * Normalization: `g^L = g*/m - e_a (rho^L . g*) / m^2` with `m = ||rho^L||_inf`
//!   attained at index `a` (lowest index on ties).
//! * Layer recursion: `g^{k-1} = Re(Q diag(u^k) mask^k g^k)`.
//! * Waveform: `(dl/dw)_m = (F~ rho*)_m conj(d*_m - d_m)
//!   + (alpha/2) conj(d_m) sum_k sum_{i active} F~_{m,i} u^k_i g^k_i`,
//!   returned as `grad_w = conj(dl/dw)`.
//! * Threshold: `dl/dtau = -sum_k sum_{i active} g^k_i`.
//!
//! `Q` is held fixed: under the unit-modulus constraint it does not depend on `w`.

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::forward_model::apply_adjoint;
use crate::matrix::CMatrix;
use crate::network::{forward_encode, loss, LayerTrace, NetworkParams, EPS_NORM};

/// Gradients of one sample's loss.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    /// `grad_w l = conj(dl/dw)`.
    pub waveform_gradient: Vec<Complex64>,
    pub threshold_gradient: f64,
    /// `g^k` for `k = 1..L` (index `k - 1`).
    pub per_layer_image_gradients: Vec<Vec<f64>>,
    pub loss: f64,
}

/// `2 Re(F~^H diag(conj(w)) (d* - d))`.
pub fn grad_loss_wrt_image(params: &NetworkParams, d_star: &[Complex64], data: &[Complex64]) -> Result<Vec<f64>> {
    check_len("grad_loss_wrt_image", d_star.len(), data.len())?;
    let residual: Vec<Complex64> = d_star.iter().zip(data).map(|(a, b)| a - b).collect();
    let back = apply_adjoint(&params.sensing, params.waveform.as_slice(), &residual)?;
    Ok(back.iter().map(|v| 2.0 * v.re).collect())
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in v.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}

/// Applies the transposed Jacobian of `rho -> rho / ||rho||_inf` to `g`.
/// Degenerate inputs (`||rho||_inf <= EPS_NORM`) yield zero.
pub fn grad_normalization(rho_last: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    check_len("grad_normalization", rho_last.len(), g.len())?;
    let peak_index = match argmax(rho_last) {
        Some(i) if rho_last[i] > EPS_NORM => i,
        _ => return Ok(vec![0.0; g.len()]),
    };
    let peak = rho_last[peak_index];
    let projection: f64 = rho_last.iter().zip(g).map(|(r, gi)| r * gi).sum();
    let mut out: Vec<f64> = g.iter().map(|gi| gi / peak).collect();
    out[peak_index] -= projection / (peak * peak);
    Ok(out)
}

/// `mask^k_i u^k_i` for one layer: the phase of active entries, zero elsewhere.
fn active_phases(z: &[Complex64], y: &[f64], tau: f64) -> Vec<Complex64> {
    z.iter()
        .zip(y)
        .map(|(&zi, &yi)| if yi > tau { zi / yi } else { Complex64::new(0.0, 0.0) })
        .collect()
}

fn check_threshold_support(params: &NetworkParams, trace: &LayerTrace) -> Result<()> {
    if params.threshold <= 0.0 {
        let has_zero = trace.magnitudes.iter().flatten().any(|&y| y == 0.0);
        if has_zero {
            return Err(Error::Unsupported(
                "threshold is zero and a pre-activation vanishes; the activation is not differentiable there".into(),
            ));
        }
    }
    Ok(())
}

/// Backpropagates `g^L` through the encoder, returning `g^1..g^L`.
pub fn backprop_through_layers(params: &NetworkParams, trace: &LayerTrace, g_last: &[f64]) -> Result<Vec<Vec<f64>>> {
    let layers = trace.layer_count();
    if layers == 0 {
        return Err(Error::InvalidConfig("trace has no layers".into()));
    }
    check_len("backprop_through_layers", params.pixels(), g_last.len())?;
    check_threshold_support(params, trace)?;

    let mut grads = vec![Vec::new(); layers];
    grads[layers - 1] = g_last.to_vec();
    for k in (1..layers).rev() {
        // grads[k] holds g for layer k + 1 (1-based); produce layer k.
        let phases = active_phases(&trace.pre_activations[k], &trace.magnitudes[k], params.threshold);
        let h: Vec<Complex64> = phases.iter().zip(&grads[k]).map(|(u, g)| u * g).collect();
        let qh = params.gram.entries.mul_vec(&h)?;
        grads[k - 1] = qh.iter().map(|v| v.re).collect();
    }
    Ok(grads)
}

/// `grad_w l` given the trace and the per-layer image gradients.
pub fn grad_wrt_waveform(
    params: &NetworkParams,
    trace: &LayerTrace,
    data: &[Complex64],
    layer_grads: &[Vec<f64>],
) -> Result<Vec<Complex64>> {
    let m = params.measurements();
    check_len("grad_wrt_waveform data", m, data.len())?;
    check_len("grad_wrt_waveform synthesized", m, trace.synthesized.len())?;
    check_len("grad_wrt_waveform layers", trace.layer_count(), layer_grads.len())?;
    let f: &CMatrix = &params.sensing.entries;

    // Sum of masked, phase-weighted layer gradients; the F-derivative of every
    // layer is column-sparse so the layer sum collapses to one matrix-vector product.
    let mut weighted = vec![Complex64::new(0.0, 0.0); params.pixels()];
    for (k, g) in layer_grads.iter().enumerate() {
        let phases = active_phases(&trace.pre_activations[k], &trace.magnitudes[k], params.threshold);
        for ((acc, u), gi) in weighted.iter_mut().zip(&phases).zip(g) {
            *acc += u * gi;
        }
    }
    let layer_term = f.mul_vec(&weighted)?;
    let decoded = f.mul_real_vec(&trace.final_normalized)?;

    let half_alpha = params.step_size / 2.0;
    Ok((0..m)
        .map(|i| {
            let direct = decoded[i] * (trace.synthesized[i] - data[i]).conj();
            let through_layers = half_alpha * data[i].conj() * layer_term[i];
            (direct + through_layers).conj()
        })
        .collect())
}

/// `dl/dtau = -sum_k sum_{i active in layer k} g^k_i`.
pub fn grad_wrt_threshold(params: &NetworkParams, trace: &LayerTrace, layer_grads: &[Vec<f64>]) -> Result<f64> {
    check_len("grad_wrt_threshold", trace.layer_count(), layer_grads.len())?;
    let mut total = 0.0;
    for (y, g) in trace.magnitudes.iter().zip(layer_grads) {
        for (&yi, &gi) in y.iter().zip(g) {
            if yi > params.threshold {
                total -= gi;
            }
        }
    }
    Ok(total)
}

/// Gradients for an already computed trace.
pub fn gradients_from_trace(params: &NetworkParams, trace: &LayerTrace, data: &[Complex64]) -> Result<GradientBundle> {
    let loss_value = loss(&trace.synthesized, data)?;
    if trace.degenerate {
        return Ok(GradientBundle {
            waveform_gradient: vec![Complex64::new(0.0, 0.0); params.measurements()],
            threshold_gradient: 0.0,
            per_layer_image_gradients: vec![vec![0.0; params.pixels()]; trace.layer_count()],
            loss: loss_value,
        });
    }
    let g_star = grad_loss_wrt_image(params, &trace.synthesized, data)?;
    let g_last = grad_normalization(trace.last_representation(), &g_star)?;
    let layer_grads = backprop_through_layers(params, trace, &g_last)?;
    let waveform_gradient = grad_wrt_waveform(params, trace, data, &layer_grads)?;
    let threshold_gradient = grad_wrt_threshold(params, trace, &layer_grads)?;
    Ok(GradientBundle {
        waveform_gradient,
        threshold_gradient,
        per_layer_image_gradients: layer_grads,
        loss: loss_value,
    })
}

/// Forward pass followed by the analytic gradients.
pub fn compute_gradients(params: &NetworkParams, data: &[Complex64]) -> Result<GradientBundle> {
    let trace = forward_encode(params, data)?;
    gradients_from_trace(params, &trace, data)
}

/// Distance of the trace from the non-smooth points of the network: the
/// threshold kinks `|y^k_i - tau|` and the gap between the two largest entries
/// of `rho^L` (where the infinity-norm subgradient switches).
pub fn boundary_margin(params: &NetworkParams, trace: &LayerTrace) -> f64 {
    let mut margin = trace
        .magnitudes
        .iter()
        .flatten()
        .map(|y| (y - params.threshold).abs())
        .fold(f64::INFINITY, f64::min);
    let last = trace.last_representation();
    if let Some(a) = argmax(last) {
        let runner_up = last
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != a)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        if runner_up.is_finite() {
            margin = margin.min(last[a] - runner_up);
        }
    }
    margin
}

fn loss_at(params: &NetworkParams, data: &[Complex64]) -> Result<f64> {
    let trace = forward_encode(params, data)?;
    loss(&trace.synthesized, data)
}

/// Central differences of the loss along `Re(w_m)`, `Im(w_m)` and `tau`, with
/// `Q` held at its cached value. Returns `(grad_w, dl/dtau)` in the same
/// convention as [`GradientBundle`]: `grad_w = (dl/dRe + i dl/dIm) / 2`.
pub fn finite_difference_gradient(
    params: &NetworkParams,
    data: &[Complex64],
    step: f64,
) -> Result<(Vec<Complex64>, f64)> {
    if !(step > 0.0) {
        return Err(Error::InvalidConfig(format!("finite-difference step must be positive, got {step}")));
    }
    let trace = forward_encode(params, data)?;
    let data_norm = data.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
    let required = 10.0 * step * data_norm;
    let margin = boundary_margin(params, &trace);
    if !(margin > required) {
        return Err(Error::UnstableCheck { margin, required });
    }

    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(params.measurements());
    for m in 0..params.measurements() {
        let base = params.waveform.values[m];
        let mut partial = |delta: Complex64| -> Result<f64> {
            probe.waveform.values[m] = base + delta;
            let plus = loss_at(&probe, data)?;
            probe.waveform.values[m] = base - delta;
            let minus = loss_at(&probe, data)?;
            probe.waveform.values[m] = base;
            Ok((plus - minus) / (2.0 * step))
        };
        let d_re = partial(Complex64::new(step, 0.0))?;
        let d_im = partial(Complex64::new(0.0, step))?;
        grad.push(Complex64::new(d_re, d_im) / 2.0);
    }

    let tau = params.threshold;
    probe.threshold = tau + step;
    let plus = loss_at(&probe, data)?;
    probe.threshold = tau - step;
    let minus = loss_at(&probe, data)?;
    Ok((grad, (plus - minus) / (2.0 * step)))
}

/// Relative error of `analytic` against `reference` in the vector 2-norm.
pub fn relative_error(analytic: &[Complex64], reference: &[Complex64]) -> f64 {
    let diff: f64 = analytic.iter().zip(reference).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
    let scale: f64 = reference.iter().map(|b| b.norm_sqr()).sum::<f64>().sqrt();
    if scale > 0.0 {
        diff / scale
    } else {
        diff
    }
}

/// `|a - b| / (|b| + 1)` for the scalar threshold gradient.
pub fn scalar_relative_error(analytic: f64, reference: f64) -> f64 {
    (analytic - reference).abs() / (reference.abs() + 1.0)
}
