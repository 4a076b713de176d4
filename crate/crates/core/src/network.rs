//! Forward propagation through the recurrent auto-encoder: `L` unrolled
//! proximal-gradient layers with a phaseless soft-threshold activation,
//! max-normalization, and the linear decoder `diag(w) F~`.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{check_len, Error, Result};
use crate::forward_model::{apply_adjoint, apply_forward, GramOperator, SensingMatrix};
use crate::waveform::WaveformCoefficients;

/// Below this infinity norm the final representation is not normalized.
pub const EPS_NORM: f64 = 1e-12;

pub const DEFAULT_LAYERS: usize = 4;
pub const DEFAULT_STEP_SIZE: f64 = 1e-5;
pub const DEFAULT_REGULARIZATION: f64 = 10.0;

/// Learnable `{w, tau}` plus the fixed hyperparameters and cached operators.
#[derive(Debug, Clone)]
pub struct NetworkParams {
    pub waveform: WaveformCoefficients,
    pub threshold: f64,
    pub step_size: f64,
    pub regularization: f64,
    pub layer_count: usize,
    pub gram: Arc<GramOperator>,
    pub sensing: Arc<SensingMatrix>,
}

impl NetworkParams {
    /// Threshold starts at `alpha * lambda`.
    pub fn new(
        sensing: Arc<SensingMatrix>,
        gram: Arc<GramOperator>,
        waveform: WaveformCoefficients,
        regularization: f64,
        layer_count: usize,
    ) -> Result<Self> {
        let step_size = gram.step_size;
        let params = Self {
            waveform,
            threshold: step_size * regularization,
            step_size,
            regularization,
            layer_count,
            gram,
            sensing,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        check_len("NetworkParams waveform", self.sensing.measurements(), self.waveform.len())?;
        check_len("NetworkParams gram", self.sensing.pixels(), self.gram.entries.rows())?;
        if self.layer_count == 0 {
            return Err(Error::InvalidConfig("layer count must be at least 1".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidConfig(format!("threshold must be nonnegative, got {}", self.threshold)));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::InvalidConfig(format!("step size must be positive, got {}", self.step_size)));
        }
        Ok(())
    }

    /// Checks `alpha <= 1 / lambda_max(F~^H F~)`.
    pub fn check_step_bound(&self, lambda_max: f64) -> Result<()> {
        if self.step_size * lambda_max > 1.0 + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "step size {} exceeds 1/lambda_max = {}",
                self.step_size,
                1.0 / lambda_max
            )));
        }
        Ok(())
    }

    pub fn measurements(&self) -> usize {
        self.sensing.measurements()
    }

    pub fn pixels(&self) -> usize {
        self.sensing.pixels()
    }

    /// Same network with a different layer count.
    pub fn with_layers(&self, layer_count: usize) -> Self {
        Self {
            layer_count,
            ..self.clone()
        }
    }
}

/// Everything forward propagation produces, kept for backpropagation.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    /// `z^k = Q rho^{k-1} + alpha F^H d`, `k = 1..L`.
    pub pre_activations: Vec<Vec<Complex64>>,
    /// `y^k = |z^k|`.
    pub magnitudes: Vec<Vec<f64>>,
    /// `rho^k = max(y^k - tau, 0)`.
    pub representations: Vec<Vec<f64>>,
    pub final_normalized: Vec<f64>,
    pub synthesized: Vec<Complex64>,
    /// Set when `rho^L` was too small to normalize.
    pub degenerate: bool,
}

impl LayerTrace {
    pub fn layer_count(&self) -> usize {
        self.representations.len()
    }

    pub fn last_representation(&self) -> &[f64] {
        self.representations.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// `max(|v_i| - tau, 0)`.
pub fn phaseless_soft_threshold(v: &[Complex64], tau: f64) -> Vec<f64> {
    v.iter().map(|z| (z.norm() - tau).max(0.0)).collect()
}

/// `rho / ||rho||_inf`, or `rho` unchanged plus a degenerate flag.
pub fn normalize(rho_last: &[f64]) -> (Vec<f64>, bool) {
    let peak = inf_norm(rho_last);
    if peak > EPS_NORM {
        (rho_last.iter().map(|v| v / peak).collect(), false)
    } else {
        (rho_last.to_vec(), true)
    }
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// The bias `alpha F^H d` shared by all layers.
pub fn encoder_bias(params: &NetworkParams, data: &[Complex64]) -> Result<Vec<Complex64>> {
    let mut b = apply_adjoint(&params.sensing, params.waveform.as_slice(), data)?;
    b.iter_mut().for_each(|v| *v *= params.step_size);
    Ok(b)
}

/// Runs the `L` encoder layers and the decoder on one measurement vector.
pub fn forward_encode(params: &NetworkParams, data: &[Complex64]) -> Result<LayerTrace> {
    check_len("forward_encode data", params.measurements(), data.len())?;
    let bias = encoder_bias(params, data)?;
    let n = params.pixels();
    let layers = params.layer_count;

    let mut pre_activations = Vec::with_capacity(layers);
    let mut magnitudes = Vec::with_capacity(layers);
    let mut representations: Vec<Vec<f64>> = Vec::with_capacity(layers);
    let mut rho = vec![0.0; n];
    for _ in 0..layers {
        let mut z = params.gram.apply_real(&rho)?;
        z.iter_mut().zip(&bias).for_each(|(zi, bi)| *zi += bi);
        let y: Vec<f64> = z.iter().map(|v| v.norm()).collect();
        rho = y.iter().map(|&m| (m - params.threshold).max(0.0)).collect();
        pre_activations.push(z);
        magnitudes.push(y);
        representations.push(rho.clone());
    }

    let (final_normalized, degenerate) = normalize(&rho);
    let synthesized = decode(params, &final_normalized)?;
    Ok(LayerTrace {
        pre_activations,
        magnitudes,
        representations,
        final_normalized,
        synthesized,
        degenerate,
    })
}

/// `d* = diag(w) F~ rho*`.
pub fn decode(params: &NetworkParams, rho_star: &[f64]) -> Result<Vec<Complex64>> {
    apply_forward(&params.sensing, params.waveform.as_slice(), rho_star)
}

/// `||d* - d||^2`.
pub fn loss(d_star: &[Complex64], data: &[Complex64]) -> Result<f64> {
    check_len("loss", d_star.len(), data.len())?;
    Ok(d_star.iter().zip(data).map(|(a, b)| (a - b).norm_sqr()).sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forward_model::build_gram;
    use crate::matrix::CMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_params(m: usize, n: usize, layers: usize, alpha: f64, seed: u64) -> NetworkParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let phases: Vec<f64> = (0..m * n).map(|_| rng.random::<f64>() * 6.28).collect();
        let f = CMatrix::from_fn(m, n, |r, c| Complex64::from_polar(1.0, phases[r * n + c]));
        let sensing = Arc::new(SensingMatrix::from_matrix(f, "tiny"));
        let w: Vec<Complex64> = (0..m).map(|_| Complex64::from_polar(1.0, rng.random::<f64>() * 6.28)).collect();
        let gram = Arc::new(build_gram(&sensing, &w, alpha).unwrap());
        NetworkParams::new(sensing, gram, WaveformCoefficients::new(w), 0.5, layers).unwrap()
    }

    #[test]
    fn soft_threshold_examples() {
        let v = [Complex64::new(3.0, 4.0), Complex64::new(0.0, 0.5), Complex64::new(-0.2, 0.0)];
        assert_eq!(phaseless_soft_threshold(&v, 1.0), vec![4.0, 0.0, 0.0]);
        assert_eq!(phaseless_soft_threshold(&v, 0.0), vec![5.0, 0.5, 0.2]);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[0.5, 2.0, 1.0]), (vec![0.25, 1.0, 0.5], false));
        assert_eq!(normalize(&[0.0, 0.0]), (vec![0.0, 0.0], true));
        assert_eq!(normalize(&[0.25, 1.0, 0.5]), (vec![0.25, 1.0, 0.5], false));
    }

    #[test]
    fn loss_examples() {
        let a = [Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)];
        let z = [Complex64::new(0.0, 0.0); 2];
        assert_eq!(loss(&a, &a).unwrap(), 0.0);
        assert_eq!(loss(&a, &z).unwrap(), 2.0);
        assert_eq!(loss(&z, &a).unwrap(), 2.0);
        assert!(loss(&a, &z[..1]).is_err());
    }

    #[test]
    fn zero_data_gives_zero_representations() {
        let p = tiny_params(6, 4, 3, 0.05, 1);
        let t = forward_encode(&p, &vec![Complex64::new(0.0, 0.0); 6]).unwrap();
        assert!(t.representations.iter().flatten().all(|&v| v == 0.0));
        assert!(t.degenerate);
        assert!(t.synthesized.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_layer_closed_form() {
        let mut p = tiny_params(6, 4, 1, 0.05, 2);
        p.threshold = 0.01;
        let d: Vec<Complex64> = (0..6).map(|k| Complex64::new(k as f64 * 0.3, 1.0 - k as f64 * 0.1)).collect();
        let t = forward_encode(&p, &d).unwrap();
        let b = apply_adjoint(&p.sensing, p.waveform.as_slice(), &d).unwrap();
        let expected: Vec<f64> = b.iter().map(|v| (0.05 * v.norm() - 0.01).max(0.0)).collect();
        for (a, e) in t.representations[0].iter().zip(&expected) {
            assert!((a - e).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_wrong_data_length() {
        let p = tiny_params(6, 4, 2, 0.05, 3);
        assert!(matches!(
            forward_encode(&p, &[Complex64::new(0.0, 0.0); 5]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(decode(&p, &[0.0; 3]).is_err());
    }

    #[test]
    fn params_validation() {
        let p = tiny_params(6, 4, 2, 0.05, 4);
        assert!((p.threshold - 0.05 * 0.5).abs() < 1e-15);
        assert!(p.check_step_bound(10.0).is_ok());
        assert!(p.check_step_bound(100.0).is_err());
        let mut bad = p.clone();
        bad.layer_count = 0;
        assert!(bad.validate().is_err());
        let mut bad = p;
        bad.threshold = -1.0;
        assert!(bad.validate().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn threshold_is_monotone_and_nonnegative(
                parts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..16),
                tau in 0.0f64..2.0,
                extra in 0.0f64..2.0,
            ) {
                let v: Vec<Complex64> = parts.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
                let lo = phaseless_soft_threshold(&v, tau);
                let hi = phaseless_soft_threshold(&v, tau + extra);
                for (a, b) in lo.iter().zip(&hi) {
                    prop_assert!(*b >= 0.0);
                    prop_assert!(b <= a);
                }
            }

            #[test]
            fn normalized_peak_is_one(v in proptest::collection::vec(0.0f64..10.0, 1..16)) {
                let (out, degenerate) = normalize(&v);
                if !degenerate {
                    prop_assert_eq!(inf_norm(&out), 1.0);
                }
            }
        }
    }
}
