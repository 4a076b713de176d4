//! Transmitted-waveform coefficients: generation, basis synthesis and the
//! unit-modulus projection.

use std::f64::consts::FRAC_PI_4;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

/// Waveform samples `w`, one per `(slow time, frequency)` measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformCoefficients {
    pub values: Vec<Complex64>,
    /// When set, `values` is a length-`I` frequency profile tiled `J` times.
    pub stationary: bool,
}

impl WaveformCoefficients {
    pub fn new(values: Vec<Complex64>) -> Self {
        Self {
            values,
            stationary: false,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.values
    }

    /// Largest deviation of `|w_m|` from one.
    pub fn unit_modulus_defect(&self) -> f64 {
        self.values.iter().map(|w| (w.norm() - 1.0).abs()).fold(0.0, f64::max)
    }
}

/// The four QPSK constellation points `exp(i (2k + 1) pi / 4)`.
pub fn qpsk_symbol(k: u8) -> Complex64 {
    Complex64::from_polar(1.0, (2 * (k % 4) + 1) as f64 * FRAC_PI_4)
}

/// Draws `frequency_count` i.i.d. QPSK symbols and tiles them across
/// `slow_time_count` slow-time samples.
pub fn generate_qpsk(frequency_count: usize, slow_time_count: usize, seed: u64) -> WaveformCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let profile: Vec<Complex64> = (0..frequency_count)
        .map(|_| qpsk_symbol(rng.random_range(0..4u8)))
        .collect();
    let mut values = Vec::with_capacity(frequency_count * slow_time_count);
    for _ in 0..slow_time_count {
        values.extend_from_slice(&profile);
    }
    WaveformCoefficients {
        values,
        stationary: true,
    }
}

/// Unit-modulus samples with i.i.d. uniform phase (no slow-time structure).
pub fn random_unit_modulus(len: usize, seed: u64) -> WaveformCoefficients {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    WaveformCoefficients::new(
        (0..len)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
            .collect(),
    )
}

/// Waveform expressed in a known basis: `w = sum_k c_k phi_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveformBasis {
    pub basis_vectors: Vec<Vec<Complex64>>,
    pub coefficients: Vec<Complex64>,
}

impl WaveformBasis {
    /// The standard basis of `C^M` with the given coefficients.
    pub fn identity(coefficients: Vec<Complex64>) -> Self {
        let m = coefficients.len();
        let basis_vectors = (0..m)
            .map(|k| {
                let mut e = vec![Complex64::new(0.0, 0.0); m];
                e[k] = Complex64::new(1.0, 0.0);
                e
            })
            .collect();
        Self {
            basis_vectors,
            coefficients,
        }
    }
}

pub fn synthesize_from_basis(basis: &WaveformBasis) -> Result<WaveformCoefficients> {
    let first = basis.basis_vectors.first().ok_or(Error::EmptyBasis)?;
    check_len(
        "synthesize_from_basis coefficients",
        basis.basis_vectors.len(),
        basis.coefficients.len(),
    )?;
    let m = first.len();
    let mut values = vec![Complex64::new(0.0, 0.0); m];
    for (phi, c) in basis.basis_vectors.iter().zip(&basis.coefficients) {
        check_len("synthesize_from_basis basis vector", m, phi.len())?;
        for (v, p) in values.iter_mut().zip(phi) {
            *v += c * p;
        }
    }
    Ok(WaveformCoefficients::new(values))
}

/// Entry-wise `w_i / |w_i|`; zero entries map to `1 + 0i`.
pub fn project_unit_modulus(w: &WaveformCoefficients) -> WaveformCoefficients {
    WaveformCoefficients {
        values: project_unit_modulus_slice(&w.values),
        stationary: w.stationary,
    }
}

pub(crate) fn project_unit_modulus_slice(values: &[Complex64]) -> Vec<Complex64> {
    values
        .iter()
        .map(|&v| {
            let r = v.norm();
            if r > 0.0 {
                v / r
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .collect()
}

/// The flat, real all-ones waveform used to initialize training.
pub fn init_all_ones(m: usize) -> WaveformCoefficients {
    WaveformCoefficients::new(vec![Complex64::new(1.0, 0.0); m])
}
