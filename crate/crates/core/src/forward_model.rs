//! The sensing matrix `F~`, the forward map `diag(w) F~ rho`, its adjoint
//! (matched-filter backprojection), and the encoder weight matrix
//! `Q = I - alpha F~^H diag(|w|^2) F~`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{check_len, Error, Result};
use crate::geometry::SamplingGrid;
use crate::matrix::CMatrix;

/// Default cap on `M * N` for sensing matrices (about 0.5 GiB of entries).
pub const DEFAULT_MAX_ENTRIES: usize = 1 << 25;

/// Sampled phase kernels: entry `(m, n) = exp(-i (omega_m / c0) R(s_m, x_n))`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensingMatrix {
    pub entries: CMatrix,
    pub grid_fingerprint: String,
    pub frequency_count: usize,
    pub slow_time_count: usize,
}

impl SensingMatrix {
    /// Wraps an arbitrary matrix, e.g. one loaded from disk or a synthetic test
    /// operator. The whole matrix is treated as one slow-time block.
    pub fn from_matrix(entries: CMatrix, grid_fingerprint: impl Into<String>) -> Self {
        let rows = entries.rows();
        Self {
            entries,
            grid_fingerprint: grid_fingerprint.into(),
            frequency_count: rows,
            slow_time_count: 1,
        }
    }

    pub fn with_blocks(mut self, frequency_count: usize, slow_time_count: usize) -> Result<Self> {
        check_len(
            "SensingMatrix::with_blocks",
            self.entries.rows(),
            frequency_count * slow_time_count,
        )?;
        self.frequency_count = frequency_count;
        self.slow_time_count = slow_time_count;
        Ok(self)
    }

    /// `M`.
    pub fn measurements(&self) -> usize {
        self.entries.rows()
    }

    /// `N`.
    pub fn pixels(&self) -> usize {
        self.entries.cols()
    }
}

pub fn build_sensing_matrix(grid: &SamplingGrid, max_entries: usize) -> Result<SensingMatrix> {
    let rows = grid.measurement_count();
    let cols = grid.pixel_count();
    if rows.saturating_mul(cols) > max_entries {
        return Err(Error::MatrixTooLarge {
            rows,
            cols,
            cap: max_entries,
        });
    }
    let geom = &grid.geometry;
    let c0 = geom.speed_of_light;
    let entries = CMatrix::from_fn(rows, cols, |m, n| {
        let (s, omega) = grid.measurement(m);
        let range = geom.bistatic_range(s, &grid.pixel_positions[n]);
        Complex64::from_polar(1.0, -omega / c0 * range)
    });
    Ok(SensingMatrix {
        entries,
        grid_fingerprint: grid.fingerprint(),
        frequency_count: grid.frequency_count(),
        slow_time_count: grid.slow_time_count(),
    })
}

/// `diag(w) F~ rho`.
pub fn apply_forward(
    sensing: &SensingMatrix,
    waveform: &[Complex64],
    rho: &[f64],
) -> Result<Vec<Complex64>> {
    check_len("apply_forward waveform", sensing.measurements(), waveform.len())?;
    let mut out = sensing.entries.mul_real_vec(rho)?;
    for (o, w) in out.iter_mut().zip(waveform) {
        *o *= w;
    }
    Ok(out)
}

/// `F~^H diag(conj(w)) d`, the matched-filter backprojection.
pub fn apply_adjoint(
    sensing: &SensingMatrix,
    waveform: &[Complex64],
    data: &[Complex64],
) -> Result<Vec<Complex64>> {
    check_len("apply_adjoint waveform", sensing.measurements(), waveform.len())?;
    check_len("apply_adjoint data", sensing.measurements(), data.len())?;
    let filtered: Vec<Complex64> = waveform.iter().zip(data).map(|(w, d)| w.conj() * d).collect();
    sensing.entries.adjoint_mul_vec(&filtered)
}

/// Matched-filter image `|F~^H diag(conj(w)) d|` averaged over `samples` and
/// scaled to unit peak. An all-ones `w` gives the image without matched filtering.
pub fn backprojection_image(sensing: &SensingMatrix, waveform: &[Complex64], samples: &[Vec<Complex64>]) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; sensing.pixels()];
    for d in samples {
        for (a, b) in acc.iter_mut().zip(apply_adjoint(sensing, waveform, d)?) {
            *a += b.norm();
        }
    }
    let peak = acc.iter().cloned().fold(0.0, f64::max);
    if peak == 0.0 {
        return Err(Error::ZeroNorm("backprojection image"));
    }
    acc.iter_mut().for_each(|v| *v /= peak);
    Ok(acc)
}

/// Encoder weight matrix `Q` together with the step size used to build it.
#[derive(Debug, Clone, PartialEq)]
pub struct GramOperator {
    pub entries: CMatrix,
    pub step_size: f64,
}

impl GramOperator {
    pub fn apply_real(&self, rho: &[f64]) -> Result<Vec<Complex64>> {
        self.entries.mul_real_vec(rho)
    }
}

/// `Q = I - alpha F~^H diag(|w|^2) F~`.
///
/// Evaluated column-pair by column-pair on the upper triangle and mirrored,
/// so the result is exactly Hermitian.
pub fn build_gram(sensing: &SensingMatrix, waveform: &[Complex64], alpha: f64) -> Result<GramOperator> {
    check_len("build_gram waveform", sensing.measurements(), waveform.len())?;
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidConfig(format!("step size must be nonnegative, got {alpha}")));
    }
    let big_m = sensing.measurements();
    let n = sensing.pixels();

    // Columns of diag(|w|) F~ stored contiguously.
    let weights: Vec<f64> = waveform.iter().map(|w| w.norm()).collect();
    let f = &sensing.entries;
    let columns: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .map(|c| (0..big_m).map(|m| f.get(m, c) * weights[m]).collect())
        .collect();

    const BLOCK: usize = 16;
    let upper: Vec<Vec<Complex64>> = (0..n)
        .into_par_iter()
        .step_by(BLOCK)
        .map(|start| {
            let end = (start + BLOCK).min(n);
            let mut out = vec![Complex64::new(0.0, 0.0); (end - start) * n];
            for j in start..n {
                let cj = &columns[j];
                for i in start..end.min(j + 1) {
                    let ci = &columns[i];
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (a, b) in ci.iter().zip(cj) {
                        acc += a.conj() * b;
                    }
                    out[(i - start) * n + j] = acc;
                }
            }
            out
        })
        .collect();

    let mut q = CMatrix::identity(n);
    for (block_idx, block) in upper.iter().enumerate() {
        let start = block_idx * BLOCK;
        for (offset, row) in block.chunks(n).enumerate() {
            let i = start + offset;
            for j in i..n {
                let g = row[j];
                let qij = q.get(i, j) - alpha * g;
                q.set(i, j, qij);
                if i != j {
                    q.set(j, i, qij.conj());
                } else {
                    q.set(i, i, Complex64::new(qij.re, 0.0));
                }
            }
        }
    }
    Ok(GramOperator {
        entries: q,
        step_size: alpha,
    })
}

/// Power-iteration estimate of `lambda_max(F~^H F~)`.
pub fn max_eigenvalue_estimate(sensing: &SensingMatrix, tolerance: f64) -> Result<f64> {
    max_eigenvalue_with_cap(sensing, tolerance, 10_000)
}

pub fn max_eigenvalue_with_cap(sensing: &SensingMatrix, tolerance: f64, max_iterations: usize) -> Result<f64> {
    let n = sensing.pixels();
    if n == 0 || sensing.measurements() == 0 {
        return Err(Error::ZeroNorm("sensing matrix"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_e16e);
    let mut v: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(rng.random::<f64>() + 0.5, rng.random::<f64>() - 0.5))
        .collect();
    let mut estimate = 0.0f64;
    let mut last_change = f64::INFINITY;
    for _ in 0..max_iterations {
        let norm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::ZeroNorm("sensing matrix"));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let fv = sensing.entries.mul_vec(&v)?;
        let next = fv.iter().map(|x| x.norm_sqr()).sum::<f64>();
        let gv = sensing.entries.adjoint_mul_vec(&fv)?;
        last_change = (next - estimate).abs() / next.max(f64::MIN_POSITIVE);
        estimate = next;
        v = gv;
        if last_change <= tolerance {
            return Ok(estimate);
        }
    }
    Err(Error::NonConvergence {
        iterations: max_iterations,
        last_change,
    })
}
