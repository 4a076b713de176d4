//! Scene generators and simulated measurements.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_len, Error, Result};
use crate::forward_model::{apply_forward, SensingMatrix};
use crate::waveform::WaveformCoefficients;

/// Nonnegative reflectivity on a `side x side` row-major pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneImage {
    pub values: Vec<f64>,
    pub side: usize,
}

impl SceneImage {
    pub fn zeros(side: usize) -> Self {
        Self {
            values: vec![0.0; side * side],
            side,
        }
    }

    pub fn from_values(values: Vec<f64>, side: usize) -> Result<Self> {
        check_len("SceneImage::from_values", side * side, values.len())?;
        Ok(Self { values, side })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.side + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.side + col] = v;
    }

    /// Nonzero pixels, used as the foreground mask for contrast.
    pub fn support(&self) -> Vec<bool> {
        self.values.iter().map(|&v| v != 0.0).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Size and placement ranges for random rectangles, scaled from the reference
/// 31-pixel grid (sides in `1..=6`, pixels inside `[3, 28]^2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RectangleRanges {
    pub max_dim: usize,
    pub lo: usize,
    pub hi: usize,
}

impl RectangleRanges {
    pub fn for_side(side: usize) -> Self {
        let scale = side as f64 / 31.0;
        let last = side.saturating_sub(1);
        let lo = ((3.0 * scale).round() as usize).min(last);
        let hi = ((28.0 * scale).round() as usize).clamp(lo, last);
        let max_dim = ((6.0 * scale).round() as usize).clamp(1, hi - lo + 1);
        Self { max_dim, lo, hi }
    }
}

/// One axis-aligned rectangle of unit reflectivity on a zero background.
pub fn gen_random_scene(side: usize, seed: u64) -> SceneImage {
    let ranges = RectangleRanges::for_side(side);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let height = rng.random_range(1..=ranges.max_dim);
    let width = rng.random_range(1..=ranges.max_dim);
    let top = rng.random_range(ranges.lo..=ranges.hi + 1 - height);
    let left = rng.random_range(ranges.lo..=ranges.hi + 1 - width);
    let mut scene = SceneImage::zeros(side);
    for r in top..top + height {
        for c in left..left + width {
            scene.set(r, c, 1.0);
        }
    }
    scene
}

pub const PHANTOM_SIDE: usize = 31;
pub const PHANTOM_RANGE_BINS: [usize; 2] = [15, 17];
pub const PHANTOM_CROSS_RANGE_BINS: [usize; 2] = [10, 12];
/// `(range bin, cross-range bin)` of the weak reflector.
pub const PHANTOM_WEAK_TARGET: (usize, usize) = (12, 17);
pub const PHANTOM_WEAK_AMPLITUDE: f64 = 0.5;

/// Resolution phantom: four unit point targets on range bins 15, 17 and
/// cross-range bins 10, 12, plus a weak 0.5 target at (12, 17). Range bin is
/// the row and cross-range bin the column, both zero-based.
pub fn gen_point_phantom(side: usize) -> Result<SceneImage> {
    if side != PHANTOM_SIDE {
        return Err(Error::Unsupported(format!(
            "the point phantom is defined for a {PHANTOM_SIDE}-pixel side, got {side}"
        )));
    }
    let mut scene = SceneImage::zeros(side);
    for r in PHANTOM_RANGE_BINS {
        for c in PHANTOM_CROSS_RANGE_BINS {
            scene.set(r, c, 1.0);
        }
    }
    let (r, c) = PHANTOM_WEAK_TARGET;
    scene.set(r, c, PHANTOM_WEAK_AMPLITUDE);
    Ok(scene)
}

/// Adds circular complex white Gaussian noise with per-entry variance
/// `||d||^2 / (M 10^{snr/10})`. An infinite SNR returns `d` unchanged.
pub fn add_noise(d: &[Complex64], snr_db: f64, seed: u64) -> Result<Vec<Complex64>> {
    let power: f64 = d.iter().map(|v| v.norm_sqr()).sum();
    if power == 0.0 {
        return Err(Error::ZeroNorm("signal"));
    }
    if snr_db == f64::INFINITY {
        return Ok(d.to_vec());
    }
    let variance = power / (d.len() as f64 * 10f64.powf(snr_db / 10.0));
    let sd = (variance / 2.0).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(d.iter()
        .map(|v| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            v + Complex64::new(re * sd, im * sd)
        })
        .collect())
}

/// Derives an independent per-sample seed (splitmix64 finalizer).
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetMode {
    /// `count` random rectangle scenes drawn from `scene_seed`.
    Training { scene_seed: u64 },
    /// `count` noise realizations of one fixed scene.
    Test { scene: SceneImage },
}

/// Simulated measurements with their ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Vec<Complex64>>,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub noise_seeds: Vec<u64>,
    pub truth_waveform: WaveformCoefficients,
    /// One scene per sample in training mode; a single scene in test mode.
    pub scenes: Vec<SceneImage>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Ground-truth scene of sample `i`.
    pub fn scene_for(&self, i: usize) -> &SceneImage {
        if self.scenes.len() == 1 {
            &self.scenes[0]
        } else {
            &self.scenes[i]
        }
    }
}

/// Simulates `d = diag(w_t) F~ rho + noise` for `count` samples.
pub fn make_dataset(
    sensing: &SensingMatrix,
    side: usize,
    truth: &WaveformCoefficients,
    count: usize,
    mode: &DatasetMode,
    snr_db: Option<f64>,
    noise_seed: u64,
) -> Result<Dataset> {
    check_len("make_dataset pixels", sensing.pixels(), side * side)?;
    let scenes: Vec<SceneImage> = match mode {
        DatasetMode::Training { scene_seed } => (0..count as u64)
            .map(|i| gen_random_scene(side, derive_seed(*scene_seed, i)))
            .collect(),
        DatasetMode::Test { scene } => {
            check_len("make_dataset test scene", sensing.pixels(), scene.values.len())?;
            vec![scene.clone()]
        }
    };
    let noise_seeds: Vec<u64> = (0..count as u64).map(|i| derive_seed(noise_seed, i)).collect();
    let mut samples = Vec::with_capacity(count);
    for i in 0..count {
        let scene = if scenes.len() == 1 { &scenes[0] } else { &scenes[i] };
        let clean = apply_forward(sensing, truth.as_slice(), &scene.values)?;
        samples.push(match snr_db {
            Some(snr) => add_noise(&clean, snr, noise_seeds[i])?,
            None => clean,
        });
    }
    Ok(Dataset {
        samples,
        snr_db,
        noise_seeds,
        truth_waveform: truth.clone(),
        scenes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_scene_basics() {
        assert_eq!(gen_random_scene(31, 9), gen_random_scene(31, 9));
        for seed in 0..1000 {
            let s = gen_random_scene(31, seed);
            let count = s.nonzero_count();
            assert!((1..=36).contains(&count), "seed {seed}: {count}");
            for r in 0..31 {
                for c in 0..31 {
                    if s.get(r, c) != 0.0 {
                        assert!((3..=28).contains(&r) && (3..=28).contains(&c), "seed {seed}");
                        assert_eq!(s.get(r, c), 1.0);
                    }
                }
            }
            assert!(count as f64 / 961.0 <= 36.0 / 961.0);
        }
    }

    #[test]
    fn scaled_ranges() {
        assert_eq!(RectangleRanges::for_side(31), RectangleRanges { max_dim: 6, lo: 3, hi: 28 });
        let small = RectangleRanges::for_side(15);
        assert_eq!(small, RectangleRanges { max_dim: 3, lo: 1, hi: 14 });
        let tiny = RectangleRanges::for_side(3);
        assert!(tiny.hi <= 2 && tiny.max_dim >= 1);
        for seed in 0..200 {
            assert!(gen_random_scene(3, seed).nonzero_count() >= 1);
        }
    }

    #[test]
    fn phantom_layout() {
        let p = gen_point_phantom(31).unwrap();
        assert_eq!(p.nonzero_count(), 5);
        let max = p.values.iter().cloned().fold(0.0, f64::max);
        let min_nonzero = p.values.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        assert_eq!((max, min_nonzero), (1.0, 0.5));
        for r in PHANTOM_RANGE_BINS {
            assert_eq!(p.get(r, 10), p.get(r, 12));
        }
        assert!(gen_point_phantom(15).is_err());
    }

    #[test]
    fn noise_limits_and_seeds() {
        let d: Vec<Complex64> = (0..64).map(|k| Complex64::from_polar(1.0, k as f64)).collect();
        assert_eq!(add_noise(&d, f64::INFINITY, 1).unwrap(), d);
        let a = add_noise(&d, 0.0, 1).unwrap();
        let b = add_noise(&d, 0.0, 2).unwrap();
        assert_ne!(a, b);
        assert_eq!(a, add_noise(&d, 0.0, 1).unwrap());
        assert!(matches!(add_noise(&[Complex64::new(0.0, 0.0)], 0.0, 1), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn empirical_snr_matches_target() {
        let d: Vec<Complex64> = (0..10_000).map(|k| Complex64::from_polar(1.0 + (k % 7) as f64, k as f64 * 0.1)).collect();
        for snr in [-20.0, -10.0, 0.0, 10.0] {
            let noisy = add_noise(&d, snr, 77).unwrap();
            let signal: f64 = d.iter().map(|v| v.norm_sqr()).sum();
            let noise: f64 = noisy.iter().zip(&d).map(|(a, b)| (a - b).norm_sqr()).sum();
            let measured = 10.0 * (signal / noise).log10();
            assert!((measured - snr).abs() < 0.1, "target {snr}, measured {measured}");
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| derive_seed(5, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
