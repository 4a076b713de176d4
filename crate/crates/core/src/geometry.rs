//! Bistatic acquisition geometry: a fixed transmitter, a receiver on a
//! circular orbit, and the (slow-time, frequency, pixel) sampling grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Vec3 = [f64; 3];

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

fn dist(a: &Vec3, b: &Vec3) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

/// Acquisition geometry in SI units (meters, Hz, radians).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagingGeometry {
    pub transmitter_position: Vec3,
    pub receiver_radius: f64,
    pub receiver_height: f64,
    /// Slow-time aperture `[s1, s2)`, radians along the orbit.
    pub slow_time_interval: [f64; 2],
    pub center_frequency: f64,
    pub bandwidth: f64,
    pub speed_of_light: f64,
}

impl Default for ImagingGeometry {
    fn default() -> Self {
        Self {
            transmitter_position: [11_200.0, 11_200.0, 200.0],
            receiver_radius: 7_000.0,
            receiver_height: 6_500.0,
            slow_time_interval: [0.0, 2.0 * PI],
            center_frequency: 760e6,
            bandwidth: 8e6,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }
}

impl ImagingGeometry {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if !(self.receiver_radius > 0.0) {
            return bad("receiver_radius must be positive");
        }
        if !(self.bandwidth > 0.0) {
            return bad("bandwidth must be positive");
        }
        if !(self.slow_time_interval[0] < self.slow_time_interval[1]) {
            return bad("slow_time_interval must satisfy s1 < s2");
        }
        if !(self.speed_of_light > 0.0) {
            return bad("speed_of_light must be positive");
        }
        if !(self.center_frequency > self.bandwidth / 2.0) {
            return bad("center_frequency must exceed half the bandwidth");
        }
        Ok(())
    }

    /// Receiver position on its circular orbit at slow time `s`.
    pub fn receiver_position(&self, s: f64) -> Vec3 {
        [
            self.receiver_radius * s.cos(),
            self.receiver_radius * s.sin(),
            self.receiver_height,
        ]
    }

    /// Transmitter-to-scatterer plus scatterer-to-receiver path length.
    pub fn bistatic_range(&self, s: f64, x: &Vec3) -> f64 {
        dist(&self.transmitter_position, x) + dist(&self.receiver_position(s), x)
    }
}

/// Sampled slow times, angular frequencies, and flat-ground pixel centers.
///
/// Measurement index is `m = j * I + i` (slow time `j` outer, frequency `i`
/// inner). Pixel index is row-major: `n = row * side + col`, with the column
/// along the x axis and the row along the y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    pub geometry: ImagingGeometry,
    pub slow_time_samples: Vec<f64>,
    /// Angular frequencies, rad/s.
    pub frequency_samples: Vec<f64>,
    pub pixel_positions: Vec<Vec3>,
    pub scene_extent: f64,
    pub pixels_per_side: usize,
}

impl SamplingGrid {
    pub fn frequency_count(&self) -> usize {
        self.frequency_samples.len()
    }

    pub fn slow_time_count(&self) -> usize {
        self.slow_time_samples.len()
    }

    /// `M = I * J`.
    pub fn measurement_count(&self) -> usize {
        self.frequency_count() * self.slow_time_count()
    }

    /// `N`.
    pub fn pixel_count(&self) -> usize {
        self.pixel_positions.len()
    }

    /// `(slow time, angular frequency)` of measurement `m`.
    pub fn measurement(&self, m: usize) -> (f64, f64) {
        let i_count = self.frequency_count();
        (
            self.slow_time_samples[m / i_count],
            self.frequency_samples[m % i_count],
        )
    }

    /// SHA-256 over every sample and geometry field, as lowercase hex.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        let mut put = |v: f64| h.update(v.to_le_bytes());
        let g = &self.geometry;
        g.transmitter_position.iter().for_each(|&v| put(v));
        put(g.receiver_radius);
        put(g.receiver_height);
        put(g.speed_of_light);
        self.slow_time_samples.iter().for_each(|&v| put(v));
        self.frequency_samples.iter().for_each(|&v| put(v));
        for p in &self.pixel_positions {
            p.iter().for_each(|&v| put(v));
        }
        hex::encode(h.finalize())
    }
}

/// Builds the uniform sampling grid.
///
/// Slow time covers `[s1, s2)` without the endpoint; frequency covers the closed
/// band `[fc - B/2, fc + B/2]` (a single sample sits at `fc`). Pixel centers
/// tile a square of side `scene_extent` centered at the origin.
pub fn make_grid(
    geometry: &ImagingGeometry,
    pixels_per_side: usize,
    slow_time_count: usize,
    frequency_count: usize,
    scene_extent: f64,
) -> Result<SamplingGrid> {
    geometry.validate()?;
    if pixels_per_side == 0 || slow_time_count == 0 || frequency_count == 0 {
        return Err(Error::InvalidConfig(
            "pixel, slow-time and frequency counts must all be at least 1".into(),
        ));
    }
    if !(scene_extent > 0.0) {
        return Err(Error::InvalidConfig("scene_extent must be positive".into()));
    }

    let [s1, s2] = geometry.slow_time_interval;
    let ds = (s2 - s1) / slow_time_count as f64;
    let slow_time_samples = (0..slow_time_count).map(|j| s1 + j as f64 * ds).collect();

    let f_lo = geometry.center_frequency - geometry.bandwidth / 2.0;
    let frequency_samples = if frequency_count == 1 {
        vec![2.0 * PI * geometry.center_frequency]
    } else {
        let df = geometry.bandwidth / (frequency_count - 1) as f64;
        (0..frequency_count)
            .map(|i| 2.0 * PI * (f_lo + i as f64 * df))
            .collect()
    };

    let spacing = scene_extent / pixels_per_side as f64;
    let coord = |k: usize| -scene_extent / 2.0 + (k as f64 + 0.5) * spacing;
    let mut pixel_positions = Vec::with_capacity(pixels_per_side * pixels_per_side);
    for row in 0..pixels_per_side {
        for col in 0..pixels_per_side {
            pixel_positions.push([coord(col), coord(row), 0.0]);
        }
    }

    Ok(SamplingGrid {
        geometry: geometry.clone(),
        slow_time_samples,
        frequency_samples,
        pixel_positions,
        scene_extent,
        pixels_per_side,
    })
}
