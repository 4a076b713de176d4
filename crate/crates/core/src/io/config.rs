//! JSON run configuration. Lengths are given in km, frequencies in MHz and
//! the scene extent in m; everything is converted to SI on load.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_model::DEFAULT_MAX_ENTRIES;
use crate::geometry::{make_grid, ImagingGeometry, SamplingGrid, SPEED_OF_LIGHT};
use crate::gradcheck::GradcheckSettings;
use crate::network::{DEFAULT_LAYERS, DEFAULT_REGULARIZATION, DEFAULT_STEP_SIZE};
use crate::scene::{derive_seed, gen_point_phantom, gen_random_scene, SceneImage, PHANTOM_SIDE};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryConfig {
    pub transmitter_position_km: [f64; 3],
    pub receiver_radius_km: f64,
    pub receiver_height_km: f64,
    pub slow_time_interval_rad: [f64; 2],
    pub center_frequency_mhz: f64,
    pub bandwidth_mhz: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self {
            transmitter_position_km: [11.2, 11.2, 0.2],
            receiver_radius_km: 7.0,
            receiver_height_km: 6.5,
            slow_time_interval_rad: [0.0, 2.0 * PI],
            center_frequency_mhz: 760.0,
            bandwidth_mhz: 8.0,
        }
    }
}

impl GeometryConfig {
    pub fn to_geometry(&self) -> ImagingGeometry {
        ImagingGeometry {
            transmitter_position: self.transmitter_position_km.map(|v| v * 1e3),
            receiver_radius: self.receiver_radius_km * 1e3,
            receiver_height: self.receiver_height_km * 1e3,
            slow_time_interval: self.slow_time_interval_rad,
            center_frequency: self.center_frequency_mhz * 1e6,
            bandwidth: self.bandwidth_mhz * 1e6,
            speed_of_light: SPEED_OF_LIGHT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub pixels_per_side: usize,
    pub slow_time_samples: usize,
    pub frequency_samples: usize,
    pub scene_extent_m: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            pixels_per_side: 31,
            slow_time_samples: 128,
            frequency_samples: 64,
            scene_extent_m: 620.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub layers: usize,
    pub step_size: f64,
    pub regularization: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            layers: DEFAULT_LAYERS,
            step_size: DEFAULT_STEP_SIZE,
            regularization: DEFAULT_REGULARIZATION,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestScene {
    /// The five-target resolution phantom (31-pixel grids only).
    Phantom,
    /// One random rectangle drawn from the test-scene seed.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// SNR levels in dB; an empty list means noiseless data.
    pub snr_db: Vec<f64>,
    pub training_samples: usize,
    pub test_samples: usize,
    pub test_scene: TestScene,
    /// Base seed; every generator seed is derived from it (see [`Seeds`]).
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            snr_db: vec![-10.0],
            training_samples: 10,
            test_samples: 20,
            test_scene: TestScene::Phantom,
            seed: 1,
        }
    }
}

/// Generator seeds derived from the simulation base seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub truth_waveform: u64,
    pub training_scenes: u64,
    pub training_noise: u64,
    pub test_scene: u64,
    pub test_noise: u64,
    pub shuffle: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub simulation: SimulationConfig,
    pub gradcheck: GradcheckSettings,
    /// Refuse to build sensing matrices with more entries than this.
    pub max_matrix_entries: usize,
    pub output_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryConfig::default(),
            grid: GridConfig::default(),
            network: NetworkConfig::default(),
            train: TrainConfig::default(),
            simulation: SimulationConfig::default(),
            gradcheck: GradcheckSettings::default(),
            max_matrix_entries: DEFAULT_MAX_ENTRIES,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    /// Parses either a bare config or a run manifest (whose `config` field is used).
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let config_value = match value.get("manifest_version") {
            Some(_) => value
                .get("config")
                .cloned()
                .ok_or_else(|| Error::InvalidConfig("manifest has no config field".into()))?,
            None => value,
        };
        let config: Self = serde_json::from_value(config_value)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.to_geometry().validate()?;
        let g = &self.grid;
        if g.pixels_per_side == 0 || g.slow_time_samples == 0 || g.frequency_samples == 0 {
            return Err(Error::InvalidConfig("grid counts must be at least 1".into()));
        }
        if !(g.scene_extent_m > 0.0) {
            return Err(Error::InvalidConfig("scene_extent_m must be positive".into()));
        }
        let n = &self.network;
        if n.layers == 0 || !(n.step_size > 0.0) || !(n.regularization >= 0.0) {
            return Err(Error::InvalidConfig(
                "network needs layers >= 1, step_size > 0 and regularization >= 0".into(),
            ));
        }
        self.train.validate()?;
        if self.simulation.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::InvalidConfig("snr_db entries must be finite".into()));
        }
        if self.simulation.test_scene == TestScene::Phantom && g.pixels_per_side != PHANTOM_SIDE {
            return Err(Error::InvalidConfig(format!(
                "the phantom test scene needs pixels_per_side = {PHANTOM_SIDE}"
            )));
        }
        Ok(())
    }

    pub fn make_grid(&self) -> Result<SamplingGrid> {
        make_grid(
            &self.geometry.to_geometry(),
            self.grid.pixels_per_side,
            self.grid.slow_time_samples,
            self.grid.frequency_samples,
            self.grid.scene_extent_m,
        )
    }

    pub fn seeds(&self) -> Seeds {
        let base = self.simulation.seed;
        Seeds {
            truth_waveform: derive_seed(base, 0),
            training_scenes: derive_seed(base, 1),
            training_noise: derive_seed(base, 2),
            test_scene: derive_seed(base, 3),
            test_noise: derive_seed(base, 4),
            shuffle: self.train.seed,
        }
    }

    /// SNR levels as options, `None` meaning noiseless.
    pub fn snr_levels(&self) -> Vec<Option<f64>> {
        if self.simulation.snr_db.is_empty() {
            vec![None]
        } else {
            self.simulation.snr_db.iter().map(|&s| Some(s)).collect()
        }
    }

    pub fn test_scene(&self) -> Result<SceneImage> {
        match self.simulation.test_scene {
            TestScene::Phantom => gen_point_phantom(self.grid.pixels_per_side),
            TestScene::Random => Ok(gen_random_scene(self.grid.pixels_per_side, self.seeds().test_scene)),
        }
    }
}

/// File-name tag for an SNR level, e.g. `snr-10db` or `noiseless`.
pub fn snr_tag(snr_db: Option<f64>) -> String {
    match snr_db {
        Some(s) => format!("snr{s}db"),
        None => "noiseless".to_string(),
    }
}
