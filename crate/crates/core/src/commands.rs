//! Implementations of the CLI subcommands. Each writes its artifacts and a
//! manifest into the configured output directory.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cli::{Command, InputArgs};
use crate::error::{check_len, Error, Result};
use crate::forward_model::{
    backprojection_image, build_gram, build_sensing_matrix, max_eigenvalue_estimate, GramOperator, SensingMatrix,
};
use crate::geometry::SamplingGrid;
use crate::gradcheck::run_gradcheck;
use crate::io::config::{snr_tag, RunConfig, TestScene};
use crate::io::manifest::Manifest;
use crate::io::{cmpx, pgm, tables, write_atomic};
use crate::metrics::{cross_section, data_mismatch, image_error, mean_report, report, Axis, MetricReport};
use crate::network::{forward_encode, NetworkParams};
use crate::scene::{derive_seed, make_dataset, Dataset, DatasetMode, SceneImage, PHANTOM_CROSS_RANGE_BINS, PHANTOM_RANGE_BINS};
use crate::trainer::{train, Evaluation};
use crate::waveform::{generate_qpsk, init_all_ones, WaveformCoefficients};

const EIGEN_TOLERANCE: f64 = 1e-6;

/// Learned scalars written next to the learned waveform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedParams {
    pub threshold: f64,
    pub step_size: f64,
    pub regularization: f64,
    pub layers: usize,
    pub waveform_file: String,
}

struct Model {
    grid: SamplingGrid,
    sensing: Arc<SensingMatrix>,
    gram: Arc<GramOperator>,
}

/// Builds `F~` and `Q` for a unit-modulus waveform.
fn build_model(config: &RunConfig) -> Result<Model> {
    let grid = config.make_grid()?;
    let sensing = Arc::new(build_sensing_matrix(&grid, config.max_matrix_entries)?);
    let ones = init_all_ones(sensing.measurements());
    let gram = Arc::new(build_gram(&sensing, ones.as_slice(), config.network.step_size)?);
    Ok(Model { grid, sensing, gram })
}

fn check_step_size(config: &RunConfig, sensing: &SensingMatrix) -> Result<f64> {
    let lambda_max = max_eigenvalue_estimate(sensing, EIGEN_TOLERANCE)?;
    if config.network.step_size * lambda_max > 1.0 + 1e-9 {
        return Err(Error::InvalidConfig(format!(
            "step_size {} exceeds 1/lambda_max = {:e}",
            config.network.step_size,
            1.0 / lambda_max
        )));
    }
    Ok(lambda_max)
}

fn params_for(config: &RunConfig, sensing: Arc<SensingMatrix>, gram: Arc<GramOperator>, w: WaveformCoefficients) -> Result<NetworkParams> {
    NetworkParams::new(sensing, gram, w, config.network.regularization, config.network.layers)
}

fn truth_waveform(config: &RunConfig) -> WaveformCoefficients {
    generate_qpsk(config.grid.frequency_samples, config.grid.slow_time_samples, config.seeds().truth_waveform)
}

/// Training and test sets for SNR level `level` of the configuration. Every
/// level draws its own scenes and noise.
fn simulate_level(config: &RunConfig, sensing: &SensingMatrix, level: usize) -> Result<(Dataset, Dataset)> {
    let seeds = config.seeds();
    let snr = config.snr_levels()[level];
    let truth = truth_waveform(config);
    let side = config.grid.pixels_per_side;
    let training = make_dataset(
        sensing,
        side,
        &truth,
        config.simulation.training_samples,
        &DatasetMode::Training {
            scene_seed: derive_seed(seeds.training_scenes, level as u64),
        },
        snr,
        derive_seed(seeds.training_noise, level as u64),
    )?;
    let test = make_dataset(
        sensing,
        side,
        &truth,
        config.simulation.test_samples,
        &DatasetMode::Test {
            scene: config.test_scene()?,
        },
        snr,
        derive_seed(seeds.test_noise, level as u64),
    )?;
    Ok((training, test))
}

fn output_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    Ok(dir)
}

/// Sensing matrix from `path`, or rebuilt from the configuration.
fn sensing_from(path: Option<&Path>, config: &RunConfig) -> Result<Arc<SensingMatrix>> {
    match path {
        None => Ok(Arc::new(build_sensing_matrix(&config.make_grid()?, config.max_matrix_entries)?)),
        Some(p) => {
            let entries = cmpx::load_matrix(p)?;
            let (i, j) = (config.grid.frequency_samples, config.grid.slow_time_samples);
            let sensing = SensingMatrix::from_matrix(entries, format!("file:{}", p.display()));
            if sensing.measurements() == i * j {
                Ok(Arc::new(sensing.with_blocks(i, j)?))
            } else {
                Ok(Arc::new(sensing))
            }
        }
    }
}

fn waveform_from(path: Option<&Path>, m: usize) -> Result<WaveformCoefficients> {
    match path {
        None => Ok(init_all_ones(m)),
        Some(p) => {
            let values = cmpx::load_vector(p)?;
            check_len("waveform file length", m, values.len())?;
            Ok(WaveformCoefficients::new(values))
        }
    }
}

fn load_samples(path: &Path, m: usize) -> Result<Vec<Vec<Complex64>>> {
    let rows = cmpx::load_rows(path)?;
    if rows.is_empty() {
        return Err(Error::InvalidConfig(format!("{} holds no measurement vectors", path.display())));
    }
    for r in &rows {
        check_len("measurement vector length", m, r.len())?;
    }
    Ok(rows)
}

fn mean_image(images: &[Vec<f64>], side: usize) -> Result<SceneImage> {
    let mut acc = vec![0.0; side * side];
    for img in images {
        check_len("image size", acc.len(), img.len())?;
        acc.iter_mut().zip(img).for_each(|(a, v)| *a += v);
    }
    acc.iter_mut().for_each(|v| *v /= images.len().max(1) as f64);
    SceneImage::from_values(acc, side)
}

fn side_of(pixels: usize) -> Result<usize> {
    let side = (pixels as f64).sqrt().round() as usize;
    if side * side != pixels {
        return Err(Error::InvalidConfig(format!("{pixels} pixels do not form a square image")));
    }
    Ok(side)
}

/// Normalized reconstructions of every sample.
fn reconstruct_all(params: &NetworkParams, samples: &[Vec<Complex64>]) -> Result<Vec<Vec<f64>>> {
    samples
        .iter()
        .map(|d| forward_encode(params, d).map(|t| t.final_normalized))
        .collect()
}

pub fn execute(command: &Command, config: &RunConfig) -> Result<String> {
    let started = Instant::now();
    let dir = output_dir(config)?;
    let mut manifest = Manifest::new(command.name(), config);
    let outcome = match command {
        Command::MakeModel => make_model(config, &dir, &mut manifest),
        Command::GenData => gen_data(config, &dir, &mut manifest),
        Command::Reconstruct { input, threshold } => reconstruct(config, input, *threshold, &dir, &mut manifest),
        Command::Backproject { input } => backproject(config, input, &dir, &mut manifest),
        Command::Train { data, test_data } => train_command(config, data.as_deref(), test_data.as_deref(), &dir, &mut manifest),
        Command::Gradcheck => gradcheck(config, &dir, &mut manifest),
        Command::Evaluate { input, threshold } => evaluate(config, input, *threshold, &dir, &mut manifest),
    };
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    // Failed gradient checks still leave their report behind.
    if outcome.is_ok() || matches!(outcome, Err(Error::GradientCheckFailed { .. })) {
        manifest.save(&dir)?;
    }
    outcome
}

fn make_model(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let model = build_model(config)?;
    let lambda_max = check_step_size(config, &model.sensing)?;
    manifest.grid_fingerprint = Some(model.grid.fingerprint());
    manifest.values.insert("lambda_max".into(), lambda_max);
    manifest.record("sensing.cmpx", cmpx::save_matrix(&dir.join("sensing.cmpx"), &model.sensing.entries)?);
    manifest.record("gram.cmpx", cmpx::save_matrix(&dir.join("gram.cmpx"), &model.gram.entries)?);
    Ok(format!(
        "sensing matrix {}x{}, lambda_max {lambda_max:.6e}",
        model.sensing.measurements(),
        model.sensing.pixels()
    ))
}

fn gen_data(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let grid = config.make_grid()?;
    let sensing = build_sensing_matrix(&grid, config.max_matrix_entries)?;
    manifest.grid_fingerprint = Some(grid.fingerprint());
    let truth = truth_waveform(config);
    manifest.record("truth_waveform.cmpx", cmpx::save_vector(&dir.join("truth_waveform.cmpx"), truth.as_slice())?);
    let levels = config.snr_levels();
    for (level, snr) in levels.iter().enumerate() {
        let (training, test) = simulate_level(config, &sensing, level)?;
        let tag = snr_tag(*snr);
        let scenes: Vec<Vec<f64>> = training.scenes.iter().map(|s| s.values.clone()).collect();
        for (name, hash) in [
            (format!("train_{tag}.cmpx"), cmpx::save_rows(&dir.join(format!("train_{tag}.cmpx")), &training.samples)?),
            (format!("test_{tag}.cmpx"), cmpx::save_rows(&dir.join(format!("test_{tag}.cmpx")), &test.samples)?),
            (
                format!("train_scenes_{tag}.cmpx"),
                cmpx::save_real_rows(&dir.join(format!("train_scenes_{tag}.cmpx")), &scenes)?,
            ),
        ] {
            manifest.record(&name, hash);
        }
    }
    let scene = config.test_scene()?;
    manifest.record("test_scene.pgm", pgm::export_image_pgm(&scene, &dir.join("test_scene.pgm"))?);
    manifest.record(
        "test_scene.cmpx",
        cmpx::save_real_rows(&dir.join("test_scene.cmpx"), std::slice::from_ref(&scene.values))?,
    );
    Ok(format!(
        "{} SNR level(s), {} training and {} test samples each",
        levels.len(),
        config.simulation.training_samples,
        config.simulation.test_samples
    ))
}

fn reconstruct(config: &RunConfig, input: &InputArgs, threshold: Option<f64>, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sensing = sensing_from(input.sensing.as_deref(), config)?;
    let samples = load_samples(&input.data, sensing.measurements())?;
    let w = waveform_from(input.waveform.as_deref(), sensing.measurements())?;
    let gram = Arc::new(build_gram(&sensing, w.as_slice(), config.network.step_size)?);
    let mut params = params_for(config, sensing.clone(), gram, w)?;
    if let Some(t) = threshold {
        params.threshold = t;
        params.validate()?;
    }
    let images = reconstruct_all(&params, &samples)?;
    let side = side_of(sensing.pixels())?;
    let mean = mean_image(&images, side)?;
    manifest.record("reconstruction.cmpx", cmpx::save_real_rows(&dir.join("reconstruction.cmpx"), &images)?);
    manifest.record("reconstruction_mean.pgm", pgm::export_image_pgm(&mean, &dir.join("reconstruction_mean.pgm"))?);
    manifest.record(
        "reconstruction_mean.csv",
        tables::write_rows(&dir.join("reconstruction_mean.csv"), &tables::image_rows(&mean))?,
    );
    manifest.values.insert("threshold".into(), params.threshold);
    Ok(format!("reconstructed {} sample(s) at threshold {:e}", samples.len(), params.threshold))
}

fn backproject(config: &RunConfig, input: &InputArgs, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sensing = sensing_from(input.sensing.as_deref(), config)?;
    let samples = load_samples(&input.data, sensing.measurements())?;
    let w = waveform_from(input.waveform.as_deref(), sensing.measurements())?;
    let side = side_of(sensing.pixels())?;
    let image = SceneImage::from_values(backprojection_image(&sensing, w.as_slice(), &samples)?, side)?;
    manifest.record("backprojection.pgm", pgm::export_image_pgm(&image, &dir.join("backprojection.pgm"))?);
    manifest.record(
        "backprojection.csv",
        tables::write_rows(&dir.join("backprojection.csv"), &tables::image_rows(&image))?,
    );
    Ok(format!("backprojected {} sample(s)", samples.len()))
}

fn train_command(
    config: &RunConfig,
    data: Option<&Path>,
    test_data: Option<&Path>,
    dir: &Path,
    manifest: &mut Manifest,
) -> Result<String> {
    let model = build_model(config)?;
    let lambda_max = check_step_size(config, &model.sensing)?;
    manifest.grid_fingerprint = Some(model.grid.fingerprint());
    manifest.values.insert("lambda_max".into(), lambda_max);
    let m = model.sensing.measurements();
    let truth = truth_waveform(config);
    let (simulated_train, simulated_test) = if data.is_none() || test_data.is_none() {
        let (a, b) = simulate_level(config, &model.sensing, 0)?;
        (Some(a), Some(b))
    } else {
        (None, None)
    };
    let training = match data {
        Some(p) => load_samples(p, m)?,
        None => simulated_train.map(|d| d.samples).unwrap_or_default(),
    };
    let test = match test_data {
        Some(p) => load_samples(p, m)?,
        None => simulated_test.map(|d| d.samples).unwrap_or_default(),
    };
    let scene = config.test_scene()?;
    let params = params_for(config, model.sensing.clone(), model.gram.clone(), init_all_ones(m))?;
    let evaluation = Evaluation {
        samples: &test,
        scene: &scene,
        truth_waveform: truth.as_slice(),
    };
    let record = train(&params, &training, &config.train, Some(truth.as_slice()), Some(&evaluation))?;

    manifest.record("training.csv", tables::write_rows(&dir.join("training.csv"), &tables::training_rows(&record))?);
    let learned = &record.final_params;
    manifest.record(
        "learned_waveform.cmpx",
        cmpx::save_vector(&dir.join("learned_waveform.cmpx"), learned.waveform.as_slice())?,
    );
    for (epoch, w) in &record.snapshots {
        let name = format!("waveform_epoch{epoch}.cmpx");
        manifest.record(&name, cmpx::save_vector(&dir.join(&name), w.as_slice())?);
    }
    let side = config.grid.pixels_per_side;
    for (name, p) in [("initial_reconstruction.pgm", &params), ("final_reconstruction.pgm", learned)] {
        let mean = mean_image(&reconstruct_all(p, &test)?, side)?;
        manifest.record(name, pgm::export_image_pgm(&mean, &dir.join(name))?);
    }
    let summary = LearnedParams {
        threshold: learned.threshold,
        step_size: learned.step_size,
        regularization: learned.regularization,
        layers: learned.layer_count,
        waveform_file: "learned_waveform.cmpx".into(),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    write_atomic(&dir.join("learned_params.json"), text.as_bytes())?;
    manifest.record("learned_params.json", crate::io::sha256_hex(text.as_bytes()));
    manifest.values.insert("final_threshold".into(), learned.threshold);
    let last = record.epochs.last().unwrap_or(&record.initial);
    if let Some(e) = last.waveform_error {
        manifest.values.insert("final_waveform_error".into(), e);
    }
    Ok(format!(
        "trained {} epoch(s): waveform error {:.4} -> {:.4}, threshold {:e}",
        record.epochs.len(),
        record.initial.waveform_error.unwrap_or(f64::NAN),
        last.waveform_error.unwrap_or(f64::NAN),
        learned.threshold
    ))
}

fn gradcheck(config: &RunConfig, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let grid = config.make_grid()?;
    let sensing = Arc::new(build_sensing_matrix(&grid, config.max_matrix_entries)?);
    check_step_size(config, &sensing)?;
    manifest.grid_fingerprint = Some(grid.fingerprint());
    let settings = &config.gradcheck;
    let report = run_gradcheck(
        &sensing,
        config.network.step_size,
        config.network.regularization,
        config.network.layers,
        config.simulation.seed,
        settings,
    )?;
    manifest.record("gradcheck.csv", tables::write_rows(&dir.join("gradcheck.csv"), &tables::gradcheck_rows(&report))?);
    let (worst_w, worst_tau) = report.worst();
    manifest.values.insert("worst_waveform_error".into(), worst_w);
    manifest.values.insert("worst_threshold_error".into(), worst_tau);
    let failed = report.cases.iter().filter(|c| !c.passes(report.tolerance)).count()
        + settings.cases.saturating_sub(report.cases.len());
    if failed > 0 {
        return Err(Error::GradientCheckFailed {
            failed,
            total: settings.cases,
            worst: worst_w.max(worst_tau),
        });
    }
    Ok(format!(
        "{} cases within {:e} (worst: waveform {worst_w:e}, threshold {worst_tau:e}; {} seeds skipped)",
        report.cases.len(),
        report.tolerance,
        report.skipped.len()
    ))
}

fn evaluate(config: &RunConfig, input: &InputArgs, threshold: Option<f64>, dir: &Path, manifest: &mut Manifest) -> Result<String> {
    let sensing = sensing_from(input.sensing.as_deref(), config)?;
    let samples = load_samples(&input.data, sensing.measurements())?;
    let w = waveform_from(input.waveform.as_deref(), sensing.measurements())?;
    let gram = Arc::new(build_gram(&sensing, w.as_slice(), config.network.step_size)?);
    let mut params = params_for(config, sensing.clone(), gram, w.clone())?;
    if let Some(t) = threshold {
        params.threshold = t;
        params.validate()?;
    }
    let scene = config.test_scene()?;
    check_len("test scene size", sensing.pixels(), scene.values.len())?;
    let truth = truth_waveform(config);
    check_len("truth waveform length", sensing.measurements(), truth.len())?;

    let images = reconstruct_all(&params, &samples)?;
    let per_sample: Vec<MetricReport> = images
        .iter()
        .zip(&samples)
        .map(|(img, d)| report(&params, img, d, &scene, truth.as_slice(), 0))
        .collect::<Result<_>>()?;
    let mean_of_metrics = mean_report(&per_sample).ok_or(Error::InvalidConfig("no samples".into()))?;
    let mean = mean_image(&images, scene.side)?;
    let mean_mismatch = samples
        .iter()
        .map(|d| data_mismatch(&params, &mean.values, d))
        .sum::<Result<f64>>()?
        / samples.len() as f64;
    let of_mean_image = MetricReport {
        data_mismatch: mean_mismatch,
        image_error: image_error(&mean.values, &scene.values)?,
        contrast: crate::metrics::contrast(&mean.values, &scene.support()).ok(),
        waveform_error: mean_of_metrics.waveform_error,
        epoch: 0,
    };
    let mut rows: Vec<tables::MetricRow> = per_sample
        .iter()
        .enumerate()
        .map(|(i, r)| tables::MetricRow::new("sample", Some(i), r))
        .collect();
    rows.push(tables::MetricRow::new("mean_of_metrics", None, &mean_of_metrics));
    rows.push(tables::MetricRow::new("metrics_of_mean_image", None, &of_mean_image));
    manifest.record("metrics.csv", tables::write_rows(&dir.join("metrics.csv"), &rows)?);
    manifest.record("reconstruction_mean.pgm", pgm::export_image_pgm(&mean, &dir.join("reconstruction_mean.pgm"))?);

    if config.simulation.test_scene == TestScene::Phantom {
        let ones = init_all_ones(sensing.measurements());
        let sources = [("waveform", &w), ("truth", &truth), ("no_matched_filter", &ones)];
        let mask = scene.support();
        let mut profile = Vec::new();
        let mut summary = Vec::new();
        for (name, wf) in sources {
            let img = SceneImage::from_values(backprojection_image(&sensing, wf.as_slice(), &samples)?, scene.side)?;
            let file = format!("backprojection_{name}.pgm");
            manifest.record(&file, pgm::export_image_pgm(&img, &dir.join(&file))?);
            let cuts = PHANTOM_RANGE_BINS
                .iter()
                .map(|&r| (Axis::Row, r))
                .chain(PHANTOM_CROSS_RANGE_BINS.iter().map(|&c| (Axis::Column, c)));
            for (axis, index) in cuts {
                let cs = cross_section(&img, axis, index, Some(&mask))?;
                profile.extend(tables::cross_section_rows(name, axis, index, &cs));
                summary.push(tables::cross_section_summary(name, axis, index, &cs));
            }
        }
        manifest.record("cross_sections.csv", tables::write_rows(&dir.join("cross_sections.csv"), &profile)?);
        manifest.record(
            "cross_section_summary.csv",
            tables::write_rows(&dir.join("cross_section_summary.csv"), &summary)?,
        );
    }
    Ok(format!(
        "{} sample(s): data mismatch {:.4}, image error {:.4}, contrast {}, waveform error {:.4}",
        samples.len(),
        mean_of_metrics.data_mismatch,
        mean_of_metrics.image_error,
        mean_of_metrics.contrast.map_or("undefined".to_string(), |c| format!("{c:.4}")),
        mean_of_metrics.waveform_error
    ))
}
