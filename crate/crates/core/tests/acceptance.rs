//! End-to-end acceptance checks. Runs every criterion, prints one line per
//! criterion and exits non-zero if any hard criterion fails.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sarwave::forward_model::*;
use sarwave::geometry::*;
use sarwave::gradcheck::{run_gradcheck, GradcheckSettings};
use sarwave::matrix::{inner, to_complex, CMatrix};
use sarwave::metrics::{contrast, cross_section, waveform_error, Axis};
use sarwave::network::*;
use sarwave::scene::*;
use sarwave::trainer::{train, Evaluation, TrainConfig, TrainingRecord};
use sarwave::waveform::*;

#[derive(Clone, Copy, PartialEq)]
enum Kind {
    Hard,
    Soft,
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct FullModel {
    sensing: Arc<SensingMatrix>,
    gram: Arc<GramOperator>,
    truth: WaveformCoefficients,
}

fn full_model() -> FullModel {
    let grid = make_grid(&ImagingGeometry::default(), 31, 128, 64, 620.0).unwrap();
    let sensing = Arc::new(build_sensing_matrix(&grid, DEFAULT_MAX_ENTRIES).unwrap());
    let ones = init_all_ones(sensing.measurements());
    let gram = Arc::new(build_gram(&sensing, ones.as_slice(), DEFAULT_STEP_SIZE).unwrap());
    FullModel {
        sensing,
        gram,
        truth: generate_qpsk(64, 128, 2024),
    }
}

fn gradient_correctness() -> Outcome {
    let grid = make_grid(&ImagingGeometry::default(), 3, 3, 4, 120.0).unwrap();
    let f = Arc::new(build_sensing_matrix(&grid, DEFAULT_MAX_ENTRIES).unwrap());
    let settings = GradcheckSettings::default();
    let report = run_gradcheck(&f, 0.005, 10.0, 2, 0, &settings).unwrap();
    let (w, t) = report.worst();
    let pass = report.cases.len() >= 20 && report.all_pass();
    outcome(
        pass,
        format!(
            "M=12 N=9 L=2, {} seeds ({} skipped at the precondition), worst relative error w {w:.2e}, tau {t:.2e} (tol 1e-6)",
            report.cases.len(),
            report.skipped.len()
        ),
    )
}

fn dense(m: &CMatrix) -> DMatrix<Complex64> {
    DMatrix::from_fn(m.rows(), m.cols(), |r, c| m.get(r, c))
}

fn operator_algebra() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst_adjoint = 0.0f64;
    let mut worst_hermitian = 0.0f64;
    let mut worst_spectrum = f64::NEG_INFINITY;
    for (side, st, fr) in [(3, 3, 4), (4, 5, 4), (5, 6, 5), (6, 8, 6)] {
        let grid = make_grid(&ImagingGeometry::default(), side, st, fr, 20.0 * side as f64).unwrap();
        let f = build_sensing_matrix(&grid, DEFAULT_MAX_ENTRIES).unwrap();
        let (m, n) = (f.measurements(), f.pixels());
        let w = random_unit_modulus(m, rng.random());
        let rho: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let d: Vec<Complex64> = (0..m).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let lhs = inner(&apply_forward(&f, w.as_slice(), &rho).unwrap(), &d);
        let rhs = inner(&to_complex(&rho), &apply_adjoint(&f, w.as_slice(), &d).unwrap());
        worst_adjoint = worst_adjoint.max((lhs - rhs).norm() / lhs.norm());

        let df = dense(&f.entries);
        let normal = df.adjoint() * &df;
        let lambda_max = normal.clone().symmetric_eigen().eigenvalues.max();
        let alpha = 1.0 / lambda_max;
        let q = build_gram(&f, w.as_slice(), alpha).unwrap();
        worst_hermitian = worst_hermitian.max(q.entries.hermitian_defect());
        for &v in dense(&q.entries).symmetric_eigen().eigenvalues.iter() {
            let excess = (v - 1.0).max(1.0 - alpha * lambda_max - v);
            worst_spectrum = worst_spectrum.max(excess);
        }
    }
    let pass = worst_adjoint <= 1e-12 && worst_hermitian <= 1e-12 && worst_spectrum <= 1e-10;
    outcome(
        pass,
        format!(
            "adjoint rel. error {worst_adjoint:.1e}, Hermitian defect {worst_hermitian:.1e}, spectrum excess beyond [1-alpha*lmax, 1] {worst_spectrum:.1e}"
        ),
    )
}

/// Brute-force minimizer of `1/2 |y - v|^2 + tau |y|` over complex `y`: a
/// coarse polar search locates the phase, then a fine magnitude grid.
fn brute_force_prox(v: Complex64, tau: f64) -> f64 {
    let objective = |y: Complex64| 0.5 * (y - v).norm_sqr() + tau * y.norm();
    let top = v.norm() + 1.0;
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for a in 0..360 {
        let phase = a as f64 * std::f64::consts::TAU / 360.0;
        for k in 0..=100 {
            let r = top * k as f64 / 100.0;
            let val = objective(Complex64::from_polar(r, phase));
            if val < best.0 {
                best = (val, r, phase);
            }
        }
    }
    let phase = best.2;
    let steps = (top / 1e-4).ceil() as usize;
    let mut fine = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let r = k as f64 * 1e-4;
        for p in [phase - 0.01, phase, phase + 0.01, v.arg()] {
            let val = objective(Complex64::from_polar(r, p));
            if val < fine.0 {
                fine = (val, r);
            }
        }
    }
    fine.1
}

fn prox_correctness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let v = Complex64::from_polar(rng.random_range(0.0..2.0), rng.random_range(-3.1..3.1));
        let tau = rng.random_range(0.0..1.5);
        let ours = phaseless_soft_threshold(&[v], tau)[0];
        worst = worst.max((ours - brute_force_prox(v, tau)).abs());
    }
    outcome(worst <= 1e-4, format!("100 scalar cases, max |ours - grid minimizer| = {worst:.1e} (resolution 1e-4)"))
}

fn initialization_baseline() -> Outcome {
    let ones = init_all_ones(256);
    let draws = 1000;
    let mean = (0..draws)
        .map(|s| waveform_error(generate_qpsk(64, 4, s).as_slice(), ones.as_slice()).unwrap())
        .sum::<f64>()
        / draws as f64;
    outcome((mean - 2.0).abs() <= 0.1, format!("mean L_w over {draws} QPSK draws = {mean:.4}"))
}

fn mismatch_degradation(model: &FullModel) -> Outcome {
    let phantom = gen_point_phantom(31).unwrap();
    let d = apply_forward(&model.sensing, model.truth.as_slice(), &phantom.values).unwrap();
    let mask = phantom.support();
    let random = random_unit_modulus(model.sensing.measurements(), 77);
    let c_true = contrast(&backprojection_image(&model.sensing, model.truth.as_slice(), &[d.clone()]).unwrap(), &mask).unwrap();
    let c_rand = contrast(&backprojection_image(&model.sensing, random.as_slice(), &[d]).unwrap(), &mask).unwrap();
    outcome(
        c_rand <= 0.1 * c_true,
        format!("C with true waveform {c_true:.3}, with random waveform {c_rand:.4} (ratio {:.4}, need <= 0.1)", c_rand / c_true),
    )
}

fn contrast_at(record: &TrainingRecord, epoch: usize) -> Option<f64> {
    let e = if epoch == 0 { &record.initial } else { &record.epochs[epoch - 1] };
    e.test_metrics.and_then(|m| m.contrast)
}

fn curve(record: &TrainingRecord) -> String {
    std::iter::once(&record.initial)
        .chain(&record.epochs)
        .map(|e| {
            format!(
                "{}:{:.3}/{:.2e}/{}",
                e.epoch,
                e.waveform_error.unwrap_or(f64::NAN),
                e.threshold,
                e.test_metrics.and_then(|m| m.contrast).map_or("-".into(), |c| format!("{c:.3}"))
            )
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Trains from the all-ones waveform with the default hyperparameters and
/// evaluates on noisy realizations of `test_scene`.
fn training_run(
    sensing: &Arc<SensingMatrix>,
    gram: &Arc<GramOperator>,
    truth: &WaveformCoefficients,
    test_scene: &SceneImage,
    snr_db: f64,
) -> (TrainingRecord, Vec<Vec<Complex64>>) {
    let side = test_scene.side;
    let params = NetworkParams::new(
        sensing.clone(),
        gram.clone(),
        init_all_ones(sensing.measurements()),
        DEFAULT_REGULARIZATION,
        DEFAULT_LAYERS,
    )
    .unwrap();
    let training = make_dataset(sensing, side, truth, 10, &DatasetMode::Training { scene_seed: 31 }, Some(snr_db), 32).unwrap();
    let test = make_dataset(sensing, side, truth, 20, &DatasetMode::Test { scene: test_scene.clone() }, Some(snr_db), 33).unwrap();
    let eval = Evaluation {
        samples: &test.samples,
        scene: test_scene,
        truth_waveform: truth.as_slice(),
    };
    let record = train(&params, &training.samples, &TrainConfig::default(), Some(truth.as_slice()), Some(&eval)).unwrap();
    (record, test.samples)
}

fn desk_training() -> Outcome {
    let grid = make_grid(&ImagingGeometry::default(), 15, 16, 16, 300.0).unwrap();
    let sensing = Arc::new(build_sensing_matrix(&grid, DEFAULT_MAX_ENTRIES).unwrap());
    let gram = Arc::new(build_gram(&sensing, init_all_ones(256).as_slice(), DEFAULT_STEP_SIZE).unwrap());
    let truth = generate_qpsk(16, 16, 2024);
    let scene = gen_random_scene(15, 4242);
    let (record, _) = training_run(&sensing, &gram, &truth, &scene, 0.0);
    let l0 = record.initial.waveform_error.unwrap();
    let l_end = record.epochs.last().unwrap().waveform_error.unwrap();
    let c0 = contrast_at(&record, 0);
    let c_end = contrast_at(&record, record.epochs.len());
    let drop = 1.0 - l_end / l0;
    let contrast_up = matches!((c0, c_end), (Some(a), Some(b)) if b > a);
    outcome(
        drop >= 0.25 && contrast_up,
        format!(
            "L_w {l0:.4} -> {l_end:.4} (drop {:.1}%, need >= 25%), C {c0:?} -> {c_end:?}; epoch:L_w/tau/C {}",
            100.0 * drop,
            curve(&record)
        ),
    )
}

fn full_training(model: &FullModel) -> (Outcome, WaveformCoefficients) {
    let phantom = gen_point_phantom(31).unwrap();
    let (record, _) = training_run(&model.sensing, &model.gram, &model.truth, &phantom, -10.0);
    let l_end = record.epochs.last().unwrap().waveform_error.unwrap();
    let c0 = contrast_at(&record, 0);
    let c_end = contrast_at(&record, record.epochs.len());
    let contrast_ok = matches!((c0, c_end), (Some(a), Some(b)) if b >= 5.0 * a);
    let detail = format!(
        "final L_w {l_end:.4} (need <= 1.0), C {c0:?} -> {c_end:?} (need >= 5x); epoch:L_w/tau/C {}",
        curve(&record)
    );
    (outcome(l_end <= 1.0 && contrast_ok, detail), record.final_params.waveform)
}

fn resolution_study(model: &FullModel, learned: &WaveformCoefficients) -> Outcome {
    let phantom = gen_point_phantom(31).unwrap();
    let test = make_dataset(&model.sensing, 31, &model.truth, 20, &DatasetMode::Test { scene: phantom.clone() }, Some(-10.0), 81).unwrap();
    let mask = phantom.support();
    let image = |w: &WaveformCoefficients| {
        SceneImage::from_values(backprojection_image(&model.sensing, w.as_slice(), &test.samples).unwrap(), 31).unwrap()
    };
    let (with_learned, with_truth) = (image(learned), image(&model.truth));
    let cuts = PHANTOM_RANGE_BINS
        .iter()
        .map(|&r| (Axis::Row, r))
        .chain(PHANTOM_CROSS_RANGE_BINS.iter().map(|&c| (Axis::Column, c)));
    let mut pass = true;
    let mut notes = Vec::new();
    for (axis, index) in cuts {
        let a = cross_section(&with_learned, axis, index, Some(&mask)).unwrap();
        let b = cross_section(&with_truth, axis, index, Some(&mask)).unwrap();
        let db = |c: &sarwave::metrics::CrossSection| 10.0 * (c.peak / c.mean_background).log10();
        let gap = (db(&a) - db(&b)).abs();
        pass &= a.peak_index == b.peak_index && gap <= 3.0;
        notes.push(format!(
            "{axis:?} {index}: peak @{} vs @{}, PBR {:.2} vs {:.2} dB",
            a.peak_index,
            b.peak_index,
            db(&a),
            db(&b)
        ));
    }
    outcome(pass, notes.join("; "))
}

fn cli(args: &[&str]) -> i32 {
    sarwave::cli::run(std::iter::once("sarwave").chain(args.iter().copied()))
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = serde_json::json!({
        "grid": { "pixels_per_side": 9, "slow_time_samples": 8, "frequency_samples": 8, "scene_extent_m": 180.0 },
        "network": { "layers": 4, "step_size": 1e-5, "regularization": 10.0 },
        "train": { "epochs": 3, "batch_size": 4, "seed": 3 },
        "simulation": { "snr_db": [0.0], "training_samples": 10, "test_samples": 5, "test_scene": "random", "seed": 8 },
    });
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, config.to_string()).unwrap();
    let run_dir = |run: &str, cmd: &str| dir.path().join(run).join(cmd);
    let data = run_dir("a", "gen").join("test_snr0db.cmpx");
    let data_arg = data.to_str().unwrap().to_string();
    let mut compared = 0;
    for cmd in ["gen-data", "train", "evaluate"] {
        let first = run_dir("a", cmd);
        let second = run_dir("b", cmd);
        let extra: Vec<&str> = if cmd == "evaluate" { vec!["--data", &data_arg] } else { vec![] };
        let mut args = vec![cmd, "--config", cfg.to_str().unwrap(), "--out"];
        let first_out = if cmd == "gen-data" { run_dir("a", "gen") } else { first.clone() };
        let first_str = first_out.to_str().unwrap().to_string();
        args.push(&first_str);
        args.extend(&extra);
        if cli(&args) != 0 {
            return outcome(false, format!("{cmd} failed on the first run"));
        }
        let manifest = first_out.join("manifest.json");
        let second_str = second.to_str().unwrap().to_string();
        let mut again = vec![cmd, "--config", manifest.to_str().unwrap(), "--out", &second_str];
        again.extend(&extra);
        if cli(&again) != 0 {
            return outcome(false, format!("{cmd} failed when re-run from its manifest"));
        }
        let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&manifest).unwrap()).unwrap();
        for name in m["artifacts"].as_object().unwrap().keys() {
            if !(name.ends_with(".cmpx") || name.ends_with(".csv")) {
                continue;
            }
            let read = |p: &Path| std::fs::read(p.join(name)).unwrap();
            if read(&first_out) != read(&second) {
                return outcome(false, format!("{cmd}: {name} differs between runs"));
            }
            compared += 1;
        }
    }
    outcome(compared > 0, format!("{compared} CMPX/CSV artifacts bit-identical across gen-data, train, evaluate re-runs"))
}

fn report(number: usize, kind: Kind, name: &str, elapsed: Duration, limit: Option<u64>, o: &Outcome) -> bool {
    let within = limit.is_none_or(|s| elapsed.as_secs_f64() < s as f64);
    let ok = o.pass && within;
    let status = match (ok, kind) {
        (true, _) => "PASS",
        (false, Kind::Hard) => "FAIL",
        (false, Kind::Soft) => "SOFT-FAIL",
    };
    let timing = match limit {
        Some(s) => format!("{:.2}s, limit {s}s", elapsed.as_secs_f64()),
        None => format!("{:.2}s", elapsed.as_secs_f64()),
    };
    println!("criterion {number} [{status}] {name}: {} ({timing})", o.detail);
    ok || kind == Kind::Soft
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, Duration) {
    let start = Instant::now();
    let v = f();
    (v, start.elapsed())
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        // Nothing to enumerate for test discovery tools.
        return;
    }
    let mut ok = true;
    let (o, t) = timed(gradient_correctness);
    ok &= report(1, Kind::Hard, "gradient correctness", t, Some(5), &o);
    let (o, t) = timed(operator_algebra);
    ok &= report(2, Kind::Hard, "operator algebra", t, Some(1), &o);
    let (o, t) = timed(prox_correctness);
    ok &= report(3, Kind::Hard, "prox / activation", t, None, &o);
    let (o, t) = timed(initialization_baseline);
    ok &= report(4, Kind::Hard, "initialization baseline", t, None, &o);

    let (model, build) = timed(full_model);
    let (o, t) = timed(|| mismatch_degradation(&model));
    ok &= report(5, Kind::Hard, "mismatch degradation", t + build, Some(60), &o);
    let (o, t) = timed(desk_training);
    ok &= report(6, Kind::Hard, "desk-scale training", t, Some(60), &o);
    let ((o, learned), t) = timed(|| full_training(&model));
    ok &= report(7, Kind::Soft, "full-scale training", t, None, &o);
    let (o, t) = timed(|| resolution_study(&model, &learned));
    ok &= report(8, Kind::Hard, "resolution study", t, None, &o);
    let (o, t) = timed(reproducibility);
    ok &= report(9, Kind::Hard, "reproducibility", t, None, &o);

    if !ok {
        println!("acceptance: at least one hard criterion failed");
        std::process::exit(1);
    }
    println!("acceptance: all hard criteria passed");
}
