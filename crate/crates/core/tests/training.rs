use std::sync::Arc;

use num_complex::Complex64;
use sarwave::backprop::compute_gradients;
use sarwave::forward_model::*;
use sarwave::geometry::*;
use sarwave::metrics::waveform_error;
use sarwave::network::*;
use sarwave::scene::*;
use sarwave::trainer::*;
use sarwave::waveform::*;

struct Desk {
    params: NetworkParams,
    truth: WaveformCoefficients,
    noisy: Dataset,
    clean: Dataset,
}

fn desk() -> Desk {
    let grid = make_grid(&ImagingGeometry::default(), 15, 16, 16, 300.0).unwrap();
    let f = Arc::new(build_sensing_matrix(&grid, DEFAULT_MAX_ENTRIES).unwrap());
    let ones = init_all_ones(f.measurements());
    let gram = Arc::new(build_gram(&f, ones.as_slice(), DEFAULT_STEP_SIZE).unwrap());
    let params = NetworkParams::new(f.clone(), gram, ones, DEFAULT_REGULARIZATION, DEFAULT_LAYERS).unwrap();
    let truth = generate_qpsk(16, 16, 11);
    let mode = DatasetMode::Training { scene_seed: 5 };
    let noisy = make_dataset(&f, 15, &truth, 10, &mode, Some(0.0), 6).unwrap();
    let clean = make_dataset(&f, 15, &truth, 10, &mode, None, 6).unwrap();
    Desk { params, truth, noisy, clean }
}

fn refs(samples: &[Vec<Complex64>]) -> Vec<&[Complex64]> {
    samples.iter().map(Vec::as_slice).collect()
}

#[test]
fn one_full_batch_epoch_is_one_update() {
    let d = desk();
    let config = TrainConfig { epochs: 1, ..TrainConfig::default() };
    let record = train(&d.params, &d.noisy.samples, &config, None, None).unwrap();
    assert_eq!(record.epochs.len(), 1);
    let manual = sgd_step(&d.params, &refs(&d.noisy.samples), &config).unwrap();
    assert_eq!(record.final_params.waveform, manual.waveform);
    assert_eq!(record.final_params.threshold, manual.threshold);
    assert!(TrainConfig { epochs: 0, ..config }.validate().is_err());
}

#[test]
fn batch_update_uses_the_serial_mean_gradient() {
    let d = desk();
    let config = TrainConfig::default();
    let grads: Vec<_> = d.noisy.samples.iter().map(|s| compute_gradients(&d.params, s).unwrap()).collect();
    let n = grads.len() as f64;
    let mut mean_w = vec![Complex64::new(0.0, 0.0); d.params.measurements()];
    let mut mean_tau = 0.0;
    for g in &grads {
        mean_w.iter_mut().zip(&g.waveform_gradient).for_each(|(a, v)| *a += v);
        mean_tau += g.threshold_gradient;
    }
    mean_w.iter_mut().for_each(|v| *v /= n);
    mean_tau /= n;
    let stepped: Vec<Complex64> = d.params.waveform.values.iter().zip(&mean_w).map(|(w, g)| w - config.learning_rate_w * g).collect();
    let expected = project_unit_modulus(&WaveformCoefficients::new(stepped));
    let got = sgd_step(&d.params, &refs(&d.noisy.samples), &config).unwrap();
    assert_eq!(got.waveform.values, expected.values);
    assert_eq!(got.threshold, (d.params.threshold - config.learning_rate_tau * mean_tau).max(0.0));

    let single = sgd_step(&d.params, &refs(&d.noisy.samples[..1]), &config).unwrap();
    let g = &grads[0];
    let stepped: Vec<Complex64> = d.params.waveform.values.iter().zip(&g.waveform_gradient).map(|(w, v)| w - config.learning_rate_w * v).collect();
    assert_eq!(single.waveform.values, project_unit_modulus(&WaveformCoefficients::new(stepped)).values);
}

#[test]
fn iterates_stay_feasible_and_runs_are_deterministic() {
    let d = desk();
    let config = TrainConfig { epochs: 3, batch_size: 3, seed: 9, ..TrainConfig::default() };
    let a = train(&d.params, &d.noisy.samples, &config, Some(d.truth.as_slice()), None).unwrap();
    let b = train(&d.params, &d.noisy.samples, &config, Some(d.truth.as_slice()), None).unwrap();
    assert_eq!(a.final_params.waveform, b.final_params.waveform);
    assert_eq!(a.final_params.threshold.to_bits(), b.final_params.threshold.to_bits());
    for (x, y) in a.epochs.iter().zip(&b.epochs) {
        assert_eq!(x.loss_mean.to_bits(), y.loss_mean.to_bits());
    }
    assert!(a.final_params.waveform.unit_modulus_defect() < 1e-12);
    assert!(a.final_params.threshold >= 0.0);
    let other = train(&d.params, &d.noisy.samples, &TrainConfig { seed: 10, ..config }, None, None).unwrap();
    assert_ne!(other.final_params.waveform, a.final_params.waveform);
}

#[test]
fn starting_at_the_true_waveform_is_stable() {
    let d = desk();
    let start = NetworkParams { waveform: d.truth.clone(), ..d.params.clone() };
    let record = train(&start, &d.clean.samples, &TrainConfig::default(), Some(d.truth.as_slice()), None).unwrap();
    let initial = record.initial.waveform_error.unwrap();
    for e in &record.epochs {
        assert!(e.waveform_error.unwrap() <= initial + 1e-6, "epoch {}: {:?}", e.epoch, e.waveform_error);
    }
}

#[test]
fn stationarity_flag_keeps_the_waveform_tiled() {
    let d = desk();
    let config = TrainConfig { epochs: 2, enforce_stationarity: true, learning_rate_w: 1e-2, ..TrainConfig::default() };
    let record = train(&d.params, &d.noisy.samples, &config, None, None).unwrap();
    let w = record.final_params.waveform.as_slice();
    assert_ne!(w, d.params.waveform.as_slice());
    for j in 0..16 {
        for i in 0..16 {
            assert_eq!(w[j * 16 + i], w[i]);
        }
    }
}

#[test]
fn snapshots_and_epoch_zero_are_recorded() {
    let d = desk();
    let config = TrainConfig { epochs: 4, snapshot_every: 2, ..TrainConfig::default() };
    let record = train(&d.params, &d.noisy.samples, &config, Some(d.truth.as_slice()), None).unwrap();
    assert_eq!(record.initial.epoch, 0);
    assert_eq!(record.initial.threshold, d.params.threshold);
    assert_eq!(
        record.initial.waveform_error.unwrap(),
        waveform_error(d.truth.as_slice(), d.params.waveform.as_slice()).unwrap()
    );
    assert_eq!(record.snapshots.iter().map(|s| s.0).collect::<Vec<_>>(), vec![2, 4]);
}
