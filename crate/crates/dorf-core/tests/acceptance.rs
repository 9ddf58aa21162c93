//! Acceptance suite, part 1: library-level criteria.
//!
//! Each test prints one `[PASS] criterion N` line on success. Criteria 1, 8,
//! and 9 (dataset report format, end-to-end synthetic cross-validation, and
//! whole-run determinism) exercise the command-line pipeline and live in the
//! `dorf-cli` acceptance suite.

use ndarray::{Array2, Array3};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::time::Instant;

use dorf_core::classifier::network::{flatten_grads, flatten_params, unflatten_params, Network, NetworkDims};
use dorf_core::classifier::{build_kernel_bank, pool_features, predict, FeatureMatrix, Model, TrainConfig};
use dorf_core::csi::{CsiTrial, SanitizedTrial};
use dorf_core::doppler::{delay_profile, radial_velocity_matrix, BinSelection, SpectrogramConfig};
use dorf_core::factorization::{aligned_rmse, factorize, seeded_unit_directions, FactorizationConfig, VelocityTrack};
use dorf_core::sphere::{merge_dorfs, project_dorf, MergePolicy, SphereGrid};
use dorf_core::synth::{gen_csi, gen_projections_with_directions, ChannelSpec, PathSpec};
use dorf_core::SPEED_OF_LIGHT;

fn smooth_track(t_len: usize, scale: f64) -> VelocityTrack {
    let mut v = Array2::zeros((t_len, 3));
    for s in 0..t_len {
        let t = s as f64 / t_len as f64;
        v[[s, 0]] = scale * (2.0 * PI * t).sin();
        v[[s, 1]] = scale * 0.8 * (4.0 * PI * t + 0.3).cos();
        v[[s, 2]] = scale * 0.5 * (2.0 * PI * t + 1.1).cos();
    }
    VelocityTrack {
        v,
        times: (0..t_len).map(|i| i as f64 * 0.16).collect(),
    }
}

#[test]
fn criterion_2_factorization_recovery() {
    let truth = smooth_track(200, 1.0);
    let directions = seeded_unit_directions(20, 71);
    let clean = gen_projections_with_directions(&truth, &directions, 0.0, 71).unwrap();
    let cfg = FactorizationConfig {
        lambda: 0.0,
        gamma: 0.0,
        epsilon: 1e-8,
        max_iters: 1000,
        seed: 5,
        dtw_band: None,
    };
    let started = Instant::now();
    let (v, r, report) = factorize(&clean, &cfg).unwrap();
    let elapsed = started.elapsed();

    // Relative reconstruction error of the product.
    let mut err = 0.0;
    let mut norm = 0.0;
    for s in 0..200 {
        for i in 0..20 {
            let pred: f64 = (0..3).map(|k| v.v[[s, k]] * r.r[[i, k]]).sum();
            err += (clean.v_r[[s, i]] - pred).powi(2);
            norm += clean.v_r[[s, i]].powi(2);
        }
    }
    let rel = (err / norm).sqrt();
    assert!(rel <= 1e-3, "noiseless relative reconstruction {rel}");

    let rmse = aligned_rmse(&v, &truth, true).unwrap();
    let peak = truth.peak_speed();
    assert!(rmse <= 0.01 * peak, "noiseless aligned rmse {rmse} vs peak {peak}");
    assert!(
        elapsed.as_secs_f64() <= 10.0,
        "factorization took {elapsed:?}"
    );
    let _ = report;

    // Noise sigma = 0.05 · velocity scale (unit-scale track).
    let noisy = gen_projections_with_directions(&truth, &directions, 0.05, 72).unwrap();
    let cfg_noise = FactorizationConfig {
        lambda: 1e-3,
        gamma: 1e-3,
        epsilon: 1e-6,
        max_iters: 500,
        seed: 6,
        dtw_band: None,
    };
    let (vn, _, _) = factorize(&noisy, &cfg_noise).unwrap();
    let rmse_noise = aligned_rmse(&vn, &truth, true).unwrap();
    assert!(
        rmse_noise <= 0.10 * peak,
        "noisy aligned rmse {rmse_noise} vs peak {peak}"
    );
    println!(
        "[PASS] criterion 2: factorization recovery (rel {rel:.2e}, rmse {:.3}%, noisy rmse {:.2}%, {:.2}s)",
        100.0 * rmse / peak,
        100.0 * rmse_noise / peak,
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_3_doppler_extraction() {
    // Single moving path with v·m = 1 m/s at 2.4 GHz.
    let rate = 100.0;
    let n_samples = 500;
    let mut v = Array2::zeros((n_samples, 3));
    for s in 0..n_samples {
        v[[s, 0]] = 1.0;
    }
    let track = VelocityTrack {
        v,
        times: (0..n_samples).map(|k| k as f64 / rate).collect(),
    };
    let chan = ChannelSpec {
        paths: vec![PathSpec {
            gain: Complex64::new(1.0, 0.0),
            delay_s: 1e-7,
            direction: [1.0, 0.0, 0.0],
            moves: true,
        }],
        carrier_hz: 2.4e9,
        subcarrier_spacing_hz: 312_500.0,
        n_subcarriers: 52,
        noise_sigma: 0.0,
        seed: 0,
    };
    let trial = gen_csi(&track, &chan, rate).unwrap();
    let clean = SanitizedTrial::from_clean_trial(&trial);
    let cfg = SpectrogramConfig::default();
    let mats = radial_velocity_matrix(&clean, &cfg, BinSelection::TopPower(1)).unwrap();
    let lambda = SPEED_OF_LIGHT / 2.4e9;
    assert!((lambda - 0.12491).abs() < 1e-5, "wavelength {lambda}");
    let tolerance = lambda * rate / (cfg.window_len as f64 * cfg.zero_pad_factor as f64);
    let m = &mats[0];
    assert_eq!(m.n_bins(), 1);
    for w in 0..m.n_windows() {
        let v_r = m.v_r[[w, 0]];
        assert!(
            (v_r - 1.0).abs() <= tolerance,
            "window {w}: v_r {v_r} not within {tolerance} of 1.0"
        );
    }
    println!(
        "[PASS] criterion 3: doppler extraction (tolerance {tolerance:.4} m/s, {} windows)",
        m.n_windows()
    );
}

#[test]
fn criterion_4_grid_invariants() {
    for m_rows in [1usize, 2, 8] {
        let grid = SphereGrid::new(m_rows).unwrap();
        assert_eq!(grid.n_directions(), 2 * m_rows * m_rows);
        for m in 0..m_rows {
            for n in 0..2 * m_rows {
                let d = grid.direction(m, n);
                assert!(
                    (d.norm() - 1.0).abs() <= 1e-12,
                    "M={m_rows}: direction norm {}",
                    d.norm()
                );
            }
        }
        let track = smooth_track(6, 1.3);
        let field = project_dorf(&track, &grid, 0);
        for s in 0..6 {
            for m in 0..m_rows {
                for n in 0..2 * m_rows {
                    let (am, an) = grid.antipode(m, n);
                    let sum = field.p[[s, m, n]] + field.p[[s, am, an]];
                    assert!(sum.abs() <= 1e-9, "M={m_rows}: antipodal sum {sum}");
                }
            }
        }
        if m_rows >= 2 {
            for s in 0..6 {
                let slice = field.p.index_axis(ndarray::Axis(0), s).to_owned();
                let rec = grid.least_squares_velocity(&slice).unwrap();
                let truth = nalgebra::Vector3::new(
                    track.v[[s, 0]],
                    track.v[[s, 1]],
                    track.v[[s, 2]],
                );
                let rel = (rec - truth).norm() / truth.norm();
                assert!(rel <= 1e-9, "M={m_rows}: recovery error {rel}");
            }
        }
    }
    println!("[PASS] criterion 4: grid invariants for M in {{1, 2, 8}}");
}

#[test]
fn criterion_5_transform_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for &n_sub in &[8usize, 52, 64] {
        let samples = Array3::from_shape_fn((4, n_sub, 1), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let trial =
            CsiTrial::new(samples.clone(), 100.0, 2.4e9, 312_500.0, 0, 0).unwrap();
        let clean = SanitizedTrial::from_clean_trial(&trial);
        let profiles = delay_profile(&clean).unwrap();
        for t in 0..4 {
            // Forward DFT oracle by direct summation.
            let mut err = 0.0;
            let mut norm = 0.0;
            for k in 0..n_sub {
                let mut acc = Complex64::new(0.0, 0.0);
                for i in 0..n_sub {
                    acc += profiles[0].h[[t, i]]
                        * Complex64::from_polar(1.0, -2.0 * PI * (k * i) as f64 / n_sub as f64);
                }
                err += (acc - samples[[t, k, 0]]).norm_sqr();
                norm += samples[[t, k, 0]].norm_sqr();
            }
            let rel = (err / norm).sqrt();
            assert!(rel <= 1e-10, "N={n_sub}: round trip error {rel}");
        }
    }
    println!("[PASS] criterion 5: transform round trip for N in {{8, 52, 64}}");
}

#[test]
fn criterion_6_pooling_invariance() {
    let d_features = 32;
    let network = Network::new(
        NetworkDims {
            input: d_features,
            reduced: 8,
            hidden: 8,
            classes: 4,
        },
        3,
    )
    .unwrap();
    let model = Model {
        bank: build_kernel_bank(d_features / 2, 24, 0).unwrap(),
        normalizer: None,
        network,
        config: TrainConfig::default(),
        best_val_loss: 0.0,
        epochs_run: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for case in 0..10_000 {
        let c = rng.random_range(1..8);
        let f = Array2::from_shape_fn((c, d_features), |_| rng.random_range(-2.0f64..2.0));
        let fm = FeatureMatrix { f: f.clone() };
        let pooled = pool_features(&fm).unwrap();
        let probs = predict(&model, &pooled).unwrap();

        // Random permutation of channels.
        let mut order: Vec<usize> = (0..c).collect();
        for i in (1..c).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut permuted = Array2::zeros((c, d_features));
        for (row, &src) in order.iter().enumerate() {
            for j in 0..d_features {
                permuted[[row, j]] = f[[src, j]];
            }
        }
        let pooled_p = pool_features(&FeatureMatrix { f: permuted }).unwrap();
        let probs_p = predict(&model, &pooled_p).unwrap();

        // Duplicate a random channel.
        let dup_src = rng.random_range(0..c);
        let mut dup = Array2::zeros((c + 1, d_features));
        for row in 0..c {
            for j in 0..d_features {
                dup[[row, j]] = f[[row, j]];
            }
        }
        for j in 0..d_features {
            dup[[c, j]] = f[[dup_src, j]];
        }
        let pooled_d = pool_features(&FeatureMatrix { f: dup }).unwrap();
        let probs_d = predict(&model, &pooled_d).unwrap();

        for j in 0..d_features {
            assert_eq!(pooled[j].to_bits(), pooled_p[j].to_bits(), "case {case}");
            assert_eq!(pooled[j].to_bits(), pooled_d[j].to_bits(), "case {case}");
        }
        for k in 0..4 {
            assert_eq!(probs[k].to_bits(), probs_p[k].to_bits(), "case {case}");
            assert_eq!(probs[k].to_bits(), probs_d[k].to_bits(), "case {case}");
        }
    }
    println!("[PASS] criterion 6: pooling invariance over 10000 randomized cases");
}

#[test]
fn criterion_7_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut max_rel = 0.0f64;
    for instance in 0..100 {
        let dims = NetworkDims {
            input: rng.random_range(4..9),
            reduced: rng.random_range(3..6),
            hidden: rng.random_range(4..8),
            classes: 4,
        };
        let net = Network::new(dims, 1000 + instance).unwrap();
        let batch = rng.random_range(1..4);
        let x = Array2::from_shape_fn((batch, dims.input), |_| rng.random_range(-1.5..1.5));
        let labels: Vec<usize> = (0..batch).map(|_| rng.random_range(0..4)).collect();
        let (_, grads) = net.loss_and_grad(&x, &labels, 0.1).unwrap();
        let analytic = flatten_grads(&grads);
        let base = flatten_params(&net);
        let h = 1e-5;
        for idx in 0..base.len() {
            let mut plus = net.clone();
            let mut minus = net.clone();
            let mut p = base.clone();
            p[idx] += h;
            unflatten_params(&mut plus, &p);
            p[idx] -= 2.0 * h;
            unflatten_params(&mut minus, &p);
            let lp = plus.loss(&x, &labels, 0.1).unwrap();
            let lm = minus.loss(&x, &labels, 0.1).unwrap();
            let numeric = (lp - lm) / (2.0 * h);
            let denom = numeric.abs().max(analytic[idx].abs()).max(1e-6);
            let rel = (numeric - analytic[idx]).abs() / denom;
            max_rel = max_rel.max(rel);
            assert!(
                rel <= 1e-4,
                "instance {instance} param {idx}: rel error {rel}"
            );
        }
    }
    println!("[PASS] criterion 7: gradient correctness over 100 instances (max rel {max_rel:.2e})");
}

#[test]
fn supporting_merge_shape_matches_reference_settings() {
    // 3 antennas at M = 8 merge into 384 channels.
    let grid = SphereGrid::new(8).unwrap();
    let track = smooth_track(24, 0.7);
    let fields: Vec<_> = (0..3).map(|a| project_dorf(&track, &grid, a)).collect();
    let merged = merge_dorfs(&fields, MergePolicy::Concat).unwrap();
    assert_eq!(merged.n_channels(), 384);
    assert_eq!(merged.n_windows(), 24);
    println!("[PASS] supporting: merged field shape 24 x 384 at M=8, 3 antennas");
}
