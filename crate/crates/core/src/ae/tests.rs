use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random_model(rng: &mut ChaCha8Rng, full: usize, latent: usize, width: usize, band: usize, spacing: usize) -> AutoencoderModel {
    let mask = build_triband_mask(full, width, band, spacing).unwrap();
    let norm = Normalization {
        shift: (0..full).map(|_| rng.random_range(-1.0..1.0)).collect(),
        scale: (0..full).map(|_| rng.random_range(0.5..2.0)).collect(),
    };
    let mut m = AutoencoderModel::random(full, latent, mask, norm, rng).unwrap();
    // nonzero biases so every gradient path is exercised
    for b in [&mut m.weights.b_in, &mut m.weights.b_enc, &mut m.weights.b_dec] {
        b.iter_mut().for_each(|x| *x = rng.random_range(-0.5..0.5));
    }
    m
}

#[test]
fn swish_values_and_derivative() {
    assert_eq!(swish(0.0), 0.0);
    assert!((19.99..=20.0).contains(&swish(20.0)));
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let eps = 1e-6;
    for _ in 0..100 {
        let z: f64 = rng.random_range(-8.0..8.0);
        let fd = (swish(z + eps) - swish(z - eps)) / (2.0 * eps);
        assert!((fd - swish_prime(z)).abs() <= 1e-8, "z = {z}");
    }
}

#[test]
fn mask_hand_enumerated_example() {
    let m = build_triband_mask(4, 8, 1, 4).unwrap();
    // centres 0, 2, 4, 6; offset bands outside [0, 8) are dropped
    assert_eq!(m.entries, vec![(0, 0), (0, 4), (1, 2), (1, 6), (2, 0), (2, 4), (3, 2), (3, 6)]);
    let dense = build_triband_mask(5, 7, 7, 0).unwrap();
    assert_eq!(dense.nnz(), 35);
    assert!(build_triband_mask(4, 4, 2, 3).is_err());
}

proptest! {
    #[test]
    fn mask_rows_hold_one_to_three_bands(full in 1usize..60, factor in 1usize..4, band in 1usize..5, spacing in 0usize..20) {
        let width = full * factor;
        prop_assume!(width >= band + spacing);
        let m = build_triband_mask(full, width, band, spacing).unwrap();
        for c in m.row_counts() {
            prop_assert!(c >= 1 && c <= 3 * band);
        }
        prop_assert!(m.entries.iter().all(|&(r, c)| r < full && c < width));
    }
}

#[test]
fn zero_weights_decode_to_shift() {
    let mask = build_triband_mask(6, 12, 3, 4).unwrap();
    let mut m = AutoencoderModel::zeros(6, 2, mask).unwrap();
    m.norm.shift = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
    m.norm.scale = vec![2.0; 6];
    assert_eq!(m.decode(&[0.3, -7.0]).unwrap(), m.norm.shift);
    assert!(m.decoder_jacobian(&[0.3, -7.0]).unwrap().iter().all(|&v| v == 0.0));
    assert!(m.decode(&[1.0]).is_err());
}

#[test]
fn normalization_round_trip_and_floor() {
    let data = Array2::from_shape_fn((5, 3), |(r, c)| if c == 1 { 4.0 } else { (r * r + c) as f64 });
    let norm = Normalization::fit(data.view(), &[0, 1, 2, 3, 4]).unwrap();
    assert_eq!(norm.scale[1], SCALE_FLOOR);
    for r in 0..5 {
        let x = data.row(r).to_vec();
        let back = norm.denormalize(&norm.normalize(&x));
        for (a, b) in back.iter().zip(&x) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
}

#[test]
fn decoder_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let eps = 1e-6;
    for _ in 0..5 {
        let m = random_model(&mut rng, 20, 3, 40, 3, 6);
        let y: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
        let jac = m.decoder_jacobian(&y).unwrap();
        let (mut diff, mut norm) = (0.0, 0.0);
        for k in 0..3 {
            let mut a = y.clone();
            let mut b = y.clone();
            a[k] += eps;
            b[k] -= eps;
            let (da, db) = (m.decode(&a).unwrap(), m.decode(&b).unwrap());
            for r in 0..20 {
                let fd = (da[r] - db[r]) / (2.0 * eps);
                diff += (fd - jac[r * 3 + k]).powi(2);
                norm += jac[r * 3 + k].powi(2);
            }
        }
        assert!((diff as f64).sqrt() <= 1e-6 * (norm as f64).sqrt());
    }
}

#[test]
fn decoder_jacobian_chain_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let m = random_model(&mut rng, 12, 3, 24, 3, 4);
    // y = L z with L 3x2
    let l = [[0.5, -1.0], [2.0, 0.25], [-0.75, 1.5]];
    let z = [0.2, -0.4];
    let y: Vec<f64> = l.iter().map(|row| row[0] * z[0] + row[1] * z[1]).collect();
    let j = m.decoder_jacobian(&y).unwrap();
    let eps = 1e-6;
    for c in 0..2 {
        let mut zp = z;
        let mut zm = z;
        zp[c] += eps;
        zm[c] -= eps;
        let yp: Vec<f64> = l.iter().map(|row| row[0] * zp[0] + row[1] * zp[1]).collect();
        let ym: Vec<f64> = l.iter().map(|row| row[0] * zm[0] + row[1] * zm[1]).collect();
        let (dp, dm) = (m.decode(&yp).unwrap(), m.decode(&ym).unwrap());
        for r in 0..12 {
            let composed: f64 = (0..3).map(|k| j[r * 3 + k] * l[k][c]).sum();
            let fd = (dp[r] - dm[r]) / (2.0 * eps);
            assert!((composed - fd).abs() <= 1e-7 * (1.0 + fd.abs()));
        }
    }
}

#[test]
fn training_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let eps = 1e-6;
    for trial in 0..3 {
        let (full, latent) = (8 + 4 * trial, 2 + trial);
        let m = random_model(&mut rng, full, latent, 2 * full, 2, 3);
        let target = Array2::from_shape_fn((full, 7), |_| rng.random_range(-1.0..1.0));
        let input = target.mapv(|v| v + rng.random_range(-0.1..0.1));
        let (_, g) = loss::loss_and_gradients(&m, &input, &target);
        for t in 0..7 {
            let analytic = g.tensors()[t].to_vec();
            let (mut diff, mut norm) = (0.0f64, 0.0f64);
            for k in 0..analytic.len() {
                let mut a = m.clone();
                let mut b = m.clone();
                a.weights.tensors_mut()[t][k] += eps;
                b.weights.tensors_mut()[t][k] -= eps;
                let fd = (loss::loss_and_gradients(&a, &input, &target).0 - loss::loss_and_gradients(&b, &input, &target).0) / (2.0 * eps);
                diff += (fd - analytic[k]).powi(2);
                norm += analytic[k].powi(2);
            }
            assert!(diff.sqrt() <= 1e-5 * norm.sqrt().max(1e-12), "tensor {t}: {} vs {}", diff.sqrt(), norm.sqrt());
        }
    }
}

mod loss {
    pub use super::super::train::loss_and_gradients;
}

fn subspace_data(rng: &mut ChaCha8Rng, rows: usize, full: usize, rank: usize) -> Array2<f64> {
    let basis = Array2::from_shape_fn((rank, full), |_| rng.random_range(-1.0..1.0));
    let coeffs = Array2::from_shape_fn((rows, rank), |_| rng.random_range(-1.0..1.0));
    coeffs.dot(&basis)
}

#[test]
fn masked_weights_stay_masked_under_adam() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut m = random_model(&mut rng, 10, 2, 20, 1, 4);
    let target = Array2::from_shape_fn((10, 16), |_| rng.random_range(-1.0..1.0));
    let mut adam = AdamState::new(&m.weights);
    for _ in 0..100 {
        let (_, g) = loss_and_gradients(&m, &target, &target);
        adam.step(&mut m.weights, &g, 1e-2);
    }
    let dense_out = m.dense_w_out();
    let dense_in = m.dense_w_in();
    for r in 0..10 {
        for h in 0..20 {
            if !m.mask.contains(r, h) {
                assert_eq!(dense_out[r][h], 0.0);
                assert_eq!(dense_in[h][r], 0.0);
            }
        }
    }
}

fn small_config(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch: 32,
        lr0: 1e-2,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_improves() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let data = subspace_data(&mut rng, 200, 16, 3);
    let mask = MaskParams { band_size: 3, band_spacing: 4 };
    let run = || {
        let out = train(data.view(), 3, mask, &small_config(30)).unwrap();
        let mut csv = Vec::new();
        out.history.write_csv(&mut csv).unwrap();
        (out, csv)
    };
    let (a, csv_a) = run();
    let (b, csv_b) = run();
    assert_eq!(csv_a, csv_b);
    assert_eq!(a.model, b.model);
    assert_eq!(a.history.rows.len(), 31);
    assert!(a.history.best_val() < a.history.initial_val());
    assert_eq!((a.train_rows.len(), a.val_rows.len()), (160, 40));
    let text = String::from_utf8(csv_a).unwrap();
    assert!(text.starts_with("# ddnmrom-history v1\nepoch,train_mse,val_mse,lr\n0,"));
}

#[test]
fn zero_learning_rate_returns_initial_model() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let data = subspace_data(&mut rng, 50, 8, 2);
    let cfg = TrainConfig {
        lr0: 0.0,
        noise_sigma: 0.0,
        ..small_config(3)
    };
    let out = train(data.view(), 2, MaskParams { band_size: 2, band_spacing: 2 }, &cfg).unwrap();
    assert_eq!(out.history.best_epoch, 0);
    let h = &out.history.rows;
    assert!(h.iter().all(|r| r.val_mse == h[0].val_mse));
    // recompute the plain reconstruction error independently
    let mut sum = 0.0;
    for &r in &out.val_rows {
        let x = data.row(r).to_vec();
        let rec = out.model.reconstruct(&x).unwrap();
        for f in 0..8 {
            sum += ((rec[f] - x[f]) / out.model.norm.scale[f]).powi(2);
        }
    }
    let mse = sum / (out.val_rows.len() * 8) as f64;
    assert!((mse - h[0].val_mse).abs() <= 1e-12 * mse);
}

#[test]
fn recovers_a_linear_subspace() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let data = subspace_data(&mut rng, 400, 12, 2);
    let cfg = TrainConfig {
        noise_sigma: 0.0,
        batch: 64,
        lr0: 3e-3,
        ..small_config(1500)
    };
    let out = train(data.view(), 2, MaskParams { band_size: 24, band_spacing: 0 }, &cfg).unwrap();
    // normalized units: per-feature variance is one
    assert!(out.history.best_val() <= 1e-4, "{}", out.history.best_val());
}

#[test]
fn full_latent_dense_model_reaches_noise_floor() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let data = Array2::from_shape_fn((400, 6), |_| rng.random_range(-1.0..1.0));
    let cfg = TrainConfig {
        batch: 64,
        lr0: 3e-3,
        width_factor: 8,
        ..small_config(2000)
    };
    let out = train(data.view(), 6, MaskParams { band_size: 48, band_spacing: 0 }, &cfg).unwrap();
    let floor = cfg.noise_sigma * cfg.noise_sigma;
    assert!(out.history.best_val() <= floor, "{} vs {floor}", out.history.best_val());
}
