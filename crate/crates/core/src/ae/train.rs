use std::io::Write;

use log::info;
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{build_triband_mask, sigmoid, AeWeights, AutoencoderModel, MaskParams, Normalization};
use crate::error::{Error, Result};
use crate::snapshots::split_indices;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    /// Standard deviation of the Gaussian noise added to normalized inputs.
    pub noise_sigma: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    /// Fraction of snapshots used for training; the rest validate.
    pub train_fraction: f64,
    /// Hidden width as a multiple of the full dimension.
    pub width_factor: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch: 1024,
            lr0: 1e-3,
            noise_sigma: 0.01,
            plateau_factor: 0.5,
            plateau_patience: 20,
            early_stop_patience: 100,
            train_fraction: 0.8,
            width_factor: 2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidTraining(m.to_string()));
        if self.batch == 0 || self.width_factor == 0 {
            return bad("batch size and width factor must be positive");
        }
        if !(self.lr0 >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("learning rate and noise level must be non-negative");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau factor must lie in (0, 1]");
        }
        if self.plateau_patience == 0 || self.early_stop_patience == 0 {
            return bad("patience values must be positive");
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad("train fraction must lie in (0, 1)");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub train_mse: f64,
    pub val_mse: f64,
    pub lr: f64,
}

/// Per-epoch losses; row 0 describes the untrained model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub rows: Vec<HistoryRow>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

impl TrainingHistory {
    pub fn initial_val(&self) -> f64 {
        self.rows[0].val_mse
    }

    pub fn best_val(&self) -> f64 {
        self.rows[self.best_epoch].val_mse
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "# ddnmrom-history v1")?;
        writeln!(w, "epoch,train_mse,val_mse,lr")?;
        for r in &self.rows {
            writeln!(w, "{},{:e},{:e},{:e}", r.epoch, r.train_mse, r.val_mse, r.lr)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AutoencoderModel,
    pub history: TrainingHistory,
    pub train_rows: Vec<usize>,
    pub val_rows: Vec<usize>,
}

/// Gradients share the weights' layout.
pub type Gradients = AeWeights;

/// Feature-major (features x batch) normalized block of the given rows.
fn normalized_batch(data: ArrayView2<f64>, rows: &[usize], norm: &Normalization) -> Array2<f64> {
    let mut x = Array2::zeros((data.ncols(), rows.len()));
    for (b, &r) in rows.iter().enumerate() {
        for (f, &v) in data.row(r).iter().enumerate() {
            x[[f, b]] = (v - norm.shift[f]) / norm.scale[f];
        }
    }
    x
}

struct Forward {
    a1_slope: Array2<f64>,
    z1: Array2<f64>,
    latent: Array2<f64>,
    a2_slope: Array2<f64>,
    z2: Array2<f64>,
    out: Array2<f64>,
}

/// Applies swish in place and returns its derivative.
fn swish_in_place(a: &mut Array2<f64>) -> Array2<f64> {
    let mut slope = Array2::zeros(a.raw_dim());
    ndarray::Zip::from(a).and(&mut slope).for_each(|z, d| {
        let s = sigmoid(*z);
        *d = s + *z * s * (1.0 - s);
        *z *= s;
    });
    slope
}

fn forward(model: &AutoencoderModel, input: ArrayView2<f64>) -> Forward {
    let wt = &model.weights;
    let (w, n, nb) = (model.hidden_width(), model.latent_dim, input.ncols());
    let mut z1 = Array2::zeros((w, nb));
    for (h, mut row) in z1.axis_iter_mut(Axis(0)).enumerate() {
        row.fill(wt.b_in[h]);
    }
    for (k, &(r, h)) in model.mask.entries.iter().enumerate() {
        z1.row_mut(h).scaled_add(wt.w_in[k], &input.row(r));
    }
    let a1_slope = swish_in_place(&mut z1);
    let w_enc = ArrayView2::from_shape((n, w), &wt.w_enc).unwrap();
    let mut latent = w_enc.dot(&z1);
    latent += &Array1::from(wt.b_enc.clone()).insert_axis(Axis(1));
    let w_dec = ArrayView2::from_shape((w, n), &wt.w_dec).unwrap();
    let mut z2 = w_dec.dot(&latent);
    z2 += &Array1::from(wt.b_dec.clone()).insert_axis(Axis(1));
    let a2_slope = swish_in_place(&mut z2);
    let mut out = Array2::zeros((model.full_dim, nb));
    for (k, &(r, h)) in model.mask.entries.iter().enumerate() {
        out.row_mut(r).scaled_add(wt.w_out[k], &z2.row(h));
    }
    Forward {
        a1_slope,
        z1,
        latent,
        a2_slope,
        z2,
        out,
    }
}

/// Columns processed together; keeps the hidden activations cache-sized.
const CHUNK: usize = 128;

/// Mean squared reconstruction error over all entries of a normalized
/// feature-major batch, and its gradient. `input` is the (possibly noisy)
/// encoder input, `target` the clean batch.
pub fn loss_and_gradients(model: &AutoencoderModel, input: &Array2<f64>, target: &Array2<f64>) -> (f64, Gradients) {
    let count = (target.nrows() * target.ncols()) as f64;
    let mut g = AeWeights::zeros(&model.mask, model.latent_dim);
    let mut sq = 0.0;
    let mut start = 0;
    while start < target.ncols() {
        let end = (start + CHUNK).min(target.ncols());
        let cols = s![.., start..end];
        sq += accumulate_chunk(model, input.slice(cols), target.slice(cols), 2.0 / count, &mut g);
        start = end;
    }
    (sq / count, g)
}

/// Adds `weight * d(sum of squared errors)/d(params)` of one column chunk to
/// `g`; returns the chunk's sum of squared errors.
fn accumulate_chunk(
    model: &AutoencoderModel,
    input: ArrayView2<f64>,
    target: ArrayView2<f64>,
    weight: f64,
    g: &mut Gradients,
) -> f64 {
    let wt = &model.weights;
    let (w, n) = (model.hidden_width(), model.latent_dim);
    let f = forward(model, input);
    let mut d_out = &f.out - &target;
    let sq = d_out.iter().map(|v| v * v).sum::<f64>();
    d_out *= weight;

    let mut d_z2 = Array2::zeros(f.z2.raw_dim());
    for (k, &(r, h)) in model.mask.entries.iter().enumerate() {
        g.w_out[k] += d_out.row(r).dot(&f.z2.row(h));
        d_z2.row_mut(h).scaled_add(wt.w_out[k], &d_out.row(r));
    }
    let d_a2 = d_z2 * &f.a2_slope;
    add_into(&mut g.w_dec, d_a2.dot(&f.latent.t()).iter());
    add_into(&mut g.b_dec, d_a2.sum_axis(Axis(1)).iter());
    let w_dec = ArrayView2::from_shape((w, n), &wt.w_dec).unwrap();
    let d_latent = w_dec.t().dot(&d_a2);
    add_into(&mut g.w_enc, d_latent.dot(&f.z1.t()).iter());
    add_into(&mut g.b_enc, d_latent.sum_axis(Axis(1)).iter());
    let w_enc = ArrayView2::from_shape((n, w), &wt.w_enc).unwrap();
    let d_a1 = w_enc.t().dot(&d_latent) * &f.a1_slope;
    add_into(&mut g.b_in, d_a1.sum_axis(Axis(1)).iter());
    for (k, &(r, h)) in model.mask.entries.iter().enumerate() {
        g.w_in[k] += d_a1.row(h).dot(&input.row(r));
    }
    sq
}

/// Adds a row-major sequence elementwise.
fn add_into<'a>(dst: &mut [f64], src: impl Iterator<Item = &'a f64>) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

/// Clean reconstruction MSE (normalized units) over the listed rows.
pub fn evaluate_mse(model: &AutoencoderModel, data: ArrayView2<f64>, rows: &[usize]) -> f64 {
    let mut sum = 0.0;
    for chunk in rows.chunks(CHUNK) {
        let x = normalized_batch(data, chunk, &model.norm);
        let f = forward(model, x.view());
        sum += (&f.out - &x).iter().map(|v| v * v).sum::<f64>();
    }
    sum / (rows.len() * model.full_dim) as f64
}

#[derive(Debug, Clone)]
pub struct AdamState {
    m: AeWeights,
    v: AeWeights,
    t: i32,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl AdamState {
    pub fn new(like: &AeWeights) -> Self {
        let mut zero = like.clone();
        zero.tensors_mut().into_iter().for_each(|t| t.iter_mut().for_each(|x| *x = 0.0));
        Self {
            m: zero.clone(),
            v: zero,
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step(&mut self, weights: &mut AeWeights, grads: &Gradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let tensors = weights.tensors_mut().into_iter();
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for ((w, (m, v)), g) in tensors.zip(moments).zip(grads.tensors()) {
            for k in 0..w.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                w[k] -= lr * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
}

/// Trains one autoencoder on the rows of `data` (one snapshot per row).
///
/// The rows are split at random into training and validation sets; the
/// normalization is fitted on the training rows. Training is sequential and
/// fully determined by `config.seed`.
pub fn train(data: ArrayView2<f64>, latent_dim: usize, mask: MaskParams, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let (rows, full_dim) = data.dim();
    if rows < 2 {
        return Err(Error::InvalidTraining(format!("need at least 2 snapshots, got {rows}")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTraining("snapshot matrix has non-finite entries".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (train_rows, val_rows) = split_indices(rows, config.train_fraction, &mut rng);
    if train_rows.is_empty() || val_rows.is_empty() {
        return Err(Error::InvalidTraining("split left an empty training or validation set".into()));
    }
    let norm = Normalization::fit(data, &train_rows)?;
    let width = config.width_factor * full_dim;
    let tri = build_triband_mask(full_dim, width, mask.band_size, mask.band_spacing)?;
    let mut model = AutoencoderModel::random(full_dim, latent_dim, tri, norm, &mut rng)?;
    let noise = Normal::new(0.0, config.noise_sigma).map_err(|e| Error::InvalidTraining(e.to_string()))?;

    let mut history = TrainingHistory::default();
    let mut lr = config.lr0;
    history.rows.push(HistoryRow {
        epoch: 0,
        train_mse: evaluate_mse(&model, data, &train_rows),
        val_mse: evaluate_mse(&model, data, &val_rows),
        lr,
    });
    let mut best = (history.rows[0].val_mse, model.weights.clone());
    let mut plateau_best = best.0;
    let (mut since_best, mut since_plateau) = (0, 0);
    let mut adam = AdamState::new(&model.weights);
    let mut order = train_rows.clone();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch) {
            let target = normalized_batch(data, chunk, &model.norm);
            let mut input = target.clone();
            if config.noise_sigma > 0.0 {
                input.iter_mut().for_each(|x| *x += noise.sample(&mut rng));
            }
            let (loss, grads) = loss_and_gradients(&model, &input, &target);
            loss_sum += loss * chunk.len() as f64;
            adam.step(&mut model.weights, &grads, lr);
        }
        let val_mse = evaluate_mse(&model, data, &val_rows);
        history.rows.push(HistoryRow {
            epoch,
            train_mse: loss_sum / order.len() as f64,
            val_mse,
            lr,
        });
        if epoch % 50 == 0 {
            info!("epoch {epoch}: val {val_mse:.4e}, lr {lr:.2e}");
        }
        if val_mse < best.0 {
            best = (val_mse, model.weights.clone());
            history.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if val_mse < plateau_best {
            plateau_best = val_mse;
            since_plateau = 0;
        } else {
            since_plateau += 1;
            if since_plateau >= config.plateau_patience {
                lr *= config.plateau_factor;
                since_plateau = 0;
            }
        }
        if since_best >= config.early_stop_patience {
            info!("early stop at epoch {epoch}; best epoch {}", history.best_epoch);
            break;
        }
    }
    model.weights = best.1;
    Ok(TrainOutcome {
        model,
        history,
        train_rows,
        val_rows,
    })
}
