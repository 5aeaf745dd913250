//! Shallow, wide autoencoders with tri-banded sparse outer layers.
//!
//! ```text
//! encode: x -> n(x) -> swish(W_in n(x) + b_in) -> W_enc . + b_enc
//! decode: y -> swish(W_dec y + b_dec) -> W_out . -> n^{-1}(.)
//! ```
//!
//! `W_in` (width x N) and `W_out` (N x width) share one mask, transposed.

mod mask;
mod train;

pub use mask::{build_triband_mask, MaskParams, TriBandMask};
pub use train::{
    evaluate_mse, loss_and_gradients, train, AdamState, Gradients, HistoryRow, TrainConfig, TrainOutcome, TrainingHistory,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Smallest per-feature scale used by [`Normalization`].
pub const SCALE_FLOOR: f64 = 1e-8;

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
pub fn swish_prime(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

/// Per-feature affine normalization `(x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Normalization {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    /// Mean and (population) standard deviation of the listed rows.
    pub fn fit(data: ndarray::ArrayView2<f64>, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidTraining("cannot normalize an empty set".into()));
        }
        let dim = data.ncols();
        let mut mean = vec![0.0; dim];
        for &r in rows {
            for (m, &v) in mean.iter_mut().zip(data.row(r)) {
                *m += v;
            }
        }
        let n = rows.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for &r in rows {
            for ((s, &v), m) in var.iter_mut().zip(data.row(r)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var.iter().map(|s| (s / n).sqrt().max(SCALE_FLOOR)).collect();
        Ok(Self { shift: mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.shift.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn denormalize(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }
}

/// Trainable weights. Dense matrices are row-major; sparse layers hold one
/// value per mask entry, in mask order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeWeights {
    pub w_in: Vec<f64>,
    pub b_in: Vec<f64>,
    /// latent x width
    pub w_enc: Vec<f64>,
    pub b_enc: Vec<f64>,
    /// width x latent
    pub w_dec: Vec<f64>,
    pub b_dec: Vec<f64>,
    pub w_out: Vec<f64>,
}

impl AeWeights {
    pub fn zeros(mask: &TriBandMask, latent_dim: usize) -> Self {
        let (nnz, w) = (mask.nnz(), mask.cols);
        Self {
            w_in: vec![0.0; nnz],
            b_in: vec![0.0; w],
            w_enc: vec![0.0; latent_dim * w],
            b_enc: vec![0.0; latent_dim],
            w_dec: vec![0.0; w * latent_dim],
            b_dec: vec![0.0; w],
            w_out: vec![0.0; nnz],
        }
    }

    /// Tensors in a fixed order, for optimizers and serialization.
    pub fn tensors(&self) -> [&[f64]; 7] {
        [&self.w_in, &self.b_in, &self.w_enc, &self.b_enc, &self.w_dec, &self.b_dec, &self.w_out]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 7] {
        [
            &mut self.w_in,
            &mut self.b_in,
            &mut self.w_enc,
            &mut self.b_enc,
            &mut self.w_dec,
            &mut self.b_dec,
            &mut self.w_out,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutoencoderModel {
    pub full_dim: usize,
    pub latent_dim: usize,
    pub mask: TriBandMask,
    pub weights: AeWeights,
    pub norm: Normalization,
}

/// Intermediate decoder values reused by the Jacobian.
struct DecoderPass {
    pre: Vec<f64>,
    hidden: Vec<f64>,
}

impl AutoencoderModel {
    /// All-zero weights with identity normalization.
    pub fn zeros(full_dim: usize, latent_dim: usize, mask: TriBandMask) -> Result<Self> {
        Self::validate_dims(full_dim, latent_dim, &mask)?;
        let weights = AeWeights::zeros(&mask, latent_dim);
        Ok(Self {
            full_dim,
            latent_dim,
            mask,
            weights,
            norm: Normalization::identity(full_dim),
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn random<R: Rng>(full_dim: usize, latent_dim: usize, mask: TriBandMask, norm: Normalization, rng: &mut R) -> Result<Self> {
        let mut model = Self::zeros(full_dim, latent_dim, mask)?;
        check_len("normalization", full_dim, norm.dim())?;
        model.norm = norm;
        let w = model.hidden_width() as f64;
        let nnz = model.mask.nnz() as f64;
        // average fan of the sparse layers
        let (fan_in_sparse, fan_out_sparse) = (nnz / w, nnz / full_dim as f64);
        let mut fill = |v: &mut Vec<f64>, fan_in: f64, fan_out: f64| {
            let a = (6.0 / (fan_in + fan_out)).sqrt();
            v.iter_mut().for_each(|x| *x = rng.random_range(-a..a));
        };
        let n = latent_dim as f64;
        fill(&mut model.weights.w_in, fan_in_sparse, fan_out_sparse);
        fill(&mut model.weights.w_enc, w, n);
        fill(&mut model.weights.w_dec, n, w);
        fill(&mut model.weights.w_out, fan_in_sparse, fan_out_sparse);
        Ok(model)
    }

    fn validate_dims(full_dim: usize, latent_dim: usize, mask: &TriBandMask) -> Result<()> {
        if latent_dim == 0 || latent_dim > full_dim {
            return Err(Error::InvalidTraining(format!(
                "latent dimension {latent_dim} must lie in [1, {full_dim}]"
            )));
        }
        check_len("mask rows", full_dim, mask.rows)?;
        Ok(())
    }

    pub fn hidden_width(&self) -> usize {
        self.mask.cols
    }

    /// Encoder applied to a state already in normalized coordinates.
    pub fn encode_normalized(&self, xn: &[f64]) -> Vec<f64> {
        let w = self.hidden_width();
        let wt = &self.weights;
        let mut pre = wt.b_in.clone();
        for (k, &(r, h)) in self.mask.entries.iter().enumerate() {
            pre[h] += wt.w_in[k] * xn[r];
        }
        let hidden: Vec<f64> = pre.iter().map(|&z| swish(z)).collect();
        (0..self.latent_dim)
            .map(|l| wt.b_enc[l] + dot(&wt.w_enc[l * w..(l + 1) * w], &hidden))
            .collect()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("encoder input", self.full_dim, x.len())?;
        Ok(self.encode_normalized(&self.norm.normalize(x)))
    }

    fn decoder_pass(&self, latent: &[f64]) -> DecoderPass {
        let n = self.latent_dim;
        let wt = &self.weights;
        let pre: Vec<f64> = (0..self.hidden_width())
            .map(|h| wt.b_dec[h] + dot(&wt.w_dec[h * n..(h + 1) * n], latent))
            .collect();
        let hidden = pre.iter().map(|&z| swish(z)).collect();
        DecoderPass { pre, hidden }
    }

    fn output_normalized(&self, hidden: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.full_dim];
        for (k, &(r, h)) in self.mask.entries.iter().enumerate() {
            out[r] += self.weights.w_out[k] * hidden[h];
        }
        out
    }

    /// Decoder output in normalized coordinates.
    pub fn decode_normalized(&self, latent: &[f64]) -> Vec<f64> {
        self.output_normalized(&self.decoder_pass(latent).hidden)
    }

    pub fn decode(&self, latent: &[f64]) -> Result<Vec<f64>> {
        check_len("decoder input", self.latent_dim, latent.len())?;
        Ok(self.norm.denormalize(&self.decode_normalized(latent)))
    }

    /// Reconstruction `decode(encode(x))`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.decode(&self.encode(x)?)
    }

    /// Decoded state together with its `N x n` Jacobian (row-major),
    /// `diag(scale) W_out diag(swish'(W_dec y + b_dec)) W_dec`.
    pub fn decode_with_jacobian(&self, latent: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("decoder input", self.latent_dim, latent.len())?;
        let n = self.latent_dim;
        let pass = self.decoder_pass(latent);
        let x = self.norm.denormalize(&self.output_normalized(&pass.hidden));
        let slope: Vec<f64> = pass.pre.iter().map(|&z| swish_prime(z)).collect();
        let wt = &self.weights;
        let mut jac = vec![0.0; self.full_dim * n];
        for (k, &(r, h)) in self.mask.entries.iter().enumerate() {
            let c = self.norm.scale[r] * wt.w_out[k] * slope[h];
            if c == 0.0 {
                continue;
            }
            let row = &mut jac[r * n..(r + 1) * n];
            for (j, &wd) in row.iter_mut().zip(&wt.w_dec[h * n..(h + 1) * n]) {
                *j += c * wd;
            }
        }
        Ok((x, jac))
    }

    pub fn decoder_jacobian(&self, latent: &[f64]) -> Result<Vec<f64>> {
        Ok(self.decode_with_jacobian(latent)?.1)
    }

    /// Dense `W_out` (N x width), zeros outside the mask.
    pub fn dense_w_out(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.hidden_width()]; self.full_dim];
        for (k, &(r, h)) in self.mask.entries.iter().enumerate() {
            d[r][h] = self.weights.w_out[k];
        }
        d
    }

    /// Dense `W_in` (width x N), zeros outside the mask.
    pub fn dense_w_in(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.full_dim]; self.hidden_width()];
        for (k, &(r, h)) in self.mask.entries.iter().enumerate() {
            d[h][r] = self.weights.w_in[k];
        }
        d
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests;
