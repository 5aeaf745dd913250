use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskParams {
    /// Nonzeros per band.
    pub band_size: usize,
    /// Hidden-index distance between the three bands.
    pub band_spacing: usize,
}

impl MaskParams {
    /// Defaults for a block whose state is laid out as lines of `line_len`
    /// grid nodes: neighbouring lines map `band_spacing` hidden units apart.
    pub fn for_lines(full_dim: usize, hidden_width: usize, line_len: usize) -> Self {
        Self {
            band_size: 3,
            band_spacing: (hidden_width * line_len) / full_dim.max(1),
        }
    }
}

/// Sparsity pattern of the `N x width` output layer (its transpose is the
/// input layer's pattern).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriBandMask {
    pub rows: usize,
    pub cols: usize,
    pub band_size: usize,
    pub band_spacing: usize,
    /// Nonzero positions `(row, col)`, sorted.
    pub entries: Vec<(usize, usize)>,
}

impl TriBandMask {
    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.entries.binary_search(&(row, col)).is_ok()
    }

    pub fn row_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.rows];
        for &(r, _) in &self.entries {
            c[r] += 1;
        }
        c
    }

    pub fn params(&self) -> MaskParams {
        MaskParams {
            band_size: self.band_size,
            band_spacing: self.band_spacing,
        }
    }
}

/// Row `r` gets three bands of `band_size` columns centred at
/// `round(r * w / N) + {-s, 0, +s}`. A band whose centre falls outside
/// `[0, w)` is dropped; a surviving band that overhangs an edge is shifted
/// inward.
pub fn build_triband_mask(full_dim: usize, hidden_width: usize, band_size: usize, band_spacing: usize) -> Result<TriBandMask> {
    if full_dim == 0 || hidden_width == 0 || band_size == 0 {
        return Err(Error::InvalidMask("dimensions and band size must be positive".into()));
    }
    if hidden_width < band_spacing + band_size {
        return Err(Error::InvalidMask(format!(
            "hidden width {hidden_width} is smaller than spacing {band_spacing} + band size {band_size}"
        )));
    }
    let w = hidden_width as i64;
    let b = band_size as i64;
    let s = band_spacing as i64;
    let mut entries = Vec::new();
    let mut cols: Vec<i64> = Vec::with_capacity(3 * band_size);
    for r in 0..full_dim {
        let center = (((r as f64) * hidden_width as f64 / full_dim as f64).round() as i64).min(w - 1);
        cols.clear();
        for off in [-s, 0, s] {
            let c = center + off;
            if c < 0 || c >= w {
                continue;
            }
            let start = (c - (b - 1) / 2).clamp(0, w - b);
            cols.extend(start..start + b);
        }
        cols.sort_unstable();
        cols.dedup();
        if cols.is_empty() {
            return Err(Error::InvalidMask(format!("row {r} has no nonzeros")));
        }
        entries.extend(cols.iter().map(|&c| (r, c as usize)));
    }
    Ok(TriBandMask {
        rows: full_dim,
        cols: hidden_width,
        band_size,
        band_spacing,
        entries,
    })
}
