//! Fixtures shared by the benchmarks.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ddrom::ae::{build_triband_mask, Normalization};
use ddrom::fom::initial_condition;
use ddrom::partition::partition;
use ddrom::pipeline::role_mask_params;
use ddrom::{AutoencoderModel, BoundaryCondition, BurgersParams, Grid2D, ParameterVector, SnapshotRole, SubdomainLayout};

/// Periodic unit-square grid split into `blocks x blocks` subdomains.
pub fn periodic_layout(n: usize, blocks: usize) -> SubdomainLayout {
    let g = Grid2D::new(n, n, (0.0, 1.0), (0.0, 1.0), BoundaryCondition::Periodic).unwrap();
    partition(&g, blocks, blocks).unwrap()
}

pub fn params(steps: usize) -> BurgersParams {
    BurgersParams::with_steps(1e-3, 0.02, steps).unwrap()
}

/// Bump initial condition with amplitudes cycling through `[1, 0.8, 0, 1.2]`.
pub fn bump_state(layout: &SubdomainLayout) -> Vec<f64> {
    let amps = [1.0, 0.8, 0.0, 1.2];
    let mu = (0..layout.n_subdomains()).map(|k| amps[k % 4]).collect();
    initial_condition(&layout.grid, layout, &ParameterVector::new(mu).unwrap()).unwrap()
}

/// Randomly initialized interior model for square blocks of `block_nx` nodes.
pub fn interior_model(block_nx: usize, latent: usize, seed: u64) -> AutoencoderModel {
    let full = 2 * (block_nx - 2) * (block_nx - 2);
    let m = role_mask_params(SnapshotRole::Interior, full, 2, block_nx);
    let mask = build_triband_mask(full, 2 * full, m.band_size, m.band_spacing).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AutoencoderModel::random(full, latent, mask, Normalization::identity(full), &mut rng).unwrap()
}

/// Feature-major batch of uniform samples in `[-1, 1)`.
pub fn random_batch(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}
