//! Glue for the offline/online workflow: per-role training on a snapshot
//! collection and FOM-vs-ROM evaluation of one deployment case.

use std::sync::Arc;

use log::info;

use crate::ae::{train, MaskParams, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::fom::{initial_condition, ParameterVector};
use crate::metrics::{linf_l2_error, speedup, CaseOutcome, ErrorReport};
use crate::rom::{rom_solve, DdNmRom, RoleModel, RomModels, RomRun};
use crate::snapshots::{SnapshotCollection, SnapshotRole, SnapshotSet};
use crate::sqp::{dd_fom_solve, DdFomRun, SqpOptions};

/// Mask parameters for a role: interior rows are lines of `block_nx - 2`
/// nodes, port rows are four lines (two per component).
pub fn role_mask_params(role: SnapshotRole, full_dim: usize, width_factor: usize, block_nx: usize) -> MaskParams {
    let line = match role {
        SnapshotRole::Interior => block_nx.saturating_sub(2),
        SnapshotRole::VerticalPort | SnapshotRole::HorizontalPort => full_dim / 4,
    };
    MaskParams::for_lines(full_dim, width_factor * full_dim, line.max(1))
}

/// Seed used for a role: distinct per role, derived from the run seed.
pub fn role_seed(seed: u64, role: SnapshotRole) -> u64 {
    let k = SnapshotRole::ALL.iter().position(|&r| r == role).unwrap() as u64;
    seed.wrapping_mul(3).wrapping_add(k)
}

pub fn train_role(
    set: &SnapshotSet,
    latent_dim: usize,
    block_nx: usize,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let full = set.data.ncols();
    if full == 0 || set.rows() < 2 {
        return Err(Error::InvalidTraining(format!("{} snapshots are empty", set.role.name())));
    }
    let mask = role_mask_params(set.role, full, config.width_factor, block_nx);
    let cfg = TrainConfig {
        seed: role_seed(config.seed, set.role),
        ..*config
    };
    info!(
        "training {} model: {} rows, N = {full}, n = {latent_dim}",
        set.role.name(),
        set.rows()
    );
    train(set.data.view(), latent_dim, mask, &cfg)
}

/// Trains the three role models; returns outcomes in [`SnapshotRole::ALL`]
/// order.
pub fn train_roles(
    snapshots: &SnapshotCollection,
    interior_dim: usize,
    port_dim: usize,
    block_nx: usize,
    config: &TrainConfig,
) -> Result<Vec<TrainOutcome>> {
    SnapshotRole::ALL
        .iter()
        .map(|&role| {
            let n = if role == SnapshotRole::Interior { interior_dim } else { port_dim };
            train_role(snapshots.get(role), n, block_nx, config)
        })
        .collect()
}

pub fn models_from(outcomes: &[TrainOutcome]) -> RomModels {
    let m = |k: usize| RoleModel::Autoencoder(Arc::new(outcomes[k].model.clone()));
    RomModels {
        interior: m(0),
        vertical: m(1),
        horizontal: m(2),
    }
}

/// Paired FOM and ROM runs of one initial condition.
pub struct CaseRuns {
    pub fom: DdFomRun,
    pub rom: RomRun,
    pub error: ErrorReport,
    pub speedup: f64,
}

impl CaseRuns {
    pub fn outcome(&self) -> CaseOutcome {
        CaseOutcome {
            e_abs: self.error.e_abs,
            e_rel: self.error.e_rel,
            speedup: self.speedup,
        }
    }
}

/// Error and speedup of a ROM run against a reference decomposed FOM run.
pub fn compare(rom: &DdNmRom, fom: &DdFomRun, run: &RomRun) -> Result<(ErrorReport, f64)> {
    let error = linf_l2_error(&fom.subdomain_states, &run.decoded, &rom.fom.layout.grid)?;
    Ok((error, speedup(&fom.timing, &run.timing)))
}

/// Runs the decomposed FOM and the ROM from the same initial condition.
pub fn evaluate_case(
    rom: &DdNmRom,
    mu: &ParameterVector,
    fom_options: &SqpOptions,
    rom_options: &SqpOptions,
) -> Result<CaseRuns> {
    let grid = &rom.fom.layout.grid;
    let x0 = initial_condition(grid, &rom.fom.layout, mu)?;
    let fom = dd_fom_solve(&rom.fom.layout, &rom.fom.params, &x0, fom_options)?;
    let run = rom_solve(rom, &x0, rom_options)?;
    let (error, speedup) = compare(rom, &fom, &run)?;
    Ok(CaseRuns {
        fom,
        rom: run,
        error,
        speedup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{BoundaryCondition, BurgersParams, Grid2D};
    use crate::partition::partition;
    use crate::rom::{compose, ComposeSpec};
    use crate::snapshots::collect_snapshots;

    #[test]
    fn mask_lines_follow_the_role_layout() {
        let m = role_mask_params(SnapshotRole::Interior, 2 * 18 * 18, 2, 20);
        assert_eq!(m.band_spacing, 2 * 18);
        let p = role_mask_params(SnapshotRole::VerticalPort, 72, 2, 20);
        assert_eq!(p.band_spacing, 2 * 18);
        assert_ne!(role_seed(5, SnapshotRole::Interior), role_seed(5, SnapshotRole::HorizontalPort));
    }

    #[test]
    fn tiny_offline_online_round() {
        let g = Grid2D::new(12, 12, (0.0, 1.0), (0.0, 1.0), BoundaryCondition::Periodic).unwrap();
        let layout = partition(&g, 2, 2).unwrap();
        let params = BurgersParams::with_steps(1e-3, 0.02, 3).unwrap();
        let configs: Vec<ParameterVector> = (0..3)
            .map(|k| ParameterVector::new(vec![1.0, 0.5 + 0.2 * k as f64, 0.0, 0.8]).unwrap())
            .collect();
        let snaps = collect_snapshots(&configs, &layout, &params).unwrap();
        let cfg = TrainConfig {
            epochs: 5,
            batch: 8,
            ..TrainConfig::default()
        };
        let outcomes = train_roles(&snaps, 4, 3, 6, &cfg).unwrap();
        assert_eq!(outcomes[0].model.full_dim, 32);
        assert_eq!(outcomes[1].model.latent_dim, 3);
        let spec = ComposeSpec {
            blocks_x: 2,
            blocks_y: 2,
            block_nx: 6,
            block_ny: 6,
            bc: BoundaryCondition::Periodic,
            x_extent: (0.0, 1.0),
            y_extent: (0.0, 1.0),
        };
        let rom = compose(&spec, models_from(&outcomes), &params).unwrap();
        let mu = ParameterVector::new(vec![1.0, 0.7, 0.0, 0.9]).unwrap();
        let case = evaluate_case(&rom, &mu, &SqpOptions::fom(g.n_dofs()), &SqpOptions::rom()).unwrap();
        assert!(case.error.e_abs.is_finite() && case.error.e_rel > 0.0);
        assert!(case.rom.max_violation() <= 1e-8);
        assert_eq!(case.rom.decoded.len(), 4);
    }
}
