use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::ae::{build_triband_mask, AutoencoderModel, Normalization};
use crate::fom::{initial_condition, ParameterVector};
use crate::partition::PortKind;
use crate::sqp::{dd_fom_solve, ConstrainedLsProblem, SqpOptions};

fn params(steps: usize) -> BurgersParams {
    BurgersParams::with_steps(1e-3, 0.02, steps).unwrap()
}

fn random_ae(rng: &mut ChaCha8Rng, full: usize, latent: usize) -> Arc<AutoencoderModel> {
    let mask = build_triband_mask(full, 2 * full, 2, 2).unwrap();
    let norm = Normalization {
        shift: (0..full).map(|_| rng.random_range(0.0..0.5)).collect(),
        scale: (0..full).map(|_| rng.random_range(0.2..0.5)).collect(),
    };
    let mut m = AutoencoderModel::random(full, latent, mask, norm, rng).unwrap();
    m.weights.b_dec.iter_mut().for_each(|b| *b = rng.random_range(-0.3..0.3));
    Arc::new(m)
}

fn zero_ae(full: usize, latent: usize, shift: f64) -> Arc<AutoencoderModel> {
    let mut m = AutoencoderModel::zeros(full, latent, build_triband_mask(full, 2 * full, 2, 2).unwrap()).unwrap();
    m.norm.shift = (0..full).map(|k| shift + 0.01 * k as f64).collect();
    Arc::new(m)
}

fn periodic(nx: usize, bx: usize, by: usize) -> ComposeSpec {
    ComposeSpec {
        blocks_x: bx,
        blocks_y: by,
        block_nx: nx / bx,
        block_ny: nx / by,
        bc: BoundaryCondition::Periodic,
        x_extent: (0.0, 1.0),
        y_extent: (0.0, 1.0),
    }
}

#[test]
fn identity_roles_reduce_to_subdomain_residuals() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rom = compose(&periodic(12, 2, 2), RomModels::identity(), &params(1)).unwrap();
    let g = rom.fom.layout.grid;
    let x: Vec<f64> = (0..g.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let prev: Vec<f64> = (0..g.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cur = gather(&x, &rom.fom.map);
    let old = gather(&prev, &rom.fom.map);
    let y = rom.encode_state(&x).unwrap();
    let previous: Vec<Vec<f64>> = old.iter().map(|s| s.local()).collect();
    let problem = RomStepProblem::new(&rom, previous).unwrap();
    for i in 0..rom.n_subdomains() {
        let want = rom.fom.subdomain_residual(i, &cur[i], &old[i]).unwrap();
        assert_eq!(problem.residual(i, &y[i]).unwrap(), want);
        assert_eq!(rom.decode_block(i, &y[i]).unwrap(), cur[i].local());
    }
    assert_eq!(rom.n_unknowns(), g.n_dofs());
}

#[test]
fn zero_decoders_evaluate_at_shift_vectors() {
    let spec = periodic(8, 2, 2);
    let models = RomModels {
        interior: RoleModel::Autoencoder(zero_ae(8, 3, 0.2)),
        vertical: RoleModel::Autoencoder(zero_ae(8, 2, 0.4)),
        horizontal: RoleModel::Autoencoder(zero_ae(8, 2, 0.6)),
    };
    let rom = compose(&spec, models, &params(1)).unwrap();
    let st = &rom.fom.map.subdomains[0];
    let y = vec![vec![0.7; rom.blocks[0].n_latent]; 4];
    let q = rom.decode_block(0, &y[0]).unwrap();
    let mut want = vec![f64::NAN; st.n_local()];
    for (k, v) in want[..st.n_interior()].iter_mut().enumerate() {
        *v = 0.2 + 0.01 * k as f64;
    }
    for (&p, &off) in st.ports.iter().zip(&st.port_offsets) {
        let port = &rom.fom.ports.ports[p];
        for k in 0..port.dim() {
            want[st.n_interior() + off + k] = match port.kind {
                PortKind::VerticalEdge => 0.4 + 0.01 * k as f64,
                PortKind::HorizontalEdge => 0.6 + 0.01 * k as f64,
                _ => 0.7,
            };
        }
    }
    assert_eq!(q, want);
    let previous = vec![vec![0.0; st.n_local()]; 4];
    let problem = RomStepProblem::new(&rom, previous.clone()).unwrap();
    let direct = rom.fom.kernels[0].residual(&want, &previous[0]).unwrap();
    assert_eq!(problem.residual(0, &y[0]).unwrap(), direct);
}

#[test]
fn latent_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let models = RomModels {
        interior: RoleModel::Autoencoder(random_ae(&mut rng, 8, 3)),
        vertical: RoleModel::Autoencoder(random_ae(&mut rng, 8, 2)),
        horizontal: RoleModel::Autoencoder(random_ae(&mut rng, 8, 2)),
    };
    let rom = compose(&periodic(8, 2, 2), models, &params(1)).unwrap();
    let g = rom.fom.layout.grid;
    let prev: Vec<f64> = (0..g.n_dofs()).map(|_| rng.random_range(0.0..1.0)).collect();
    let previous: Vec<Vec<f64>> = gather(&prev, &rom.fom.map).iter().map(|s| s.local()).collect();
    let problem = RomStepProblem::new(&rom, previous).unwrap();
    let eps = 1e-6;
    for i in 0..rom.n_subdomains() {
        let y: Vec<f64> = (0..rom.blocks[i].n_latent).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ev = problem.evaluate(i, &y).unwrap();
        assert_eq!(ev.residual, problem.residual(i, &y).unwrap());
        let (mut diff, mut norm) = (0.0f64, 0.0f64);
        for c in 0..y.len() {
            let mut a = y.clone();
            let mut b = y.clone();
            a[c] += eps;
            b[c] -= eps;
            let (ra, rb) = (problem.residual(i, &a).unwrap(), problem.residual(i, &b).unwrap());
            for r in 0..ra.len() {
                let fd = (ra[r] - rb[r]) / (2.0 * eps);
                diff += (fd - ev.jacobian.get(r, c)).powi(2);
                norm += ev.jacobian.get(r, c).powi(2);
            }
        }
        assert!(diff.sqrt() <= 1e-5 * norm.sqrt(), "block {i}: {} vs {}", diff.sqrt(), norm.sqrt());
    }
}

#[test]
fn latent_constraint_counts_and_srpc() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (i_dim, p_dim) = (3, 2);
    let models = RomModels {
        interior: RoleModel::Autoencoder(random_ae(&mut rng, 8, i_dim)),
        vertical: RoleModel::Autoencoder(random_ae(&mut rng, 8, p_dim)),
        horizontal: RoleModel::Autoencoder(random_ae(&mut rng, 8, p_dim)),
    };
    let rom = compose(&periodic(8, 2, 2), models, &params(1)).unwrap();
    let ports = &rom.fom.ports;
    let want_rows: usize = ports
        .ports
        .iter()
        .map(|p| match p.kind {
            PortKind::VerticalEdge | PortKind::HorizontalEdge => p_dim,
            _ => 2 * p.dim(),
        })
        .sum();
    assert_eq!(rom.constraints.n_rows, want_rows);
    for b in &rom.constraints.blocks {
        assert!(b.values().iter().all(|&v| v == 1.0 || v == -1.0));
    }
    assert_eq!(rom.n_unknowns(), 4 * i_dim + 8 * p_dim + 16 * 2);

    // equal latent copies: encode a monolithic state, then perturb shared
    // latents consistently
    let x: Vec<f64> = (0..rom.fom.layout.grid.n_dofs()).map(|_| rng.random_range(0.0..1.0)).collect();
    let mut y = rom.encode_state(&x).unwrap();
    let views: Vec<&[f64]> = y.iter().enumerate().map(|(i, v)| &v[rom.blocks[i].interface_offset..]).collect();
    assert_eq!(rom.constraints.violation(&views).unwrap(), 0.0);
    assert!(rom.decoded_copy_mismatch(&y).unwrap() <= 1e-12);
    let off = rom.blocks[0].interface_offset;
    y[0][off] += 0.25;
    let views: Vec<&[f64]> = y.iter().enumerate().map(|(i, v)| &v[rom.blocks[i].interface_offset..]).collect();
    assert!((rom.constraints.violation(&views).unwrap() - 0.25).abs() < 1e-15);
}

#[test]
fn assembly_dimensions_at_full_scale_latent_sizes() {
    let spec = periodic(100, 2, 2);
    let models = RomModels {
        interior: RoleModel::Autoencoder(zero_ae(2 * 48 * 48, 24, 0.0)),
        vertical: RoleModel::Autoencoder(zero_ae(2 * 2 * 48, 10, 0.0)),
        horizontal: RoleModel::Autoencoder(zero_ae(2 * 2 * 48, 10, 0.0)),
    };
    let rom = compose(&spec, models, &params(1)).unwrap();
    for b in &rom.blocks {
        assert_eq!(b.interface_offset, 24);
        let edge: Vec<_> = b.pieces.iter().filter(|p| p.role.is_some() && p.latent_offset >= 24).collect();
        assert_eq!(edge.len(), 4);
        assert!(edge.iter().all(|p| p.latent_len == 10));
    }
    let edge_rows = rom.constraints.n_rows - 16 * 2 * 2;
    assert_eq!(edge_rows, 8 * 10);
}

#[test]
fn single_block_has_no_constraints() {
    let rom = compose(&periodic(8, 1, 1), RomModels::identity(), &params(1)).unwrap();
    assert_eq!(rom.constraints.n_rows, 0);
    assert_eq!(rom.blocks[0].interface_offset, rom.blocks[0].n_latent);
}

#[test]
fn composition_rejects_mismatched_models() {
    let bad_interior = RomModels {
        interior: RoleModel::Autoencoder(zero_ae(10, 2, 0.0)),
        ..RomModels::identity()
    };
    assert!(matches!(
        compose(&periodic(8, 2, 2), bad_interior, &params(1)),
        Err(Error::IncompatibleModel { .. })
    ));
    let bad_port = RomModels {
        vertical: RoleModel::Autoencoder(zero_ae(12, 2, 0.0)),
        ..RomModels::identity()
    };
    assert!(matches!(
        compose(&periodic(8, 2, 2), bad_port, &params(1)),
        Err(Error::IncompatibleModel { .. })
    ));
}

#[test]
fn neumann_composition_wiring() {
    let models = RomModels {
        interior: RoleModel::Autoencoder(zero_ae(2 * 18 * 18, 12, 0.0)),
        vertical: RoleModel::Autoencoder(zero_ae(2 * 2 * 18, 6, 0.0)),
        horizontal: RoleModel::Autoencoder(zero_ae(2 * 2 * 18, 6, 0.0)),
    };
    let spec = ComposeSpec {
        blocks_x: 4,
        blocks_y: 4,
        block_nx: 20,
        block_ny: 20,
        bc: BoundaryCondition::HomogeneousNeumann,
        x_extent: (0.0, 2.0),
        y_extent: (0.0, 2.0),
    };
    let rom = compose(&spec, models, &params(1)).unwrap();
    let ports = &rom.fom.ports;
    assert_eq!(ports.count(PortKind::VerticalEdge) + ports.count(PortKind::HorizontalEdge), 24);
    assert_eq!(ports.count(PortKind::Corner), 36);
    // wall rings stay at full order: 80 * 4 - 4 boundary nodes, minus the
    // 2 * 3 nodes per wall that sit on interface bands, two components
    let remainder: usize = rom
        .blocks
        .iter()
        .flat_map(|b| b.pieces.iter().filter(|p| p.role.is_none() && p.latent_offset < b.interface_offset))
        .map(|p| p.latent_len)
        .sum();
    assert_eq!(remainder, 2 * (4 * 80 - 4 - 4 * 6));
    let full_ports: usize = ports.ports.iter().filter(|p| !p.kind.is_edge()).map(|p| p.dim()).sum();
    assert_eq!(rom.n_unknowns(), 16 * 12 + 24 * 6 + remainder + full_ports);
}

#[test]
fn identity_rom_reproduces_dd_fom() {
    let spec = periodic(12, 2, 2);
    let p = params(5);
    let rom = compose(&spec, RomModels::identity(), &p).unwrap();
    let g = rom.fom.layout.grid;
    let mu = ParameterVector::new(vec![1.0, 0.8, 0.0, 1.2]).unwrap();
    let x0 = initial_condition(&g, &rom.fom.layout, &mu).unwrap();
    let opts = SqpOptions::fom(g.n_dofs());
    let fom = dd_fom_solve(&rom.fom.layout, &p, &x0, &opts).unwrap();
    let run = rom_solve(&rom, &x0, &opts).unwrap();
    let err = crate::metrics::linf_l2_error(&fom.subdomain_states, &run.decoded, &g).unwrap();
    assert!(err.e_abs <= 1e-8, "{}", err.e_abs);
    assert!(run.max_violation() <= 1e-8);
    assert_eq!(run.latents.steps.len(), 6);
    assert!(run.max_abs <= 2.0 * 1.2);
}
