use super::*;
use crate::partition::partition;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid(n: usize, bc: BoundaryCondition) -> Grid2D {
    Grid2D::new(n, n, (0.0, 1.0), (0.0, 1.0), bc).unwrap()
}

fn params(tau: f64) -> BurgersParams {
    BurgersParams {
        nu: 1e-3,
        tau,
        t_final: tau * 10.0,
        n_steps: 10,
    }
}

fn random_state(g: &Grid2D, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..g.n_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect()
}

const BCS: [BoundaryCondition; 2] = [BoundaryCondition::Periodic, BoundaryCondition::HomogeneousNeumann];

#[test]
fn rhs_vanishes_on_trivial_states() {
    for bc in BCS {
        let g = grid(7, bc);
        assert!(rhs(&vec![0.0; g.n_dofs()], &g, 1e-3).unwrap().iter().all(|&v| v == 0.0));
        let f = rhs(&vec![0.7; g.n_dofs()], &g, 1e-3).unwrap();
        assert!(f.iter().all(|&v| v == 0.0), "{bc:?}");
    }
}

#[test]
fn rhs_rejects_wrong_dimension() {
    let g = grid(5, BoundaryCondition::Periodic);
    assert!(matches!(rhs(&[0.0; 3], &g, 1e-3), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn residual_identities() {
    let g = grid(6, BoundaryCondition::HomogeneousNeumann);
    let p = params(0.02);
    let c = vec![0.3; g.n_dofs()];
    assert!(be_residual(&c, &c, &p, &g).unwrap().iter().all(|&v| v == 0.0));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random_state(&g, &mut rng);
    let f = rhs(&x, &g, p.nu).unwrap();
    let prev: Vec<f64> = x.iter().zip(&f).map(|(a, b)| a - p.tau * b).collect();
    let r = be_residual(&x, &prev, &p, &g).unwrap();
    assert!(r.iter().all(|v| v.abs() < 1e-15));
}

#[test]
fn jacobian_trivial_limits() {
    let g = grid(5, BoundaryCondition::Periodic);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random_state(&g, &mut rng);
    let j = be_jacobian(&x, &params(0.0), &g).unwrap();
    for (r, c, v) in j.iter() {
        assert_eq!(v, if r == c { 1.0 } else { 0.0 });
    }

    // at the zero state only the diffusion operator survives
    for bc in BCS {
        let g = grid(5, bc);
        let p = params(0.02);
        let j = be_jacobian(&vec![0.0; g.n_dofs()], &p, &g).unwrap();
        let n = g.n_nodes();
        let a = p.nu / (g.hx * g.hx);
        for node in 0..n {
            let (i, jn) = g.node_ij(node);
            let nb = g.neighbors(i, jn);
            let mut want = vec![0.0; 2 * n];
            want[node] += 1.0 + p.tau * 4.0 * a;
            for &m in &nb {
                want[m] -= p.tau * a;
            }
            for (c, w) in want.iter().enumerate() {
                assert!((j.get(node, c) - w).abs() < 1e-12);
                assert!((j.get(n + node, (c + n) % (2 * n)) - w).abs() < 1e-12);
            }
        }
    }
}

/// Maximum relative column error between the analytic Jacobian and central
/// finite differences.
fn jacobian_fd_error(x: &[f64], p: &BurgersParams, g: &Grid2D, prev: &[f64]) -> f64 {
    let eps = 1e-6;
    let dense = be_jacobian(x, p, g).unwrap().to_dense();
    let mut worst: f64 = 0.0;
    for col in 0..x.len() {
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[col] += eps;
        xm[col] -= eps;
        let rp = be_residual(&xp, prev, p, g).unwrap();
        let rm = be_residual(&xm, prev, p, g).unwrap();
        let mut diff = 0.0;
        let mut norm = 0.0;
        for r in 0..x.len() {
            let fd = (rp[r] - rm[r]) / (2.0 * eps);
            diff += (fd - dense[r][col]).powi(2);
            norm += dense[r][col].powi(2);
        }
        worst = worst.max(diff.sqrt() / norm.sqrt().max(1e-12));
    }
    worst
}

#[test]
fn jacobian_matches_finite_differences_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let p = params(0.02);
    for trial in 0..100 {
        let n = 3 + trial % 10;
        let m = 3 + (trial * 7) % 10;
        let bc = BCS[trial % 2];
        let g = Grid2D::new(n, m, (0.0, 1.0), (0.0, 1.3), bc).unwrap();
        let x = random_state(&g, &mut rng);
        let prev = random_state(&g, &mut rng);
        let err = jacobian_fd_error(&x, &p, &g, &prev);
        assert!(err <= 1e-5, "trial {trial}: relative error {err:e}");
    }
}

#[test]
fn periodic_rhs_commutes_with_cyclic_shift() {
    let g = grid(9, BoundaryCondition::Periodic);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = random_state(&g, &mut rng);
    let n = g.n_nodes();
    let shift = |s: &[f64]| {
        let mut out = vec![0.0; s.len()];
        for c in 0..2 {
            for j in 0..g.ny {
                for i in 0..g.nx {
                    out[c * n + g.node((i + 1) % g.nx, j)] = s[c * n + g.node(i, j)];
                }
            }
        }
        out
    };
    let a = rhs(&shift(&x), &g, 1e-3).unwrap();
    let b = shift(&rhs(&x, &g, 1e-3).unwrap());
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() <= 1e-14 * (1.0 + q.abs()));
    }
}

#[test]
fn initial_condition_shape() {
    let g = grid(8, BoundaryCondition::Periodic);
    let layout = partition(&g, 2, 2).unwrap();
    let zero = initial_condition(&g, &layout, &ParameterVector::new(vec![0.0; 4]).unwrap()).unwrap();
    assert!(zero.iter().all(|&v| v == 0.0));

    let mu = ParameterVector::new(vec![1.0, 0.0, 0.0, 0.0]).unwrap();
    let x = initial_condition(&g, &layout, &mu).unwrap();
    let n = g.n_nodes();
    // node (2, 2) sits at (0.25, 0.25) in the bottom-left block
    assert!((x[g.node(2, 2)] - 1.0).abs() < 1e-15);
    assert_eq!(&x[..n], &x[n..]);
    assert!(x.iter().all(|&v| v >= 0.0));
    // other blocks have zero amplitude
    assert_eq!(x[g.node(6, 6)], 0.0);

    assert!(initial_condition(&g, &layout, &ParameterVector::new(vec![1.0]).unwrap()).is_err());
    assert!(ParameterVector::new(vec![-1.0]).is_err());
}

#[test]
fn monolithic_fixed_points() {
    let p = params(0.02);
    let g = grid(6, BoundaryCondition::Periodic);
    let traj = solve_monolithic(&p, &g, &vec![0.0; g.n_dofs()]).unwrap();
    assert_eq!(traj.states.len(), p.n_steps + 1);
    assert!(traj.states.iter().all(|s| s.iter().all(|&v| v == 0.0)));

    let c = vec![0.4; g.n_dofs()];
    let traj = solve_monolithic(&p, &g, &c).unwrap();
    assert!(traj.all_converged());
    for s in &traj.states {
        assert_eq!(s, &c);
    }
}

#[test]
fn newton_reaches_tolerance() {
    let g = grid(16, BoundaryCondition::HomogeneousNeumann);
    let layout = partition(&g, 2, 2).unwrap();
    let p = params(0.02);
    let x0 = initial_condition(&g, &layout, &ParameterVector::new(vec![1.0, 0.5, 1.2, 0.0]).unwrap())
        .unwrap();
    let traj = solve_monolithic(&p, &g, &x0).unwrap();
    traj.ensure_converged().unwrap();
    let tol = NEWTON_RTOL * (g.n_dofs() as f64).sqrt();
    for r in &traj.reports {
        assert!(r.residual_norm <= tol);
        assert!(r.iterations <= 6, "step {} took {} iterations", r.step, r.iterations);
    }
}

#[test]
fn jacobian_reuse_meets_the_same_tolerance() {
    let g = grid(16, BoundaryCondition::Periodic);
    let layout = partition(&g, 2, 2).unwrap();
    let p = params(0.02);
    let x0 = initial_condition(&g, &layout, &ParameterVector::new(vec![1.0, 0.8, 0.0, 1.2]).unwrap())
        .unwrap();
    let exact = solve_monolithic(&p, &g, &x0).unwrap();
    let lazy = solve_monolithic_with(&p, &g, &x0, NewtonOptions::snapshots()).unwrap();
    lazy.ensure_converged().unwrap();
    let tol = NEWTON_RTOL * (g.n_dofs() as f64).sqrt();
    assert!(lazy.reports.iter().all(|r| r.residual_norm <= tol));
    for (a, b) in exact.states.iter().zip(&lazy.states) {
        let d = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        assert!(d <= 1e-8, "{d}");
    }
    assert_eq!(lazy.states.len(), p.n_steps + 1);
}
