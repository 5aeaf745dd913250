//! Centered finite-difference discretization of 2D viscous Burgers flow,
//! its Backward Euler residual and Jacobian, and a monolithic Newton solver.

mod grid;
pub mod stencil;

pub use grid::{BoundaryCondition, BurgersParams, Grid2D, Neighbors};

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::linalg::SparseLu;
use crate::partition::SubdomainLayout;
use crate::sparse::CsrMatrix;
use stencil::{stencil_nodes, StencilCoeffs};

/// Newton stops once `||r||_2 <= NEWTON_RTOL * sqrt(N_x)`.
pub const NEWTON_RTOL: f64 = 1e-10;
pub const NEWTON_MAX_ITER: usize = 25;

/// Per-subdomain initial-condition amplitudes `mu_i = gamma_i * xi_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    pub mu: Vec<f64>,
}

impl ParameterVector {
    pub fn new(mu: Vec<f64>) -> Result<Self> {
        if let Some(bad) = mu.iter().find(|m| !(**m >= 0.0) || !m.is_finite()) {
            return Err(Error::InvalidParams(format!("amplitude {bad} must be finite and >= 0")));
        }
        Ok(Self { mu })
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }

    pub fn max_amplitude(&self) -> f64 {
        self.mu.iter().cloned().fold(0.0, f64::max)
    }
}

/// `u = v = |mu_i sin(2 pi x) sin(2 pi y)|` on the nodes owned by subdomain `i`,
/// using global physical coordinates.
pub fn initial_condition(grid: &Grid2D, layout: &SubdomainLayout, mu: &ParameterVector) -> Result<Vec<f64>> {
    check_len("initial condition amplitudes", layout.n_subdomains(), mu.len())?;
    let n = grid.n_nodes();
    let mut x = vec![0.0; 2 * n];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let node = grid.node(i, j);
            let (px, py) = grid.coords(i, j);
            let amp = mu.mu[layout.owner(node)];
            let val = (amp * (2.0 * PI * px).sin() * (2.0 * PI * py).sin()).abs();
            x[node] = val;
            x[n + node] = val;
        }
    }
    Ok(x)
}

fn gather_stencil(x: &[f64], n: usize, nodes: &[usize; 5]) -> ([f64; 5], [f64; 5]) {
    let mut u = [0.0; 5];
    let mut v = [0.0; 5];
    for k in 0..5 {
        u[k] = x[nodes[k]];
        v[k] = x[n + nodes[k]];
    }
    (u, v)
}

/// Semi-discrete right-hand side `f(x)`.
pub fn rhs(state: &[f64], grid: &Grid2D, nu: f64) -> Result<Vec<f64>> {
    check_len("rhs state", grid.n_dofs(), state.len())?;
    let n = grid.n_nodes();
    let coeffs = StencilCoeffs::new(grid, nu);
    let mut out = vec![0.0; 2 * n];
    for node in 0..n {
        let nodes = stencil_nodes(grid, node);
        let (u, v) = gather_stencil(state, n, &nodes);
        let (fu, fv) = coeffs.rhs(&u, &v);
        out[node] = fu;
        out[n + node] = fv;
    }
    Ok(out)
}

/// Backward Euler residual `x_k - x_prev - tau f(x_k)`.
pub fn be_residual(x_k: &[f64], x_prev: &[f64], params: &BurgersParams, grid: &Grid2D) -> Result<Vec<f64>> {
    check_len("residual current state", grid.n_dofs(), x_k.len())?;
    check_len("residual previous state", grid.n_dofs(), x_prev.len())?;
    let n = grid.n_nodes();
    let coeffs = StencilCoeffs::new(grid, params.nu);
    let mut out = vec![0.0; 2 * n];
    for node in 0..n {
        let nodes = stencil_nodes(grid, node);
        let (u, v) = gather_stencil(x_k, n, &nodes);
        let (ru, rv) = coeffs.residual(params.tau, &u, &v, x_prev[node], x_prev[n + node]);
        out[node] = ru;
        out[n + node] = rv;
    }
    Ok(out)
}

/// Jacobian of [`be_residual`] with respect to `x_k`.
pub fn be_jacobian(x_k: &[f64], params: &BurgersParams, grid: &Grid2D) -> Result<CsrMatrix> {
    check_len("jacobian state", grid.n_dofs(), x_k.len())?;
    let n = grid.n_nodes();
    let coeffs = StencilCoeffs::new(grid, params.nu);
    let mut trip = Vec::with_capacity(12 * n);
    for node in 0..n {
        let nodes = stencil_nodes(grid, node);
        let (u, v) = gather_stencil(x_k, n, &nodes);
        let jac = coeffs.jacobian(params.tau, &u, &v);
        for k in 0..5 {
            trip.push((node, nodes[k], jac.uu[k]));
            trip.push((n + node, n + nodes[k], jac.vv[k]));
        }
        trip.push((node, n + node, jac.uv));
        trip.push((n + node, node, jac.vu));
    }
    Ok(CsrMatrix::from_triplets(2 * n, 2 * n, &trip))
}

/// Newton outcome of a single time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Time history `x^(0), ..., x^(N_t)` of monolithic states.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub states: Vec<Vec<f64>>,
    pub reports: Vec<StepReport>,
}

impl Trajectory {
    pub fn all_converged(&self) -> bool {
        self.reports.iter().all(|r| r.converged)
    }

    /// Fails with the first non-converged step, if any.
    pub fn ensure_converged(&self) -> Result<()> {
        match self.reports.iter().find(|r| !r.converged) {
            None => Ok(()),
            Some(r) => Err(Error::NewtonDiverged {
                step: r.step,
                iterations: r.iterations,
                residual: r.residual_norm,
            }),
        }
    }
}

/// Contraction ratio used when snapshots are generated with Jacobian reuse.
pub const JACOBIAN_REUSE_RATIO: f64 = 0.25;

/// Advances `x0` through `params.n_steps` Backward Euler steps with Newton's
/// method, warm-starting each step from the previous state. Steps that hit the iteration cap are kept
/// and flagged in the reports.
pub fn solve_monolithic(params: &BurgersParams, grid: &Grid2D, x0: &[f64]) -> Result<Trajectory> {
    solve_monolithic_with(params, grid, x0, NewtonOptions::default())
}

/// Knobs of [`solve_monolithic_with`]; the default is plain Newton over
/// the full horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NewtonOptions {
    /// Keep the factored Jacobian across iterations and steps, refactoring
    /// only when a residual fails to contract below this ratio times the
    /// previous one. The stopping test is unchanged.
    pub reuse_ratio: Option<f64>,
    /// End the trajectory at the first non-converged step.
    pub stop_on_failure: bool,
}

impl NewtonOptions {
    /// Settings used for snapshot generation.
    pub fn snapshots() -> Self {
        Self {
            reuse_ratio: Some(JACOBIAN_REUSE_RATIO),
            stop_on_failure: true,
        }
    }
}

pub fn solve_monolithic_with(
    params: &BurgersParams,
    grid: &Grid2D,
    x0: &[f64],
    options: NewtonOptions,
) -> Result<Trajectory> {
    check_len("initial state", grid.n_dofs(), x0.len())?;
    let tol = NEWTON_RTOL * (grid.n_dofs() as f64).sqrt();
    let mut lu = SparseLu::new();
    let mut states = Vec::with_capacity(params.n_steps + 1);
    let mut reports = Vec::with_capacity(params.n_steps);
    states.push(x0.to_vec());
    let refactor = |lu: &mut SparseLu, x: &[f64]| -> Result<()> {
        let jac = be_jacobian(x, params, grid)?;
        let trip: Vec<_> = jac.iter().collect();
        lu.factor(grid.n_dofs(), &trip)
    };
    for step in 1..=params.n_steps {
        let prev = states.last().unwrap().clone();
        let mut x = prev.clone();
        let mut iterations = 0;
        let mut last_norm = f64::INFINITY;
        let (norm, converged) = loop {
            let r = be_residual(&x, &prev, params, grid)?;
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= tol {
                break (norm, true);
            }
            if iterations == NEWTON_MAX_ITER || !norm.is_finite() {
                break (norm, false);
            }
            let stale = options.reuse_ratio.map_or(true, |q| norm > q * last_norm);
            if !lu.is_factored() || stale {
                refactor(&mut lu, &x)?;
            }
            let neg: Vec<f64> = r.iter().map(|v| -v).collect();
            let dx = lu.solve_factored(&neg)?;
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
            last_norm = norm;
            iterations += 1;
        };
        if !converged {
            warn!("Newton did not converge at step {step}: residual {norm:.3e}");
        }
        reports.push(StepReport {
            step,
            iterations,
            residual_norm: norm,
            converged,
        });
        states.push(x);
        if !converged && options.stop_on_failure {
            break;
        }
    }
    Ok(Trajectory { states, reports })
}

#[cfg(test)]
mod tests;
