use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Boundary condition applied on all four sides of the domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BoundaryCondition {
    /// Nodes sit at `x0 + i h` for `i = 0..n`, with `h = L / n`; index `n` wraps to `0`.
    Periodic,
    /// Nodes include both endpoints, `h = L / (n - 1)`; ghost nodes mirror the
    /// first interior node.
    HomogeneousNeumann,
}

impl BoundaryCondition {
    pub fn code(self) -> u32 {
        match self {
            BoundaryCondition::Periodic => 0,
            BoundaryCondition::HomogeneousNeumann => 1,
        }
    }

    pub fn from_code(code: u32) -> Result<Self> {
        match code {
            0 => Ok(BoundaryCondition::Periodic),
            1 => Ok(BoundaryCondition::HomogeneousNeumann),
            other => Err(Error::Format(format!("unknown boundary condition code {other}"))),
        }
    }
}

/// Uniform structured grid carrying two velocity components per node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub x_extent: (f64, f64),
    pub y_extent: (f64, f64),
    pub hx: f64,
    pub hy: f64,
    pub bc: BoundaryCondition,
}

/// Neighbor node indices of a node, in `[east, west, north, south]` order.
pub type Neighbors = [usize; 4];

impl Grid2D {
    pub fn new(
        nx: usize,
        ny: usize,
        x_extent: (f64, f64),
        y_extent: (f64, f64),
        bc: BoundaryCondition,
    ) -> Result<Self> {
        if nx < 3 || ny < 3 {
            return Err(Error::InvalidGrid(format!(
                "need at least 3 nodes per direction, got {nx}x{ny}"
            )));
        }
        let lx = x_extent.1 - x_extent.0;
        let ly = y_extent.1 - y_extent.0;
        if !(lx > 0.0 && ly > 0.0 && lx.is_finite() && ly.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "degenerate extents {x_extent:?} x {y_extent:?}"
            )));
        }
        let (hx, hy) = match bc {
            BoundaryCondition::Periodic => (lx / nx as f64, ly / ny as f64),
            BoundaryCondition::HomogeneousNeumann => (lx / (nx - 1) as f64, ly / (ny - 1) as f64),
        };
        Ok(Self {
            nx,
            ny,
            x_extent,
            y_extent,
            hx,
            hy,
            bc,
        })
    }

    pub fn n_nodes(&self) -> usize {
        self.nx * self.ny
    }

    /// Length of a monolithic state: all `u` values, then all `v` values.
    pub fn n_dofs(&self) -> usize {
        2 * self.n_nodes()
    }

    /// `h_x h_y`.
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    #[inline]
    pub fn node(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn node_ij(&self, node: usize) -> (usize, usize) {
        (node % self.nx, node / self.nx)
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.x_extent.0 + i as f64 * self.hx,
            self.y_extent.0 + j as f64 * self.hy,
        )
    }

    fn wrap(&self, k: isize, n: usize) -> usize {
        match self.bc {
            BoundaryCondition::Periodic => k.rem_euclid(n as isize) as usize,
            BoundaryCondition::HomogeneousNeumann => {
                if k < 0 {
                    (-k) as usize
                } else if k as usize >= n {
                    2 * (n - 1) - k as usize
                } else {
                    k as usize
                }
            }
        }
    }

    /// East, west, north and south neighbors, resolved through the boundary
    /// condition (wrap for periodic, mirror for Neumann).
    #[inline]
    pub fn neighbors(&self, i: usize, j: usize) -> Neighbors {
        let (ii, jj) = (i as isize, j as isize);
        [
            self.node(self.wrap(ii + 1, self.nx), j),
            self.node(self.wrap(ii - 1, self.nx), j),
            self.node(i, self.wrap(jj + 1, self.ny)),
            self.node(i, self.wrap(jj - 1, self.ny)),
        ]
    }
}

/// Physics and time-integration constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurgersParams {
    pub nu: f64,
    pub tau: f64,
    pub t_final: f64,
    pub n_steps: usize,
}

impl BurgersParams {
    /// Builds parameters from a final time; `t_final / tau` must be an integer.
    pub fn new(nu: f64, tau: f64, t_final: f64) -> Result<Self> {
        if !(nu > 0.0) || !(tau > 0.0) || !(t_final > 0.0) {
            return Err(Error::InvalidParams(format!(
                "nu, tau and T must be positive (nu={nu}, tau={tau}, T={t_final})"
            )));
        }
        let steps = (t_final / tau).round();
        if ((steps * tau) - t_final).abs() > 1e-12 * t_final {
            return Err(Error::InvalidParams(format!(
                "T={t_final} is not an integer multiple of tau={tau}"
            )));
        }
        Ok(Self {
            nu,
            tau,
            t_final,
            n_steps: steps as usize,
        })
    }

    pub fn with_steps(nu: f64, tau: f64, n_steps: usize) -> Result<Self> {
        if n_steps == 0 {
            return Err(Error::InvalidParams("need at least one time step".into()));
        }
        Self::new(nu, tau, tau * n_steps as f64).map(|mut p| {
            p.n_steps = n_steps;
            p
        })
    }
}
