//! Per-node Burgers kernel shared by the monolithic and subdomain
//! evaluators, so both produce bitwise-identical residual rows.

use super::grid::Grid2D;

/// Stencil slot order used throughout: center, east, west, north, south.
pub const P: usize = 0;
pub const E: usize = 1;
pub const W: usize = 2;
pub const N: usize = 3;
pub const S: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct StencilCoeffs {
    inv_2hx: f64,
    inv_2hy: f64,
    nu_hx2: f64,
    nu_hy2: f64,
}

impl StencilCoeffs {
    pub fn new(grid: &Grid2D, nu: f64) -> Self {
        Self {
            inv_2hx: 0.5 / grid.hx,
            inv_2hy: 0.5 / grid.hy,
            nu_hx2: nu / (grid.hx * grid.hx),
            nu_hy2: nu / (grid.hy * grid.hy),
        }
    }

    /// Right-hand side `f` of both momentum equations at one node.
    #[inline]
    pub fn rhs(&self, u: &[f64; 5], v: &[f64; 5]) -> (f64, f64) {
        let fu = -u[P] * (u[E] - u[W]) * self.inv_2hx - v[P] * (u[N] - u[S]) * self.inv_2hy
            + self.nu_hx2 * (u[E] - 2.0 * u[P] + u[W])
            + self.nu_hy2 * (u[N] - 2.0 * u[P] + u[S]);
        let fv = -u[P] * (v[E] - v[W]) * self.inv_2hx - v[P] * (v[N] - v[S]) * self.inv_2hy
            + self.nu_hx2 * (v[E] - 2.0 * v[P] + v[W])
            + self.nu_hy2 * (v[N] - 2.0 * v[P] + v[S]);
        (fu, fv)
    }

    /// Backward Euler residual rows `x - x_prev - tau f(x)` at one node.
    #[inline]
    pub fn residual(
        &self,
        tau: f64,
        u: &[f64; 5],
        v: &[f64; 5],
        u_prev: f64,
        v_prev: f64,
    ) -> (f64, f64) {
        let (fu, fv) = self.rhs(u, v);
        (u[P] - u_prev - tau * fu, v[P] - v_prev - tau * fv)
    }

    /// Derivatives of the two residual rows of a node.
    ///
    /// `same[k]` holds `d r_u / d u_k` (and `d r_v / d v_k`) for the five
    /// stencil slots; `cross_u` is `d r_u / d v_P` and `cross_v` is
    /// `d r_v / d u_P`.
    #[inline]
    pub fn jacobian(&self, tau: f64, u: &[f64; 5], v: &[f64; 5]) -> NodeJacobian {
        let lap_diag = -2.0 * (self.nu_hx2 + self.nu_hy2);
        let east = -u[P] * self.inv_2hx + self.nu_hx2;
        let west = u[P] * self.inv_2hx + self.nu_hx2;
        let north = -v[P] * self.inv_2hy + self.nu_hy2;
        let south = v[P] * self.inv_2hy + self.nu_hy2;

        let du_dx = (u[E] - u[W]) * self.inv_2hx;
        let du_dy = (u[N] - u[S]) * self.inv_2hy;
        let dv_dx = (v[E] - v[W]) * self.inv_2hx;
        let dv_dy = (v[N] - v[S]) * self.inv_2hy;

        let uu = [
            1.0 - tau * (-du_dx + lap_diag),
            -tau * east,
            -tau * west,
            -tau * north,
            -tau * south,
        ];
        let vv = [
            1.0 - tau * (-dv_dy + lap_diag),
            -tau * east,
            -tau * west,
            -tau * north,
            -tau * south,
        ];
        NodeJacobian {
            uu,
            vv,
            uv: tau * du_dy,
            vu: tau * dv_dx,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct NodeJacobian {
    /// `d r_u / d u` at the five stencil slots.
    pub uu: [f64; 5],
    /// `d r_v / d v` at the five stencil slots.
    pub vv: [f64; 5],
    /// `d r_u / d v_P`.
    pub uv: f64,
    /// `d r_v / d u_P`.
    pub vu: f64,
}

/// Node indices `[P, E, W, N, S]` of a stencil on the monolithic grid.
#[inline]
pub fn stencil_nodes(grid: &Grid2D, node: usize) -> [usize; 5] {
    let (i, j) = grid.node_ij(node);
    let nb = grid.neighbors(i, j);
    [node, nb[0], nb[1], nb[2], nb[3]]
}
