use std::collections::HashMap;

use super::constraints::{build_constraints, CompatibilityMatrix};
use super::layout::SubdomainLayout;
use super::ports::{classify_states, PortSet, SubdomainStateMap, SubdomainStates};
use crate::error::{check_len, Error, Result};
use crate::fom::stencil::{stencil_nodes, StencilCoeffs, P};
use crate::fom::BurgersParams;
use crate::sparse::CsrMatrix;

/// Interior and interface values of one subdomain.
#[derive(Debug, Clone, PartialEq)]
pub struct SubdomainState {
    pub interior: Vec<f64>,
    pub interface: Vec<f64>,
}

impl SubdomainState {
    /// Local vector `[interior; interface]`.
    pub fn local(&self) -> Vec<f64> {
        let mut q = self.interior.clone();
        q.extend_from_slice(&self.interface);
        q
    }

    pub fn from_local(q: &[f64], n_interior: usize) -> Self {
        Self {
            interior: q[..n_interior].to_vec(),
            interface: q[n_interior..].to_vec(),
        }
    }
}

/// Copies a monolithic state into every subdomain, duplicating shared DOFs.
pub fn gather(x: &[f64], map: &SubdomainStateMap) -> Vec<SubdomainState> {
    map.subdomains
        .iter()
        .map(|s| SubdomainState {
            interior: s.interior.iter().map(|&d| x[d]).collect(),
            interface: s.interface.iter().map(|&d| x[d]).collect(),
        })
        .collect()
}

/// Rebuilds a monolithic state; shared copies must agree within `tol`.
pub fn scatter(states: &[SubdomainState], map: &SubdomainStateMap, n_dofs: usize, tol: f64) -> Result<Vec<f64>> {
    check_len("scatter subdomains", map.subdomains.len(), states.len())?;
    let mut x = vec![f64::NAN; n_dofs];
    let mut seen = vec![false; n_dofs];
    for (s, st) in map.subdomains.iter().zip(states) {
        check_len("scatter interior", s.n_interior(), st.interior.len())?;
        check_len("scatter interface", s.n_interface(), st.interface.len())?;
        let pairs = s.interior.iter().zip(&st.interior).chain(s.interface.iter().zip(&st.interface));
        for (&d, &v) in pairs {
            if seen[d] {
                if (x[d] - v).abs() > tol {
                    return Err(Error::InconsistentCopies { dof: d, a: x[d], b: v });
                }
            } else {
                x[d] = v;
                seen[d] = true;
            }
        }
    }
    if let Some(d) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidLayout(format!("dof {d} is not covered by any subdomain")));
    }
    Ok(x)
}

#[derive(Debug, Clone, Copy)]
struct RowStencil {
    u: [usize; 5],
    v: [usize; 5],
}

/// Residual rows of one subdomain evaluated from its local vector
/// `[interior; interface]` only.
#[derive(Debug, Clone)]
pub struct SubdomainKernel {
    n_interior: usize,
    n_interface: usize,
    rows: Vec<RowStencil>,
    coeffs: StencilCoeffs,
    tau: f64,
}

impl SubdomainKernel {
    pub fn new(layout: &SubdomainLayout, states: &SubdomainStates, sub: usize, params: &BurgersParams) -> Result<Self> {
        let grid = &layout.grid;
        let n = grid.n_nodes();
        let local: HashMap<usize, usize> = states
            .interior
            .iter()
            .chain(&states.interface)
            .enumerate()
            .map(|(k, &d)| (d, k))
            .collect();
        let lookup = |d: usize| {
            local
                .get(&d)
                .copied()
                .ok_or_else(|| Error::InvalidLayout(format!("subdomain {sub} stencil reaches unknown dof {d}")))
        };
        let mut rows = Vec::with_capacity(layout.owned_nodes(sub).len());
        for &node in layout.owned_nodes(sub) {
            let nodes = stencil_nodes(grid, node);
            let mut u = [0; 5];
            let mut v = [0; 5];
            for k in 0..5 {
                u[k] = lookup(nodes[k])?;
                v[k] = lookup(n + nodes[k])?;
            }
            rows.push(RowStencil { u, v });
        }
        Ok(Self {
            n_interior: states.n_interior(),
            n_interface: states.n_interface(),
            rows,
            coeffs: StencilCoeffs::new(grid, params.nu),
            tau: params.tau,
        })
    }

    pub fn n_local(&self) -> usize {
        self.n_interior + self.n_interface
    }

    pub fn n_interior(&self) -> usize {
        self.n_interior
    }

    pub fn n_residual(&self) -> usize {
        2 * self.rows.len()
    }

    #[inline]
    fn load(q: &[f64], idx: &[usize; 5]) -> [f64; 5] {
        [q[idx[0]], q[idx[1]], q[idx[2]], q[idx[3]], q[idx[4]]]
    }

    /// Residual rows `r_i` from the current and previous local vectors.
    pub fn residual(&self, q: &[f64], q_prev: &[f64]) -> Result<Vec<f64>> {
        check_len("subdomain state", self.n_local(), q.len())?;
        check_len("subdomain previous state", self.n_local(), q_prev.len())?;
        let m = self.rows.len();
        let mut out = vec![0.0; 2 * m];
        for (k, row) in self.rows.iter().enumerate() {
            let u = Self::load(q, &row.u);
            let v = Self::load(q, &row.v);
            let (ru, rv) = self
                .coeffs
                .residual(self.tau, &u, &v, q_prev[row.u[P]], q_prev[row.v[P]]);
            out[k] = ru;
            out[m + k] = rv;
        }
        Ok(out)
    }

    /// Jacobian of [`Self::residual`] with respect to the full local vector.
    /// Its columns split as `[d r / d x_interior, d r / d x_interface]`.
    pub fn jacobian(&self, q: &[f64]) -> Result<CsrMatrix> {
        check_len("subdomain state", self.n_local(), q.len())?;
        let m = self.rows.len();
        let mut trip = Vec::with_capacity(12 * m);
        for (k, row) in self.rows.iter().enumerate() {
            let u = Self::load(q, &row.u);
            let v = Self::load(q, &row.v);
            let jac = self.coeffs.jacobian(self.tau, &u, &v);
            for s in 0..5 {
                trip.push((k, row.u[s], jac.uu[s]));
                trip.push((m + k, row.v[s], jac.vv[s]));
            }
            trip.push((k, row.v[P], jac.uv));
            trip.push((m + k, row.u[P], jac.vu));
        }
        Ok(CsrMatrix::from_triplets(2 * m, self.n_local(), &trip))
    }

    /// Residual from split interior/interface vectors.
    pub fn residual_split(&self, current: &SubdomainState, previous: &SubdomainState) -> Result<Vec<f64>> {
        self.residual(&current.local(), &previous.local())
    }

    /// `(d r / d x_interior, d r / d x_interface)`.
    pub fn jacobian_split(&self, current: &SubdomainState) -> Result<(CsrMatrix, CsrMatrix)> {
        let j = self.jacobian(&current.local())?;
        let interior: Vec<usize> = (0..self.n_interior).collect();
        let interface: Vec<usize> = (self.n_interior..self.n_local()).collect();
        Ok((j.select_columns(&interior), j.select_columns(&interface)))
    }
}

/// Everything needed to evaluate the decomposed full-order problem.
#[derive(Debug, Clone)]
pub struct DdModel {
    pub layout: SubdomainLayout,
    pub map: SubdomainStateMap,
    pub ports: PortSet,
    pub constraints: CompatibilityMatrix,
    pub kernels: Vec<SubdomainKernel>,
    pub params: BurgersParams,
}

impl DdModel {
    pub fn new(layout: SubdomainLayout, params: &BurgersParams) -> Result<Self> {
        let (map, ports) = classify_states(&layout)?;
        let constraints = build_constraints(&map, &ports);
        let kernels = (0..layout.n_subdomains())
            .map(|i| SubdomainKernel::new(&layout, &map.subdomains[i], i, params))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            layout,
            map,
            ports,
            constraints,
            kernels,
            params: *params,
        })
    }

    pub fn n_subdomains(&self) -> usize {
        self.layout.n_subdomains()
    }

    /// Residual of subdomain `i`.
    pub fn subdomain_residual(&self, i: usize, current: &SubdomainState, previous: &SubdomainState) -> Result<Vec<f64>> {
        self.kernels[i].residual_split(current, previous)
    }

    /// `(d r_i / d x_interior, d r_i / d x_interface)` of subdomain `i`.
    pub fn subdomain_jacobians(&self, i: usize, current: &SubdomainState) -> Result<(CsrMatrix, CsrMatrix)> {
        self.kernels[i].jacobian_split(current)
    }
}
