//! Decomposed nonlinear-manifold ROM: every subdomain's interior and every
//! edge port is represented through a shared decoder, and compatibility is
//! imposed on the port latents.

mod solve;

pub use solve::{rom_solve, LatentTrajectory, RomRun, RomStepProblem};

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ae::AutoencoderModel;
use crate::error::{check_len, Error, Result};
use crate::fom::{BoundaryCondition, BurgersParams, Grid2D};
use crate::partition::{chain_constraints, gather, partition, ChainPort, CompatibilityMatrix, DdModel, PortKind, SubdomainState};
use crate::snapshots::SnapshotRole;
use crate::sparse::CsrMatrix;

/// How one role is represented in the ROM.
#[derive(Debug, Clone)]
pub enum RoleModel {
    /// Full-order pass-through.
    Identity,
    Autoencoder(Arc<AutoencoderModel>),
}

impl RoleModel {
    pub fn latent_dim(&self, full_dim: usize) -> usize {
        match self {
            RoleModel::Identity => full_dim,
            RoleModel::Autoencoder(m) => m.latent_dim,
        }
    }
}

/// The three shared components: interior, vertical ports, horizontal ports.
#[derive(Debug, Clone)]
pub struct RomModels {
    pub interior: RoleModel,
    pub vertical: RoleModel,
    pub horizontal: RoleModel,
}

impl RomModels {
    pub fn identity() -> Self {
        Self {
            interior: RoleModel::Identity,
            vertical: RoleModel::Identity,
            horizontal: RoleModel::Identity,
        }
    }

    pub fn get(&self, role: SnapshotRole) -> &RoleModel {
        match role {
            SnapshotRole::Interior => &self.interior,
            SnapshotRole::VerticalPort => &self.vertical,
            SnapshotRole::HorizontalPort => &self.horizontal,
        }
    }
}

/// A contiguous slice of a block's latent vector and the full-order local
/// DOFs it generates.
#[derive(Debug, Clone)]
pub struct Piece {
    /// `None` for pass-through pieces.
    pub role: Option<SnapshotRole>,
    /// Positions in the subdomain's local vector `[interior; interface]`.
    pub local: Vec<usize>,
    pub latent_offset: usize,
    pub latent_len: usize,
}

/// Latent wiring of one subdomain.
#[derive(Debug, Clone)]
pub struct BlockWiring {
    pub pieces: Vec<Piece>,
    pub n_latent: usize,
    /// Latent-vector index where the port latents start.
    pub interface_offset: usize,
    /// Owning piece and position inside it, for every local full DOF.
    pub(crate) lookup: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct DdNmRom {
    pub fom: DdModel,
    pub models: RomModels,
    pub blocks: Vec<BlockWiring>,
    /// Latent dimension of every port (full dimension for pass-through ports).
    pub port_latent_dims: Vec<usize>,
    pub constraints: CompatibilityMatrix,
}

/// Position of a node inside its block lies away from the block's boundary
/// ring. Under periodic conditions these are exactly the interior nodes.
fn in_core(li: usize, lj: usize, bnx: usize, bny: usize) -> bool {
    li >= 1 && li + 1 < bnx && lj >= 1 && lj + 1 < bny
}

fn port_role(kind: PortKind) -> Option<SnapshotRole> {
    match kind {
        PortKind::VerticalEdge => Some(SnapshotRole::VerticalPort),
        PortKind::HorizontalEdge => Some(SnapshotRole::HorizontalPort),
        PortKind::EdgeEnd | PortKind::Corner => None,
    }
}

fn check_role(models: &RomModels, role: SnapshotRole, full_dim: usize) -> Result<()> {
    if let RoleModel::Autoencoder(m) = models.get(role) {
        if m.full_dim != full_dim {
            return Err(Error::IncompatibleModel {
                role: role.name().into(),
                detail: format!("model full dimension {} but the layout needs {full_dim}", m.full_dim),
            });
        }
    }
    Ok(())
}

impl DdNmRom {
    /// Wires the decomposed full-order model `fom` to the shared components.
    ///
    /// Each block's latent vector is `[interior core latent; interior
    /// remainder; port latents in ascending port id]`. The core is the block
    /// minus its boundary ring; any interior DOF outside it (next to a wall)
    /// stays at full order, as do edge-end and corner ports.
    pub fn assemble(fom: DdModel, models: RomModels) -> Result<Self> {
        let layout = &fom.layout;
        let n = layout.grid.n_nodes();
        let (bnx, bny) = (layout.block_nx, layout.block_ny);
        let core_dim = 2 * bnx.saturating_sub(2) * bny.saturating_sub(2);
        check_role(&models, SnapshotRole::Interior, core_dim)?;
        for kind in [PortKind::VerticalEdge, PortKind::HorizontalEdge] {
            if let Some(dim) = fom.ports.edge_dim(kind) {
                check_role(&models, port_role(kind).unwrap(), dim)?;
            }
        }
        let port_latent_dims: Vec<usize> = fom
            .ports
            .ports
            .iter()
            .map(|p| match port_role(p.kind) {
                Some(role) => models.get(role).latent_dim(p.dim()),
                None => p.dim(),
            })
            .collect();

        let mut blocks = Vec::with_capacity(fom.n_subdomains());
        let mut chain_offsets: HashMap<(usize, usize), usize> = HashMap::new();
        for (sub, st) in fom.map.subdomains.iter().enumerate() {
            let (mut core, mut rest) = (Vec::new(), Vec::new());
            for (k, &d) in st.interior.iter().enumerate() {
                let (li, lj) = layout.local_ij(d % n);
                if in_core(li, lj, bnx, bny) {
                    core.push(k);
                } else {
                    rest.push(k);
                }
            }
            if core.len() != core_dim {
                return Err(Error::InvalidLayout(format!(
                    "subdomain {sub} has {} core DOFs, expected {core_dim}",
                    core.len()
                )));
            }
            let mut pieces = Vec::new();
            let mut offset = 0;
            let mut push = |role: Option<SnapshotRole>, local: Vec<usize>, latent_len: usize, offset: &mut usize| {
                pieces.push(Piece {
                    role,
                    local,
                    latent_offset: *offset,
                    latent_len,
                });
                *offset += latent_len;
            };
            let core_latent = models.interior.latent_dim(core.len());
            push(Some(SnapshotRole::Interior), core, core_latent, &mut offset);
            if !rest.is_empty() {
                let len = rest.len();
                push(None, rest, len, &mut offset);
            }
            let interface_offset = offset;
            for (&p, &po) in st.ports.iter().zip(&st.port_offsets) {
                let port = &fom.ports.ports[p];
                let local: Vec<usize> = (0..port.dim()).map(|k| st.n_interior() + po + k).collect();
                chain_offsets.insert((p, sub), offset - interface_offset);
                push(port_role(port.kind), local, port_latent_dims[p], &mut offset);
            }
            let mut lookup = vec![(usize::MAX, 0); st.n_local()];
            for (pi, piece) in pieces.iter().enumerate() {
                for (k, &l) in piece.local.iter().enumerate() {
                    lookup[l] = (pi, k);
                }
            }
            debug_assert!(lookup.iter().all(|l| l.0 != usize::MAX));
            blocks.push(BlockWiring {
                pieces,
                n_latent: offset,
                interface_offset,
                lookup,
            });
        }

        let chain: Vec<ChainPort> = fom
            .ports
            .ports
            .iter()
            .enumerate()
            .map(|(p, port)| ChainPort {
                sharing: port.sharing.clone(),
                dim: port_latent_dims[p],
                offsets: port.sharing.iter().map(|&s| chain_offsets[&(p, s)]).collect(),
            })
            .collect();
        let dims: Vec<usize> = blocks.iter().map(|b| b.n_latent - b.interface_offset).collect();
        let constraints = chain_constraints(&dims, &chain);
        let rom = Self {
            fom,
            models,
            blocks,
            port_latent_dims,
            constraints,
        };
        rom.check_unknowns()?;
        Ok(rom)
    }

    pub fn n_subdomains(&self) -> usize {
        self.blocks.len()
    }

    /// Latent copies minus constraint rows.
    pub fn n_unknowns(&self) -> usize {
        self.blocks.iter().map(|b| b.n_latent).sum::<usize>() - self.constraints.n_rows
    }

    /// `n_sub * I + sum over ports of their latent dims + interior remainders`.
    fn check_unknowns(&self) -> Result<()> {
        let interior: usize = self
            .blocks
            .iter()
            .flat_map(|b| b.pieces.iter().filter(|p| p.latent_offset < b.interface_offset))
            .map(|p| p.latent_len)
            .sum();
        let expected = interior + self.port_latent_dims.iter().sum::<usize>();
        if expected != self.n_unknowns() {
            return Err(Error::InvalidLayout(format!(
                "latent bookkeeping mismatch: {} unknowns, expected {expected}",
                self.n_unknowns()
            )));
        }
        Ok(())
    }

    fn role_model(&self, role: Option<SnapshotRole>) -> &RoleModel {
        match role {
            Some(r) => self.models.get(r),
            None => &RoleModel::Identity,
        }
    }

    /// Maps a full local vector to block latents with the shared encoders.
    pub fn encode_block(&self, i: usize, local: &[f64]) -> Result<Vec<f64>> {
        let b = &self.blocks[i];
        check_len("encoder block", b.lookup.len(), local.len())?;
        let mut y = vec![0.0; b.n_latent];
        for piece in &b.pieces {
            let x: Vec<f64> = piece.local.iter().map(|&l| local[l]).collect();
            let out = &mut y[piece.latent_offset..piece.latent_offset + piece.latent_len];
            match self.role_model(piece.role) {
                RoleModel::Identity => out.copy_from_slice(&x),
                RoleModel::Autoencoder(m) => out.copy_from_slice(&m.encode(&x)?),
            }
        }
        Ok(y)
    }

    /// Encodes a monolithic state onto every block.
    pub fn encode_state(&self, x: &[f64]) -> Result<Vec<Vec<f64>>> {
        check_len("state", self.fom.layout.grid.n_dofs(), x.len())?;
        gather(x, &self.fom.map)
            .iter()
            .enumerate()
            .map(|(i, s)| self.encode_block(i, &s.local()))
            .collect()
    }

    /// Decodes block latents to the subdomain's full local vector.
    pub fn decode_block(&self, i: usize, latent: &[f64]) -> Result<Vec<f64>> {
        let b = &self.blocks[i];
        check_len("decoder block", b.n_latent, latent.len())?;
        let mut q = vec![0.0; b.lookup.len()];
        for piece in &b.pieces {
            let y = &latent[piece.latent_offset..piece.latent_offset + piece.latent_len];
            let decoded;
            let x = match self.role_model(piece.role) {
                RoleModel::Identity => y,
                RoleModel::Autoencoder(m) => {
                    decoded = m.decode(y)?;
                    &decoded[..]
                }
            };
            for (&l, &v) in piece.local.iter().zip(x) {
                q[l] = v;
            }
        }
        Ok(q)
    }

    pub fn decode_subdomain(&self, i: usize, latent: &[f64]) -> Result<SubdomainState> {
        let q = self.decode_block(i, latent)?;
        Ok(SubdomainState::from_local(&q, self.fom.map.subdomains[i].n_interior()))
    }

    /// Decoded local vector and the chain-rule Jacobian `J_full * dg/dy`.
    pub(crate) fn decode_and_compose(&self, i: usize, latent: &[f64], jac_full: impl Fn(&[f64]) -> Result<CsrMatrix>) -> Result<(Vec<f64>, CsrMatrix)> {
        let b = &self.blocks[i];
        check_len("decoder block", b.n_latent, latent.len())?;
        let mut q = vec![0.0; b.lookup.len()];
        // dense decoder Jacobians per piece, None for pass-through
        let mut gjac: Vec<Option<Vec<f64>>> = Vec::with_capacity(b.pieces.len());
        for piece in &b.pieces {
            let y = &latent[piece.latent_offset..piece.latent_offset + piece.latent_len];
            match self.role_model(piece.role) {
                RoleModel::Identity => {
                    for (&l, &v) in piece.local.iter().zip(y) {
                        q[l] = v;
                    }
                    gjac.push(None);
                }
                RoleModel::Autoencoder(m) => {
                    let (x, j) = m.decode_with_jacobian(y)?;
                    for (&l, &v) in piece.local.iter().zip(&x) {
                        q[l] = v;
                    }
                    gjac.push(Some(j));
                }
            }
        }
        let jf = jac_full(&q)?;
        let mut acc = vec![0.0; b.n_latent];
        let mut touched = vec![false; b.n_latent];
        let mut cols: Vec<usize> = Vec::new();
        let mut trip = Vec::new();
        for r in 0..jf.nrows() {
            let (jc, jv) = jf.row(r);
            for (&c, &v) in jc.iter().zip(jv) {
                let (pi, k) = b.lookup[c];
                let piece = &b.pieces[pi];
                match &gjac[pi] {
                    None => {
                        let col = piece.latent_offset + k;
                        if !touched[col] {
                            touched[col] = true;
                            cols.push(col);
                        }
                        acc[col] += v;
                    }
                    Some(g) => {
                        let n = piece.latent_len;
                        for (j, &gv) in g[k * n..(k + 1) * n].iter().enumerate() {
                            let col = piece.latent_offset + j;
                            if !touched[col] {
                                touched[col] = true;
                                cols.push(col);
                            }
                            acc[col] += v * gv;
                        }
                    }
                }
            }
            cols.sort_unstable();
            for &c in &cols {
                trip.push((r, c, acc[c]));
                acc[c] = 0.0;
                touched[c] = false;
            }
            cols.clear();
        }
        Ok((q, CsrMatrix::from_triplets(jf.nrows(), b.n_latent, &trip)))
    }

    /// Largest mismatch between decoded copies of the same interface DOF.
    pub fn decoded_copy_mismatch(&self, latents: &[Vec<f64>]) -> Result<f64> {
        let states = latents
            .iter()
            .enumerate()
            .map(|(i, y)| self.decode_subdomain(i, y))
            .collect::<Result<Vec<_>>>()?;
        let mut seen: HashMap<usize, f64> = HashMap::new();
        let mut worst = 0.0f64;
        for (s, st) in self.fom.map.subdomains.iter().zip(&states) {
            for (&d, &v) in s.interface.iter().zip(&st.interface) {
                match seen.get(&d) {
                    Some(&w) => worst = worst.max((w - v).abs()),
                    None => {
                        seen.insert(d, v);
                    }
                }
            }
        }
        Ok(worst)
    }
}

/// Target of a bottom-up composition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComposeSpec {
    pub blocks_x: usize,
    pub blocks_y: usize,
    /// Nodes per block and direction; must equal the training blocks.
    pub block_nx: usize,
    pub block_ny: usize,
    pub bc: BoundaryCondition,
    pub x_extent: (f64, f64),
    pub y_extent: (f64, f64),
}

impl ComposeSpec {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.blocks_x * self.block_nx, self.blocks_y * self.block_ny, self.x_extent, self.y_extent, self.bc)
    }
}

/// Builds a ROM on a new grid of identical blocks, reusing the trained
/// components. The block size must match training.
pub fn compose(spec: &ComposeSpec, models: RomModels, params: &BurgersParams) -> Result<DdNmRom> {
    let core = 2 * spec.block_nx.saturating_sub(2) * spec.block_ny.saturating_sub(2);
    if let RoleModel::Autoencoder(m) = &models.interior {
        if m.full_dim != core {
            return Err(Error::IncompatibleModel {
                role: "interior".into(),
                detail: format!("trained on {} DOFs, {}x{} blocks have {core}", m.full_dim, spec.block_nx, spec.block_ny),
            });
        }
    }
    let grid = spec.grid()?;
    let layout = partition(&grid, spec.blocks_x, spec.blocks_y)?;
    let fom = DdModel::new(layout, params)?;
    DdNmRom::assemble(fom, models)
}

#[cfg(test)]
mod tests;
