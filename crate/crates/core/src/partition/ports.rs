use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::layout::SubdomainLayout;
use crate::error::{Error, Result};
use crate::fom::stencil::stencil_nodes;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PortKind {
    /// Nodes on both sides of a vertical cut, strictly between the segment ends.
    VerticalEdge,
    /// Nodes on both sides of a horizontal cut, strictly between the segment ends.
    HorizontalEdge,
    /// End node pair of a cut segment that is shared by only two subdomains
    /// (segments touching a Neumann wall, or spanning a periodic direction
    /// without cross points).
    EdgeEnd,
    /// A single node shared by three or more subdomains.
    Corner,
}

impl PortKind {
    pub fn is_edge(self) -> bool {
        matches!(self, PortKind::VerticalEdge | PortKind::HorizontalEdge)
    }
}

/// Group of interface DOFs shared by one set of subdomains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Port {
    pub kind: PortKind,
    /// Global DOF indices in canonical order: u block then v block; within a
    /// component the owner-side (left/bottom) line first, then the neighbor
    /// side; nodes by increasing transverse coordinate.
    pub dofs: Vec<usize>,
    /// Sharing subdomains, ascending.
    pub sharing: Vec<usize>,
}

impl Port {
    pub fn dim(&self) -> usize {
        self.dofs.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortSet {
    pub ports: Vec<Port>,
}

impl PortSet {
    pub fn len(&self) -> usize {
        self.ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ports.is_empty()
    }

    pub fn count(&self, kind: PortKind) -> usize {
        self.ports.iter().filter(|p| p.kind == kind).count()
    }

    /// Common dimension of all edge ports of `kind`, if any exist.
    pub fn edge_dim(&self, kind: PortKind) -> Option<usize> {
        self.ports.iter().find(|p| p.kind == kind).map(Port::dim)
    }
}

/// Interior and interface DOFs of one subdomain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainStates {
    /// Interior DOFs, ascending global index.
    pub interior: Vec<usize>,
    /// Ports making up the interface, ascending port id.
    pub ports: Vec<usize>,
    /// Offset of each port (same order as `ports`) inside `interface`.
    pub port_offsets: Vec<usize>,
    /// Concatenation of the ports' DOFs.
    pub interface: Vec<usize>,
}

impl SubdomainStates {
    pub fn n_interior(&self) -> usize {
        self.interior.len()
    }

    pub fn n_interface(&self) -> usize {
        self.interface.len()
    }

    pub fn n_local(&self) -> usize {
        self.interior.len() + self.interface.len()
    }

    pub fn port_offset(&self, port: usize) -> Option<usize> {
        self.ports
            .iter()
            .position(|&p| p == port)
            .map(|k| self.port_offsets[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainStateMap {
    pub subdomains: Vec<SubdomainStates>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum PortKey {
    Vertical { cut: usize, block: usize },
    Horizontal { cut: usize, block: usize },
    VerticalEnd { cut: usize, block: usize, end: usize },
    HorizontalEnd { cut: usize, block: usize, end: usize },
    Corner { node: usize },
}

/// For each node, the subdomains whose residual stencils reference it.
fn sharing_sets(layout: &SubdomainLayout) -> Vec<Vec<usize>> {
    let grid = &layout.grid;
    let mut sets: Vec<Vec<usize>> = vec![Vec::new(); grid.n_nodes()];
    for node in 0..grid.n_nodes() {
        let owner = layout.owner(node);
        for m in stencil_nodes(grid, node) {
            if !sets[m].contains(&owner) {
                sets[m].push(owner);
            }
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets
}

/// Splits every subdomain's states into interior and interface DOFs and
/// groups the interface into ports.
///
/// A DOF is interface exactly when a residual row of another subdomain
/// references it. Edge ports are formed per geometric cut segment, so every
/// edge port of one orientation has the same dimension and ordering.
pub fn classify_states(layout: &SubdomainLayout) -> Result<(SubdomainStateMap, PortSet)> {
    let grid = &layout.grid;
    let n = grid.n_nodes();
    let sets = sharing_sets(layout);
    let (bnx, bny) = (layout.block_nx, layout.block_ny);

    // (side, transverse, node) entries per port key
    let mut groups: BTreeMap<PortKey, Vec<(usize, usize, usize)>> = BTreeMap::new();
    for node in 0..n {
        let s = &sets[node];
        if s.len() < 2 {
            continue;
        }
        if s.len() >= 3 {
            groups.entry(PortKey::Corner { node }).or_default().push((0, 0, node));
            continue;
        }
        let owner = layout.owner(node);
        let other = if s[0] == owner { s[1] } else { s[0] };
        let (ox, oy) = layout.block_of(owner);
        let (px, py) = layout.block_of(other);
        let (li, lj) = layout.local_ij(node);
        if oy == py && ox != px {
            // vertical cut: the neighbor lies east or west of this node
            let (cut, left) = if li == bnx - 1 {
                ((ox + 1) % layout.blocks_x, ox)
            } else if li == 0 {
                (ox, (ox + layout.blocks_x - 1) % layout.blocks_x)
            } else {
                return Err(Error::InvalidLayout(format!("node {node} is shared away from a cut")));
            };
            let side = usize::from(ox != left);
            let key = if lj >= 1 && lj + 1 < bny {
                PortKey::Vertical { cut, block: oy }
            } else {
                PortKey::VerticalEnd {
                    cut,
                    block: oy,
                    end: usize::from(lj != 0),
                }
            };
            groups.entry(key).or_default().push((side, lj, node));
        } else if ox == px && oy != py {
            let (cut, bottom) = if lj == bny - 1 {
                ((oy + 1) % layout.blocks_y, oy)
            } else if lj == 0 {
                (oy, (oy + layout.blocks_y - 1) % layout.blocks_y)
            } else {
                return Err(Error::InvalidLayout(format!("node {node} is shared away from a cut")));
            };
            let side = usize::from(oy != bottom);
            let key = if li >= 1 && li + 1 < bnx {
                PortKey::Horizontal { cut, block: ox }
            } else {
                PortKey::HorizontalEnd {
                    cut,
                    block: ox,
                    end: usize::from(li != 0),
                }
            };
            groups.entry(key).or_default().push((side, li, node));
        } else {
            return Err(Error::InvalidLayout(format!(
                "node {node} shared by diagonal blocks {owner} and {other}"
            )));
        }
    }

    let mut ports = Vec::with_capacity(groups.len());
    for (key, mut entries) in groups {
        entries.sort_unstable();
        let kind = match key {
            PortKey::Vertical { .. } => PortKind::VerticalEdge,
            PortKey::Horizontal { .. } => PortKind::HorizontalEdge,
            PortKey::VerticalEnd { .. } | PortKey::HorizontalEnd { .. } => PortKind::EdgeEnd,
            PortKey::Corner { .. } => PortKind::Corner,
        };
        if kind != PortKind::Corner {
            let left = entries.iter().filter(|e| e.0 == 0).count();
            if 2 * left != entries.len() {
                return Err(Error::InvalidLayout(format!(
                    "port {key:?} has unequal sides ({left} vs {})",
                    entries.len() - left
                )));
            }
        }
        let sharing = sets[entries[0].2].clone();
        let mut dofs: Vec<usize> = entries.iter().map(|e| e.2).collect();
        dofs.extend(entries.iter().map(|e| n + e.2));
        ports.push(Port { kind, dofs, sharing });
    }
    for kind in [PortKind::VerticalEdge, PortKind::HorizontalEdge] {
        if let Some(dim) = ports.iter().find(|p| p.kind == kind).map(Port::dim) {
            if ports.iter().any(|p| p.kind == kind && p.dim() != dim) {
                return Err(Error::InvalidLayout(format!("{kind:?} ports differ in dimension")));
            }
        }
    }

    let n_sub = layout.n_subdomains();
    let mut port_lists: Vec<Vec<usize>> = vec![Vec::new(); n_sub];
    for (id, port) in ports.iter().enumerate() {
        for &s in &port.sharing {
            port_lists[s].push(id);
        }
    }
    let subdomains = (0..n_sub)
        .map(|sub| {
            let mut interior = Vec::new();
            for &node in layout.owned_nodes(sub) {
                if sets[node].len() == 1 {
                    interior.push(node);
                }
            }
            let nodes = interior.len();
            for k in 0..nodes {
                interior.push(n + interior[k]);
            }
            let mut interface = Vec::new();
            let mut port_offsets = Vec::new();
            for &p in &port_lists[sub] {
                port_offsets.push(interface.len());
                interface.extend_from_slice(&ports[p].dofs);
            }
            SubdomainStates {
                interior,
                ports: port_lists[sub].clone(),
                port_offsets,
                interface,
            }
        })
        .collect();
    Ok((SubdomainStateMap { subdomains }, PortSet { ports }))
}
