use serde::{Deserialize, Serialize};

use super::ports::{PortSet, SubdomainStateMap};
use crate::error::{check_len, Result};
use crate::sparse::CsrMatrix;

/// Signed incidence matrices `A_i`, one per subdomain, acting on that
/// subdomain's interface vector. `sum_i A_i x_i = 0` holds exactly when
/// every copy of every shared quantity agrees.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatibilityMatrix {
    pub n_rows: usize,
    pub blocks: Vec<CsrMatrix>,
}

/// Port description needed to emit equality rows: who shares it, how many
/// entries it has, and where it sits in each sharer's interface vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainPort {
    pub sharing: Vec<usize>,
    pub dim: usize,
    /// Offset in each sharer's interface vector, aligned with `sharing`.
    pub offsets: Vec<usize>,
}

/// Chain-of-pairs equality rows: for sharers `s_1 < s_2 < ...` of a port,
/// `copy(s_1) - copy(s_2) = 0`, `copy(s_2) - copy(s_3) = 0`, and so on.
pub fn chain_constraints(interface_dims: &[usize], ports: &[ChainPort]) -> CompatibilityMatrix {
    let n_rows: usize = ports
        .iter()
        .map(|p| (p.sharing.len().saturating_sub(1)) * p.dim)
        .sum();
    let mut trips: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); interface_dims.len()];
    let mut row = 0;
    for port in ports {
        for pair in 0..port.sharing.len().saturating_sub(1) {
            let (a, b) = (port.sharing[pair], port.sharing[pair + 1]);
            let (oa, ob) = (port.offsets[pair], port.offsets[pair + 1]);
            for k in 0..port.dim {
                trips[a].push((row, oa + k, 1.0));
                trips[b].push((row, ob + k, -1.0));
                row += 1;
            }
        }
    }
    let blocks = trips
        .iter()
        .zip(interface_dims)
        .map(|(t, &cols)| CsrMatrix::from_triplets(n_rows, cols, t))
        .collect();
    CompatibilityMatrix { n_rows, blocks }
}

/// Full-order compatibility constraints for a classified layout.
pub fn build_constraints(map: &SubdomainStateMap, ports: &PortSet) -> CompatibilityMatrix {
    let dims: Vec<usize> = map.subdomains.iter().map(|s| s.n_interface()).collect();
    let chain: Vec<ChainPort> = ports
        .ports
        .iter()
        .enumerate()
        .map(|(id, p)| ChainPort {
            sharing: p.sharing.clone(),
            dim: p.dim(),
            offsets: p
                .sharing
                .iter()
                .map(|&s| map.subdomains[s].port_offset(id).expect("sharer lists its port"))
                .collect(),
        })
        .collect();
    chain_constraints(&dims, &chain)
}

impl CompatibilityMatrix {
    /// `sum_i A_i x_i`.
    pub fn apply(&self, interfaces: &[&[f64]]) -> Result<Vec<f64>> {
        check_len("constraint blocks", self.blocks.len(), interfaces.len())?;
        let mut out = vec![0.0; self.n_rows];
        for (a, x) in self.blocks.iter().zip(interfaces) {
            check_len("constraint block width", a.ncols(), x.len())?;
            for (o, v) in out.iter_mut().zip(a.mul_vec(x)) {
                *o += v;
            }
        }
        Ok(out)
    }

    pub fn violation(&self, interfaces: &[&[f64]]) -> Result<f64> {
        Ok(self.apply(interfaces)?.iter().fold(0.0, |m, v| m.max(v.abs())))
    }
}
