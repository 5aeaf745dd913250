//! Algebraic domain decomposition: residual partitioning, interior/interface
//! classification, ports and full-order compatibility constraints.

mod constraints;
mod layout;
mod ports;
mod subdomain;

pub use constraints::{build_constraints, chain_constraints, ChainPort, CompatibilityMatrix};
pub use layout::{partition, SubdomainLayout};
pub use ports::{classify_states, Port, PortKind, PortSet, SubdomainStateMap, SubdomainStates};
pub use subdomain::{gather, scatter, DdModel, SubdomainKernel, SubdomainState};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::Grid2D;

/// Inspection/fixture file describing a classified layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutFile {
    pub grid: Grid2D,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub ports: Vec<Port>,
    pub subdomains: Vec<SubdomainStates>,
}

impl LayoutFile {
    pub fn new(layout: &SubdomainLayout, map: &SubdomainStateMap, ports: &PortSet) -> Self {
        Self {
            grid: layout.grid,
            blocks_x: layout.blocks_x,
            blocks_y: layout.blocks_y,
            ports: ports.ports.clone(),
            subdomains: map.subdomains.clone(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("layout serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Format(format!("layout file: {e}")))
    }
}
