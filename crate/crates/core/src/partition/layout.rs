use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::Grid2D;

/// Rectangular, node-disjoint tiling of the grid into algebraic subdomains.
///
/// Subdomains are numbered row by row from the bottom-left block:
/// `id = by * blocks_x + bx`. Every residual row belongs to the subdomain
/// owning its node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainLayout {
    pub grid: Grid2D,
    pub blocks_x: usize,
    pub blocks_y: usize,
    pub block_nx: usize,
    pub block_ny: usize,
    node_owner: Vec<usize>,
    residual_rows: Vec<Vec<usize>>,
}

impl SubdomainLayout {
    pub fn n_subdomains(&self) -> usize {
        self.blocks_x * self.blocks_y
    }

    #[inline]
    pub fn owner(&self, node: usize) -> usize {
        self.node_owner[node]
    }

    pub fn block_of(&self, sub: usize) -> (usize, usize) {
        (sub % self.blocks_x, sub / self.blocks_x)
    }

    pub fn subdomain_at(&self, bx: usize, by: usize) -> usize {
        by * self.blocks_x + bx
    }

    /// Position of a node inside its owning block.
    pub fn local_ij(&self, node: usize) -> (usize, usize) {
        let (i, j) = self.grid.node_ij(node);
        (i % self.block_nx, j % self.block_ny)
    }

    /// Residual row indices of subdomain `sub`, ascending (u rows, then v rows).
    pub fn residual_rows(&self, sub: usize) -> &[usize] {
        &self.residual_rows[sub]
    }

    /// Nodes owned by subdomain `sub`, ascending.
    pub fn owned_nodes(&self, sub: usize) -> &[usize] {
        let rows = &self.residual_rows[sub];
        &rows[..rows.len() / 2]
    }
}

/// Splits the residual of `grid` into `blocks_x * blocks_y` rectangular blocks.
pub fn partition(grid: &Grid2D, blocks_x: usize, blocks_y: usize) -> Result<SubdomainLayout> {
    if blocks_x == 0 || blocks_y == 0 {
        return Err(Error::InvalidLayout("block counts must be positive".into()));
    }
    if grid.nx % blocks_x != 0 || grid.ny % blocks_y != 0 {
        return Err(Error::InvalidLayout(format!(
            "{}x{} grid is not divisible into {blocks_x}x{blocks_y} blocks",
            grid.nx, grid.ny
        )));
    }
    let block_nx = grid.nx / blocks_x;
    let block_ny = grid.ny / blocks_y;
    if block_nx < 3 || block_ny < 3 {
        return Err(Error::InvalidLayout(format!(
            "blocks of {block_nx}x{block_ny} nodes are too small (need at least 3x3)"
        )));
    }
    let n = grid.n_nodes();
    let mut node_owner = vec![0; n];
    let mut owned: Vec<Vec<usize>> = vec![Vec::new(); blocks_x * blocks_y];
    for node in 0..n {
        let (i, j) = grid.node_ij(node);
        let sub = (j / block_ny) * blocks_x + i / block_nx;
        node_owner[node] = sub;
        owned[sub].push(node);
    }
    let residual_rows = owned
        .into_iter()
        .map(|nodes| {
            let mut rows = nodes.clone();
            rows.extend(nodes.iter().map(|&k| n + k));
            rows
        })
        .collect();
    Ok(SubdomainLayout {
        grid: *grid,
        blocks_x,
        blocks_y,
        block_nx,
        block_ny,
        node_owner,
        residual_rows,
    })
}
