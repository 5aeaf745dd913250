//! Offline stage: parameter sampling, monolithic solves, and extraction of
//! interior and port snapshot matrices.

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::{initial_condition, solve_monolithic_with, BurgersParams, NewtonOptions, ParameterVector};
use crate::partition::{classify_states, PortKind, SubdomainLayout};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    pub m: usize,
    pub gamma_range: (f64, f64),
    pub bernoulli_p: f64,
    /// Keep the bottom-left subdomain's bump switched on.
    pub force_xi0: bool,
    pub seed: u64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            m: 2000,
            gamma_range: (0.5, 1.5),
            bernoulli_p: 0.5,
            force_xi0: true,
            seed: 0,
        }
    }
}

/// Latin hypercube sample of `gamma` over the subdomains, combined with
/// Bernoulli on/off switches: `mu_i = gamma_i * xi_i`.
pub fn lhs_sample(config: &SampleConfig, n_subdomains: usize) -> Result<Vec<ParameterVector>> {
    let (lo, hi) = config.gamma_range;
    if config.m == 0 {
        return Err(Error::InvalidParams("need at least one configuration".into()));
    }
    if !(lo <= hi) || !(0.0..=1.0).contains(&config.bernoulli_p) {
        return Err(Error::InvalidParams("bad sampling ranges".into()));
    }
    let m = config.m;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut gamma = vec![vec![0.0; n_subdomains]; m];
    for dim in 0..n_subdomains {
        let mut strata: Vec<usize> = (0..m).collect();
        strata.shuffle(&mut rng);
        for (s, g) in strata.into_iter().zip(gamma.iter_mut()) {
            let u: f64 = rng.random();
            g[dim] = lo + (hi - lo) * (s as f64 + u) / m as f64;
        }
    }
    gamma
        .into_iter()
        .map(|g| {
            let mu = g
                .into_iter()
                .enumerate()
                .map(|(i, gi)| {
                    let on = (i == 0 && config.force_xi0) || rng.random_bool(config.bernoulli_p);
                    if on {
                        gi
                    } else {
                        0.0
                    }
                })
                .collect();
            ParameterVector::new(mu)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SnapshotRole {
    Interior,
    VerticalPort,
    HorizontalPort,
}

impl SnapshotRole {
    pub const ALL: [SnapshotRole; 3] = [SnapshotRole::Interior, SnapshotRole::VerticalPort, SnapshotRole::HorizontalPort];

    pub fn name(self) -> &'static str {
        match self {
            SnapshotRole::Interior => "interior",
            SnapshotRole::VerticalPort => "vertical",
            SnapshotRole::HorizontalPort => "horizontal",
        }
    }

    pub fn from_name(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown role `{s}`")))
    }

    pub fn port_kind(self) -> Option<PortKind> {
        match self {
            SnapshotRole::Interior => None,
            SnapshotRole::VerticalPort => Some(PortKind::VerticalEdge),
            SnapshotRole::HorizontalPort => Some(PortKind::HorizontalEdge),
        }
    }
}

/// Origin of one snapshot row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: usize,
    /// Subdomain id for interior rows, port id for port rows.
    pub entity: usize,
    pub time: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub role: SnapshotRole,
    /// One snapshot per row.
    pub data: Array2<f64>,
    pub provenance: Vec<Provenance>,
}

impl SnapshotSet {
    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            role: self.role,
            data: self.data.select(ndarray::Axis(0), rows),
            provenance: rows.iter().map(|&r| self.provenance[r]).collect(),
        }
    }
}

/// Snapshot sets for the three roles.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotCollection {
    pub interior: SnapshotSet,
    pub vertical: SnapshotSet,
    pub horizontal: SnapshotSet,
}

impl SnapshotCollection {
    pub fn get(&self, role: SnapshotRole) -> &SnapshotSet {
        match role {
            SnapshotRole::Interior => &self.interior,
            SnapshotRole::VerticalPort => &self.vertical,
            SnapshotRole::HorizontalPort => &self.horizontal,
        }
    }
}

struct ConfigRows {
    data: [Vec<f64>; 3],
    provenance: [Vec<Provenance>; 3],
}

/// Solves the monolithic model for every configuration and extracts, at each
/// time index `k = 0..=N_t`, one interior row per subdomain and one row per
/// vertical/horizontal edge port. Corner and edge-end ports are skipped.
///
/// Configurations whose solve fails to converge are dropped with a warning.
pub fn collect_snapshots(configs: &[ParameterVector], layout: &SubdomainLayout, params: &BurgersParams) -> Result<SnapshotCollection> {
    collect_snapshots_strided(configs, layout, params, 1)
}

/// Like [`collect_snapshots`] but keeps only time indices divisible by
/// `stride`.
pub fn collect_snapshots_strided(
    configs: &[ParameterVector],
    layout: &SubdomainLayout,
    params: &BurgersParams,
    stride: usize,
) -> Result<SnapshotCollection> {
    if stride == 0 {
        return Err(Error::InvalidParams("snapshot stride must be positive".into()));
    }
    let grid = &layout.grid;
    let (map, ports) = classify_states(layout)?;
    let dims: Vec<usize> = map.subdomains.iter().map(|s| s.n_interior()).collect();
    let interior_dim = dims[0];
    if dims.iter().any(|&d| d != interior_dim) {
        return Err(Error::InvalidLayout("subdomain interiors differ in size; use a periodic training layout".into()));
    }
    let role_dim = |kind| ports.edge_dim(kind).unwrap_or(0);
    let dims = [interior_dim, role_dim(PortKind::VerticalEdge), role_dim(PortKind::HorizontalEdge)];

    let run = |(c, mu): (usize, &ParameterVector)| -> Result<Option<ConfigRows>> {
        let x0 = initial_condition(grid, layout, mu)?;
        let traj = solve_monolithic_with(params, grid, &x0, NewtonOptions::snapshots())?;
        if let Err(e) = traj.ensure_converged() {
            warn!("dropping configuration {c}: {e}");
            return Ok(None);
        }
        let mut out = ConfigRows {
            data: Default::default(),
            provenance: Default::default(),
        };
        for (t, x) in traj.states.iter().enumerate().step_by(stride) {
            for (s, st) in map.subdomains.iter().enumerate() {
                out.data[0].extend(st.interior.iter().map(|&d| x[d]));
                out.provenance[0].push(Provenance { config: c, entity: s, time: t });
            }
            for (p, port) in ports.ports.iter().enumerate() {
                let slot = match port.kind {
                    PortKind::VerticalEdge => 1,
                    PortKind::HorizontalEdge => 2,
                    _ => continue,
                };
                out.data[slot].extend(port.dofs.iter().map(|&d| x[d]));
                out.provenance[slot].push(Provenance { config: c, entity: p, time: t });
            }
        }
        Ok(Some(out))
    };

    let mut data: [Vec<f64>; 3] = Default::default();
    let mut provenance: [Vec<Provenance>; 3] = Default::default();
    // bounded groups keep the transient memory small
    let group = rayon::current_num_threads().max(1) * 4;
    let indexed: Vec<(usize, &ParameterVector)> = configs.iter().enumerate().collect();
    for chunk in indexed.chunks(group) {
        let results = chunk.par_iter().map(|&c| run(c)).collect::<Result<Vec<_>>>()?;
        for rows in results.into_iter().flatten() {
            for k in 0..3 {
                data[k].extend_from_slice(&rows.data[k]);
                provenance[k].extend_from_slice(&rows.provenance[k]);
            }
        }
    }
    let [d0, d1, d2] = data;
    let [p0, p1, p2] = provenance;
    let make = |role, d: Vec<f64>, p: Vec<Provenance>, dim: usize| -> Result<SnapshotSet> {
        let rows = p.len();
        let data = Array2::from_shape_vec((rows, dim), d).map_err(|e| Error::InvalidLayout(e.to_string()))?;
        Ok(SnapshotSet { role, data, provenance: p })
    };
    Ok(SnapshotCollection {
        interior: make(SnapshotRole::Interior, d0, p0, dims[0])?,
        vertical: make(SnapshotRole::VerticalPort, d1, p1, dims[1])?,
        horizontal: make(SnapshotRole::HorizontalPort, d2, p2, dims[2])?,
    })
}

/// Random split of `0..n` into `floor(fraction n)` training and the
/// remaining validation indices.
pub fn split_indices<R: Rng>(n: usize, fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let n_train = ((fraction * n as f64).floor() as usize).min(n);
    let val = idx.split_off(n_train);
    (idx, val)
}

pub fn split_train_val(set: &SnapshotSet, fraction: f64, seed: u64) -> Result<(SnapshotSet, SnapshotSet)> {
    if set.rows() < 2 {
        return Err(Error::InvalidTraining("need at least two snapshots to split".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (train, val) = split_indices(set.rows(), fraction, &mut rng);
    Ok((set.select(&train), set.select(&val)))
}
