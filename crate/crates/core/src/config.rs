//! Run configuration read from TOML.
//!
//! ```toml
//! seed = 7
//!
//! [grid]            # training domain
//! nx = 40
//! ny = 40
//! x_extent = [0.0, 1.0]
//! y_extent = [0.0, 1.0]
//! bc = "periodic"   # or "neumann"
//!
//! [layout]
//! blocks_x = 2
//! blocks_y = 2
//!
//! [physics]
//! nu = 1e-3
//! tau = 0.02
//! n_steps = 100
//!
//! [sampling]
//! m = 200
//! snapshot_stride = 1
//!
//! [training]
//! interior_dim = 12
//! port_dim = 6
//! epochs = 300
//!
//! [solver]
//! max_iter = 20
//!
//! [deploy]          # composed target; block size comes from training
//! blocks_x = 4
//! blocks_y = 4
//! bc = "neumann"
//! x_extent = [0.0, 2.0]
//! y_extent = [0.0, 2.0]
//!
//! [sweep]
//! interior_dims = [12, 18, 24, 30, 36]
//! port_dims = [6, 8, 10, 12, 14]
//! test_cases = 1
//!
//! [output]
//! dir = "out"
//! ```
//!
//! Every section except `grid` and `layout` may be omitted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ae::TrainConfig;
use crate::error::{Error, Result};
use crate::fom::{BoundaryCondition, BurgersParams, Grid2D};
use crate::partition::{partition, SubdomainLayout};
use crate::rom::ComposeSpec;
use crate::snapshots::SampleConfig;
use crate::sqp::SqpOptions;

fn parse_bc<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<BoundaryCondition, D::Error> {
    let s = String::deserialize(d)?;
    match s.to_ascii_lowercase().as_str() {
        "periodic" => Ok(BoundaryCondition::Periodic),
        "neumann" | "homogeneousneumann" | "homogeneous_neumann" => Ok(BoundaryCondition::HomogeneousNeumann),
        other => Err(serde::de::Error::custom(format!("unknown boundary condition {other:?}"))),
    }
}

fn write_bc<S: serde::Serializer>(bc: &BoundaryCondition, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(match bc {
        BoundaryCondition::Periodic => "periodic",
        BoundaryCondition::HomogeneousNeumann => "neumann",
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    #[serde(default = "unit")]
    pub x_extent: (f64, f64),
    #[serde(default = "unit")]
    pub y_extent: (f64, f64),
    #[serde(deserialize_with = "parse_bc", serialize_with = "write_bc")]
    pub bc: BoundaryCondition,
}

fn unit() -> (f64, f64) {
    (0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutSection {
    pub blocks_x: usize,
    pub blocks_y: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub nu: f64,
    pub tau: f64,
    pub n_steps: usize,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        Self {
            nu: 1e-3,
            tau: 0.02,
            n_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingSection {
    pub m: usize,
    pub gamma_range: (f64, f64),
    pub bernoulli_p: f64,
    pub force_xi0: bool,
    /// Keep every `snapshot_stride`-th time index.
    pub snapshot_stride: usize,
}

impl Default for SamplingSection {
    fn default() -> Self {
        let s = SampleConfig::default();
        Self {
            m: s.m,
            gamma_range: s.gamma_range,
            bernoulli_p: s.bernoulli_p,
            force_xi0: s.force_xi0,
            snapshot_stride: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub interior_dim: usize,
    pub port_dim: usize,
    pub epochs: usize,
    pub batch: usize,
    pub lr0: f64,
    pub noise_sigma: f64,
    pub plateau_factor: f64,
    pub plateau_patience: usize,
    pub early_stop_patience: usize,
    pub train_fraction: f64,
    pub width_factor: usize,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            interior_dim: 24,
            port_dim: 10,
            epochs: t.epochs,
            batch: t.batch,
            lr0: t.lr0,
            noise_sigma: t.noise_sigma,
            plateau_factor: t.plateau_factor,
            plateau_patience: t.plateau_patience,
            early_stop_patience: t.early_stop_patience,
            train_fraction: t.train_fraction,
            width_factor: t.width_factor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub tol_grad: f64,
    pub tol_con: f64,
    pub max_iter: usize,
    pub rom_max_iter: usize,
    pub ls_beta: f64,
    pub ls_c: f64,
    pub penalty: f64,
    pub parallel: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SqpOptions::default();
        Self {
            tol_grad: d.tol_grad,
            tol_con: d.tol_con,
            max_iter: d.max_iter,
            rom_max_iter: SqpOptions::rom().max_iter,
            ls_beta: d.ls_beta,
            ls_c: d.ls_c,
            penalty: d.penalty,
            parallel: d.parallel,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploySection {
    pub blocks_x: usize,
    pub blocks_y: usize,
    #[serde(deserialize_with = "parse_bc", serialize_with = "write_bc")]
    pub bc: BoundaryCondition,
    #[serde(default = "unit")]
    pub x_extent: (f64, f64),
    #[serde(default = "unit")]
    pub y_extent: (f64, f64),
    /// Defaults to the physics step count.
    #[serde(default)]
    pub n_steps: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub interior_dims: Vec<usize>,
    pub port_dims: Vec<usize>,
    /// Number of fresh test initial conditions per pair.
    pub test_cases: usize,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            interior_dims: vec![12, 18, 24, 30, 36],
            port_dims: vec![6, 8, 10, 12, 14],
            test_cases: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub grid: GridSection,
    pub layout: LayoutSection,
    #[serde(default)]
    pub physics: PhysicsSection,
    #[serde(default)]
    pub sampling: SamplingSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub deploy: Option<DeploySection>,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.training_layout()?;
        let (bx, by) = (self.grid.nx / self.layout.blocks_x, self.grid.ny / self.layout.blocks_y);
        if bx * self.layout.blocks_x != self.grid.nx || by * self.layout.blocks_y != self.grid.ny {
            return Err(Error::Config(format!(
                "{}x{} grid does not split into equal {}x{} blocks",
                self.grid.nx, self.grid.ny, self.layout.blocks_x, self.layout.blocks_y
            )));
        }
        self.params()?;
        self.sample_config(self.seed).map(|_| ())?;
        if self.sampling.snapshot_stride == 0 {
            return Err(Error::Config("snapshot_stride must be positive".into()));
        }
        self.train_config(self.seed).validate()?;
        self.fom_options(1).validate()?;
        self.rom_options().validate()?;
        if let Some(d) = &self.deploy {
            self.compose_spec()?.grid()?;
            if d.blocks_x == 0 || d.blocks_y == 0 {
                return Err(Error::Config("deploy needs at least one block".into()));
            }
        }
        if self.sweep.test_cases == 0 {
            return Err(Error::Config("sweep needs at least one test case".into()));
        }
        Ok(())
    }

    pub fn training_grid(&self) -> Result<Grid2D> {
        let g = &self.grid;
        Grid2D::new(g.nx, g.ny, g.x_extent, g.y_extent, g.bc)
    }

    pub fn training_layout(&self) -> Result<SubdomainLayout> {
        partition(&self.training_grid()?, self.layout.blocks_x, self.layout.blocks_y)
    }

    /// Nodes per training block along x and y.
    pub fn block_size(&self) -> (usize, usize) {
        (self.grid.nx / self.layout.blocks_x, self.grid.ny / self.layout.blocks_y)
    }

    pub fn params(&self) -> Result<BurgersParams> {
        BurgersParams::with_steps(self.physics.nu, self.physics.tau, self.physics.n_steps)
    }

    pub fn deploy_params(&self) -> Result<BurgersParams> {
        let steps = self
            .deploy
            .as_ref()
            .and_then(|d| d.n_steps)
            .unwrap_or(self.physics.n_steps);
        BurgersParams::with_steps(self.physics.nu, self.physics.tau, steps)
    }

    pub fn sample_config(&self, seed: u64) -> Result<SampleConfig> {
        let s = &self.sampling;
        let cfg = SampleConfig {
            m: s.m,
            gamma_range: s.gamma_range,
            bernoulli_p: s.bernoulli_p,
            force_xi0: s.force_xi0,
            seed,
        };
        if cfg.m == 0 || !(cfg.gamma_range.0 <= cfg.gamma_range.1) || !(0.0..=1.0).contains(&cfg.bernoulli_p) {
            return Err(Error::Config("bad sampling section".into()));
        }
        Ok(cfg)
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            epochs: t.epochs,
            batch: t.batch,
            lr0: t.lr0,
            noise_sigma: t.noise_sigma,
            plateau_factor: t.plateau_factor,
            plateau_patience: t.plateau_patience,
            early_stop_patience: t.early_stop_patience,
            train_fraction: t.train_fraction,
            width_factor: t.width_factor,
            seed,
        }
    }

    fn base_options(&self) -> SqpOptions {
        let s = &self.solver;
        SqpOptions {
            tol_grad: s.tol_grad,
            tol_con: s.tol_con,
            tol_res: None,
            max_iter: s.max_iter,
            ls_beta: s.ls_beta,
            ls_c: s.ls_c,
            penalty: s.penalty,
            parallel: s.parallel,
        }
    }

    pub fn fom_options(&self, n_dofs: usize) -> SqpOptions {
        SqpOptions {
            tol_res: SqpOptions::fom(n_dofs).tol_res,
            ..self.base_options()
        }
    }

    pub fn rom_options(&self) -> SqpOptions {
        SqpOptions {
            max_iter: self.solver.rom_max_iter,
            ..self.base_options()
        }
    }

    /// Deployment target; without a `[deploy]` section the training layout
    /// itself.
    pub fn compose_spec(&self) -> Result<ComposeSpec> {
        let (block_nx, block_ny) = self.block_size();
        Ok(match &self.deploy {
            Some(d) => ComposeSpec {
                blocks_x: d.blocks_x,
                blocks_y: d.blocks_y,
                block_nx,
                block_ny,
                bc: d.bc,
                x_extent: d.x_extent,
                y_extent: d.y_extent,
            },
            None => ComposeSpec {
                blocks_x: self.layout.blocks_x,
                blocks_y: self.layout.blocks_y,
                block_nx,
                block_ny,
                bc: self.grid.bc,
                x_extent: self.grid.x_extent,
                y_extent: self.grid.y_extent,
            },
        })
    }
}
