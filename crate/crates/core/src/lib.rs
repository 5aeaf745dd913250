//! Domain-decomposition reduced-order modeling for 2D viscous Burgers flow.
//!
//! The full-order model is split into algebraic subdomains that are coupled
//! through port-level compatibility constraints and solved with a
//! Gauss-Newton SQP method. Each subdomain and port can be represented by a
//! sparse-masked shallow autoencoder; the resulting latent problem has the
//! same block structure.

pub mod ae;
pub mod config;
pub mod error;
pub mod fom;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod partition;
pub mod pipeline;
pub mod rom;
pub mod snapshots;
pub mod sparse;
pub mod sqp;

pub use error::{Error, Result};

pub use ae::{AutoencoderModel, TrainConfig};
pub use config::RunConfig;
pub use fom::{BoundaryCondition, BurgersParams, Grid2D, ParameterVector};
pub use metrics::{ErrorReport, TimingRecord};
pub use partition::{SubdomainLayout, SubdomainState};
pub use rom::{ComposeSpec, DdNmRom, RomModels};
pub use snapshots::{SnapshotRole, SnapshotSet};
pub use sqp::SqpOptions;
