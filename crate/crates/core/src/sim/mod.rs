//! Discrete-event simulation of heterogeneous nodes.
//!
//! The simulator runs the real [`Manager`](crate::runtime::Manager),
//! [`Wrm`](crate::runtime::Wrm) and storage backends; only the passage of
//! time is simulated. Workloads come from a TOML description
//! ([`WorkloadSpec`]) expanded by [`generate_workload`], or are built
//! directly from task lists for small experiments.

mod engine;
mod error;
mod metrics;
pub mod reference;
mod spec;
mod sweep;
mod workload;

pub use engine::{run_sim, SimOptions, SimResult, StorageKind};
pub use error::{inject_error, SPEEDUP_FLOOR};
pub use metrics::{metrics_csv, RunLabels, RunMetrics, LABELS_HEADER};
pub use spec::{CostDist, LayerSpec, NodeSpec, NodesFile, RegionUse, StageSpec, TaskTypeProfile, WorkloadSpec};
pub use sweep::{run_batch, sweep_error, SweepPoint};
pub use workload::{generate_workload, validate_workload, InitialRegion, Workload, BINDINGS};

use thiserror::Error;

use crate::region::RegionError;
use crate::runtime::RuntimeError;
use crate::storage::StorageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dependency cycle: {0}")]
    Cycle(String),
    #[error(transparent)]
    Runtime(RuntimeError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("stage {stage} failed: {cause}\ntrace so far:\n{trace}")]
    StageFailed { stage: u64, cause: String, trace: String },
    #[error("simulation stalled: {0}")]
    Stalled(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<RuntimeError> for SimError {
    fn from(e: RuntimeError) -> Self {
        match e {
            RuntimeError::Cycle(c) => SimError::Cycle(c),
            RuntimeError::Config(c) => SimError::Config(c),
            RuntimeError::Storage(s) => SimError::Storage(s),
            other => SimError::Runtime(other),
        }
    }
}

impl From<RegionError> for SimError {
    fn from(e: RegionError) -> Self {
        SimError::Storage(StorageError::from(e))
    }
}
