//! Two-level dataflow execution.
//!
//! The [`Manager`] hands coarse [`StageInstance`]s to workers on request.
//! A worker prepares the stage's regions ([`worker_prepare`]), expands the
//! stage into fine-grain [`TaskNode`]s and hands them to its [`Wrm`], which
//! assigns ready tasks to CPU cores and GPUs. When every task of a stage is
//! done, [`worker_finalize`] stages outputs back to global storage.

mod local;
mod manager;
mod prefetch;
mod stage;
mod task;
mod trace;
mod worker;
mod wrm;

pub use local::{direct_run, KernelFn, LocalRuntime, LocalRunReport};
pub use manager::{Manager, StageState};
pub(crate) use manager::find_cycle;
pub use prefetch::{prefetch_pipeline, PhaseTimes, PipelineTimeline};
pub(crate) use prefetch::PipelineState;
pub use stage::{RegionDescriptor, StageInstance, StageKernel};
pub use task::{DeviceKind, IoRef, TaskId, TaskNode, Variants};
pub use trace::{Trace, TraceEvent};
pub use worker::{touch_region, worker_finalize, worker_prepare};
pub use wrm::{Decision, Scheduler, Wrm, DEFAULT_TRANSFER_IMPACT};

use thiserror::Error;

use crate::region::RegionError;
use crate::storage::StorageError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("dependency cycle: {0}")]
    Cycle(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("stage {stage} failed: {cause}")]
    StageFailed { stage: u64, cause: StorageError },
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error(transparent)]
    Region(#[from] RegionError),
}
