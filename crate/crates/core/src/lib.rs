//! Region templates runtime.
//!
//! * [`region`]: bounding boxes, data regions, templates, partitioning and
//!   the pack format.
//! * [`sfc`]: Hilbert curve codec, box-to-interval decomposition, virtual
//!   domain and shard ownership.
//! * [`storage`]: the global staging contract with the distributed memory
//!   store and the grouped-I/O disk store.
//! * [`runtime`]: manager, worker preparation/finalization and the worker
//!   resource manager (FCFS, PATS, data locality, prefetch pipeline).
//! * [`sim`]: discrete-event simulation of CPU/GPU nodes driving the runtime.
//! * [`config`]: run configuration files for the `rtsim` binary.

pub(crate) mod codec;
pub mod config;
pub mod region;
pub mod runtime;
pub mod sfc;
pub mod sim;
pub mod storage;
