//! Global staging storage for data regions.
//!
//! Two interchangeable backends implement [`StorageBackend`]:
//! [`DmsStore`], an in-memory store sharded along a Hilbert curve where
//! payloads stay on the inserting shard and only metadata is propagated, and
//! [`DiskStore`], which queues buffers on I/O nodes and flushes whole I/O
//! groups in write sessions. Both keep the last staged version wherever
//! staged boxes overlap, ordered by a deployment-wide sequence counter.

mod completion;
mod disk;
mod dms;
pub mod protocol;
mod service;

pub use completion::{Completer, Completion};
pub use disk::{
    read_session_file, DiskEvent, DiskStore, DiskTiming, Distribution, GroupSize, IoGroupConfig, Placement,
    SessionRecord, WriteSession,
};
pub use dms::{DmsConfig, DmsShard, DmsStore, MetaEntry};
pub use service::{RemoteBackend, StorageServer};

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::region::{copy_dense, BoundingBox, DataRegion, DataRegionId, ElementKind, RegionError, RegionKind};
use crate::sfc::SfcError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StorageError {
    #[error("not found: {0}")]
    NotFound(String),
    #[error("curve index {0} is not part of the occupied domain")]
    NotOccupied(u64),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("decode error: {0}")]
    Decode(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error("protocol error: {0}")]
    Protocol(String),
}

impl From<SfcError> for StorageError {
    fn from(e: SfcError) -> Self {
        match e {
            SfcError::NotOccupied(h) => Self::NotOccupied(h),
            other => Self::Config(other.to_string()),
        }
    }
}

impl From<std::io::Error> for StorageError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}

/// Counters a backend exposes for metrics.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StorageStats {
    pub staged_bytes: u64,
    pub read_bytes: u64,
    pub sessions: u64,
    pub flushed_buffers: u64,
}

/// Global staging contract.
///
/// `origin` identifies the staging process: the home shard for the memory
/// store, the computing node for co-located disk I/O.
pub trait StorageBackend: Send + Sync {
    fn name(&self) -> &str;

    /// Stage every chunk of a materialized region. Resolves to the number of
    /// payload bytes staged.
    fn stage_region(&self, region: &DataRegion, origin: usize) -> Completion<u64>;

    /// Assemble the latest staged data of `id` over `query`.
    fn read_region(&self, id: &DataRegionId, query: &BoundingBox) -> Completion<DataRegion>;

    /// Forget every staged version of `id`. Deleting an absent id succeeds.
    fn delete_region(&self, id: &DataRegionId) -> Completion<()>;

    fn stats(&self) -> StorageStats {
        StorageStats::default()
    }
}

/// Deployment-wide stage ordering.
#[derive(Clone, Debug, Default)]
pub struct SequenceCounter(Arc<AtomicU64>);

impl SequenceCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next(&self) -> u64 {
        self.0.fetch_add(1, Ordering::SeqCst)
    }

    pub fn current(&self) -> u64 {
        self.0.load(Ordering::SeqCst)
    }
}

/// Backends by binding name.
#[derive(Clone, Default)]
pub struct StorageRegistry {
    backends: BTreeMap<String, Arc<dyn StorageBackend>>,
    sequence: SequenceCounter,
}

impl StorageRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sequence(&self) -> &SequenceCounter {
        &self.sequence
    }

    pub fn register(&mut self, binding: impl Into<String>, backend: Arc<dyn StorageBackend>) {
        self.backends.insert(binding.into(), backend);
    }

    pub fn get(&self, binding: &str) -> Result<&Arc<dyn StorageBackend>, StorageError> {
        self.backends
            .get(binding)
            .ok_or_else(|| StorageError::Config(format!("no storage backend bound to {binding:?}")))
    }

    pub fn bindings(&self) -> impl Iterator<Item = &str> {
        self.backends.keys().map(String::as_str)
    }

    pub fn total_stats(&self) -> StorageStats {
        let mut seen: Vec<*const ()> = Vec::new();
        let mut out = StorageStats::default();
        for b in self.backends.values() {
            let ptr = Arc::as_ptr(b) as *const ();
            if seen.contains(&ptr) {
                continue;
            }
            seen.push(ptr);
            let s = b.stats();
            out.staged_bytes += s.staged_bytes;
            out.read_bytes += s.read_bytes;
            out.sessions += s.sessions;
            out.flushed_buffers += s.flushed_buffers;
        }
        out
    }
}

/// One staged chunk as kept by a backend.
#[derive(Clone, Debug, PartialEq)]
pub struct StagedChunk {
    pub id: DataRegionId,
    pub kind: RegionKind,
    pub element_kind: ElementKind,
    pub bbox: BoundingBox,
    pub seq: u64,
    pub payload: Vec<u8>,
}

/// Replay `pieces` in sequence order over `query`.
///
/// Dense kinds are clipped to the query and every query cell must be
/// covered. Other kinds return the latest chunk per box among those
/// touching the query.
pub fn assemble(id: &DataRegionId, query: &BoundingBox, mut pieces: Vec<StagedChunk>) -> Result<DataRegion, StorageError> {
    let not_found = || StorageError::NotFound(format!("{id} over {query}"));
    pieces.retain(|p| p.bbox.intersects(query));
    pieces.sort_by_key(|p| p.seq);
    let first = pieces.first().ok_or_else(not_found)?;
    let (kind, element_kind) = (first.kind, first.element_kind);

    if kind.is_dense() {
        let elem = element_kind.size();
        let volume = query.volume() as usize;
        let mut buf = vec![0u8; volume * elem];
        let mut covered = vec![0u8; volume];
        for p in &pieces {
            let overlap = p.bbox.intersect(query)?.expect("filtered on intersection");
            copy_dense(&p.bbox, &p.payload, query, &mut buf, &overlap, elem);
            let ones = vec![1u8; overlap.volume() as usize];
            copy_dense(&overlap, &ones, query, &mut covered, &overlap, 1);
        }
        if covered.contains(&0) {
            return Err(not_found());
        }
        return Ok(DataRegion::dense_from(id.clone(), kind, element_kind, query.clone(), buf)?);
    }

    let mut latest: BTreeMap<BoundingBox, StagedChunk> = BTreeMap::new();
    for p in pieces {
        latest.insert(p.bbox.clone(), p);
    }
    let bbox = latest
        .keys()
        .try_fold(query.clone(), |acc, b| acc.union(b))?;
    let mut region = DataRegion::new(id.clone(), kind, element_kind, bbox)?;
    region.set_roi(query.clone())?;
    for (b, p) in latest {
        region.insert_chunk(b, p.payload)?;
    }
    Ok(region)
}

/// Split a region into staged chunks, drawing one sequence number each.
pub(crate) fn staged_chunks(region: &DataRegion, seq: &SequenceCounter) -> Result<Vec<StagedChunk>, StorageError> {
    if !region.is_materialized() {
        return Err(StorageError::Config(format!(
            "cannot stage {}: region is not materialized",
            region.id()
        )));
    }
    Ok(region
        .chunks()
        .map(|c| StagedChunk {
            id: region.id().clone(),
            kind: region.kind(),
            element_kind: region.element_kind(),
            bbox: c.bbox.clone(),
            seq: seq.next(),
            payload: c.payload.clone(),
        })
        .collect())
}
