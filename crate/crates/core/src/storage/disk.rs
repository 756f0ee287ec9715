//! Disk staging with I/O groups.
//!
//! Buffers are queued on I/O nodes. When any node's queue reaches the
//! threshold, every node of its group enters a write session and the group's
//! queued buffers are written to one session file. Groups never wait on each
//! other.
//!
//! Session file layout (little-endian):
//!
//! ```text
//! header  := "RTSF" u16:version(=1) u32:group u64:session u32:records
//! record  := u32:len body            (len = byte length of body)
//! body    := str:namespace str:key str:type_tag i64:timestamp i64:version
//!            u64:seq u8:kind u8:element bbox u64:payload_len payload
//! footer  := u64:offset * records    (absolute offset of each record)
//!            u32:records "RTSE"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{assemble, staged_chunks, Completion, SequenceCounter, StagedChunk, StorageBackend, StorageError, StorageStats};
use crate::codec::{Reader, Writer};
use crate::region::{BoundingBox, DataRegion, DataRegionId, ElementKind, RegionKind};

const MAGIC: &[u8; 4] = b"RTSF";
const FOOTER_MAGIC: &[u8; 4] = b"RTSE";
const VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    CoLocated,
    Separated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GroupSizeRepr", into = "GroupSizeRepr")]
pub enum GroupSize {
    Nodes(usize),
    All,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum GroupSizeRepr {
    Nodes(usize),
    Named(String),
}

impl TryFrom<GroupSizeRepr> for GroupSize {
    type Error = String;

    fn try_from(r: GroupSizeRepr) -> Result<Self, String> {
        match r {
            GroupSizeRepr::Nodes(k) => Ok(Self::Nodes(k)),
            GroupSizeRepr::Named(s) => s.parse(),
        }
    }
}

impl From<GroupSize> for GroupSizeRepr {
    fn from(g: GroupSize) -> Self {
        match g {
            GroupSize::Nodes(k) => Self::Nodes(k),
            GroupSize::All => Self::Named("all".into()),
        }
    }
}

impl std::str::FromStr for GroupSize {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("all") {
            return Ok(Self::All);
        }
        s.parse::<usize>()
            .map(Self::Nodes)
            .map_err(|_| format!("group size must be a count or \"all\", got {s:?}"))
    }
}

impl fmt::Display for GroupSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Nodes(k) => write!(f, "{k}"),
            Self::All => f.write_str("all"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    RoundRobin,
    Random { seed: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoGroupConfig {
    pub placement: Placement,
    pub group_size: GroupSize,
    pub io_node_count: usize,
    pub queue_threshold: usize,
    pub distribution: Distribution,
}

impl Default for IoGroupConfig {
    fn default() -> Self {
        Self {
            placement: Placement::Separated,
            group_size: GroupSize::All,
            io_node_count: 4,
            queue_threshold: 4,
            distribution: Distribution::RoundRobin,
        }
    }
}

impl IoGroupConfig {
    pub fn validate(&self) -> Result<(), StorageError> {
        if self.io_node_count == 0 {
            return Err(StorageError::Config("io_node_count must be at least 1".into()));
        }
        if self.queue_threshold == 0 {
            return Err(StorageError::Config("queue_threshold must be at least 1".into()));
        }
        if let GroupSize::Nodes(k) = self.group_size {
            if k == 0 || self.io_node_count % k != 0 {
                return Err(StorageError::Config(format!(
                    "group size {k} does not divide {} I/O nodes",
                    self.io_node_count
                )));
            }
        }
        Ok(())
    }

    pub fn nodes_per_group(&self) -> usize {
        match self.group_size {
            GroupSize::Nodes(k) => k,
            GroupSize::All => self.io_node_count,
        }
    }

    pub fn group_count(&self) -> usize {
        self.io_node_count / self.nodes_per_group()
    }

    pub fn group_of(&self, node: usize) -> usize {
        node / self.nodes_per_group()
    }
}

/// Simulated cost model for the disk store's own timeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiskTiming {
    /// Time an I/O node spends receiving one buffer.
    pub enqueue_cost: f64,
    /// Fixed time per write session.
    pub session_overhead: f64,
    /// Bytes written per time unit during a session.
    pub write_bandwidth: f64,
}

impl Default for DiskTiming {
    fn default() -> Self {
        Self {
            enqueue_cost: 1.0,
            session_overhead: 2.0,
            write_bandwidth: 4096.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum DiskEvent {
    Enqueue { time: f64, node: usize, group: usize, seq: u64, bytes: u64 },
    SessionStart { time: f64, group: usize, session: u64 },
    SessionEnd { time: f64, group: usize, session: u64, buffers: usize, bytes: u64 },
    /// Every group with queued buffers is about to be flushed.
    Barrier { time: f64 },
}

impl DiskEvent {
    pub fn group(&self) -> Option<usize> {
        match *self {
            Self::Enqueue { group, .. } | Self::SessionStart { group, .. } | Self::SessionEnd { group, .. } => Some(group),
            Self::Barrier { .. } => None,
        }
    }

    pub fn time(&self) -> f64 {
        match *self {
            Self::Enqueue { time, .. }
            | Self::SessionStart { time, .. }
            | Self::SessionEnd { time, .. }
            | Self::Barrier { time } => time,
        }
    }
}

impl fmt::Display for DiskEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Enqueue { time, node, group, seq, bytes } => {
                write!(f, "{time:.6}\tio_enqueue\tg{group}.seq{seq}\tio{node}\t{bytes}")
            }
            Self::SessionStart { time, group, session } => {
                write!(f, "{time:.6}\tsession_start\tg{group}.s{session}\t-\t0")
            }
            Self::SessionEnd { time, group, session, bytes, .. } => {
                write!(f, "{time:.6}\tsession_end\tg{group}.s{session}\t-\t{bytes}")
            }
            Self::Barrier { time } => write!(f, "{time:.6}\tbarrier\t-\t-\t0"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BufferDescriptor {
    pub node: usize,
    pub id: DataRegionId,
    pub bbox: BoundingBox,
    pub seq: u64,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WriteSession {
    pub group_id: usize,
    pub session: u64,
    pub flushed: Vec<BufferDescriptor>,
    pub start: f64,
    pub duration: f64,
    pub forced: bool,
    pub file: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SessionRecord {
    pub offset: u64,
    pub chunk: StagedChunk,
}

#[derive(Clone, Debug)]
struct IndexEntry {
    seq: u64,
    bbox: BoundingBox,
    file: PathBuf,
    offset: u64,
}

struct IoNode {
    queue: Vec<(usize, StagedChunk)>,
    clock: f64,
}

struct DiskState {
    nodes: Vec<IoNode>,
    round_robin: usize,
    rng: ChaCha8Rng,
    index: BTreeMap<DataRegionId, Vec<IndexEntry>>,
    sessions: Vec<WriteSession>,
    events: Vec<DiskEvent>,
    stats: StorageStats,
}

pub struct DiskStore {
    name: String,
    dir: PathBuf,
    cfg: IoGroupConfig,
    timing: DiskTiming,
    seq: SequenceCounter,
    state: Mutex<DiskState>,
}

impl DiskStore {
    pub fn new(
        name: impl Into<String>,
        dir: impl Into<PathBuf>,
        cfg: IoGroupConfig,
        timing: DiskTiming,
        seq: SequenceCounter,
    ) -> Result<Self, StorageError> {
        cfg.validate()?;
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| StorageError::Io(format!("{}: {e}", dir.display())))?;
        let seed = match cfg.distribution {
            Distribution::Random { seed } => seed,
            Distribution::RoundRobin => 0,
        };
        Ok(Self {
            name: name.into(),
            dir,
            state: Mutex::new(DiskState {
                nodes: (0..cfg.io_node_count)
                    .map(|_| IoNode {
                        queue: Vec::new(),
                        clock: 0.0,
                    })
                    .collect(),
                round_robin: 0,
                rng: ChaCha8Rng::seed_from_u64(seed),
                index: BTreeMap::new(),
                sessions: Vec::new(),
                events: Vec::new(),
                stats: StorageStats::default(),
            }),
            cfg,
            timing,
            seq,
        })
    }

    pub fn config(&self) -> &IoGroupConfig {
        &self.cfg
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn sessions(&self) -> Vec<WriteSession> {
        self.state.lock().expect("disk lock").sessions.clone()
    }

    pub fn events(&self) -> Vec<DiskEvent> {
        self.state.lock().expect("disk lock").events.clone()
    }

    /// Buffers currently queued on each I/O node.
    pub fn queue_lengths(&self) -> Vec<usize> {
        self.state.lock().expect("disk lock").nodes.iter().map(|n| n.queue.len()).collect()
    }

    fn pick_node(&self, st: &mut DiskState, origin: usize) -> usize {
        match (self.cfg.placement, self.cfg.distribution) {
            (Placement::CoLocated, _) => origin % self.cfg.io_node_count,
            (Placement::Separated, Distribution::RoundRobin) => {
                let n = st.round_robin % self.cfg.io_node_count;
                st.round_robin += 1;
                n
            }
            (Placement::Separated, Distribution::Random { .. }) => st.rng.gen_range(0..self.cfg.io_node_count),
        }
    }

    fn stage(&self, region: &DataRegion, origin: usize) -> Result<u64, StorageError> {
        let chunks = staged_chunks(region, &self.seq)?;
        let mut st = self.state.lock().expect("disk lock");
        let mut bytes = 0;
        for chunk in chunks {
            let node = self.pick_node(&mut st, origin);
            let group = self.cfg.group_of(node);
            let len = chunk.payload.len() as u64;
            bytes += len;
            st.nodes[node].clock += self.timing.enqueue_cost;
            let time = st.nodes[node].clock;
            st.events.push(DiskEvent::Enqueue {
                time,
                node,
                group,
                seq: chunk.seq,
                bytes: len,
            });
            st.nodes[node].queue.push((node, chunk));
            if st.nodes[node].queue.len() >= self.cfg.queue_threshold {
                self.write_session(&mut st, group, false)?;
            }
        }
        st.stats.staged_bytes += bytes;
        Ok(bytes)
    }

    fn write_session(&self, st: &mut DiskState, group: usize, forced: bool) -> Result<(), StorageError> {
        let k = self.cfg.nodes_per_group();
        let members = group * k..(group + 1) * k;
        let buffers: Vec<(usize, StagedChunk)> = members
            .clone()
            .flat_map(|n| std::mem::take(&mut st.nodes[n].queue))
            .collect();
        if buffers.is_empty() {
            return Ok(());
        }
        let session = st.sessions.len() as u64;
        let file = self.dir.join(format!("session-g{group:04}-{session:06}.rts"));
        let encoded = encode_session(group as u32, session, buffers.iter().map(|(_, c)| c));
        fs::write(&file, &encoded.bytes).map_err(|e| StorageError::Io(format!("{}: {e}", file.display())))?;

        let start = members.clone().map(|n| st.nodes[n].clock).fold(0.0, f64::max);
        let bytes: u64 = buffers.iter().map(|(_, c)| c.payload.len() as u64).sum();
        let duration = self.timing.session_overhead + bytes as f64 / self.timing.write_bandwidth;
        for n in members {
            st.nodes[n].clock = start + duration;
        }
        st.events.push(DiskEvent::SessionStart { time: start, group, session });
        st.events.push(DiskEvent::SessionEnd {
            time: start + duration,
            group,
            session,
            buffers: buffers.len(),
            bytes,
        });

        let mut flushed = Vec::with_capacity(buffers.len());
        for ((node, c), offset) in buffers.into_iter().zip(encoded.offsets) {
            st.index.entry(c.id.clone()).or_default().push(IndexEntry {
                seq: c.seq,
                bbox: c.bbox.clone(),
                file: file.clone(),
                offset,
            });
            flushed.push(BufferDescriptor {
                node,
                bytes: c.payload.len() as u64,
                id: c.id,
                bbox: c.bbox,
                seq: c.seq,
            });
        }
        st.stats.sessions += 1;
        st.stats.flushed_buffers += flushed.len() as u64;
        st.sessions.push(WriteSession {
            group_id: group,
            session,
            flushed,
            start,
            duration,
            forced,
            file,
        });
        Ok(())
    }

    /// Flush every group that still has queued buffers.
    pub fn flush_all(&self) -> Result<(), StorageError> {
        let mut st = self.state.lock().expect("disk lock");
        self.flush_pending(&mut st)
    }

    fn flush_pending(&self, st: &mut DiskState) -> Result<(), StorageError> {
        let time = st.nodes.iter().map(|n| n.clock).fold(0.0, f64::max);
        st.events.push(DiskEvent::Barrier { time });
        for g in 0..self.cfg.group_count() {
            let k = self.cfg.nodes_per_group();
            if (g * k..(g + 1) * k).any(|n| !st.nodes[n].queue.is_empty()) {
                self.write_session(st, g, true)?;
            }
        }
        Ok(())
    }

    fn read(&self, id: &DataRegionId, query: &BoundingBox) -> Result<DataRegion, StorageError> {
        let mut st = self.state.lock().expect("disk lock");
        // read barrier: unflushed buffers go to disk first
        let pending = st.nodes.iter().any(|n| n.queue.iter().any(|(_, c)| &c.id == id));
        if pending {
            self.flush_pending(&mut st)?;
        }
        let entries: Vec<IndexEntry> = st
            .index
            .get(id)
            .map(|v| v.iter().filter(|e| e.bbox.intersects(query)).cloned().collect())
            .unwrap_or_default();
        if entries.is_empty() {
            return Err(StorageError::NotFound(format!("{id} over {query}")));
        }
        let mut by_file: BTreeMap<PathBuf, Vec<IndexEntry>> = BTreeMap::new();
        for e in entries {
            by_file.entry(e.file.clone()).or_default().push(e);
        }
        let mut pieces = Vec::new();
        for (file, wanted) in by_file {
            let records = read_session_file(&file)?;
            for e in wanted {
                let rec = records
                    .iter()
                    .find(|r| r.offset == e.offset)
                    .ok_or_else(|| StorageError::Decode(format!("{}: no record at offset {}", file.display(), e.offset)))?;
                if rec.chunk.seq != e.seq || &rec.chunk.id != id {
                    return Err(StorageError::Decode(format!(
                        "{}: record at offset {} does not match the index",
                        file.display(),
                        e.offset
                    )));
                }
                pieces.push(rec.chunk.clone());
            }
        }
        let region = assemble(id, query, pieces)?;
        st.stats.read_bytes += region.payload_bytes();
        Ok(region)
    }

    fn delete(&self, id: &DataRegionId) {
        let mut st = self.state.lock().expect("disk lock");
        st.index.remove(id);
        for n in &mut st.nodes {
            n.queue.retain(|(_, c)| &c.id != id);
        }
    }
}

impl StorageBackend for DiskStore {
    fn name(&self) -> &str {
        &self.name
    }

    fn stage_region(&self, region: &DataRegion, origin: usize) -> Completion<u64> {
        Completion::ready(self.stage(region, origin))
    }

    fn read_region(&self, id: &DataRegionId, query: &BoundingBox) -> Completion<DataRegion> {
        Completion::ready(self.read(id, query))
    }

    fn delete_region(&self, id: &DataRegionId) -> Completion<()> {
        self.delete(id);
        Completion::ready(Ok(()))
    }

    fn stats(&self) -> StorageStats {
        self.state.lock().expect("disk lock").stats.clone()
    }
}

struct EncodedSession {
    bytes: Vec<u8>,
    offsets: Vec<u64>,
}

fn encode_session<'a>(group: u32, session: u64, chunks: impl Iterator<Item = &'a StagedChunk>) -> EncodedSession {
    let chunks: Vec<&StagedChunk> = chunks.collect();
    let mut w = Writer::new();
    w.bytes(MAGIC);
    w.u16(VERSION);
    w.u32(group);
    w.u64(session);
    w.u32(chunks.len() as u32);
    let mut offsets = Vec::with_capacity(chunks.len());
    for c in chunks {
        offsets.push(w.len() as u64);
        let mut body = Writer::new();
        body.str(&c.id.namespace);
        body.str(&c.id.key);
        body.str(&c.id.type_tag);
        body.i64(c.id.timestamp);
        body.i64(c.id.version);
        body.u64(c.seq);
        body.u8(c.kind.code());
        body.u8(c.element_kind.code());
        body.bbox(&c.bbox);
        body.blob(&c.payload);
        let body = body.into_inner();
        w.u32(body.len() as u32);
        w.bytes(&body);
    }
    for &o in &offsets {
        w.u64(o);
    }
    w.u32(offsets.len() as u32);
    w.bytes(FOOTER_MAGIC);
    EncodedSession {
        bytes: w.into_inner(),
        offsets,
    }
}

/// Parse a session file, validating header, records and footer index.
pub fn read_session_file(path: &Path) -> Result<Vec<SessionRecord>, StorageError> {
    let bytes = fs::read(path).map_err(|e| StorageError::Io(format!("{}: {e}", path.display())))?;
    decode_session(&bytes).map_err(|e| StorageError::Decode(format!("{}: {e}", path.display())))
}

fn decode_session(bytes: &[u8]) -> Result<Vec<SessionRecord>, String> {
    let mut r = Reader::new(bytes);
    if r.take(4)? != MAGIC {
        return Err("bad session magic".into());
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(format!("unsupported session version {version}"));
    }
    let _group = r.u32()?;
    let _session = r.u64()?;
    let count = r.u32()? as usize;
    let mut records = Vec::with_capacity(count);
    for _ in 0..count {
        let offset = r.position() as u64;
        let len = r.u32()? as usize;
        let mut body = Reader::new(r.take(len)?);
        let id = DataRegionId {
            namespace: body.str()?,
            key: body.str()?,
            type_tag: body.str()?,
            timestamp: body.i64()?,
            version: body.i64()?,
        };
        let seq = body.u64()?;
        let kind = RegionKind::from_code(body.u8()?).ok_or("unknown region kind")?;
        let element_kind = ElementKind::from_code(body.u8()?).ok_or("unknown element kind")?;
        let bbox = body.bbox()?;
        let payload = body.blob()?;
        body.expect_end()?;
        records.push(SessionRecord {
            offset,
            chunk: StagedChunk {
                id,
                kind,
                element_kind,
                bbox,
                seq,
                payload,
            },
        });
    }
    for rec in &records {
        if r.u64()? != rec.offset {
            return Err("footer offset does not match record".into());
        }
    }
    if r.u32()? as usize != count {
        return Err("footer record count mismatch".into());
    }
    if r.take(4)? != FOOTER_MAGIC {
        return Err("bad footer magic".into());
    }
    r.expect_end()?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bb(s: &str) -> BoundingBox {
        s.parse().unwrap()
    }

    fn region(key: &str, b: &str, fill: u8) -> DataRegion {
        let bbox = bb(b);
        DataRegion::dense_from(
            DataRegionId::new("", key, "dense2d", 0, 0),
            RegionKind::Dense2D,
            ElementKind::U8,
            bbox.clone(),
            vec![fill; bbox.volume() as usize],
        )
        .unwrap()
    }

    fn store(dir: &Path, cfg: IoGroupConfig) -> DiskStore {
        DiskStore::new("DISK", dir, cfg, DiskTiming::default(), SequenceCounter::new()).unwrap()
    }

    fn cfg(nodes: usize, group: GroupSize, threshold: usize) -> IoGroupConfig {
        IoGroupConfig {
            placement: Placement::Separated,
            group_size: group,
            io_node_count: nodes,
            queue_threshold: threshold,
            distribution: Distribution::RoundRobin,
        }
    }

    #[test]
    fn threshold_one_flushes_every_stage() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(2, GroupSize::Nodes(1), 1));
        for i in 0..3 {
            s.stage_region(&region("a", "<0,0;1,1>", i), 0).wait().unwrap();
            assert_eq!(s.sessions().len(), i as usize + 1);
            assert_eq!(s.sessions()[i as usize].flushed.len(), 1);
        }
    }

    #[test]
    fn threshold_four_single_node() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(1, GroupSize::All, 4));
        for i in 0..3 {
            s.stage_region(&region("a", "<0,0;1,1>", i), 0).wait().unwrap();
        }
        assert!(s.sessions().is_empty());
        s.stage_region(&region("a", "<0,0;1,1>", 3), 0).wait().unwrap();
        let sessions = s.sessions();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].flushed.len(), 4);
    }

    #[test]
    fn round_robin_spreads_evenly() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(3, GroupSize::Nodes(1), 100));
        for i in 0..6 {
            s.stage_region(&region("a", "<0,0;0,0>", i), 0).wait().unwrap();
        }
        assert_eq!(s.queue_lengths(), vec![2, 2, 2]);
    }

    #[test]
    fn session_flushes_whole_group_only() {
        let dir = tempfile::tempdir().unwrap();
        // 4 nodes, groups {0,1} and {2,3}, threshold 2
        let s = store(dir.path(), cfg(4, GroupSize::Nodes(2), 2));
        for i in 0..5 {
            s.stage_region(&region("a", "<0,0;0,0>", i), 0).wait().unwrap();
        }
        // nodes got seq 0,1,2,3,0 -> node 0 hits 2 on the fifth stage
        let sessions = s.sessions();
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].group_id, 0);
        assert_eq!(sessions[0].flushed.len(), 3);
        assert_eq!(s.queue_lengths(), vec![0, 0, 1, 1]);
    }

    #[test]
    fn read_barrier_forces_flush() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(2, GroupSize::All, 10));
        let r = region("mask", "<0,0;3,3>", 7);
        s.stage_region(&r, 0).wait().unwrap();
        assert!(s.sessions().is_empty());
        let back = s.read_region(r.id(), r.bbox()).wait().unwrap();
        assert_eq!(back.dense_payload(r.bbox()).unwrap(), vec![7; 16]);
        assert!(s.sessions()[0].forced);
    }

    #[test]
    fn never_staged_is_not_found() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(2, GroupSize::All, 1));
        assert!(matches!(
            s.read_region(&DataRegionId::new("", "x", "d", 0, 0), &bb("<0,0;1,1>")).wait(),
            Err(StorageError::NotFound(_))
        ));
    }

    #[test]
    fn corrupt_file_is_decode_error() {
        let dir = tempfile::tempdir().unwrap();
        let s = store(dir.path(), cfg(1, GroupSize::All, 1));
        let r = region("mask", "<0,0;1,1>", 1);
        s.stage_region(&r, 0).wait().unwrap();
        let file = s.sessions()[0].file.clone();
        let mut bytes = fs::read(&file).unwrap();
        let n = bytes.len();
        bytes[n - 1] ^= 0xFF;
        fs::write(&file, bytes).unwrap();
        assert!(matches!(s.read_region(r.id(), r.bbox()).wait(), Err(StorageError::Decode(_))));
    }

    #[test]
    fn unwritable_directory_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, b"x").unwrap();
        let err = DiskStore::new(
            "DISK",
            blocker.join("sub"),
            cfg(1, GroupSize::All, 1),
            DiskTiming::default(),
            SequenceCounter::new(),
        )
        .err()
        .unwrap();
        assert!(matches!(err, StorageError::Io(_)));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(30, GroupSize::Nodes(15), 1).validate().is_ok());
        assert!(cfg(30, GroupSize::Nodes(7), 1).validate().is_err());
        assert!(cfg(30, GroupSize::All, 0).validate().is_err());
        assert_eq!(cfg(30, GroupSize::Nodes(15), 1).group_count(), 2);
        assert_eq!(cfg(30, GroupSize::All, 1).group_count(), 1);
    }

    #[test]
    fn session_golden_bytes() {
        let chunk = StagedChunk {
            id: DataRegionId::new("", "k", "t", 0, 1),
            kind: RegionKind::Dense1D,
            element_kind: ElementKind::U8,
            bbox: bb("<0;0>"),
            seq: 9,
            payload: vec![0x5A],
        };
        let enc = encode_session(3, 2, std::iter::once(&chunk));
        let body: Vec<u8> = [
            &[0, 0, 0, 0][..],
            &[1, 0, 0, 0, b'k'],
            &[1, 0, 0, 0, b't'],
            &0i64.to_le_bytes(),
            &1i64.to_le_bytes(),
            &9u64.to_le_bytes(),
            &[1, 1],
            &[1],
            &0i64.to_le_bytes(),
            &0i64.to_le_bytes(),
            &1u64.to_le_bytes(),
            &[0x5A],
        ]
        .concat();
        let header_len = 4 + 2 + 4 + 8 + 4;
        let expected: Vec<u8> = [
            &b"RTSF"[..],
            &[1, 0],
            &3u32.to_le_bytes(),
            &2u64.to_le_bytes(),
            &1u32.to_le_bytes(),
            &(body.len() as u32).to_le_bytes(),
            &body,
            &(header_len as u64).to_le_bytes(),
            &1u32.to_le_bytes(),
            &b"RTSE"[..],
        ]
        .concat();
        assert_eq!(enc.bytes, expected);
        assert_eq!(enc.offsets, vec![header_len as u64]);
        let back = decode_session(&enc.bytes).unwrap();
        assert_eq!(back[0].chunk, chunk);
    }
}
