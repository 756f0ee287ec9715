//! Deterministic discrete-event loop driving manager, workers, WRMs and
//! storage against simulated clocks.
//!
//! Each node is one worker. A worker holds up to `concurrency` stage
//! instances; their input reads and output stages go through a single I/O
//! agent per worker, so reading one stage's inputs overlaps other stages'
//! tasks. Idle device slots ask the WRM for work whenever the ready set or
//! slot availability changes; the slot that just finished asks first, then
//! GPUs, then CPU cores.
//!
//! GPU tasks pay for moving their non-resident data: read references are
//! uploaded and written references downloaded over the node's transfer
//! bandwidth. With data locality on, a GPU keeps the references of the last
//! task it ran. With prefetch on, a GPU runs upload, compute and download on
//! separate engines and accepts its next task once the current one starts
//! computing.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;
use std::{fmt, fs};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::{union_length, RunMetrics};
use super::spec::NodeSpec;
use super::workload::Workload;
use super::SimError;
use crate::region::{DataRegion, ElementKind, IoMode, RegionTemplate};
use crate::runtime::{
    touch_region, worker_finalize, worker_prepare, Decision, DeviceKind, Manager, PhaseTimes, PipelineState, Scheduler,
    StageInstance, TaskId, Trace, Wrm, DEFAULT_TRANSFER_IMPACT,
};
use crate::storage::{
    DiskEvent, DiskStore, DiskTiming, DmsConfig, DmsStore, IoGroupConfig, RemoteBackend, StorageBackend, StorageRegistry,
    StorageServer,
};

/// Backend behind the `GLOBAL` binding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageKind {
    Dms,
    Disk,
}

impl FromStr for StorageKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "dms" => Ok(Self::Dms),
            "disk" => Ok(Self::Disk),
            _ => Err(format!("unknown storage backend {s:?} (expected dms or disk)")),
        }
    }
}

impl fmt::Display for StorageKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Dms => "dms",
            Self::Disk => "disk",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimOptions {
    pub scheduler: Scheduler,
    pub dl: bool,
    pub prefetch: bool,
    pub storage: StorageKind,
    /// Seeds the contents of pre-existing regions.
    pub seed: u64,
    /// Stage instances a worker holds at once.
    pub concurrency: usize,
    pub transfer_impact: f64,
    /// Bytes per time unit through a worker's I/O agent.
    pub io_bandwidth: f64,
    /// Memory-store shards; defaults to one per node.
    pub dms_shards: Option<usize>,
    pub disk: IoGroupConfig,
    pub disk_timing: DiskTiming,
    /// Where the disk store writes. A private temporary directory is used
    /// and removed afterwards when unset.
    pub scratch_dir: Option<PathBuf>,
    pub record_decisions: bool,
    /// Reach every backend through a Unix-socket server instead of direct
    /// calls. Results are identical; only the transport differs.
    pub service: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            scheduler: Scheduler::Pats,
            dl: false,
            prefetch: false,
            storage: StorageKind::Dms,
            seed: 0,
            concurrency: 2,
            transfer_impact: DEFAULT_TRANSFER_IMPACT,
            io_bandwidth: 1.0e6,
            dms_shards: None,
            disk: IoGroupConfig::default(),
            disk_timing: DiskTiming::default(),
            scratch_dir: None,
            record_decisions: false,
            service: false,
        }
    }
}

impl SimOptions {
    pub fn with_scheduler(mut self, s: Scheduler) -> Self {
        self.scheduler = s;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.concurrency == 0 {
            return Err(SimError::Config("concurrency must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.transfer_impact) {
            return Err(SimError::Config("transfer_impact must be in [0, 1)".into()));
        }
        if !(self.io_bandwidth > 0.0) {
            return Err(SimError::Config("io_bandwidth must be positive".into()));
        }
        if self.dms_shards == Some(0) {
            return Err(SimError::Config("dms shard count must be at least 1".into()));
        }
        self.disk.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimResult {
    pub metrics: RunMetrics,
    pub trace: Trace,
    /// Disk-store events on its own timeline (empty when unused).
    pub io_trace: Vec<DiskEvent>,
    /// `(node, decision)` in per-node order, when requested.
    pub decisions: Vec<(usize, Decision)>,
}

impl SimResult {
    pub fn io_trace_text(&self) -> String {
        self.io_trace.iter().map(|e| format!("{e}\n")).collect()
    }
}

#[derive(Clone, Copy, Debug)]
enum Ev {
    PrepareDone { node: usize, stage: u64 },
    TaskEnd { node: usize, slot: usize, task: TaskId },
    SlotReady { node: usize, slot: usize },
    FinalizeDone { node: usize, stage: u64 },
}

struct Queued {
    time: f64,
    seq: u64,
    ev: Ev,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // reversed: BinaryHeap pops the earliest (time, seq) first
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.seq.cmp(&self.seq))
    }
}

struct Slot {
    kind: DeviceKind,
    label: String,
    busy: bool,
    last: Option<TaskId>,
    resident: BTreeSet<String>,
    pipe: PipelineState,
    intervals: Vec<(f64, f64)>,
}

struct Active {
    stage: StageInstance,
    template: RegionTemplate,
    remaining: usize,
}

struct Worker {
    wrm: Wrm,
    slots: Vec<Slot>,
    active: BTreeMap<u64, Active>,
    io_free: f64,
    next_task: TaskId,
    owner: BTreeMap<TaskId, (u64, TaskId)>,
}

struct Engine<'a> {
    opts: &'a SimOptions,
    nodes: &'a [NodeSpec],
    manager: Manager,
    workers: Vec<Worker>,
    registry: StorageRegistry,
    heap: BinaryHeap<Queued>,
    seq: u64,
    /// Nodes (and freed slots) to offer work once the current instant ends.
    wake: Vec<(usize, Option<usize>)>,
    now: f64,
    trace: Trace,
    metrics: RunMetrics,
}

static SCRATCH: AtomicU64 = AtomicU64::new(0);

/// Run `workload` on `nodes`.
pub fn run_sim(workload: &Workload, nodes: &[NodeSpec], opts: &SimOptions) -> Result<SimResult, SimError> {
    opts.validate()?;
    if nodes.is_empty() {
        return Err(SimError::Config("at least one node is required".into()));
    }
    for n in nodes {
        n.validate()?;
    }
    let (scratch, owned) = match &opts.scratch_dir {
        Some(d) => (d.clone(), false),
        None => {
            let n = SCRATCH.fetch_add(1, AtomicOrdering::SeqCst);
            (std::env::temp_dir().join(format!("rtsim-{}-{n}", std::process::id())), true)
        }
    };
    let result = run_in(workload, nodes, opts, scratch.clone());
    if owned {
        let _ = fs::remove_dir_all(&scratch);
    }
    result
}

fn run_in(workload: &Workload, nodes: &[NodeSpec], opts: &SimOptions, scratch: PathBuf) -> Result<SimResult, SimError> {
    let global = match opts.storage {
        StorageKind::Dms => "DMS",
        StorageKind::Disk => "DISK",
    };
    let resolve = |b: &str| if b == "GLOBAL" { global.to_string() } else { b.to_string() };
    let used: BTreeSet<String> = workload
        .stages
        .iter()
        .flat_map(|s| s.regions.iter().map(|d| resolve(&d.binding)))
        .chain(workload.initial.iter().map(|i| resolve(&i.binding)))
        .collect();

    let mut registry = StorageRegistry::new();
    let seq = registry.sequence().clone();
    let mut disk = None;
    let mut servers = Vec::new();
    if opts.service {
        fs::create_dir_all(&scratch).map_err(|e| SimError::Io(format!("{}: {e}", scratch.display())))?;
    }
    let mut install = |name: &str, backend: Arc<dyn StorageBackend>, dms: Option<Arc<DmsStore>>| -> Result<(), SimError> {
        if opts.service {
            let sock = scratch.join(format!("{}.sock", name.to_ascii_lowercase()));
            servers.push(StorageServer::bind(&sock, backend, dms)?);
            registry.register(name, Arc::new(RemoteBackend::new(name, sock)));
        } else {
            registry.register(name, backend);
        }
        Ok(())
    };
    if used.contains("DMS") {
        let cell: Vec<i64> = workload.tiles[0].extents().iter().map(|&e| e as i64).collect();
        let shards = opts.dms_shards.unwrap_or(nodes.len());
        let cfg = DmsConfig::for_domain(&workload.domain, &cell, shards)?;
        let store = Arc::new(DmsStore::new("DMS", &cfg, seq.clone())?);
        install("DMS", store.clone(), Some(store))?;
    }
    if used.contains("DISK") {
        let store = Arc::new(DiskStore::new("DISK", &scratch, opts.disk.clone(), opts.disk_timing, seq.clone())?);
        install("DISK", store.clone(), None)?;
        disk = Some(store);
    }
    for b in &used {
        if !matches!(b.as_str(), "DMS" | "DISK") {
            return Err(SimError::Config(format!("unknown storage binding {b:?}")));
        }
    }
    if used.contains(global) {
        let backend = registry.get(global)?.clone();
        registry.register("GLOBAL", backend);
    }

    // pre-existing data, one chunk per tile
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for init in &workload.initial {
        let backend = registry.get(&resolve(&init.binding))?.clone();
        for (t, tile) in workload.tiles.iter().enumerate() {
            let mut payload = vec![0u8; tile.volume() as usize];
            rng.fill_bytes(&mut payload);
            let r = DataRegion::dense_from(init.id.clone(), workload.region_kind, ElementKind::U8, tile.clone(), payload)?;
            backend.stage_region(&r, t).wait()?;
        }
    }

    let mut manager = Manager::new();
    for s in &workload.stages {
        let mut s = s.clone();
        for d in &mut s.regions {
            d.binding = resolve(&d.binding);
        }
        manager.add_stage(s)?;
    }
    manager.validate()?;

    let workers = nodes
        .iter()
        .enumerate()
        .map(|(n, spec)| {
            let mut wrm = Wrm::new(opts.scheduler, opts.dl).with_transfer_impact(opts.transfer_impact);
            if opts.record_decisions {
                wrm = wrm.with_decision_log();
            }
            let slot = |kind, label: String| Slot {
                kind,
                label,
                busy: false,
                last: None,
                resident: BTreeSet::new(),
                pipe: PipelineState::default(),
                intervals: Vec::new(),
            };
            let slots = (0..spec.gpus)
                .map(|g| slot(DeviceKind::Gpu, format!("n{n}.gpu{g}")))
                .chain((0..spec.cpu_cores).map(|c| slot(DeviceKind::Cpu, format!("n{n}.cpu{c}"))))
                .collect();
            Worker {
                wrm,
                slots,
                active: BTreeMap::new(),
                io_free: 0.0,
                next_task: 0,
                owner: BTreeMap::new(),
            }
        })
        .collect();

    let mut engine = Engine {
        opts,
        nodes,
        manager,
        workers,
        registry,
        heap: BinaryHeap::new(),
        seq: 0,
        wake: Vec::new(),
        now: 0.0,
        trace: Trace::new(),
        metrics: RunMetrics::default(),
    };
    let outcome = engine.run();
    for s in servers {
        s.shutdown();
    }
    outcome?;

    if let Some(d) = &disk {
        d.flush_all()?;
        let st = d.stats();
        engine.metrics.sessions = st.sessions;
        engine.metrics.flushed_buffers = st.flushed_buffers;
    }
    let decisions = engine
        .workers
        .iter()
        .enumerate()
        .flat_map(|(n, w)| w.wrm.decisions().iter().cloned().map(move |d| (n, d)))
        .collect();
    let mut metrics = engine.metrics;
    for w in &engine.workers {
        for s in &w.slots {
            let busy = union_length(s.intervals.clone());
            match s.kind {
                DeviceKind::Cpu => {
                    metrics.cpu_busy += busy;
                    metrics.cpu_slots += 1;
                }
                DeviceKind::Gpu => {
                    metrics.gpu_busy += busy;
                    metrics.gpu_slots += 1;
                }
            }
        }
    }
    metrics.makespan = engine.now;
    engine.trace.sort_by_time();
    Ok(SimResult {
        metrics,
        trace: engine.trace,
        io_trace: disk.map(|d| d.events()).unwrap_or_default(),
        decisions,
    })
}

impl Engine<'_> {
    fn push(&mut self, time: f64, ev: Ev) {
        self.heap.push(Queued { time, seq: self.seq, ev });
        self.seq += 1;
    }

    fn fail(&self, stage: u64, cause: impl fmt::Display) -> SimError {
        SimError::StageFailed {
            stage,
            cause: cause.to_string(),
            trace: self.trace.render(),
        }
    }

    fn run(&mut self) -> Result<(), SimError> {
        self.request_stages()?;
        while let Some(Queued { time, ev, .. }) = self.heap.pop() {
            self.now = time;
            match ev {
                Ev::PrepareDone { node, stage } => self.prepare_done(node, stage)?,
                Ev::TaskEnd { node, slot, task } => self.task_end(node, slot, task)?,
                Ev::SlotReady { node, slot } => {
                    self.workers[node].slots[slot].busy = false;
                    self.wake.push((node, Some(slot)));
                }
                Ev::FinalizeDone { node, stage } => {
                    self.manager.stage_complete(stage)?;
                    self.workers[node].active.remove(&stage);
                    self.trace.record(self.now, "stage_done", format!("s{stage}"), format!("n{node}"), 0);
                    self.metrics.stages += 1;
                    self.request_stages()?;
                }
            }
            // everything that happens at one instant is seen before slots choose
            if self.heap.peek().is_none_or(|q| q.time > self.now) {
                self.wake_slots();
            }
        }
        if !self.manager.is_finished() {
            let stuck: Vec<String> = self
                .workers
                .iter()
                .flat_map(|w| w.active.keys().map(|s| format!("s{s}")))
                .collect();
            return Err(SimError::Stalled(format!(
                "no runnable work left at time {:.6}; unfinished stages in flight: [{}] (a task may need a device no node has)",
                self.now,
                stuck.join(", ")
            )));
        }
        Ok(())
    }

    fn request_stages(&mut self) -> Result<(), SimError> {
        for node in 0..self.workers.len() {
            while self.workers[node].active.len() < self.opts.concurrency {
                let Some(stage) = self.manager.dispatch(node) else { break };
                self.start_prepare(node, stage)?;
            }
        }
        Ok(())
    }

    fn io_done_at(&mut self, node: usize, bytes: u64) -> f64 {
        let w = &mut self.workers[node];
        let start = self.now.max(w.io_free);
        w.io_free = start + bytes as f64 / self.opts.io_bandwidth;
        w.io_free
    }

    fn start_prepare(&mut self, node: usize, stage: StageInstance) -> Result<(), SimError> {
        let sid = stage.stage_id;
        self.trace.record(self.now, "stage_assign", format!("s{sid}"), format!("n{node}"), 0);
        let template = worker_prepare(&stage, &self.registry).map_err(|e| self.fail(sid, e))?;
        let bytes: u64 = stage
            .inputs()
            .filter_map(|d| template.get_by_id(&d.id))
            .map(DataRegion::payload_bytes)
            .sum();
        self.metrics.read_bytes += bytes;
        let done = self.io_done_at(node, bytes);
        self.trace.record(done, "stage_read", format!("s{sid}"), format!("n{node}.io"), bytes);
        self.workers[node].active.insert(
            sid,
            Active {
                remaining: stage.tasks.len(),
                stage,
                template,
            },
        );
        self.push(done, Ev::PrepareDone { node, stage: sid });
        Ok(())
    }

    fn prepare_done(&mut self, node: usize, sid: u64) -> Result<(), SimError> {
        let w = &mut self.workers[node];
        let base = w.next_task;
        let local = w.active[&sid].stage.tasks.clone();
        w.next_task += local.len() as TaskId;
        let tasks = local
            .into_iter()
            .map(|mut t| {
                w.owner.insert(base + t.id, (sid, t.id));
                t.id += base;
                for d in &mut t.deps {
                    *d += base;
                }
                t
            })
            .collect::<Vec<_>>();
        let empty = tasks.is_empty();
        w.wrm.submit(tasks)?;
        if empty {
            self.finalize(node, sid)?;
        }
        self.wake.push((node, None));
        Ok(())
    }

    fn wake_slots(&mut self) {
        let wake = std::mem::take(&mut self.wake);
        let nodes: BTreeSet<usize> = wake.iter().map(|w| w.0).collect();
        for node in nodes {
            let mut order: Vec<usize> = Vec::new();
            for s in wake.iter().filter(|w| w.0 == node).filter_map(|w| w.1) {
                if !order.contains(&s) {
                    order.push(s);
                }
            }
            let n = self.workers[node].slots.len();
            order.extend((0..n).filter(|s| !order.contains(s)).collect::<Vec<_>>());
            self.dispatch(node, &order);
        }
    }

    fn dispatch(&mut self, node: usize, order: &[usize]) {
        for &s in order {
            let w = &mut self.workers[node];
            let slot = &w.slots[s];
            if slot.busy {
                continue;
            }
            let picked = match slot.last {
                Some(last) => w.wrm.next_dl(slot.kind, last),
                None => w.wrm.next(slot.kind),
            };
            if let Some(task) = picked {
                self.start_task(node, s, task);
            }
        }
    }

    fn start_task(&mut self, node: usize, s: usize, task: crate::runtime::TaskNode) {
        let (sid, local) = self.workers[node].owner[&task.id];
        let label = format!("s{sid}.t{local}");
        let bw = self.nodes[node].gpu_transfer_bandwidth;
        let (dl, prefetch) = (self.opts.dl, self.opts.prefetch);
        let slot = &mut self.workers[node].slots[s];
        slot.busy = true;
        let entry = self.metrics.per_type.entry(task.type_name.clone()).or_default();
        entry.1 += 1;
        self.metrics.tasks += 1;

        match slot.kind {
            DeviceKind::Cpu => {
                let end = self.now + task.compute_time(DeviceKind::Cpu);
                slot.intervals.push((self.now, end));
                self.trace.record(self.now, "task_start", label, slot.label.clone(), 0);
                self.push(end, Ev::TaskEnd { node, slot: s, task: task.id });
            }
            DeviceKind::Gpu => {
                entry.0 += 1;
                self.metrics.gpu_tasks += 1;
                let (mut up, mut down) = (0u64, 0u64);
                for r in task.io_refs.iter().filter(|r| !slot.resident.contains(&r.key)) {
                    if r.write {
                        down += r.bytes;
                    } else {
                        up += r.bytes;
                    }
                }
                self.metrics.transfer_bytes += up + down;
                slot.resident = if dl {
                    task.io_refs.iter().map(|r| r.key.clone()).collect()
                } else {
                    BTreeSet::new()
                };
                let times = PhaseTimes::new(up as f64 / bw, task.compute_time(DeviceKind::Gpu), down as f64 / bw);
                if prefetch {
                    let [u, c, d] = slot.pipe.push(self.now, times);
                    slot.intervals.extend([u, c, d]);
                    slot.last = Some(task.id);
                    self.trace.record(u.0, "task_start", label, slot.label.clone(), up);
                    self.push(c.0, Ev::SlotReady { node, slot: s });
                    self.push(d.1, Ev::TaskEnd { node, slot: s, task: task.id });
                } else {
                    let end = self.now + times.total();
                    slot.intervals.push((self.now, end));
                    self.trace.record(self.now, "task_start", label, slot.label.clone(), up);
                    self.push(end, Ev::TaskEnd { node, slot: s, task: task.id });
                }
            }
        }
    }

    fn task_end(&mut self, node: usize, s: usize, task: TaskId) -> Result<(), SimError> {
        let w = &mut self.workers[node];
        let (sid, local) = w.owner[&task];
        w.wrm.task_complete(task)?;
        let slot = &mut w.slots[s];
        let pipelined = self.opts.prefetch && slot.kind == DeviceKind::Gpu;
        if !pipelined {
            slot.busy = false;
            slot.last = Some(task);
        }
        let bytes = if slot.kind == DeviceKind::Gpu {
            let t = w.wrm.task(task).expect("known task");
            t.io_refs.iter().filter(|r| r.write).map(|r| r.bytes).sum()
        } else {
            0
        };
        let label = slot.label.clone();
        self.trace.record(self.now, "task_end", format!("s{sid}.t{local}"), label, bytes);
        let a = w.active.get_mut(&sid).expect("task of an active stage");
        a.remaining -= 1;
        if a.remaining == 0 {
            self.finalize(node, sid)?;
        }
        self.wake.push((node, Some(s)));
        Ok(())
    }

    fn finalize(&mut self, node: usize, sid: u64) -> Result<(), SimError> {
        let mut a = self.workers[node].active.remove(&sid).expect("active stage");
        let mut lazy_bytes = 0;
        for d in a.stage.inputs().filter(|d| d.lazy) {
            let r = touch_region(&mut a.template, &d.id, &self.registry).map_err(|e| self.fail(sid, e))?;
            lazy_bytes += r.payload_bytes();
        }
        if let Some(k) = &a.stage.kernel {
            k.apply(&mut a.template).map_err(|e| self.fail(sid, e))?;
        }
        for d in a.stage.outputs().filter(|d| d.io_mode == IoMode::Output) {
            let r = a.template.get_by_id_mut(&d.id).expect("prepared output");
            if r.chunk_count() == 0 {
                let bbox = r.bbox().clone();
                let n = bbox.volume() as usize * r.element_kind().size();
                r.insert_chunk(bbox, vec![(sid % 251) as u8; n]).map_err(|e| self.fail(sid, e))?;
            }
        }
        let staged = worker_finalize(&a.stage, &mut a.template, &self.registry, node).map_err(|e| self.fail(sid, e))?;
        self.metrics.read_bytes += lazy_bytes;
        self.metrics.staged_bytes += staged;
        let done = self.io_done_at(node, lazy_bytes + staged);
        self.trace.record(done, "stage_write", format!("s{sid}"), format!("n{node}.io"), staged);
        self.workers[node].active.insert(sid, a);
        self.push(done, Ev::FinalizeDone { node, stage: sid });
        Ok(())
    }
}
