//! Independent reference models shared by the integration tests.
#![allow(dead_code)]

pub mod hilbert_oracle;

use std::collections::{BTreeMap, BTreeSet};

use region_templates::region::BoundingBox;
use region_templates::runtime::{DeviceKind, Trace, Variants};
use region_templates::storage::{DiskEvent, GroupSize, IoGroupConfig};

pub fn bb(s: &str) -> BoundingBox {
    s.parse().unwrap()
}

/// Cell-by-cell replay of stage/read/delete on 2-axis u8 regions.
#[derive(Default)]
pub struct StorageOracle {
    cells: BTreeMap<String, BTreeMap<(i64, i64), u8>>,
}

impl StorageOracle {
    /// `payload` is row-major over `b`.
    pub fn stage(&mut self, key: &str, b: &BoundingBox, payload: &[u8]) {
        let m = self.cells.entry(key.to_string()).or_default();
        let mut i = 0;
        for y in b.lo()[0]..=b.hi()[0] {
            for x in b.lo()[1]..=b.hi()[1] {
                m.insert((y, x), payload[i]);
                i += 1;
            }
        }
    }

    pub fn delete(&mut self, key: &str) {
        self.cells.remove(key);
    }

    /// `None` when any cell of `q` was never staged.
    pub fn read(&self, key: &str, q: &BoundingBox) -> Option<Vec<u8>> {
        let m = self.cells.get(key)?;
        let mut out = Vec::new();
        for y in q.lo()[0]..=q.hi()[0] {
            for x in q.lo()[1]..=q.hi()[1] {
                out.push(*m.get(&(y, x))?);
            }
        }
        Some(out)
    }
}

/// One task placement taken from a trace.
#[derive(Clone, Debug, PartialEq, PartialOrd)]
pub struct Placement {
    pub task: usize,
    pub device: DeviceKind,
    pub start: f64,
    pub end: f64,
}

/// Task placements of a single-stage run on one node with one CPU core
/// and one GPU.
pub fn placements(trace: &Trace) -> Vec<Placement> {
    let mut open: BTreeMap<String, (f64, DeviceKind)> = BTreeMap::new();
    let mut out = Vec::new();
    for e in trace.events() {
        let dev = if e.device.contains("gpu") { DeviceKind::Gpu } else { DeviceKind::Cpu };
        match e.kind.as_str() {
            "task_start" => {
                open.insert(e.id.clone(), (e.time, dev));
            }
            "task_end" => {
                let (start, device) = open.remove(&e.id).expect("end after start");
                let task = e.id.rsplit(".t").next().unwrap().parse().unwrap();
                out.push(Placement { task, device, start, end: e.time });
            }
            _ => {}
        }
    }
    out.sort_by(|a, b| a.task.cmp(&b.task));
    out
}

/// A 4-or-fewer task graph with per-task device support and durations.
#[derive(Clone, Debug)]
pub struct SmallDag {
    pub deps: Vec<Vec<usize>>,
    pub variants: Vec<Variants>,
    pub cpu_time: Vec<f64>,
    pub gpu_time: Vec<f64>,
}

fn runs_on(v: Variants, d: DeviceKind) -> bool {
    match v {
        Variants::Both => true,
        Variants::CpuOnly => d == DeviceKind::Cpu,
        Variants::GpuOnly => d == DeviceKind::Gpu,
    }
}

/// Every work-conserving schedule of `dag` on one CPU and one GPU, each as
/// placements sorted by task. Brute force over every choice made at every
/// decision instant.
pub fn legal_schedules(dag: &SmallDag) -> BTreeSet<Vec<(usize, u8, u64, u64)>> {
    let mut out = BTreeSet::new();
    let n = dag.deps.len();
    let state = Vec::<Option<(DeviceKind, f64, f64)>>::from(vec![None; n]);
    explore(dag, 0.0, state, &mut out);
    out
}

fn key(p: &[Option<(DeviceKind, f64, f64)>]) -> Vec<(usize, u8, u64, u64)> {
    p.iter()
        .enumerate()
        .map(|(i, s)| {
            let (d, a, b) = s.expect("complete schedule");
            (i, (d == DeviceKind::Gpu) as u8, a.to_bits(), b.to_bits())
        })
        .collect()
}

pub fn schedule_key(ps: &[Placement]) -> Vec<(usize, u8, u64, u64)> {
    ps.iter()
        .map(|p| (p.task, (p.device == DeviceKind::Gpu) as u8, p.start.to_bits(), p.end.to_bits()))
        .collect()
}

fn explore(dag: &SmallDag, t: f64, placed: Vec<Option<(DeviceKind, f64, f64)>>, out: &mut BTreeSet<Vec<(usize, u8, u64, u64)>>) {
    let n = dag.deps.len();
    if placed.iter().all(Option::is_some) {
        out.insert(key(&placed));
        return;
    }
    let busy = |d: DeviceKind| placed.iter().flatten().any(|&(pd, s, e)| pd == d && s <= t && t < e);
    let ready: Vec<usize> = (0..n)
        .filter(|&i| placed[i].is_none())
        .filter(|&i| dag.deps[i].iter().all(|&d| placed[d].is_some_and(|(_, _, e)| e <= t)))
        .collect();
    let idle: Vec<DeviceKind> = [DeviceKind::Cpu, DeviceKind::Gpu].into_iter().filter(|&d| !busy(d)).collect();

    // every assignment of ready tasks to idle devices; non-maximal ones are
    // dropped below
    let mut options: Vec<Vec<(DeviceKind, usize)>> = vec![vec![]];
    for &d in &idle {
        let mut next = Vec::new();
        for opt in &options {
            next.push(opt.clone());
            for &i in &ready {
                if runs_on(dag.variants[i], d) && !opt.iter().any(|&(_, j)| j == i) {
                    let mut o = opt.clone();
                    o.push((d, i));
                    next.push(o);
                }
            }
        }
        options = next;
    }
    for opt in options {
        // maximal: no idle device left with a compatible unassigned ready task
        let used: Vec<DeviceKind> = opt.iter().map(|&(d, _)| d).collect();
        let wasteful = idle.iter().filter(|d| !used.contains(d)).any(|&d| {
            ready
                .iter()
                .any(|&i| runs_on(dag.variants[i], d) && !opt.iter().any(|&(_, j)| j == i))
        });
        if wasteful {
            continue;
        }
        let mut p = placed.clone();
        for &(d, i) in &opt {
            let dur = if d == DeviceKind::Gpu { dag.gpu_time[i] } else { dag.cpu_time[i] };
            p[i] = Some((d, t, t + dur));
        }
        let next_t = p
            .iter()
            .flatten()
            .map(|&(_, _, e)| e)
            .filter(|&e| e > t)
            .fold(f64::INFINITY, f64::min);
        if next_t.is_infinite() {
            if p.iter().all(Option::is_some) {
                out.insert(key(&p));
            }
            // otherwise stuck: no legal completion from here
            continue;
        }
        explore(dag, next_t, p, out);
    }
}

/// Session counts and start times predicted by replaying the disk event
/// stream's enqueues and barriers through the queue rule: a node reaching
/// the threshold flushes its whole group, a barrier flushes every group
/// with queued buffers. Only members' own enqueues and their group's
/// sessions move a node's clock.
pub struct SessionReplay {
    pub sessions: Vec<(usize, usize, f64)>,
}

pub fn replay_sessions(events: &[DiskEvent], cfg: &IoGroupConfig, session_overhead: f64, write_bandwidth: f64, enqueue_cost: f64) -> SessionReplay {
    let k = match cfg.group_size {
        GroupSize::All => cfg.io_node_count,
        GroupSize::Nodes(k) => k,
    };
    let mut queue: Vec<Vec<u64>> = vec![Vec::new(); cfg.io_node_count];
    let mut clock = vec![0.0f64; cfg.io_node_count];
    let mut sessions = Vec::new();
    let mut flush = |g: usize, queue: &mut Vec<Vec<u64>>, clock: &mut Vec<f64>| {
        let members = g * k..(g + 1) * k;
        let bytes: Vec<u64> = members.clone().flat_map(|n| std::mem::take(&mut queue[n])).collect();
        if bytes.is_empty() {
            return;
        }
        let start = members.clone().map(|n| clock[n]).fold(0.0, f64::max);
        let dur = session_overhead + bytes.iter().sum::<u64>() as f64 / write_bandwidth;
        for n in members {
            clock[n] = start + dur;
        }
        sessions.push((g, bytes.len(), start));
    };
    for e in events {
        match *e {
            DiskEvent::Enqueue { node, bytes, .. } => {
                clock[node] += enqueue_cost;
                queue[node].push(bytes);
                if queue[node].len() >= cfg.queue_threshold {
                    flush(node / k, &mut queue, &mut clock);
                }
            }
            DiskEvent::Barrier { .. } => {
                for g in 0..cfg.io_node_count / k {
                    flush(g, &mut queue, &mut clock);
                }
            }
            _ => {}
        }
    }
    SessionReplay { sessions }
}
