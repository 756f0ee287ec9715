//! Worker resource manager: per-node ready queue and device assignment.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::task::{DeviceKind, TaskId, TaskNode};
use super::RuntimeError;

/// Fraction of a task's time attributed to CPU-GPU transfers when the task
/// does not carry its own value.
pub const DEFAULT_TRANSFER_IMPACT: f64 = 0.12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheduler {
    Fcfs,
    Pats,
}

impl FromStr for Scheduler {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "fcfs" => Ok(Self::Fcfs),
            "pats" => Ok(Self::Pats),
            _ => Err(format!("unknown scheduler {s:?} (expected fcfs or pats)")),
        }
    }
}

impl fmt::Display for Scheduler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Fcfs => "fcfs",
            Self::Pats => "pats",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum State {
    Pending,
    Ready,
    Running,
    Done,
}

struct Entry {
    node: TaskNode,
    state: State,
    waiting_on: usize,
    succs: Vec<TaskId>,
}

/// One assignment, with the ready queue as it looked when it was made.
#[derive(Clone, Debug, PartialEq)]
pub struct Decision {
    pub device: DeviceKind,
    /// `(task, priority)` of every ready task runnable on `device`, in queue
    /// order.
    pub candidates: Vec<(TaskId, f64)>,
    pub chosen: TaskId,
    /// Chosen by the data-locality rule rather than the plain scheduler rule.
    pub reuse: bool,
}

pub struct Wrm {
    scheduler: Scheduler,
    dl: bool,
    transfer_impact: f64,
    tasks: BTreeMap<TaskId, Entry>,
    ready: Vec<TaskId>,
    log: Option<Vec<Decision>>,
}

impl Wrm {
    pub fn new(scheduler: Scheduler, dl: bool) -> Self {
        Self {
            scheduler,
            dl,
            transfer_impact: DEFAULT_TRANSFER_IMPACT,
            tasks: BTreeMap::new(),
            ready: Vec::new(),
            log: None,
        }
    }

    pub fn with_transfer_impact(mut self, ti: f64) -> Self {
        self.transfer_impact = ti;
        self
    }

    /// Keep a record of every assignment.
    pub fn with_decision_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn scheduler(&self) -> Scheduler {
        self.scheduler
    }

    pub fn data_locality(&self) -> bool {
        self.dl
    }

    pub fn decisions(&self) -> &[Decision] {
        self.log.as_deref().unwrap_or(&[])
    }

    pub fn task(&self, id: TaskId) -> Option<&TaskNode> {
        self.tasks.get(&id).map(|e| &e.node)
    }

    /// Ready queue in scheduler order: insertion order under FCFS, descending
    /// speedup under PATS.
    pub fn ready_queue(&self) -> Vec<TaskId> {
        let mut q = self.ready.clone();
        if self.scheduler == Scheduler::Pats {
            q.sort_by(|a, b| self.priority(*b).total_cmp(&self.priority(*a)));
        }
        q
    }

    pub fn pending_count(&self) -> usize {
        self.count(State::Pending)
    }

    pub fn running_count(&self) -> usize {
        self.count(State::Running)
    }

    pub fn done_count(&self) -> usize {
        self.count(State::Done)
    }

    fn count(&self, s: State) -> usize {
        self.tasks.values().filter(|e| e.state == s).count()
    }

    pub fn has_ready_for(&self, device: DeviceKind) -> bool {
        self.ready.iter().any(|id| self.runs_on(*id, device))
    }

    fn runs_on(&self, id: TaskId, device: DeviceKind) -> bool {
        self.tasks[&id].node.variants.runs_on(device)
    }

    fn priority(&self, id: TaskId) -> f64 {
        self.tasks[&id].node.priority()
    }

    /// Add a task graph. Tasks may depend on tasks of this batch or on tasks
    /// submitted earlier. Returns the tasks that became ready, in order.
    pub fn submit(&mut self, tasks: Vec<TaskNode>) -> Result<Vec<TaskId>, RuntimeError> {
        let mut batch: BTreeSet<TaskId> = BTreeSet::new();
        for t in &tasks {
            t.validate().map_err(RuntimeError::Config)?;
            if self.tasks.contains_key(&t.id) || !batch.insert(t.id) {
                return Err(RuntimeError::Protocol(format!("duplicate task id {}", t.id)));
            }
        }
        for t in &tasks {
            if let Some(d) = t.deps.iter().find(|d| !batch.contains(d) && !self.tasks.contains_key(d)) {
                return Err(RuntimeError::Protocol(format!("task {} depends on unknown task {d}", t.id)));
            }
        }
        check_acyclic(&tasks)?;

        let mut newly_ready = Vec::new();
        let order: Vec<TaskId> = tasks.iter().map(|t| t.id).collect();
        for t in tasks {
            let deps: BTreeSet<TaskId> = t.deps.iter().copied().collect();
            let id = t.id;
            self.tasks.insert(
                id,
                Entry {
                    node: t,
                    state: State::Pending,
                    waiting_on: 0,
                    succs: Vec::new(),
                },
            );
            for d in deps {
                let dep = self.tasks.get_mut(&d).expect("checked above");
                dep.succs.push(id);
                let done = dep.state == State::Done;
                if !done {
                    self.tasks.get_mut(&id).expect("just inserted").waiting_on += 1;
                }
            }
        }
        for id in order {
            if self.tasks[&id].waiting_on == 0 {
                self.make_ready(id);
                newly_ready.push(id);
            }
        }
        Ok(newly_ready)
    }

    fn make_ready(&mut self, id: TaskId) {
        let e = self.tasks.get_mut(&id).expect("known task");
        e.state = State::Ready;
        self.ready.push(id);
    }

    /// Plain scheduler choice for an idle `device`.
    pub fn next(&mut self, device: DeviceKind) -> Option<TaskNode> {
        let chosen = self.pick(device)?;
        Some(self.start(device, chosen, false))
    }

    fn pick(&self, device: DeviceKind) -> Option<TaskId> {
        let mut compatible = self.ready.iter().copied().filter(|id| self.runs_on(*id, device));
        match self.scheduler {
            Scheduler::Fcfs => compatible.next(),
            Scheduler::Pats => compatible.fold(None, |best: Option<TaskId>, id| match best {
                None => Some(id),
                Some(b) => {
                    let (p, pb) = (self.priority(id), self.priority(b));
                    let better = match device {
                        DeviceKind::Gpu => p > pb,
                        DeviceKind::Cpu => p < pb,
                    };
                    Some(if better { id } else { b })
                }
            }),
        }
    }

    /// Choice for `device` after it finished `just_finished`, preferring
    /// ready successors that reuse its data. Falls back to [`Wrm::next`] when
    /// data locality is off or no successor qualifies.
    pub fn next_dl(&mut self, device: DeviceKind, just_finished: TaskId) -> Option<TaskNode> {
        if !self.dl {
            return self.next(device);
        }
        let Some(finished) = self.tasks.get(&just_finished) else {
            return self.next(device);
        };
        let reusers: Vec<(TaskId, u64)> = self
            .ready
            .iter()
            .copied()
            .filter(|id| finished.succs.contains(id) && self.runs_on(*id, device))
            .map(|id| (id, finished.node.shared_bytes(&self.tasks[&id].node)))
            .filter(|(_, bytes)| *bytes > 0)
            .collect();
        if reusers.is_empty() {
            return self.next(device);
        }
        let chosen = match (self.scheduler, device) {
            (Scheduler::Fcfs, _) => Some(reusers[0].0),
            (Scheduler::Pats, DeviceKind::Gpu) => {
                let best = self.pick(device).expect("reusers are ready and compatible");
                let (d, _) = best_by(&reusers, |id| self.priority(id), true);
                let ti = self.tasks[&d].node.transfer_impact.unwrap_or(self.transfer_impact);
                (self.priority(d) >= self.priority(best) * (1.0 - ti)).then_some(d)
            }
            (Scheduler::Pats, DeviceKind::Cpu) => Some(best_by(&reusers, |id| self.priority(id), false).0),
        };
        match chosen {
            Some(id) => Some(self.start(device, id, true)),
            None => self.next(device),
        }
    }

    fn start(&mut self, device: DeviceKind, id: TaskId, reuse: bool) -> TaskNode {
        if let Some(log) = self.log.as_mut() {
            let candidates = self
                .ready
                .iter()
                .filter(|t| self.tasks[t].node.variants.runs_on(device))
                .map(|t| (*t, self.tasks[t].node.priority()))
                .collect();
            log.push(Decision {
                device,
                candidates,
                chosen: id,
                reuse,
            });
        }
        self.ready.retain(|t| *t != id);
        let e = self.tasks.get_mut(&id).expect("ready task");
        e.state = State::Running;
        e.node.clone()
    }

    /// Mark a running task done; returns successors that became ready.
    pub fn task_complete(&mut self, id: TaskId) -> Result<Vec<TaskId>, RuntimeError> {
        let e = self
            .tasks
            .get_mut(&id)
            .ok_or_else(|| RuntimeError::Protocol(format!("completing unknown task {id}")))?;
        if e.state != State::Running {
            return Err(RuntimeError::Protocol(format!(
                "completing task {id} which is {:?}, not running",
                e.state
            )));
        }
        e.state = State::Done;
        let succs = e.succs.clone();
        let mut newly = Vec::new();
        for s in succs {
            let se = self.tasks.get_mut(&s).expect("known successor");
            se.waiting_on -= 1;
            if se.waiting_on == 0 && se.state == State::Pending {
                self.make_ready(s);
                newly.push(s);
            }
        }
        Ok(newly)
    }

    /// Drop bookkeeping for finished tasks that nothing pending still needs.
    pub fn forget(&mut self, ids: &[TaskId]) {
        for id in ids {
            if self.tasks.get(id).is_some_and(|e| e.state == State::Done) {
                self.tasks.remove(id);
            }
        }
    }
}

/// Best reuser by priority (max or min), then by reused bytes, then queue order.
fn best_by(reusers: &[(TaskId, u64)], prio: impl Fn(TaskId) -> f64, max: bool) -> (TaskId, u64) {
    let mut best = reusers[0];
    for &(id, bytes) in &reusers[1..] {
        let (p, pb) = (prio(id), prio(best.0));
        let better = if max { p > pb } else { p < pb };
        if better || (p == pb && bytes > best.1) {
            best = (id, bytes);
        }
    }
    best
}

fn check_acyclic(tasks: &[TaskNode]) -> Result<(), RuntimeError> {
    let ids: BTreeSet<TaskId> = tasks.iter().map(|t| t.id).collect();
    let mut indeg: BTreeMap<TaskId, usize> = ids.iter().map(|&id| (id, 0)).collect();
    let mut succs: BTreeMap<TaskId, Vec<TaskId>> = BTreeMap::new();
    for t in tasks {
        for d in t.deps.iter().collect::<BTreeSet<_>>() {
            if ids.contains(d) {
                *indeg.get_mut(&t.id).expect("known") += 1;
                succs.entry(*d).or_default().push(t.id);
            }
        }
    }
    let mut queue: Vec<TaskId> = indeg.iter().filter(|(_, &n)| n == 0).map(|(&id, _)| id).collect();
    while let Some(id) = queue.pop() {
        indeg.remove(&id);
        for s in succs.get(&id).into_iter().flatten() {
            if let Some(n) = indeg.get_mut(s) {
                *n -= 1;
                if *n == 0 {
                    queue.push(*s);
                }
            }
        }
    }
    if indeg.is_empty() {
        return Ok(());
    }
    let left: Vec<String> = indeg.keys().map(|id| id.to_string()).collect();
    Err(RuntimeError::Cycle(format!("tasks {} are on or behind a cycle", left.join(", "))))
}
