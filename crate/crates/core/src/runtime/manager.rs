use std::collections::{BTreeMap, BTreeSet};

use super::stage::StageInstance;
use super::RuntimeError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageState {
    Waiting,
    Assigned { worker: usize },
    Done,
}

struct Node {
    stage: StageInstance,
    state: StageState,
}

/// Stage-level dependency graph with demand-driven dispatch.
#[derive(Default)]
pub struct Manager {
    stages: BTreeMap<u64, Node>,
    order: Vec<u64>,
    completed: Vec<u64>,
}

impl Manager {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_stage(&mut self, stage: StageInstance) -> Result<(), RuntimeError> {
        let id = stage.stage_id;
        if self.stages.contains_key(&id) {
            return Err(RuntimeError::Protocol(format!("duplicate stage id {id}")));
        }
        self.order.push(id);
        self.stages.insert(
            id,
            Node {
                stage,
                state: StageState::Waiting,
            },
        );
        Ok(())
    }

    /// Check that every dependency names a known stage and that the graph is
    /// acyclic.
    pub fn validate(&self) -> Result<(), RuntimeError> {
        let mut edges: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
        for (id, n) in &self.stages {
            for d in &n.stage.deps {
                if !self.stages.contains_key(d) {
                    return Err(RuntimeError::Config(format!("stage {id} depends on unknown stage {d}")));
                }
            }
            edges.insert(*id, n.stage.deps.clone());
        }
        match find_cycle(&edges) {
            Some(cycle) => {
                let names: Vec<String> = cycle.iter().map(|id| id.to_string()).collect();
                Err(RuntimeError::Cycle(format!("stages {}", names.join(" -> "))))
            }
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn state(&self, id: u64) -> Option<StageState> {
        self.stages.get(&id).map(|n| n.state)
    }

    pub fn stage(&self, id: u64) -> Option<&StageInstance> {
        self.stages.get(&id).map(|n| &n.stage)
    }

    pub fn completion_log(&self) -> &[u64] {
        &self.completed
    }

    pub fn is_finished(&self) -> bool {
        self.stages.values().all(|n| n.state == StageState::Done)
    }

    pub fn outstanding(&self, worker: usize) -> usize {
        self.stages
            .values()
            .filter(|n| n.state == StageState::Assigned { worker })
            .count()
    }

    fn eligible(&self, id: u64) -> bool {
        let n = &self.stages[&id];
        n.state == StageState::Waiting
            && n
                .stage
                .deps
                .iter()
                .all(|d| self.stages.get(d).is_some_and(|dn| dn.state == StageState::Done))
    }

    /// Oldest eligible stage, now assigned to `worker`.
    pub fn dispatch(&mut self, worker: usize) -> Option<StageInstance> {
        let id = self.order.iter().copied().find(|&id| self.eligible(id))?;
        let n = self.stages.get_mut(&id).expect("ordered ids are known");
        n.state = StageState::Assigned { worker };
        Some(n.stage.clone())
    }

    /// Mark an assigned stage done and ingest the stages it spawns. Returns
    /// stages that just became eligible, in dispatch order.
    pub fn stage_complete(&mut self, id: u64) -> Result<Vec<u64>, RuntimeError> {
        let n = self
            .stages
            .get_mut(&id)
            .ok_or_else(|| RuntimeError::Protocol(format!("completing unknown stage {id}")))?;
        match n.state {
            StageState::Assigned { .. } => {}
            StageState::Waiting => return Err(RuntimeError::Protocol(format!("stage {id} completed before assignment"))),
            StageState::Done => return Err(RuntimeError::Protocol(format!("stage {id} completed twice"))),
        }
        n.state = StageState::Done;
        let spawned = std::mem::take(&mut n.stage.spawns);
        self.completed.push(id);
        let mut fresh = BTreeSet::new();
        for s in spawned {
            fresh.insert(s.stage_id);
            self.add_stage(s)?;
        }
        Ok(self
            .order
            .iter()
            .copied()
            .filter(|sid| (fresh.contains(sid) || self.stages[sid].stage.deps.contains(&id)) && self.eligible(*sid))
            .collect())
    }
}

/// A cycle in a dependency map (node → nodes it depends on), if any. The
/// returned path starts and ends at the same node.
pub(crate) fn find_cycle<K: Ord + Clone>(edges: &BTreeMap<K, Vec<K>>) -> Option<Vec<K>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        Open,
        Closed,
    }
    let mut marks: BTreeMap<K, Mark> = BTreeMap::new();
    for root in edges.keys() {
        if marks.contains_key(root) {
            continue;
        }
        // iterative DFS keeping the current path
        let mut path: Vec<(K, usize)> = vec![(root.clone(), 0)];
        marks.insert(root.clone(), Mark::Open);
        while let Some((node, next)) = path.last().cloned() {
            let deps = edges.get(&node).map(Vec::as_slice).unwrap_or(&[]);
            if next < deps.len() {
                path.last_mut().expect("non-empty").1 += 1;
                let d = &deps[next];
                match marks.get(d) {
                    Some(Mark::Open) => {
                        let start = path.iter().position(|(k, _)| k == d).expect("open nodes are on the path");
                        let mut cycle: Vec<K> = path[start..].iter().map(|(k, _)| k.clone()).collect();
                        cycle.push(d.clone());
                        return Some(cycle);
                    }
                    Some(Mark::Closed) => {}
                    None => {
                        marks.insert(d.clone(), Mark::Open);
                        path.push((d.clone(), 0));
                    }
                }
            } else {
                marks.insert(node, Mark::Closed);
                path.pop();
            }
        }
    }
    None
}
