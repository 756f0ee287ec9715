//! In-process execution with real kernels on real threads.
//!
//! Each worker thread requests stages from a shared [`Manager`], prepares
//! them against the storage registry, runs the stage's tasks in the order
//! its [`Wrm`] picks for a CPU core, and finalizes. Tasks call registered
//! kernels on the stage's working buffer: the payload of its first input
//! region. The buffer is written to every output region afterwards.

use std::collections::BTreeMap;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use super::manager::Manager;
use super::stage::StageInstance;
use super::task::DeviceKind;
use super::worker::{touch_region, worker_finalize, worker_prepare};
use super::wrm::{Scheduler, Wrm};
use super::RuntimeError;
use crate::storage::StorageRegistry;

pub type KernelFn = Arc<dyn Fn(&mut [u8]) + Send + Sync>;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct LocalRunReport {
    pub stages: usize,
    pub tasks: usize,
    pub staged_bytes: u64,
    pub elapsed: Duration,
}

pub struct LocalRuntime {
    registry: StorageRegistry,
    kernels: BTreeMap<String, KernelFn>,
    scheduler: Scheduler,
    workers: usize,
}

impl LocalRuntime {
    pub fn new(registry: StorageRegistry) -> Self {
        Self {
            registry,
            kernels: BTreeMap::new(),
            scheduler: Scheduler::Fcfs,
            workers: 1,
        }
    }

    pub fn with_scheduler(mut self, s: Scheduler) -> Self {
        self.scheduler = s;
        self
    }

    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = n.max(1);
        self
    }

    pub fn register_kernel(&mut self, name: impl Into<String>, f: KernelFn) {
        self.kernels.insert(name.into(), f);
    }

    pub fn registry(&self) -> &StorageRegistry {
        &self.registry
    }

    pub fn run(&self, stages: Vec<StageInstance>) -> Result<LocalRunReport, RuntimeError> {
        let mut manager = Manager::new();
        for s in stages {
            manager.add_stage(s)?;
        }
        manager.validate()?;
        let shared = (Mutex::new((manager, None::<RuntimeError>)), Condvar::new());
        let start = Instant::now();
        let totals = Mutex::new(LocalRunReport::default());

        if self.workers == 1 {
            self.worker_loop(0, &shared, &totals);
        } else {
            std::thread::scope(|scope| {
                for worker in 0..self.workers {
                    let (shared, totals) = (&shared, &totals);
                    scope.spawn(move || self.worker_loop(worker, shared, totals));
                }
            });
        }

        let (state, _) = shared;
        if let Some(e) = state.into_inner().expect("manager lock").1 {
            return Err(e);
        }
        let mut report = totals.into_inner().expect("report lock");
        report.elapsed = start.elapsed();
        Ok(report)
    }

    fn worker_loop(
        &self,
        worker: usize,
        shared: &(Mutex<(Manager, Option<RuntimeError>)>, Condvar),
        totals: &Mutex<LocalRunReport>,
    ) {
        let (lock, cv) = shared;
        loop {
            let stage = {
                let mut g = lock.lock().expect("manager lock");
                loop {
                    if g.1.is_some() || g.0.is_finished() {
                        return;
                    }
                    if let Some(s) = g.0.dispatch(worker) {
                        break s;
                    }
                    g = cv.wait(g).expect("manager lock");
                }
            };
            let outcome = self.run_stage(&stage, worker);
            let mut g = lock.lock().expect("manager lock");
            match outcome {
                Ok((tasks, bytes)) => {
                    if let Err(e) = g.0.stage_complete(stage.stage_id) {
                        g.1 = Some(e);
                    }
                    let mut t = totals.lock().expect("report lock");
                    t.stages += 1;
                    t.tasks += tasks;
                    t.staged_bytes += bytes;
                }
                Err(e) => g.1 = Some(e),
            }
            cv.notify_all();
        }
    }

    fn run_stage(&self, stage: &StageInstance, worker: usize) -> Result<(usize, u64), RuntimeError> {
        let mut template = worker_prepare(stage, &self.registry)?;
        let mut work = match stage.inputs().next() {
            Some(d) => touch_region(&mut template, &d.id, &self.registry)?.dense_payload(&d.query)?,
            None => Vec::new(),
        };

        let mut wrm = Wrm::new(self.scheduler, false);
        wrm.submit(stage.tasks.clone())?;
        let mut ran = 0;
        while let Some(task) = wrm.next(DeviceKind::Cpu) {
            let kernel = self.kernels.get(&task.type_name).ok_or_else(|| {
                RuntimeError::Config(format!("no kernel registered for task type {:?}", task.type_name))
            })?;
            kernel(&mut work);
            wrm.task_complete(task.id)?;
            ran += 1;
        }
        if ran != stage.tasks.len() {
            return Err(RuntimeError::Config(format!(
                "stage {}: {} of {} tasks can run on a CPU",
                stage.stage_id,
                ran,
                stage.tasks.len()
            )));
        }

        for d in stage.outputs() {
            let region = template.get_by_id_mut(&d.id).expect("prepared outputs are in the template");
            let bbox = region.bbox().clone();
            region.insert_chunk(bbox, work.clone())?;
        }
        if let Some(k) = &stage.kernel {
            k.apply(&mut template)?;
        }
        let bytes = worker_finalize(stage, &mut template, &self.registry, worker)?;
        Ok((ran, bytes))
    }
}

/// Baseline without the runtime: apply `kernels` in order to each buffer.
pub fn direct_run(kernels: &[KernelFn], buffers: &mut [Vec<u8>]) -> Duration {
    let start = Instant::now();
    for b in buffers.iter_mut() {
        for k in kernels {
            k(b);
        }
    }
    start.elapsed()
}
