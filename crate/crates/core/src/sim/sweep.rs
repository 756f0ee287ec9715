//! Error-injection sweeps.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use super::engine::{run_sim, SimOptions, SimResult};
use super::workload::Workload;
use super::error::inject_error;
use super::metrics::RunMetrics;
use super::spec::{NodeSpec, WorkloadSpec};
use super::workload::generate_workload;
use super::SimError;
use crate::runtime::Scheduler;

/// One row of an error sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub error_pct: f64,
    pub pats: RunMetrics,
    pub fcfs: RunMetrics,
}

/// Run PATS and FCFS for every error percentage in `errors`.
///
/// Estimates are perturbed with [`inject_error`] before the workload is
/// generated from `seed`, so task costs are the same in every row. Rows run
/// on separate threads; the result keeps the order of `errors`.
pub fn sweep_error(
    spec: &WorkloadSpec,
    nodes: &[NodeSpec],
    opts: &SimOptions,
    errors: &[f64],
    seed: u64,
) -> Result<Vec<SweepPoint>, SimError> {
    if errors.is_empty() {
        return Err(SimError::Config("error sweep needs at least one value".into()));
    }
    let run = |idx: usize, e: f64| -> Result<SweepPoint, SimError> {
        let mut perturbed = spec.clone();
        perturbed.task_types = inject_error(&spec.task_types, e)?;
        let workload = generate_workload(&perturbed, seed)?;
        let with = |s: Scheduler| {
            let mut o = opts.clone().with_scheduler(s);
            if let Some(d) = &o.scratch_dir {
                o.scratch_dir = Some(d.join(format!("e{idx}-{s}")));
            }
            run_sim(&workload, nodes, &o).map(|r| r.metrics)
        };
        Ok(SweepPoint {
            error_pct: e,
            pats: with(Scheduler::Pats)?,
            fcfs: with(Scheduler::Fcfs)?,
        })
    };
    thread::scope(|scope| {
        let handles: Vec<_> = errors
            .iter()
            .enumerate()
            .map(|(i, &e)| scope.spawn(move || run(i, e)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("sweep thread panicked"))
            .collect()
    })
}

/// Run independent simulations on a pool of threads. Results keep the
/// order of `jobs`; the first failure (in job order) is returned.
pub fn run_batch(jobs: &[(&Workload, SimOptions)], nodes: &[NodeSpec]) -> Result<Vec<SimResult>, SimError> {
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SimResult, SimError>>>> = Mutex::new(vec![None; jobs.len()]);
    let threads = thread::available_parallelism().map_or(1, |n| n.get()).min(jobs.len().max(1));
    thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((w, opts)) = jobs.get(i) else { break };
                let r = run_sim(w, nodes, opts);
                results.lock().expect("batch results")[i] = Some(r);
            });
        }
    });
    results
        .into_inner()
        .expect("batch results")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}
