use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use region_templates::config::{load_nodes, load_workload_spec, LoadedConfig, Overrides};
use region_templates::runtime::{DeviceKind, Scheduler, Trace};
use region_templates::sim::{generate_workload, reference, run_sim, NodeSpec, SimOptions, StorageKind, Workload, WorkloadSpec};
use region_templates::storage::GroupSize;

fn configs() -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[derive(Clone, Copy, Debug)]
enum Case {
    TwoStage,
    Bimodal,
    Chained,
    GpuBound,
    IoGroups,
}

fn case_inputs(c: Case) -> (WorkloadSpec, Vec<NodeSpec>) {
    match c {
        Case::TwoStage => (
            load_workload_spec(&configs().join("two_stage.toml")).unwrap(),
            load_nodes(&configs().join("keeneland_node.toml")).unwrap(),
        ),
        Case::Bimodal => (reference::bimodal_spec(), reference::hybrid_node()),
        Case::Chained => (reference::chained_reuse_spec(), reference::chained_reuse_node()),
        Case::GpuBound => (reference::gpu_bound_spec(), reference::gpu_bound_node()),
        Case::IoGroups => (reference::io_group_spec(), reference::io_group_nodes()),
    }
}

#[derive(Debug)]
struct Run {
    start: f64,
    end: f64,
    device: String,
}

/// Task executions keyed by (stage, local task id), and stage events.
fn parse(trace: &Trace) -> (BTreeMap<(u64, u64), Run>, BTreeMap<u64, (f64, f64)>) {
    let mut runs: BTreeMap<(u64, u64), Run> = BTreeMap::new();
    let mut stages: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let key = |id: &str| {
        let (s, t) = id.trim_start_matches('s').split_once(".t").unwrap();
        (s.parse::<u64>().unwrap(), t.parse::<u64>().unwrap())
    };
    for e in trace.events() {
        match e.kind.as_str() {
            "task_start" => {
                let prev = runs.insert(key(&e.id), Run { start: e.time, end: f64::NAN, device: e.device.clone() });
                assert!(prev.is_none(), "{} started twice", e.id);
            }
            "task_end" => {
                let r = runs.get_mut(&key(&e.id)).expect("end after start");
                assert_eq!(r.device, e.device, "{} ended on another device", e.id);
                r.end = e.time;
            }
            "stage_assign" => {
                stages.entry(e.id[1..].parse().unwrap()).or_insert((f64::NAN, f64::NAN)).0 = e.time;
            }
            "stage_done" => {
                stages.entry(e.id[1..].parse().unwrap()).or_insert((f64::NAN, f64::NAN)).1 = e.time;
            }
            _ => {}
        }
    }
    (runs, stages)
}

fn check_invariants(w: &Workload, nodes: &[NodeSpec], opts: &SimOptions) -> Result<(), TestCaseError> {
    let r = run_sim(w, nodes, opts).unwrap();
    let m = &r.metrics;
    let (runs, stages) = parse(&r.trace);
    let eps = 1e-9;

    prop_assert_eq!(m.tasks, w.task_count());
    prop_assert_eq!(runs.len(), w.task_count());
    prop_assert_eq!(m.stages, w.stages.len());
    prop_assert!(m.cpu_busy <= m.makespan * m.cpu_slots as f64 + eps);
    prop_assert!(m.gpu_busy <= m.makespan * m.gpu_slots as f64 + eps);

    let mut work_lower_bound = 0.0;
    for s in &w.stages {
        let (assign, done) = stages[&s.stage_id];
        for d in &s.deps {
            prop_assert!(assign + eps >= stages[d].1, "stage {} assigned before dep {} finished", s.stage_id, d);
        }
        for t in &s.tasks {
            let run = &runs[&(s.stage_id, t.id)];
            let dev = if run.device.contains("gpu") { DeviceKind::Gpu } else { DeviceKind::Cpu };
            prop_assert!(t.variants.runs_on(dev), "s{}.t{} ran on {} without a variant", s.stage_id, t.id, run.device);
            prop_assert!(run.start + eps >= assign && run.end <= done + eps);
            // a task takes at least its compute time on the device it ran on
            prop_assert!(run.end - run.start + eps >= t.compute_time(dev));
            for d in &t.deps {
                let dep = &runs[&(s.stage_id, *d)];
                prop_assert!(run.start + eps >= dep.end, "s{}.t{} started before t{} ended", s.stage_id, t.id, d);
            }
            let fastest = [DeviceKind::Cpu, DeviceKind::Gpu]
                .into_iter()
                .filter(|&d| t.variants.runs_on(d) && (d == DeviceKind::Cpu || m.gpu_slots > 0))
                .map(|d| t.compute_time(d))
                .fold(f64::INFINITY, f64::min);
            work_lower_bound += fastest;
        }
    }
    let slots = (m.cpu_slots + m.gpu_slots) as f64;
    prop_assert!(m.makespan + eps >= work_lower_bound / slots, "makespan {} below work bound {}", m.makespan, work_lower_bound / slots);

    // without prefetch no slot runs two tasks at once
    if !opts.prefetch {
        let mut by_slot: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for run in runs.values() {
            by_slot.entry(&run.device).or_default().push((run.start, run.end));
        }
        for (slot, mut iv) in by_slot {
            iv.sort_by(|a, b| a.0.total_cmp(&b.0));
            for p in iv.windows(2) {
                prop_assert!(p[1].0 + eps >= p[0].1, "{} overlaps: {:?}", slot, p);
            }
        }
    }
    Ok(())
}

fn case() -> impl Strategy<Value = Case> {
    prop::sample::select(vec![Case::TwoStage, Case::Bimodal, Case::Chained, Case::GpuBound, Case::IoGroups])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulated_runs_respect_dependencies_and_capacity(
        c in case(),
        seed in 0u64..1000,
        pats in any::<bool>(),
        dl in any::<bool>(),
        prefetch in any::<bool>(),
        disk in any::<bool>(),
        concurrency in 1usize..6,
    ) {
        let (spec, nodes) = case_inputs(c);
        let w = generate_workload(&spec, seed).unwrap();
        let mut opts = SimOptions {
            scheduler: if pats { Scheduler::Pats } else { Scheduler::Fcfs },
            dl,
            prefetch,
            storage: if disk { StorageKind::Disk } else { StorageKind::Dms },
            seed,
            concurrency,
            ..SimOptions::default()
        };
        if matches!(c, Case::IoGroups) {
            opts.storage = StorageKind::Disk;
            opts.disk = reference::io_group_options(GroupSize::Nodes(15)).disk;
        }
        check_invariants(&w, &nodes, &opts)?;
    }

    #[test]
    fn same_inputs_same_outputs(c in case(), seed in 0u64..100) {
        let (spec, nodes) = case_inputs(c);
        let w = generate_workload(&spec, seed).unwrap();
        let opts = SimOptions { seed, dl: true, prefetch: true, ..SimOptions::default() };
        let a = run_sim(&w, &nodes, &opts).unwrap();
        let b = run_sim(&generate_workload(&spec, seed).unwrap(), &nodes, &opts).unwrap();
        prop_assert_eq!(a.trace.render(), b.trace.render());
        prop_assert_eq!(a.io_trace_text(), b.io_trace_text());
        prop_assert_eq!(a.metrics, b.metrics);
    }
}

#[test]
fn serial_machine_makespan_is_total_work() {
    let spec = reference::bimodal_spec();
    let w = generate_workload(&spec, 3).unwrap();
    let r = run_sim(&w, &[NodeSpec::new(1, 0)], &SimOptions::default()).unwrap();
    let total: f64 = w.stages.iter().flat_map(|s| &s.tasks).map(|t| t.cost_cpu).sum();
    assert!(r.metrics.makespan >= total - 1e-9);
    assert!((r.metrics.cpu_busy - total).abs() < 1e-6);
}

#[test]
fn shipped_configs_match_reference_workloads() {
    let bimodal = LoadedConfig::load(&configs().join("bimodal_run.toml"), &Overrides::default()).unwrap();
    assert_eq!(bimodal.spec, reference::bimodal_spec());
    assert_eq!(bimodal.nodes, reference::hybrid_node());
    assert_eq!(bimodal.options().concurrency, reference::bimodal_options().concurrency);

    let io = LoadedConfig::load(&configs().join("io_groups_run.toml"), &Overrides::default()).unwrap();
    assert_eq!(io.spec, reference::io_group_spec());
    assert_eq!(io.nodes, reference::io_group_nodes());
    let want = reference::io_group_options(GroupSize::All);
    let got = io.options();
    assert_eq!(got.disk, want.disk);
    assert_eq!(got.storage, want.storage);
    assert_eq!(got.concurrency, want.concurrency);
}

#[test]
fn more_gpus_never_hurt_gpu_bound_work() {
    let spec = reference::gpu_bound_spec();
    for seed in 0..10 {
        let w = generate_workload(&spec, seed).unwrap();
        let opts = SimOptions { seed, ..SimOptions::default() };
        let one = run_sim(&w, &[NodeSpec::new(1, 1).with_bandwidth(2048.0)], &opts).unwrap();
        let two = run_sim(&w, &reference::gpu_bound_node(), &opts).unwrap();
        assert!(two.metrics.makespan <= one.metrics.makespan + 1e-9, "seed {seed}");
    }
}
