//! Reference workloads and machines used by the experiments and tests.

use super::engine::{SimOptions, StorageKind};
use super::spec::{CostDist, LayerSpec, NodeSpec, RegionUse, StageSpec, TaskTypeProfile, WorkloadSpec};
use super::workload::Workload;
use crate::runtime::{IoRef, TaskNode, Variants};
use crate::storage::{Distribution, GroupSize, IoGroupConfig, Placement};

/// One node with 12 CPU cores and 3 GPUs.
pub fn hybrid_node() -> Vec<NodeSpec> {
    vec![NodeSpec::new(12, 3)]
}

fn profile(name: &str, cost: [f64; 2], speedup: f64) -> TaskTypeProfile {
    TaskTypeProfile {
        cost_cpu: CostDist::Uniform { uniform: cost },
        ..TaskTypeProfile::new(name, 0.0, speedup)
    }
}

fn stage(name: &str, layers: &[(&str, usize)]) -> StageSpec {
    StageSpec {
        name: name.into(),
        after: vec![],
        layers: layers
            .iter()
            .map(|&(t, width)| LayerSpec {
                task_type: t.into(),
                width,
            })
            .collect(),
        reads: vec![],
        writes: vec![],
        kernel: None,
    }
}

/// Two groups of task types: speedups in [1.0, 1.5] and in [12, 18].
///
/// Every tile runs one independent stage per type, each a single layer of
/// 12 tasks, so a worker holding all of a tile's stages sees a mixed ready
/// set. Estimates only swap order between the groups once error injection
/// reaches 80%.
pub fn bimodal_spec() -> WorkloadSpec {
    let types = [("lo_a", 1.0), ("lo_b", 1.5), ("hi_a", 12.0), ("hi_b", 18.0)];
    WorkloadSpec {
        domain: "<0,0;63,31>".parse().expect("literal box"),
        tile: vec![32, 32],
        task_types: types.iter().map(|&(n, s)| profile(n, [2.0, 8.0], s)).collect(),
        stages: types.iter().map(|&(n, _)| stage(n, &[(n, 12)])).collect(),
    }
}

/// Options for [`bimodal_spec`]: a worker may hold every stage instance.
pub fn bimodal_options() -> SimOptions {
    SimOptions {
        concurrency: 8,
        ..SimOptions::default()
    }
}

/// Per tile, a chain of four GPU-friendly tasks that all read the tile's
/// input and each read their predecessor's output.
pub fn chained_reuse_spec() -> WorkloadSpec {
    let p = TaskTypeProfile {
        bytes_in: 4096,
        bytes_out: 1024,
        ..profile("chain", [2.0, 4.0], 10.0)
    };
    WorkloadSpec {
        domain: "<0,0;63,63>".parse().expect("literal box"),
        tile: vec![32, 32],
        task_types: vec![p],
        stages: vec![stage("chain", &[("chain", 1); 4])],
    }
}

/// Two CPU cores and one GPU behind a 4096 bytes/unit link.
pub fn chained_reuse_node() -> Vec<NodeSpec> {
    vec![NodeSpec::new(2, 1).with_bandwidth(4096.0)]
}

pub fn chained_reuse_options() -> SimOptions {
    SimOptions {
        concurrency: 4,
        ..SimOptions::default()
    }
}

/// Independent GPU-only tasks with sizeable transfers.
pub fn gpu_bound_spec() -> WorkloadSpec {
    let p = TaskTypeProfile {
        variants: Variants::GpuOnly,
        bytes_in: 2048,
        bytes_out: 1024,
        ..profile("gpu", [4.0, 8.0], 4.0)
    };
    WorkloadSpec {
        domain: "<0,0;63,31>".parse().expect("literal box"),
        tile: vec![32, 32],
        task_types: vec![p],
        stages: vec![stage("gpu", &[("gpu", 8)])],
    }
}

/// One CPU core and two GPUs behind a 2048 bytes/unit link.
pub fn gpu_bound_node() -> Vec<NodeSpec> {
    vec![NodeSpec::new(1, 2).with_bandwidth(2048.0)]
}

/// `n` identical GPU-only tasks whose upload, compute and download take
/// `u`, `c` and `d` time units at bandwidth 1.
pub fn identical_gpu_tasks(n: u64, u: f64, c: f64, d: f64) -> Workload {
    Workload::from_tasks(
        (0..n)
            .map(|i| {
                TaskNode::gpu_only(i, c, 1.0).with_refs([
                    IoRef::read(format!("in{i}"), u as u64),
                    IoRef::write(format!("out{i}"), d as u64),
                ])
            })
            .collect(),
    )
}

/// `k` independent unit-cost CPU tasks.
pub fn unit_tasks(k: u64) -> Workload {
    Workload::from_tasks((0..k).map(|i| TaskNode::cpu_only(i, 1.0)).collect())
}

/// 120 tiles, each staging two regions to the disk store.
pub fn io_group_spec() -> WorkloadSpec {
    let mut s = stage("emit", &[("emit", 1)]);
    s.writes = ["A", "B"]
        .iter()
        .map(|r| RegionUse {
            region: (*r).into(),
            binding: "DISK".into(),
            lazy: false,
        })
        .collect();
    WorkloadSpec {
        domain: "<0,0;119,99>".parse().expect("literal box"),
        tile: vec![10, 10],
        task_types: vec![TaskTypeProfile {
            variants: Variants::CpuOnly,
            ..TaskTypeProfile::new("emit", 1.0, 1.0)
        }],
        stages: vec![s],
    }
}

/// Four nodes of eight cores.
pub fn io_group_nodes() -> Vec<NodeSpec> {
    vec![NodeSpec::new(8, 0); 4]
}

/// 30 separated I/O nodes fed round-robin, flushing at four queued buffers.
pub fn io_group_options(group_size: GroupSize) -> SimOptions {
    SimOptions {
        storage: StorageKind::Disk,
        concurrency: 4,
        disk: IoGroupConfig {
            placement: Placement::Separated,
            group_size,
            io_node_count: 30,
            queue_threshold: 4,
            distribution: Distribution::RoundRobin,
        },
        ..SimOptions::default()
    }
}
