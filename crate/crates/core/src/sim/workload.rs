use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{CostDist, StageSpec, WorkloadSpec};
use super::SimError;
use crate::region::{partition_regular, BoundingBox, DataRegionId, IoMode, RegionKind};
use crate::runtime::{IoRef, RegionDescriptor, StageInstance, TaskNode};

/// Storage bindings a workload may name. `GLOBAL` resolves to the backend
/// chosen for the run.
pub const BINDINGS: [&str; 3] = ["DMS", "DISK", "GLOBAL"];

/// A region that exists before the run starts.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialRegion {
    pub id: DataRegionId,
    pub binding: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Workload {
    pub domain: BoundingBox,
    pub tiles: Vec<BoundingBox>,
    pub region_kind: RegionKind,
    pub stages: Vec<StageInstance>,
    pub initial: Vec<InitialRegion>,
}

impl Workload {
    /// Single-stage workload around a hand-built task graph.
    pub fn from_tasks(tasks: Vec<TaskNode>) -> Self {
        Self::from_stages(vec![StageInstance::new(0, "custom").with_tasks(tasks)])
    }

    /// Workload from hand-built stages with no storage traffic.
    pub fn from_stages(stages: Vec<StageInstance>) -> Self {
        let domain = BoundingBox::new([0, 0], [0, 0]).expect("unit box");
        Self {
            tiles: vec![domain.clone()],
            domain,
            region_kind: RegionKind::Dense2D,
            stages,
            initial: Vec::new(),
        }
    }

    pub fn task_count(&self) -> usize {
        self.stages.iter().map(|s| s.tasks.len()).sum()
    }

    pub fn dependency_edges(&self) -> usize {
        self.stages.iter().map(|s| s.deps.len()).sum()
    }
}

fn region_kind(dims: usize) -> Result<RegionKind, SimError> {
    Ok(match dims {
        1 => RegionKind::Dense1D,
        2 => RegionKind::Dense2D,
        3 | 4 => RegionKind::Dense3D,
        d => return Err(SimError::Config(format!("domain has {d} axes"))),
    })
}

/// Stage specs in dependency order, or the cycle that prevents one.
fn stage_order(spec: &WorkloadSpec) -> Result<Vec<&StageSpec>, SimError> {
    let mut edges: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for s in &spec.stages {
        if edges.insert(&s.name, s.after.iter().map(String::as_str).collect()).is_some() {
            return Err(SimError::Config(format!("stage {:?} defined twice", s.name)));
        }
    }
    for s in &spec.stages {
        if let Some(a) = s.after.iter().find(|a| !edges.contains_key(a.as_str())) {
            return Err(SimError::Config(format!("stage {:?}: unknown stage {a:?} in `after`", s.name)));
        }
    }
    if let Some(cycle) = crate::runtime::find_cycle(&edges) {
        return Err(SimError::Cycle(format!("stages {}", cycle.join(" -> "))));
    }
    let mut done: BTreeSet<&str> = BTreeSet::new();
    let mut order = Vec::new();
    while order.len() < spec.stages.len() {
        for s in &spec.stages {
            if !done.contains(s.name.as_str()) && s.after.iter().all(|a| done.contains(a.as_str())) {
                done.insert(&s.name);
                order.push(s);
            }
        }
    }
    Ok(order)
}

/// Check a workload spec without generating it.
pub fn validate_workload(spec: &WorkloadSpec) -> Result<(), SimError> {
    let mut names = BTreeSet::new();
    for p in &spec.task_types {
        p.validate().map_err(SimError::Config)?;
        if !names.insert(p.name.as_str()) {
            return Err(SimError::Config(format!("task type {:?} defined twice", p.name)));
        }
    }
    region_kind(spec.domain.dims())?;
    partition_regular(&spec.domain, &spec.tile).map_err(|e| SimError::Config(format!("tile grid: {e}")))?;
    for s in &spec.stages {
        if s.layers.is_empty() {
            return Err(SimError::Config(format!("stage {:?} has no layers", s.name)));
        }
        for l in &s.layers {
            if spec.profile(&l.task_type).is_none() {
                return Err(SimError::Config(format!("stage {:?}: unknown task type {:?}", s.name, l.task_type)));
            }
            if l.width == 0 {
                return Err(SimError::Config(format!("stage {:?}: layer width must be at least 1", s.name)));
            }
        }
        for u in s.reads.iter().chain(&s.writes) {
            if !BINDINGS.contains(&u.binding.as_str()) {
                return Err(SimError::Config(format!(
                    "stage {:?}: unknown storage binding {:?} (expected one of {BINDINGS:?})",
                    s.name, u.binding
                )));
            }
        }
    }
    stage_order(spec)?;
    Ok(())
}

fn draw(rng: &mut ChaCha8Rng, d: &CostDist) -> f64 {
    match *d {
        CostDist::Fixed(v) => v,
        CostDist::Uniform { uniform: [lo, hi] } if lo == hi => lo,
        CostDist::Uniform { uniform: [lo, hi] } => rng.gen_range(lo..hi),
    }
}

fn region_id(name: &str) -> DataRegionId {
    DataRegionId::new("", name, "dense", 0, 0)
}

/// Expand a spec into one stage instance per (stage, tile), with each stage
/// instance depending on the instances of its `after` stages for the same
/// tile, and each instance expanding into its layered task graph.
pub fn generate_workload(spec: &WorkloadSpec, seed: u64) -> Result<Workload, SimError> {
    validate_workload(spec)?;
    let tiles = partition_regular(&spec.domain, &spec.tile).map_err(|e| SimError::Config(e.to_string()))?;
    let kind = region_kind(spec.domain.dims())?;
    let order = stage_order(spec)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut ids: BTreeMap<(&str, usize), u64> = BTreeMap::new();
    let mut stages = Vec::new();
    for s in &order {
        for (t, tile) in tiles.iter().enumerate() {
            let sid = stages.len() as u64;
            ids.insert((s.name.as_str(), t), sid);
            let mut inst = StageInstance::new(sid, s.name.clone()).with_deps(s.after.iter().map(|a| ids[&(a.as_str(), t)]));
            inst.kernel = s.kernel.clone();
            for r in &s.reads {
                let both = s.writes.iter().any(|w| w.region == r.region);
                let mode = if both { IoMode::InputOutput } else { IoMode::Input };
                let mut d = RegionDescriptor::new(region_id(&r.region), tile.clone(), mode, r.binding.clone());
                d.lazy = r.lazy;
                d.kind = kind;
                inst.regions.push(d);
            }
            for w in s.writes.iter().filter(|w| !s.reads.iter().any(|r| r.region == w.region)) {
                let mut d = RegionDescriptor::new(region_id(&w.region), tile.clone(), IoMode::Output, w.binding.clone());
                d.kind = kind;
                inst.regions.push(d);
            }
            inst.tasks = layer_tasks(spec, s, sid, &mut rng);
            stages.push(inst);
        }
    }

    let written: BTreeSet<&str> = spec.stages.iter().flat_map(|s| s.writes.iter().map(|w| w.region.as_str())).collect();
    let mut seen = BTreeSet::new();
    let initial = spec
        .stages
        .iter()
        .flat_map(|s| &s.reads)
        .filter(|r| !written.contains(r.region.as_str()) && seen.insert(r.region.clone()))
        .map(|r| InitialRegion {
            id: region_id(&r.region),
            binding: r.binding.clone(),
        })
        .collect();

    Ok(Workload {
        domain: spec.domain.clone(),
        tiles,
        region_kind: kind,
        stages,
        initial,
    })
}

fn layer_tasks(spec: &WorkloadSpec, s: &StageSpec, sid: u64, rng: &mut ChaCha8Rng) -> Vec<TaskNode> {
    let input_key = format!("s{sid}.in");
    let mut tasks: Vec<TaskNode> = Vec::new();
    let mut prev: Vec<(u64, String, u64)> = Vec::new();
    for (li, layer) in s.layers.iter().enumerate() {
        let p = spec.profile(&layer.task_type).expect("validated");
        let mut this = Vec::with_capacity(layer.width);
        for col in 0..layer.width {
            let id = tasks.len() as u64;
            let out_key = format!("s{sid}.l{li}.{col}");
            let parents: Vec<&(u64, String, u64)> = if prev.len() == layer.width {
                vec![&prev[col]]
            } else {
                prev.iter().collect()
            };
            let mut refs = vec![IoRef::read(input_key.clone(), p.bytes_in)];
            refs.extend(parents.iter().map(|(_, k, b)| IoRef::read(k.clone(), *b)));
            refs.push(IoRef::write(out_key.clone(), p.bytes_out));
            let mut t = match p.variants {
                crate::runtime::Variants::Both => TaskNode::both(id, 0.0, p.gpu_speedup),
                crate::runtime::Variants::CpuOnly => TaskNode::cpu_only(id, 0.0),
                crate::runtime::Variants::GpuOnly => TaskNode::gpu_only(id, 0.0, p.gpu_speedup),
            };
            t.cost_cpu = draw(rng, &p.cost_cpu);
            if p.variants == crate::runtime::Variants::Both {
                t.speedup_estimate = Some(p.estimate());
            }
            t.transfer_impact = p.transfer_impact;
            t = t
                .with_deps(parents.iter().map(|(pid, _, _)| *pid))
                .with_refs(refs)
                .with_type(p.name.clone());
            this.push((id, out_key, p.bytes_out));
            tasks.push(t);
        }
        prev = this;
    }
    tasks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::spec::{LayerSpec, RegionUse, TaskTypeProfile};

    fn two_stage() -> WorkloadSpec {
        WorkloadSpec {
            domain: "<0,0;99,99>".parse().unwrap(),
            tile: vec![50, 50],
            task_types: vec![
                TaskTypeProfile {
                    cost_cpu: CostDist::Uniform { uniform: [1.0, 2.0] },
                    ..TaskTypeProfile::new("a", 1.0, 2.0)
                },
                TaskTypeProfile::new("b", 1.0, 10.0),
            ],
            stages: vec![
                StageSpec {
                    name: "segmentation".into(),
                    after: vec![],
                    layers: vec![
                        LayerSpec { task_type: "a".into(), width: 2 },
                        LayerSpec { task_type: "b".into(), width: 2 },
                        LayerSpec { task_type: "a".into(), width: 1 },
                    ],
                    reads: vec![RegionUse { region: "RGB".into(), binding: "DISK".into(), lazy: false }],
                    writes: vec![RegionUse { region: "Mask".into(), binding: "DMS".into(), lazy: false }],
                    kernel: None,
                },
                StageSpec {
                    name: "features".into(),
                    after: vec!["segmentation".into()],
                    layers: vec![LayerSpec { task_type: "b".into(), width: 1 }],
                    reads: vec![RegionUse { region: "Mask".into(), binding: "DMS".into(), lazy: false }],
                    writes: vec![RegionUse { region: "Features".into(), binding: "GLOBAL".into(), lazy: false }],
                    kernel: None,
                },
            ],
        }
    }

    #[test]
    fn structure_counts() {
        let w = generate_workload(&two_stage(), 1).unwrap();
        assert_eq!(w.tiles.len(), 4);
        assert_eq!(w.stages.len(), 8);
        assert_eq!(w.dependency_edges(), 4);
        assert_eq!(w.initial, vec![InitialRegion { id: region_id("RGB"), binding: "DISK".into() }]);
        // feature instance of tile 2 waits on segmentation of tile 2
        assert_eq!(w.stages[6].deps, vec![2]);
        assert_eq!(w.stages[6].regions[0].query, w.tiles[2]);
    }

    #[test]
    fn layered_task_graph() {
        let w = generate_workload(&two_stage(), 1).unwrap();
        let t = &w.stages[0].tasks;
        assert_eq!(t.len(), 5);
        assert_eq!(t[2].deps, vec![0]);
        assert_eq!(t[3].deps, vec![1]);
        assert_eq!(t[4].deps, vec![2, 3]);
        assert!(t[2].shared_bytes(&t[0]) == 0 || t[2].io_refs.iter().any(|r| r.key == "s0.l0.0"));
        assert!((1.0..2.0).contains(&t[0].cost_cpu));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = two_stage();
        assert_eq!(generate_workload(&spec, 9).unwrap(), generate_workload(&spec, 9).unwrap());
        assert_ne!(generate_workload(&spec, 9).unwrap(), generate_workload(&spec, 10).unwrap());
    }

    #[test]
    fn invalid_specs() {
        let mut s = two_stage();
        s.stages[0].after = vec!["features".into()];
        let err = generate_workload(&s, 1).unwrap_err().to_string();
        assert!(err.contains("features -> segmentation -> features") || err.contains("segmentation -> features -> segmentation"), "{err}");

        let mut s = two_stage();
        s.stages[1].layers[0].task_type = "zzz".into();
        assert!(matches!(generate_workload(&s, 1), Err(SimError::Config(_))));

        let mut s = two_stage();
        s.tile = vec![0, 50];
        assert!(matches!(generate_workload(&s, 1), Err(SimError::Config(_))));

        let mut s = two_stage();
        s.stages[0].reads[0].binding = "TAPE".into();
        assert!(matches!(generate_workload(&s, 1), Err(SimError::Config(_))));
    }
}
