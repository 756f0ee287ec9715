use serde::{Deserialize, Serialize};

use super::task::TaskNode;
use super::RuntimeError;
use crate::region::{BoundingBox, DataRegion, DataRegionId, ElementKind, IoMode, RegionKind, RegionTemplate};

/// How a stage instance uses one data region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionDescriptor {
    pub id: DataRegionId,
    pub query: BoundingBox,
    pub io_mode: IoMode,
    pub binding: String,
    #[serde(default)]
    pub lazy: bool,
    pub kind: RegionKind,
    pub element: ElementKind,
}

impl RegionDescriptor {
    pub fn new(id: DataRegionId, query: BoundingBox, io_mode: IoMode, binding: impl Into<String>) -> Self {
        Self {
            id,
            query,
            io_mode,
            binding: binding.into(),
            lazy: false,
            kind: RegionKind::Dense2D,
            element: ElementKind::U8,
        }
    }

    pub fn lazy(mut self) -> Self {
        self.lazy = true;
        self
    }

    /// Local, chunk-less region matching this descriptor.
    pub fn empty_region(&self) -> Result<DataRegion, RuntimeError> {
        Ok(DataRegion::new(self.id.clone(), self.kind, self.element, self.query.clone())?
            .with_io_mode(self.io_mode)
            .with_binding(self.binding.clone())
            .with_lazy(self.lazy))
    }
}

/// Data-level body of a stage, applied to its local template once all of
/// its tasks have run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum StageKernel {
    /// `output = input > level ? 255 : 0`, cell by cell.
    Threshold { input: String, output: String, level: u8 },
    /// Every cell of `output` set to `value`.
    Fill { output: String, value: u8 },
}

impl StageKernel {
    pub fn apply(&self, template: &mut RegionTemplate) -> Result<(), RuntimeError> {
        match self {
            Self::Threshold { input, output, level } => {
                let src = find(template, input)?;
                let query = src.bbox().clone();
                let data: Vec<u8> = src
                    .dense_payload(&query)?
                    .into_iter()
                    .map(|v| if v > *level { 255 } else { 0 })
                    .collect();
                write_dense(template, output, data)
            }
            Self::Fill { output, value } => {
                let n = find(template, output)?.bbox().volume() as usize;
                write_dense(template, output, vec![*value; n])
            }
        }
    }
}

fn find<'a>(template: &'a RegionTemplate, key: &str) -> Result<&'a DataRegion, RuntimeError> {
    template
        .regions()
        .find(|r| r.id().key == key)
        .ok_or_else(|| RuntimeError::Config(format!("kernel refers to region {key:?} not in the stage")))
}

fn write_dense(template: &mut RegionTemplate, key: &str, data: Vec<u8>) -> Result<(), RuntimeError> {
    let id = find(template, key)?.id().clone();
    let region = template.get_by_id_mut(&id).expect("found above");
    let bbox = region.bbox().clone();
    region.insert_chunk(bbox, data)?;
    Ok(())
}

/// Coarse-grain dataflow node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageInstance {
    pub stage_id: u64,
    pub kind: String,
    #[serde(default)]
    pub regions: Vec<RegionDescriptor>,
    #[serde(default)]
    pub deps: Vec<u64>,
    /// Task graph with ids local to the stage.
    #[serde(default)]
    pub tasks: Vec<TaskNode>,
    #[serde(default)]
    pub kernel: Option<StageKernel>,
    /// Stages created when this one completes.
    #[serde(default)]
    pub spawns: Vec<StageInstance>,
}

impl StageInstance {
    pub fn new(stage_id: u64, kind: impl Into<String>) -> Self {
        Self {
            stage_id,
            kind: kind.into(),
            regions: Vec::new(),
            deps: Vec::new(),
            tasks: Vec::new(),
            kernel: None,
            spawns: Vec::new(),
        }
    }

    pub fn with_deps(mut self, deps: impl IntoIterator<Item = u64>) -> Self {
        self.deps = deps.into_iter().collect();
        self
    }

    pub fn with_region(mut self, d: RegionDescriptor) -> Self {
        self.regions.push(d);
        self
    }

    pub fn with_tasks(mut self, tasks: Vec<TaskNode>) -> Self {
        self.tasks = tasks;
        self
    }

    pub fn pack(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("stage instances always serialize")
    }

    pub fn unpack(bytes: &[u8]) -> Result<Self, RuntimeError> {
        serde_json::from_slice(bytes).map_err(|e| RuntimeError::Protocol(format!("bad stage instance: {e}")))
    }

    /// Descriptors the worker must read before the stage can run.
    pub fn inputs(&self) -> impl Iterator<Item = &RegionDescriptor> {
        self.regions.iter().filter(|d| d.io_mode.reads())
    }

    pub fn outputs(&self) -> impl Iterator<Item = &RegionDescriptor> {
        self.regions.iter().filter(|d| d.io_mode.writes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pack_roundtrip() {
        let s = StageInstance::new(3, "segmentation")
            .with_deps([1, 2])
            .with_region(RegionDescriptor::new(
                DataRegionId::new("", "RGB", "dense2d", 0, 0),
                "<0,0;49,49>".parse().unwrap(),
                IoMode::Input,
                "DISK",
            ))
            .with_tasks(vec![TaskNode::both(0, 1.0, 2.0), TaskNode::cpu_only(1, 1.0).with_deps([0])]);
        assert_eq!(StageInstance::unpack(&s.pack()).unwrap(), s);
        assert!(StageInstance::unpack(b"{").is_err());
    }

    #[test]
    fn threshold_kernel() {
        let bbox: BoundingBox = "<0,0;0,3>".parse().unwrap();
        let mut t = RegionTemplate::new("tile");
        let rgb = DataRegionId::new("", "RGB", "dense2d", 0, 0);
        t.insert(DataRegion::dense_from(rgb, RegionKind::Dense2D, ElementKind::U8, bbox.clone(), vec![10, 200, 50, 99]).unwrap())
            .unwrap();
        let mask = RegionDescriptor::new(DataRegionId::new("", "Mask", "dense2d", 0, 0), bbox.clone(), IoMode::Output, "DMS");
        t.insert(mask.empty_region().unwrap()).unwrap();
        StageKernel::Threshold {
            input: "RGB".into(),
            output: "Mask".into(),
            level: 50,
        }
        .apply(&mut t)
        .unwrap();
        let out = t.get_by_id(&mask.id).unwrap();
        assert_eq!(out.dense_payload(&bbox).unwrap(), vec![0, 255, 0, 255]);
        assert!(StageKernel::Fill { output: "Nope".into(), value: 1 }.apply(&mut t).is_err());
    }
}
