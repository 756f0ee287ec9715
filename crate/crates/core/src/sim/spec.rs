//! Structured-text descriptions of machines and workloads.

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::region::BoundingBox;
use crate::runtime::{StageKernel, Variants};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub cpu_cores: usize,
    #[serde(default)]
    pub gpus: usize,
    /// Bytes per time unit between host and GPU. `inf` makes transfers free.
    #[serde(default = "default_bandwidth")]
    pub gpu_transfer_bandwidth: f64,
}

fn default_bandwidth() -> f64 {
    1.0e6
}

impl NodeSpec {
    pub fn new(cpu_cores: usize, gpus: usize) -> Self {
        Self {
            cpu_cores,
            gpus,
            gpu_transfer_bandwidth: default_bandwidth(),
        }
    }

    pub fn with_bandwidth(mut self, bw: f64) -> Self {
        self.gpu_transfer_bandwidth = bw;
        self
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.cpu_cores + self.gpus == 0 {
            return Err(SimError::Config("a node needs at least one CPU core or GPU".into()));
        }
        if !(self.gpu_transfer_bandwidth > 0.0) {
            return Err(SimError::Config("gpu_transfer_bandwidth must be positive".into()));
        }
        Ok(())
    }
}

/// File form of a node list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodesFile {
    pub nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CostDist {
    Fixed(f64),
    Uniform { uniform: [f64; 2] },
}

impl CostDist {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            Self::Fixed(v) if v.is_finite() && v >= 0.0 => Ok(()),
            Self::Uniform { uniform: [lo, hi] } if lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi => Ok(()),
            _ => Err(format!("invalid cost distribution {self:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskTypeProfile {
    pub name: String,
    pub cost_cpu: CostDist,
    /// Acceleration actually achieved on a GPU.
    #[serde(default = "one")]
    pub gpu_speedup: f64,
    /// What the scheduler is told; defaults to `gpu_speedup`.
    #[serde(default)]
    pub speedup_estimate: Option<f64>,
    #[serde(default = "both")]
    pub variants: Variants,
    #[serde(default)]
    pub bytes_in: u64,
    #[serde(default)]
    pub bytes_out: u64,
    #[serde(default)]
    pub transfer_impact: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn both() -> Variants {
    Variants::Both
}

impl TaskTypeProfile {
    pub fn new(name: impl Into<String>, cost_cpu: f64, gpu_speedup: f64) -> Self {
        Self {
            name: name.into(),
            cost_cpu: CostDist::Fixed(cost_cpu),
            gpu_speedup,
            speedup_estimate: None,
            variants: Variants::Both,
            bytes_in: 0,
            bytes_out: 0,
            transfer_impact: None,
        }
    }

    pub fn estimate(&self) -> f64 {
        self.speedup_estimate.unwrap_or(self.gpu_speedup)
    }

    pub fn validate(&self) -> Result<(), String> {
        self.cost_cpu.validate().map_err(|e| format!("task type {:?}: {e}", self.name))?;
        if !(self.gpu_speedup.is_finite() && self.gpu_speedup > 0.0) || !(self.estimate().is_finite() && self.estimate() > 0.0) {
            return Err(format!("task type {:?}: speedups must be positive", self.name));
        }
        if let Some(ti) = self.transfer_impact {
            if !(0.0..1.0).contains(&ti) {
                return Err(format!("task type {:?}: transfer_impact must be in [0, 1)", self.name));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    #[serde(rename = "type")]
    pub task_type: String,
    #[serde(default = "one_usize")]
    pub width: usize,
}

fn one_usize() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionUse {
    pub region: String,
    pub binding: String,
    #[serde(default)]
    pub lazy: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageSpec {
    pub name: String,
    /// Stages whose instance for the same tile must finish first.
    #[serde(default)]
    pub after: Vec<String>,
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub reads: Vec<RegionUse>,
    #[serde(default)]
    pub writes: Vec<RegionUse>,
    #[serde(default)]
    pub kernel: Option<StageKernel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub domain: BoundingBox,
    pub tile: Vec<i64>,
    pub task_types: Vec<TaskTypeProfile>,
    pub stages: Vec<StageSpec>,
}

impl WorkloadSpec {
    pub fn profile(&self, name: &str) -> Option<&TaskTypeProfile> {
        self.task_types.iter().find(|p| p.name == name)
    }
}
