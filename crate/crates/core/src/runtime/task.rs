use serde::{Deserialize, Serialize};

pub type TaskId = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeviceKind {
    Cpu,
    Gpu,
}

/// Devices a task has implementations for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variants {
    CpuOnly,
    GpuOnly,
    Both,
}

impl Variants {
    pub fn runs_on(self, device: DeviceKind) -> bool {
        matches!(
            (self, device),
            (Self::Both, _) | (Self::CpuOnly, DeviceKind::Cpu) | (Self::GpuOnly, DeviceKind::Gpu)
        )
    }
}

/// A data reference touched by a task, used for transfer accounting and
/// reuse detection.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct IoRef {
    pub key: String,
    pub bytes: u64,
    #[serde(default)]
    pub write: bool,
}

impl IoRef {
    pub fn read(key: impl Into<String>, bytes: u64) -> Self {
        Self {
            key: key.into(),
            bytes,
            write: false,
        }
    }

    pub fn write(key: impl Into<String>, bytes: u64) -> Self {
        Self {
            key: key.into(),
            bytes,
            write: true,
        }
    }
}

/// Fine-grain unit of work.
///
/// `speedup_estimate` is what the scheduler sees. `gpu_speedup` is the
/// acceleration the task actually achieves when simulated on a GPU; the two
/// differ when estimation error is injected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskNode {
    pub id: TaskId,
    #[serde(default)]
    pub deps: Vec<TaskId>,
    pub variants: Variants,
    #[serde(default)]
    pub speedup_estimate: Option<f64>,
    #[serde(default)]
    pub gpu_speedup: Option<f64>,
    #[serde(default)]
    pub io_refs: Vec<IoRef>,
    pub cost_cpu: f64,
    #[serde(default)]
    pub transfer_impact: Option<f64>,
    #[serde(default)]
    pub type_name: String,
}

impl TaskNode {
    /// A task with implementations for both devices.
    pub fn both(id: TaskId, cost_cpu: f64, speedup: f64) -> Self {
        Self {
            id,
            deps: Vec::new(),
            variants: Variants::Both,
            speedup_estimate: Some(speedup),
            gpu_speedup: Some(speedup),
            io_refs: Vec::new(),
            cost_cpu,
            transfer_impact: None,
            type_name: String::new(),
        }
    }

    pub fn cpu_only(id: TaskId, cost_cpu: f64) -> Self {
        Self {
            variants: Variants::CpuOnly,
            speedup_estimate: None,
            gpu_speedup: None,
            ..Self::both(id, cost_cpu, 1.0)
        }
    }

    pub fn gpu_only(id: TaskId, cost_cpu: f64, speedup: f64) -> Self {
        Self {
            variants: Variants::GpuOnly,
            speedup_estimate: None,
            ..Self::both(id, cost_cpu, speedup)
        }
    }

    pub fn with_deps(mut self, deps: impl IntoIterator<Item = TaskId>) -> Self {
        self.deps = deps.into_iter().collect();
        self
    }

    pub fn with_refs(mut self, refs: impl IntoIterator<Item = IoRef>) -> Self {
        self.io_refs = refs.into_iter().collect();
        self
    }

    pub fn with_type(mut self, name: impl Into<String>) -> Self {
        self.type_name = name.into();
        self
    }

    /// Ordering key used by the speedup-aware queue. Device-restricted tasks
    /// sort to the end their device takes from first.
    pub fn priority(&self) -> f64 {
        match self.variants {
            Variants::CpuOnly => 0.0,
            Variants::GpuOnly => f64::INFINITY,
            Variants::Both => self.speedup_estimate.unwrap_or(1.0),
        }
    }

    /// Simulated execution time on `device`, excluding transfers.
    pub fn compute_time(&self, device: DeviceKind) -> f64 {
        match device {
            DeviceKind::Cpu => self.cost_cpu,
            DeviceKind::Gpu => self.cost_cpu / self.gpu_speedup.or(self.speedup_estimate).unwrap_or(1.0),
        }
    }

    /// Bytes of data shared with `other`, by reference key.
    pub fn shared_bytes(&self, other: &TaskNode) -> u64 {
        self.io_refs
            .iter()
            .filter(|r| other.io_refs.iter().any(|o| o.key == r.key))
            .map(|r| r.bytes)
            .sum()
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.cost_cpu.is_finite() && self.cost_cpu >= 0.0) {
            return Err(format!("task {}: cost_cpu must be finite and non-negative", self.id));
        }
        let positive = |v: Option<f64>| v.is_none_or(|s| s.is_finite() && s > 0.0);
        if !positive(self.speedup_estimate) || !positive(self.gpu_speedup) {
            return Err(format!("task {}: speedups must be positive", self.id));
        }
        if (self.variants == Variants::Both) != self.speedup_estimate.is_some() {
            return Err(format!(
                "task {}: a speedup estimate is required exactly when both variants exist",
                self.id
            ));
        }
        if let Some(ti) = self.transfer_impact {
            if !(0.0..1.0).contains(&ti) {
                return Err(format!("task {}: transfer impact must be in [0, 1)", self.id));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variants_match_devices() {
        assert!(Variants::Both.runs_on(DeviceKind::Gpu));
        assert!(!Variants::CpuOnly.runs_on(DeviceKind::Gpu));
        assert!(!Variants::GpuOnly.runs_on(DeviceKind::Cpu));
    }

    #[test]
    fn gpu_time_uses_actual_speedup() {
        let mut t = TaskNode::both(1, 10.0, 5.0);
        t.speedup_estimate = Some(1.0);
        assert_eq!(t.compute_time(DeviceKind::Gpu), 2.0);
        assert_eq!(t.compute_time(DeviceKind::Cpu), 10.0);
    }

    #[test]
    fn validation() {
        assert!(TaskNode::both(1, 1.0, 2.0).validate().is_ok());
        assert!(TaskNode::cpu_only(1, 1.0).validate().is_ok());
        assert!(TaskNode::both(1, -1.0, 2.0).validate().is_err());
        let mut t = TaskNode::both(1, 1.0, 2.0);
        t.speedup_estimate = None;
        assert!(t.validate().is_err());
        t = TaskNode::both(1, 1.0, 2.0);
        t.transfer_impact = Some(1.0);
        assert!(t.validate().is_err());
    }

    #[test]
    fn shared_bytes_by_key() {
        let a = TaskNode::both(1, 1.0, 1.0).with_refs([IoRef::read("tile", 100), IoRef::write("x", 5)]);
        let b = TaskNode::both(2, 1.0, 1.0).with_refs([IoRef::read("x", 5), IoRef::write("y", 5)]);
        assert_eq!(a.shared_bytes(&b), 5);
        assert_eq!(b.shared_bytes(&TaskNode::cpu_only(3, 1.0)), 0);
    }
}
