//! Run configuration files for `rtsim`.
//!
//! A run config is TOML. Paths to the workload and node files are resolved
//! relative to the config file. Command-line flags and `RT_*` environment
//! variables override the file (flags win over the environment).
//!
//! ```toml
//! schema_version = 1
//! workload = "workload.toml"
//! nodes = "nodes.toml"
//! scheduler = "pats"
//! storage = "disk"
//! seed = 7
//!
//! [disk]
//! group_size = 15
//! io_node_count = 30
//! ```

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::runtime::{Scheduler, DEFAULT_TRANSFER_IMPACT};
use crate::sim::{
    generate_workload, inject_error, validate_workload, NodeSpec, NodesFile, SimError, SimOptions, StorageKind, Workload,
    WorkloadSpec,
};
use crate::storage::{DiskTiming, IoGroupConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Read { path: String, msg: String },
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error("{path}: {msg}")]
    Invalid { path: String, msg: String },
}

fn invalid(path: &Path, msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.display().to_string(),
        msg: msg.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuntimeParams {
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default = "default_ti")]
    pub transfer_impact: f64,
    #[serde(default = "default_io_bandwidth")]
    pub io_bandwidth: f64,
}

impl Default for RuntimeParams {
    fn default() -> Self {
        Self {
            concurrency: default_concurrency(),
            transfer_impact: default_ti(),
            io_bandwidth: default_io_bandwidth(),
        }
    }
}

fn default_concurrency() -> usize {
    2
}

fn default_ti() -> f64 {
    DEFAULT_TRANSFER_IMPACT
}

fn default_io_bandwidth() -> f64 {
    1.0e6
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmsParams {
    pub shards: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    pub workload: PathBuf,
    pub nodes: PathBuf,
    #[serde(default = "default_scheduler")]
    pub scheduler: Scheduler,
    #[serde(default)]
    pub dl: bool,
    #[serde(default)]
    pub prefetch: bool,
    #[serde(default = "default_storage")]
    pub storage: StorageKind,
    #[serde(default)]
    pub seed: u64,
    /// Percent error injected into speedup estimates.
    #[serde(default)]
    pub error_pct: f64,
    /// Reach storage through the socket service.
    #[serde(default)]
    pub service: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub runtime: RuntimeParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dms: Option<DmsParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk: Option<IoGroupConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub disk_timing: Option<DiskTiming>,
}

fn default_scheduler() -> Scheduler {
    Scheduler::Pats
}

fn default_storage() -> StorageKind {
    StorageKind::Dms
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// Values taken from flags or the environment.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub scheduler: Option<Scheduler>,
    pub storage: Option<StorageKind>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub dl: Option<bool>,
    pub prefetch: Option<bool>,
    pub error_pct: Option<f64>,
}

/// A parsed config with its workload and nodes loaded.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub config: RunConfig,
    pub spec: WorkloadSpec,
    pub nodes: Vec<NodeSpec>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        msg: e.to_string().trim_end().to_string(),
    })
}

pub fn load_workload_spec(path: &Path) -> Result<WorkloadSpec, ConfigError> {
    parse(path, &read(path)?)
}

pub fn load_nodes(path: &Path) -> Result<Vec<NodeSpec>, ConfigError> {
    Ok(parse::<NodesFile>(path, &read(path)?)?.nodes)
}

impl LoadedConfig {
    /// Read `path`, apply `overrides` and load the referenced files. Only
    /// parsing happens here; see [`LoadedConfig::validate`].
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut config: RunConfig = parse(path, &read(path)?)?;
        if config.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                path,
                format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", config.schema_version),
            ));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        config.workload = base.join(&config.workload);
        config.nodes = base.join(&config.nodes);
        config.apply(overrides);
        let spec = load_workload_spec(&config.workload)?;
        let nodes = load_nodes(&config.nodes)?;
        Ok(Self {
            path: path.to_path_buf(),
            config,
            spec,
            nodes,
        })
    }

    /// Check every invariant without running anything.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.config;
        let wl = |e: SimError| invalid(&c.workload, e.to_string());
        validate_workload(&self.spec).map_err(wl)?;
        if self.nodes.is_empty() {
            return Err(invalid(&c.nodes, "at least one [[nodes]] entry is required"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            n.validate().map_err(|e| invalid(&c.nodes, format!("nodes[{i}]: {e}")))?;
        }
        if !(0.0..=100.0).contains(&c.error_pct) {
            return Err(invalid(&self.path, format!("error_pct {} outside [0, 100]", c.error_pct)));
        }
        if let Some(d) = &c.disk {
            d.validate().map_err(|e| invalid(&self.path, format!("[disk]: {e}")))?;
        }
        if c.dms.as_ref().is_some_and(|d| d.shards == 0) {
            return Err(invalid(&self.path, "[dms]: shards must be at least 1"));
        }
        self.options().validate().map_err(|e| invalid(&self.path, e.to_string()))?;

        let used = self.bindings_used();
        if c.dms.is_some() && !used.contains("DMS") {
            return Err(invalid(&self.path, "[dms] is set but no region is stored in the memory store"));
        }
        if (c.disk.is_some() || c.disk_timing.is_some()) && !used.contains("DISK") {
            return Err(invalid(&self.path, "[disk] is set but no region is stored on disk"));
        }
        Ok(())
    }

    /// Backends the workload ends up using once GLOBAL is resolved.
    pub fn bindings_used(&self) -> BTreeSet<String> {
        let global = match self.config.storage {
            StorageKind::Dms => "DMS",
            StorageKind::Disk => "DISK",
        };
        self.spec
            .stages
            .iter()
            .flat_map(|s| s.reads.iter().chain(&s.writes))
            .map(|r| if r.binding == "GLOBAL" { global.to_string() } else { r.binding.clone() })
            .collect()
    }

    pub fn options(&self) -> SimOptions {
        let c = &self.config;
        SimOptions {
            scheduler: c.scheduler,
            dl: c.dl,
            prefetch: c.prefetch,
            storage: c.storage,
            seed: c.seed,
            concurrency: c.runtime.concurrency,
            transfer_impact: c.runtime.transfer_impact,
            io_bandwidth: c.runtime.io_bandwidth,
            dms_shards: c.dms.as_ref().map(|d| d.shards),
            disk: c.disk.clone().unwrap_or_default(),
            disk_timing: c.disk_timing.unwrap_or_default(),
            scratch_dir: None,
            record_decisions: false,
            service: c.service,
        }
    }

    /// The workload with `error_pct` applied to the estimates.
    pub fn workload(&self, error_pct: f64) -> Result<Workload, SimError> {
        let mut spec = self.spec.clone();
        spec.task_types = inject_error(&spec.task_types, error_pct)?;
        generate_workload(&spec, self.config.seed)
    }

    /// The config as TOML with defaults filled in and paths resolved.
    pub fn normalized(&self) -> String {
        toml::to_string(&self.config).expect("config serializes")
    }
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.scheduler {
            self.scheduler = s;
        }
        if let Some(s) = o.storage {
            self.storage = s;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(b) = o.dl {
            self.dl = b;
        }
        if let Some(b) = o.prefetch {
            self.prefetch = b;
        }
        if let Some(e) = o.error_pct {
            self.error_pct = e;
        }
    }
}
