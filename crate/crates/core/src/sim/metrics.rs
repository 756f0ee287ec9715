use std::collections::BTreeMap;
use std::fmt::Write as _;

/// Outcome of one simulated run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunMetrics {
    pub makespan: f64,
    pub cpu_busy: f64,
    pub gpu_busy: f64,
    pub cpu_slots: usize,
    pub gpu_slots: usize,
    pub stages: usize,
    pub tasks: usize,
    pub gpu_tasks: usize,
    /// Host-device bytes moved for GPU tasks.
    pub transfer_bytes: u64,
    pub staged_bytes: u64,
    pub read_bytes: u64,
    pub sessions: u64,
    pub flushed_buffers: u64,
    /// Per task type: (executions on a GPU, executions overall).
    pub per_type: BTreeMap<String, (usize, usize)>,
}

impl RunMetrics {
    /// Share of task executions, not time, that ran on a GPU.
    pub fn gpu_fraction(&self) -> f64 {
        if self.tasks == 0 {
            0.0
        } else {
            self.gpu_tasks as f64 / self.tasks as f64
        }
    }

    pub fn type_gpu_fraction(&self, name: &str) -> Option<f64> {
        self.per_type
            .get(name)
            .map(|&(g, n)| if n == 0 { 0.0 } else { g as f64 / n as f64 })
    }

    pub const CSV_HEADER: &'static str = "makespan,cpu_busy,gpu_busy,cpu_slots,gpu_slots,stages,tasks,gpu_tasks,gpu_fraction,transfer_bytes,staged_bytes,read_bytes,sessions,flushed_buffers,gpu_fraction_by_type";

    pub fn csv_fields(&self) -> String {
        let by_type: Vec<String> = self
            .per_type
            .keys()
            .map(|k| format!("{k}:{:.4}", self.type_gpu_fraction(k).unwrap_or(0.0)))
            .collect();
        let mut s = String::new();
        write!(
            s,
            "{:.6},{:.6},{:.6},{},{},{},{},{},{:.6},{},{},{},{},{},{}",
            self.makespan,
            self.cpu_busy,
            self.gpu_busy,
            self.cpu_slots,
            self.gpu_slots,
            self.stages,
            self.tasks,
            self.gpu_tasks,
            self.gpu_fraction(),
            self.transfer_bytes,
            self.staged_bytes,
            self.read_bytes,
            self.sessions,
            self.flushed_buffers,
            by_type.join(";"),
        )
        .expect("writing to a String cannot fail");
        s
    }
}

/// Parameters that distinguish rows of a metrics table.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunLabels {
    pub scheduler: String,
    pub dl: bool,
    pub prefetch: bool,
    pub storage: String,
    pub group_size: String,
    pub error_pct: f64,
    pub seed: u64,
}

pub const LABELS_HEADER: &str = "scheduler,dl,prefetch,storage,group_size,error_pct,seed";

impl RunLabels {
    pub fn csv_fields(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.scheduler, self.dl, self.prefetch, self.storage, self.group_size, self.error_pct, self.seed
        )
    }
}

/// CSV text for labelled metric rows.
pub fn metrics_csv(rows: &[(RunLabels, RunMetrics)]) -> String {
    let mut out = format!("{LABELS_HEADER},{}\n", RunMetrics::CSV_HEADER);
    for (l, m) in rows {
        out.push_str(&l.csv_fields());
        out.push(',');
        out.push_str(&m.csv_fields());
        out.push('\n');
    }
    out
}

/// Total length of the union of `intervals`.
pub(crate) fn union_length(mut intervals: Vec<(f64, f64)>) -> f64 {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut total = 0.0;
    let mut cur: Option<(f64, f64)> = None;
    for (s, e) in intervals {
        match cur {
            Some((cs, ce)) if s <= ce => cur = Some((cs, ce.max(e))),
            Some((cs, ce)) => {
                total += ce - cs;
                cur = Some((s, e));
            }
            None => cur = Some((s, e)),
        }
    }
    if let Some((cs, ce)) = cur {
        total += ce - cs;
    }
    total
}
