//! Three-phase GPU pipeline: upload, compute, download.
//!
//! With overlap, each phase has its own engine. Task `i` starts uploading
//! once the upload engine is free and task `i-1` has started computing (its
//! inputs are on the device), computes once its upload is done and the
//! compute engine is free, and downloads once its compute is done and the
//! download engine is free.

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseTimes {
    pub upload: f64,
    pub compute: f64,
    pub download: f64,
}

impl PhaseTimes {
    pub fn new(upload: f64, compute: f64, download: f64) -> Self {
        Self {
            upload,
            compute,
            download,
        }
    }

    pub fn total(&self) -> f64 {
        self.upload + self.compute + self.download
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineTimeline {
    /// `[start, end]` of upload, compute and download per task.
    pub phases: Vec<[(f64, f64); 3]>,
    pub makespan: f64,
}

/// Engine clocks for incremental use by the simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct PipelineState {
    upload_free: f64,
    compute_free: f64,
    download_free: f64,
    last_compute_start: f64,
}

impl PipelineState {
    /// Schedule one task that becomes available at `now`.
    pub(crate) fn push(&mut self, now: f64, t: PhaseTimes) -> [(f64, f64); 3] {
        let u0 = now.max(self.upload_free).max(self.last_compute_start);
        let u1 = u0 + t.upload;
        let c0 = u1.max(self.compute_free);
        let c1 = c0 + t.compute;
        let d0 = c1.max(self.download_free);
        let d1 = d0 + t.download;
        self.upload_free = u1;
        self.compute_free = c1;
        self.download_free = d1;
        self.last_compute_start = c0;
        [(u0, u1), (c0, c1), (d0, d1)]
    }
}

/// Timeline of `tasks` run back to back on one GPU.
pub fn prefetch_pipeline(tasks: &[PhaseTimes], overlap: bool) -> PipelineTimeline {
    let mut phases = Vec::with_capacity(tasks.len());
    if overlap {
        let mut st = PipelineState::default();
        for t in tasks {
            phases.push(st.push(0.0, *t));
        }
    } else {
        let mut now = 0.0;
        for t in tasks {
            let u = (now, now + t.upload);
            let c = (u.1, u.1 + t.compute);
            let d = (c.1, c.1 + t.download);
            now = d.1;
            phases.push([u, c, d]);
        }
    }
    let makespan = phases.iter().map(|p| p[2].1).fold(0.0, f64::max);
    PipelineTimeline { phases, makespan }
}
