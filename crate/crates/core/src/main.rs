use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use region_templates::config::{LoadedConfig, Overrides};
use region_templates::runtime::Scheduler;
use region_templates::sim::{metrics_csv, run_batch, run_sim, RunLabels, SimOptions, StorageKind, Workload};
use region_templates::storage::GroupSize;

/// Simulate region-template workloads on CPU/GPU nodes.
///
/// Settings come from the config file, then `RT_*` environment variables,
/// then flags; later sources win.
#[derive(Parser)]
#[command(name = "rtsim", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write metrics.csv, trace.tsv and io_trace.tsv.
    Run(Common),
    /// Run the cartesian product of the given lists and write sweep.csv.
    Sweep(SweepArgs),
    /// Check a config and print it normalized, without running.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long, env = "RT_CONFIG")]
    config: PathBuf,
    #[arg(long, env = "RT_SEED")]
    seed: Option<u64>,
    /// pats or fcfs
    #[arg(long, env = "RT_SCHEDULER")]
    scheduler: Option<Scheduler>,
    /// Backend behind GLOBAL regions: dms or disk
    #[arg(long, env = "RT_STORAGE")]
    storage: Option<StorageKind>,
    #[arg(long, env = "RT_OUT_DIR")]
    out_dir: Option<PathBuf>,
    #[arg(long, env = "RT_DL", num_args = 0..=1, default_missing_value = "true")]
    dl: Option<bool>,
    #[arg(long, env = "RT_PREFETCH", num_args = 0..=1, default_missing_value = "true")]
    prefetch: Option<bool>,
    /// Percent error injected into speedup estimates
    #[arg(long, env = "RT_ERROR_PCT")]
    error_pct: Option<f64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated error percentages, e.g. 0,50,100
    #[arg(long, env = "RT_SWEEP_ERRORS")]
    sweep_errors: Option<String>,
    /// Comma-separated schedulers, e.g. pats,fcfs
    #[arg(long, env = "RT_SWEEP_SCHEDULERS")]
    schedulers: Option<String>,
    /// Comma-separated I/O group sizes, e.g. 1,15,all
    #[arg(long, env = "RT_SWEEP_GROUP_SIZES")]
    group_sizes: Option<String>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            scheduler: self.scheduler,
            storage: self.storage,
            seed: self.seed,
            out_dir: self.out_dir.clone(),
            dl: self.dl,
            prefetch: self.prefetch,
            error_pct: self.error_pct,
        }
    }

    fn load(&self) -> Result<LoadedConfig> {
        let cfg = LoadedConfig::load(&self.config, &self.overrides())?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Command::Run(c) => cmd_run(&c),
        Command::Sweep(s) => cmd_sweep(&s),
        Command::Validate(c) => cmd_validate(&c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rtsim: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// Write `contents` next to `path` and rename it into place, so a file
/// that exists is always complete.
fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn labels(cfg: &LoadedConfig, opts: &SimOptions, error_pct: f64) -> RunLabels {
    let uses_disk = cfg.bindings_used().contains("DISK");
    RunLabels {
        scheduler: opts.scheduler.to_string(),
        dl: opts.dl,
        prefetch: opts.prefetch,
        storage: opts.storage.to_string(),
        group_size: if uses_disk { opts.disk.group_size.to_string() } else { "-".into() },
        error_pct,
        seed: opts.seed,
    }
}

fn cmd_run(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    let e = cfg.config.error_pct;
    let workload = cfg.workload(e)?;
    let opts = cfg.options();
    let result = run_sim(&workload, &cfg.nodes, &opts)?;

    let out = &cfg.config.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("trace.tsv"), &result.trace.render())?;
    write_atomic(&out.join("io_trace.tsv"), &result.io_trace_text())?;
    // metrics last: its presence marks a finished run
    write_atomic(&out.join("metrics.csv"), &metrics_csv(&[(labels(&cfg, &opts, e), result.metrics.clone())]))?;
    println!(
        "makespan {:.6}  tasks {}  gpu fraction {:.3}  -> {}",
        result.metrics.makespan,
        result.metrics.tasks,
        result.metrics.gpu_fraction(),
        out.display()
    );
    Ok(())
}

fn parse_list<T>(flag: &str, raw: &Option<String>, parse: impl Fn(&str) -> Result<T, String>) -> Result<Option<Vec<T>>> {
    let Some(raw) = raw else { return Ok(None) };
    let items: Vec<&str> = raw.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if items.is_empty() {
        bail!("configuration error: {flag} needs at least one value");
    }
    let parsed = items
        .into_iter()
        .map(|s| parse(s).map_err(|e| anyhow::anyhow!("configuration error: {flag}: {e}")))
        .collect::<Result<Vec<T>>>()?;
    Ok(Some(parsed))
}

fn cmd_sweep(s: &SweepArgs) -> Result<()> {
    let errors = parse_list("--sweep-errors", &s.sweep_errors, |v| {
        v.parse::<f64>().map_err(|_| format!("{v:?} is not a number"))
    })?;
    let schedulers = parse_list("--schedulers", &s.schedulers, |v| v.parse::<Scheduler>())?;
    let groups = parse_list("--group-sizes", &s.group_sizes, |v| v.parse::<GroupSize>())?;
    if errors.is_none() && schedulers.is_none() && groups.is_none() {
        bail!("configuration error: nothing to sweep; pass --sweep-errors, --schedulers or --group-sizes");
    }

    let cfg = s.common.load()?;
    let base = cfg.options();
    if groups.is_some() && !cfg.bindings_used().contains("DISK") {
        bail!("configuration error: --group-sizes given but no region is stored on disk");
    }
    let errors = errors.unwrap_or_else(|| vec![cfg.config.error_pct]);
    let schedulers = schedulers.unwrap_or_else(|| vec![base.scheduler]);
    let groups = groups.unwrap_or_else(|| vec![base.disk.group_size]);

    let workloads: Vec<Workload> = errors.iter().map(|&e| cfg.workload(e)).collect::<Result<_, _>>()?;
    let mut jobs = Vec::new();
    let mut rows = Vec::new();
    for (w, &e) in workloads.iter().zip(&errors) {
        for &sched in &schedulers {
            for &g in &groups {
                let mut o = base.clone().with_scheduler(sched);
                o.disk.group_size = g;
                o.validate().with_context(|| format!("group size {g}"))?;
                rows.push(labels(&cfg, &o, e));
                jobs.push((w, o));
            }
        }
    }
    let results = run_batch(&jobs, &cfg.nodes)?;
    let table: Vec<_> = rows.into_iter().zip(results.into_iter().map(|r| r.metrics)).collect();

    let out = &cfg.config.out_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_atomic(&out.join("sweep.csv"), &metrics_csv(&table))?;
    println!("{} runs -> {}", table.len(), out.join("sweep.csv").display());
    Ok(())
}

fn cmd_validate(c: &Common) -> Result<()> {
    let cfg = c.load()?;
    print!("{}", cfg.normalized());
    Ok(())
}
