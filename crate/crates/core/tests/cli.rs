use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const WORKLOAD: &str = r#"
domain = "<0,0;99,99>"
tile = [50, 50]

[[task_types]]
name = "seg"
cost_cpu = { uniform = [1.0, 3.0] }
gpu_speedup = 8.0
bytes_in = 2500
bytes_out = 2500

[[task_types]]
name = "feat"
cost_cpu = { uniform = [1.0, 2.0] }
gpu_speedup = 1.5

[[stages]]
name = "segmentation"
layers = [{ type = "seg", width = 2 }, { type = "feat", width = 1 }]
reads = [{ region = "RGB", binding = "GLOBAL" }]
writes = [{ region = "Mask", binding = "GLOBAL" }]
"#;

const NODES: &str = r#"
[[nodes]]
cpu_cores = 2
gpus = 1
gpu_transfer_bandwidth = 4096.0
"#;

fn rtsim() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_rtsim"));
    for var in [
        "RT_CONFIG",
        "RT_SEED",
        "RT_SCHEDULER",
        "RT_STORAGE",
        "RT_OUT_DIR",
        "RT_DL",
        "RT_PREFETCH",
        "RT_ERROR_PCT",
        "RT_SWEEP_ERRORS",
        "RT_SWEEP_SCHEDULERS",
        "RT_SWEEP_GROUP_SIZES",
    ] {
        c.env_remove(var);
    }
    c
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("rtsim starts")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A temp dir holding workload.toml, nodes.toml and run.toml (with `extra`
/// appended to run.toml).
fn setup(workload: &str, extra: &str) -> (TempDir, PathBuf) {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("workload.toml"), workload).unwrap();
    fs::write(dir.path().join("nodes.toml"), NODES).unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(
        &cfg,
        format!("schema_version = 1\nworkload = \"workload.toml\"\nnodes = \"nodes.toml\"\n{extra}"),
    )
    .unwrap();
    (dir, cfg)
}

fn run_to(cfg: &Path, out: &Path, args: &[&str]) -> Output {
    run(rtsim().arg("run").arg("--config").arg(cfg).arg("--out-dir").arg(out).args(args))
}

fn read(p: &Path) -> String {
    fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(i).unwrap().to_string()).collect()
}

#[test]
fn minimal_config_runs_and_writes_outputs() {
    let (dir, cfg) = setup(WORKLOAD, "");
    let out = dir.path().join("out");
    let o = run_to(&cfg, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics = read(&out.join("metrics.csv"));
    assert_eq!(metrics.lines().count(), 2);
    assert_eq!(column(&metrics, "scheduler"), ["pats"]);
    assert_eq!(column(&metrics, "stages"), ["4"]);
    assert_eq!(column(&metrics, "tasks"), ["12"]);
    let makespan: f64 = column(&metrics, "makespan")[0].parse().unwrap();
    assert!(makespan > 0.0);
    assert!(!read(&out.join("trace.tsv")).is_empty());
    assert!(out.join("io_trace.tsv").exists());
    assert!(!out.join("metrics.partial").exists());
}

#[test]
fn missing_workload_file_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "schema_version = 1\nworkload = \"nowhere.toml\"\nnodes = \"nodes.toml\"\n").unwrap();
    let o = run(rtsim().arg("validate").arg("--config").arg(&cfg));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("nowhere.toml"), "{}", stderr(&o));
}

#[test]
fn same_config_gives_identical_files() {
    let (dir, cfg) = setup(WORKLOAD, "dl = true\nprefetch = true\n");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = run_to(&cfg, out, &["--seed", "9"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["metrics.csv", "trace.tsv", "io_trace.tsv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f} differs");
    }
}

#[test]
fn sweep_writes_one_row_per_combination() {
    let (dir, cfg) = setup(WORKLOAD, "");
    let out = dir.path().join("sweep");
    let o = run(rtsim()
        .args(["sweep", "--sweep-errors", "0,50,100", "--schedulers", "pats,fcfs", "--out-dir"])
        .arg(&out)
        .arg("--config")
        .arg(&cfg));
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = read(&out.join("sweep.csv"));
    assert_eq!(csv.lines().count(), 7);
    assert_eq!(column(&csv, "error_pct"), ["0", "0", "50", "50", "100", "100"]);
    assert_eq!(column(&csv, "scheduler"), ["pats", "fcfs", "pats", "fcfs", "pats", "fcfs"]);
}

#[test]
fn empty_sweep_list_is_a_config_error() {
    let (dir, cfg) = setup(WORKLOAD, "");
    let o = run(rtsim()
        .args(["sweep", "--sweep-errors", ""])
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("o")));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("configuration error"), "{}", stderr(&o));
    assert!(!dir.path().join("o/sweep.csv").exists());
}

#[test]
fn group_sizes_without_disk_region_rejected() {
    let (dir, cfg) = setup(WORKLOAD, "");
    let o = run(rtsim()
        .args(["sweep", "--group-sizes", "1,all"])
        .arg("--config")
        .arg(&cfg)
        .arg("--out-dir")
        .arg(dir.path().join("o")));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("disk"), "{}", stderr(&o));
}

#[test]
fn cyclic_stages_rejected_by_validate() {
    let cyclic = format!(
        "{WORKLOAD}\n[[stages]]\nname = \"a\"\nafter = [\"b\"]\nlayers = [{{ type = \"feat\", width = 1 }}]\n\n\
         [[stages]]\nname = \"b\"\nafter = [\"a\"]\nlayers = [{{ type = \"feat\", width = 1 }}]\n"
    );
    let (_dir, cfg) = setup(&cyclic, "");
    let o = run(rtsim().arg("validate").arg("--config").arg(&cfg));
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("cycle"), "{err}");
    assert!(err.contains('a') && err.contains('b'), "{err}");
}

#[test]
fn zero_queue_threshold_rejected() {
    let (_dir, cfg) = setup(WORKLOAD, "storage = \"disk\"\n[disk]\nqueue_threshold = 0\n");
    let o = run(rtsim().arg("validate").arg("--config").arg(&cfg));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("threshold"), "{}", stderr(&o));
}

#[test]
fn flags_beat_env_beat_file() {
    let (dir, cfg) = setup(WORKLOAD, "scheduler = \"pats\"\nseed = 1\n");
    let validate = |envs: &[(&str, &str)], args: &[&str]| {
        let mut c = rtsim();
        c.arg("validate").arg("--config").arg(&cfg).args(args);
        for (k, v) in envs {
            c.env(k, v);
        }
        let o = run(&mut c);
        assert!(o.status.success(), "{}", stderr(&o));
        String::from_utf8(o.stdout).unwrap()
    };
    let file = validate(&[], &[]);
    assert!(file.contains("scheduler = \"pats\"") && file.contains("seed = 1\n"), "{file}");
    let env = validate(&[("RT_SCHEDULER", "fcfs"), ("RT_SEED", "5")], &[]);
    assert!(env.contains("scheduler = \"fcfs\"") && env.contains("seed = 5\n"), "{env}");
    let flag = validate(&[("RT_SCHEDULER", "fcfs"), ("RT_SEED", "5")], &["--seed", "7"]);
    assert!(flag.contains("scheduler = \"fcfs\"") && flag.contains("seed = 7\n"), "{flag}");
    drop(dir);
}

#[test]
fn env_supplies_config_path() {
    let (dir, cfg) = setup(WORKLOAD, "");
    let out = dir.path().join("env-out");
    let o = run(rtsim().arg("run").env("RT_CONFIG", &cfg).env("RT_OUT_DIR", &out));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(out.join("metrics.csv").exists());
}

#[test]
fn shipped_configs_validate() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    for name in ["run.toml", "bimodal_run.toml", "io_groups_run.toml"] {
        let o = run(rtsim().arg("validate").arg("--config").arg(root.join(name)));
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}

#[test]
fn unknown_key_rejected() {
    let (_dir, cfg) = setup(WORKLOAD, "shceduler = \"pats\"\n");
    let o = run(rtsim().arg("validate").arg("--config").arg(&cfg));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("shceduler"), "{}", stderr(&o));
}
