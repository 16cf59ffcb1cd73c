use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use clverify::cli::{self, ExperimentConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clverify"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small VdP config into `dir` and returns its path.
fn small_config(dir: &Path, name: &str, mode: &str, iterations: usize) -> PathBuf {
    let text = format!(
        r#"{{
  "name": "{name}",
  "system": "vdp",
  "grid": {{"axes": [{{"min": -3, "max": 3, "count": 25}}, {{"min": -3, "max": 3, "count": 25}}]}},
  "sampler": {{"mode": "{mode}", "batch_size": 5, "iterations": {iterations}, "initial_size": 20}},
  "replicates": 2,
  "cache_dir": "{}",
  "svg": true
}}"#,
        dir.join("cache").display()
    );
    let path = dir.join(format!("{name}.cfg"));
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn bundled_configs_parse_and_resolve() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs_dir()).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let stem = path.file_stem().unwrap().to_string_lossy().into_owned();
        let prepared = cli::prepare(cfg, &stem).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(prepared.name, stem);
        seen += 1;
    }
    assert!(seen >= 6);
}

#[test]
fn bundled_vdp_active_writes_one_row_per_iteration() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(configs_dir().join("vdp_active.cfg")).unwrap()).unwrap();
    cfg["replicates"] = 2.into();
    let cfg_path = dir.path().join("vdp_active.cfg");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = dir.path().join("out");

    let o = run(&["run", cfg_path.to_str().unwrap(), "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let csv = std::fs::read_to_string(out.join("runs/seed-00.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with(cli::ITERATIONS_SCHEMA));
    assert!(lines.next().unwrap().starts_with("iteration,labeled,retrains,total_error"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 21);
    assert!(rows[20].starts_with("20,250,20,"));
    let fields: Vec<&str> = rows[20].split(',').collect();
    assert!(fields.iter().all(|f| !f.is_empty()), "{}", rows[20]);

    for name in ["summary.csv", "timing.csv", "run.json", "errors.svg", "models/seed-01.svm"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let model = std::fs::read_to_string(out.join("models/seed-00.svm")).unwrap();
    let model = clverify::SvmModel::from_text(&model).unwrap();
    assert_eq!(model.dim(), 2);
}

#[test]
fn rerun_is_byte_identical_and_compare_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let active = small_config(dir.path(), "active", "batch", 6);
    let passive = small_config(dir.path(), "passive", "passive", 6);
    let a_out = dir.path().join("a");
    let p_out = dir.path().join("p");

    let mut snapshots = Vec::new();
    for _ in 0..2 {
        let o = run(&["run", active.to_str().unwrap(), "--out", a_out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("final true error"));
        snapshots.push((
            std::fs::read(a_out.join("runs/seed-00.csv")).unwrap(),
            std::fs::read(a_out.join("runs/seed-01.csv")).unwrap(),
            std::fs::read(a_out.join("summary.csv")).unwrap(),
        ));
    }
    assert_eq!(snapshots[0], snapshots[1]);

    let o = run(&["run", passive.to_str().unwrap(), "--out", p_out.to_str().unwrap(), "--quiet"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = run(&["compare", a_out.to_str().unwrap(), p_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.starts_with(cli::COMPARE_SCHEMA));
    let body: Vec<&str> = table.lines().skip(2).collect();
    assert_eq!(body.len(), 14);
    assert!(body.iter().filter(|l| l.starts_with("active,")).count() == 7);
    assert!(body.iter().filter(|l| l.starts_with("passive,")).count() == 7);

    // The compare mean must equal the run's own summary.
    let summary = std::fs::read_to_string(a_out.join("summary.csv")).unwrap();
    let last_summary = summary.lines().last().unwrap().split(',').nth(1).unwrap().to_string();
    let last_compare = body[6].split(',').nth(2).unwrap().to_string();
    assert_eq!(last_summary, last_compare);

    let merged = dir.path().join("merged.csv");
    let o = run(&["compare", a_out.to_str().unwrap(), p_out.to_str().unwrap(), "--out", merged.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(merged.exists() && merged.with_extension("svg").exists());

    let o = run(&["compare", a_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));

    let short = small_config(dir.path(), "short", "batch", 3);
    let s_out = dir.path().join("s");
    assert_eq!(run(&["run", short.to_str().unwrap(), "--out", s_out.to_str().unwrap(), "--quiet"]).status.code(), Some(0));
    let o = run(&["compare", a_out.to_str().unwrap(), s_out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("active=7") && stderr(&o).contains("short=4"), "{}", stderr(&o));
}

#[test]
fn seed_flag_changes_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "seeded", "batch", 2);
    let read = |seed: &str, out: &str| {
        let out = dir.path().join(out);
        let o = run(&["run", cfg.to_str().unwrap(), "--seed", seed, "--out", out.to_str().unwrap(), "--quiet", "--jobs", "1"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        std::fs::read_to_string(out.join("run.json")).unwrap()
    };
    assert_ne!(read("5", "x"), read("6", "y"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "{\n  \"formula\": \"vdp_roa\"\n}\n").unwrap();
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing field `system`"), "{}", stderr(&o));
    assert!(stderr(&o).contains("line"), "{}", stderr(&o));

    std::fs::write(&path, r#"{"system": "vdp", "formula": "always 0 50 (x1 >= 0"}"#).unwrap();
    let o = run(&["run", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("formula"), "{}", stderr(&o));

    let o = run(&["run", dir.path().join("missing.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));

    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["--jobs", "0", "label", "vdp", "vdp_roa", "0", "0"]).status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "blocked", "batch", 1);
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "not a directory").unwrap();
    let o = run(&["run", cfg.to_str().unwrap(), "--out", blocker.join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn label_prints_verdicts() {
    let o = run(&["label", "vdp", "vdp_roa", "0", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).starts_with("+1 safe\n"), "{}", stdout(&o));

    let o = run(&["label", "vdp", "vdp_roa", "3", "3"]);
    assert!(stdout(&o).starts_with("-1 unsafe (diverged)"), "{}", stdout(&o));

    let o = run(&["label", "clmrac", "phi_bound", "0", "0"]);
    assert!(stdout(&o).starts_with("+1 safe"));
    assert!(stdout(&o).contains("e1: min"));

    let o = run(&["label", "vdp", "vdp_roa", "-0.2", "0.1", "--quiet"]);
    assert_eq!(stdout(&o), "+1\n");

    let o = run(&["label", "vdp", "vdp_roa", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension"), "{}", stderr(&o));

    let o = run(&["label", "clmrac_pch", "phi", "0", "0", "0.5", "5", "--reading", "literal"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
