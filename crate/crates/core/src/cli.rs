//! Command-line front end.
//!
//! ```text
//! clverify run <config>                      run an experiment, write a result bundle
//! clverify compare <dir> <dir>...            merge error curves of several runs
//! clverify label <system> <formula> <θ...>   simulate and label one parameter vector
//! ```
//!
//! Global flags: `--seed` overrides the master seed, `--jobs` caps worker
//! threads, `--quiet` leaves only data on stdout and `--out` redirects output.
//!
//! A result bundle contains
//!
//! | file                  | contents                                              |
//! |-----------------------|-------------------------------------------------------|
//! | `runs/seed-NN.csv`    | per-iteration metrics of replicate `NN`               |
//! | `models/seed-NN.svm`  | final classifier of replicate `NN`                    |
//! | `summary.csv`         | per-iteration mean and σ of the true error            |
//! | `timing.csv`          | cumulative retrain wall time (not reproducible)       |
//! | `run.json`            | resolved configuration, seeds and final metrics       |
//! | `errors.svg`          | error curves, when `svg` is set                       |
//!
//! Every CSV starts with a `# clverify <schema> v1` comment line. Exit codes
//! are 0 on success, 2 for configuration or usage errors and 3 for failures
//! during execution.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::active::{Oracle, SamplerConfig};
use crate::error::Error;
use crate::mtl::{self, Formula, Label, Reading};
use crate::ode::IntegratorConfig;
use crate::svm::SvmConfig;
use crate::systems::{ClMracGains, System};
use crate::verify::{
    self, build_grid, EstimatorConfig, Experiment, ExperimentRun, Grid, GridSpec, GroundTruth, SimulationOracle,
    DEFAULT_GRID_LIMIT,
};

pub const ITERATIONS_SCHEMA: &str = "# clverify iterations v1";
pub const SUMMARY_SCHEMA: &str = "# clverify summary v1";
pub const TIMING_SCHEMA: &str = "# clverify timing v1";
pub const COMPARE_SCHEMA: &str = "# clverify compare v1";

const ITERATION_COLUMNS: [&str; 8] = [
    "iteration",
    "labeled",
    "retrains",
    "total_error",
    "unsafe_error",
    "safe_error",
    "kfold_error",
    "validation_error",
];

// ─── Errors ──────────────────────────────────────────────────────────

/// A failure classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    Config(String),
    /// Failure while executing; exit code 3.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    fn config(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Config(format!("{context}: {err}"))
    }

    fn runtime(context: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Runtime(format!("{context}: {err}"))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

// ─── Configuration ───────────────────────────────────────────────────

fn default_seed() -> u64 {
    1
}

fn default_replicates() -> usize {
    1
}

fn yes() -> bool {
    true
}

/// One experiment, read from a JSON file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Family name used by `compare`; defaults to the file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub system: String,
    /// Built-in requirement name or formula text; defaults per system.
    #[serde(default)]
    pub formula: Option<String>,
    #[serde(default)]
    pub reading: Reading,
    /// Defaults to the system's full-resolution grid.
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub grid_limit: Option<usize>,
    #[serde(default)]
    pub integrator: Option<IntegratorConfig>,
    #[serde(default)]
    pub gains: Option<ClMracGains>,
    #[serde(default)]
    pub sampler: SamplerConfig,
    #[serde(default)]
    pub svm: SvmConfig,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Label the whole grid to report true error.
    #[serde(default = "yes")]
    pub ground_truth: bool,
    /// Ground-truth cache; defaults to `<output>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub svg: bool,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path.display(), e))?;
        serde_json::from_str(&text).map_err(|e| CliError::config(path.display(), e))
    }
}

/// A configuration with every name resolved and every default filled in.
#[derive(Debug)]
pub struct Prepared {
    pub config: ExperimentConfig,
    pub name: String,
    pub system: System,
    pub formula: Formula,
    pub grid: Grid,
    pub integrator: IntegratorConfig,
    pub output: PathBuf,
}

/// Resolves and validates a configuration. `stem` names the family when
/// the config has no `name`.
pub fn prepare(config: ExperimentConfig, stem: &str) -> Result<Prepared, CliError> {
    let field = |name: &str, e: Error| CliError::config(format!("field `{name}`"), e);
    let gains = config.gains.unwrap_or_default();
    let system = System::with_gains(&config.system, gains).map_err(|e| field("system", e))?;
    let formula_text = config.formula.clone().unwrap_or_else(|| system.default_formula().to_string());
    let formula = mtl::resolve(&formula_text, config.reading).map_err(|e| field("formula", e))?;
    let grid_spec = config.grid.clone().unwrap_or_else(|| system.default_grid());
    if grid_spec.dim() != system.theta_dim() {
        return Err(field(
            "grid",
            Error::DimensionMismatch { expected: system.theta_dim(), got: grid_spec.dim() },
        ));
    }
    let grid =
        build_grid(&grid_spec, config.grid_limit.unwrap_or(DEFAULT_GRID_LIMIT)).map_err(|e| field("grid", e))?;
    let integrator = config.integrator.unwrap_or_else(|| system.default_integrator());
    integrator.validate().map_err(|e| field("integrator", e))?;
    if formula.horizon() > integrator.t_final + 1e-9 {
        return Err(field(
            "formula",
            Error::InvalidConfig(format!(
                "horizon {} exceeds integrator t_final {}",
                formula.horizon(),
                integrator.t_final
            )),
        ));
    }
    config.sampler.validate().map_err(|e| field("sampler", e))?;
    config.svm.validate().map_err(|e| field("svm", e))?;
    if config.sampler.budget() > grid.len() {
        return Err(field(
            "sampler",
            Error::EmptyPool { requested: config.sampler.budget(), available: grid.len() },
        ));
    }
    if config.replicates == 0 {
        return Err(field("replicates", Error::InvalidConfig("must be >= 1".into())));
    }
    if let Some(k) = config.estimators.kfold {
        if k < 2 {
            return Err(field("estimators", Error::TooFewPoints { needed: 2, got: k }));
        }
    }
    let name = config.name.clone().unwrap_or_else(|| stem.to_string());
    let output = config.output.clone().unwrap_or_else(|| PathBuf::from("results").join(&name));
    Ok(Prepared { config, name, system, formula, grid, integrator, output })
}

// ─── run ─────────────────────────────────────────────────────────────

/// Outcome of `run`, as written to disk.
#[derive(Clone, Debug)]
pub struct RunBundle {
    pub output: PathBuf,
    pub seeds: Vec<u64>,
    pub runs: Vec<ExperimentRun>,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Per-iteration CSV of one replicate.
pub fn iterations_csv(run: &ExperimentRun) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::runtime("writing CSV", e);
    w.write_record(ITERATION_COLUMNS).map_err(csv_err)?;
    for r in &run.reports {
        w.write_record([
            r.iteration.to_string(),
            r.labeled.to_string(),
            r.retrains.to_string(),
            fmt_opt(r.error.map(|e| e.total())),
            fmt_opt(r.error.map(|e| e.unsafe_rate())),
            fmt_opt(r.error.map(|e| e.safe_rate())),
            fmt_opt(r.kfold),
            fmt_opt(r.validation),
        ])
        .map_err(csv_err)?;
    }
    let body = w.into_inner().map_err(|e| CliError::runtime("writing CSV", e))?;
    Ok(format!("{ITERATIONS_SCHEMA} seed={}\n{}", run.seed, String::from_utf8_lossy(&body)))
}

/// Parses the iteration and total-error columns of a per-replicate CSV.
pub fn read_iterations_csv(text: &str) -> Result<Vec<(usize, Option<f64>)>, CliError> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let bad = |m: String| CliError::Runtime(format!("malformed iterations CSV: {m}"));
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name).ok_or_else(|| bad(format!("missing column {name}")));
    let (it_col, err_col) = (col("iteration")?, col("total_error")?);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let it = rec[it_col].parse().map_err(|e| bad(format!("iteration: {e}")))?;
        let err = match &rec[err_col] {
            "" => None,
            v => Some(v.parse().map_err(|e| bad(format!("total_error: {e}")))?),
        };
        rows.push((it, err));
    }
    Ok(rows)
}

fn two_column_csv(schema: &str, header: [&str; 3], rows: impl Iterator<Item = [String; 3]>) -> String {
    let mut s = format!("{schema}\n{}\n", header.join(","));
    for r in rows {
        let _ = writeln!(s, "{}", r.join(","));
    }
    s
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::runtime(parent.display(), e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::runtime(path.display(), e))
}

/// Executes a prepared experiment and writes its result bundle.
pub fn run_experiment(p: &Prepared, log: &dyn Fn(&str)) -> Result<RunBundle, CliError> {
    let cfg = &p.config;
    let truth = if cfg.ground_truth {
        let cache = cfg.cache_dir.clone().unwrap_or_else(|| p.output.join("cache"));
        log(&format!("labelling {} grid points", p.grid.len()));
        let (truth, sims) = GroundTruth::cached(&cache, &p.system, &p.formula, &p.grid, &p.integrator)
            .map_err(|e| CliError::runtime("ground truth", e))?;
        log(&format!("ground truth ready ({sims} simulations, {:.2}% unsafe)", 100.0 * truth.unsafe_fraction()));
        Some(truth)
    } else {
        None
    };
    let sim_oracle = SimulationOracle { system: &p.system, formula: &p.formula, integrator: p.integrator };
    let oracle: &dyn Oracle = match &truth {
        Some(t) => t,
        None => &sim_oracle,
    };
    let experiment = Experiment {
        grid: &p.grid,
        oracle,
        truth: truth.as_ref(),
        sampler: cfg.sampler,
        svm: cfg.svm,
        estimators: cfg.estimators,
    };
    let seeds = verify::derive_seeds(cfg.seed, cfg.replicates);
    let runs = if seeds.len() == 1 {
        vec![experiment.run(seeds[0]).map_err(|e| CliError::runtime(format!("seed {}", seeds[0]), e))?]
    } else {
        verify::replicate(&seeds, |s| experiment.run(s)).map_err(|e| CliError::runtime("replicates", e))?.0
    };
    let curves: Vec<Vec<f64>> = runs.iter().map(ExperimentRun::error_curve).collect();
    let agg = verify::aggregate(&curves).map_err(|e| CliError::runtime("aggregate", e))?;

    let out = &p.output;
    let mut timing = format!("{TIMING_SCHEMA}\nreplicate,seed,iteration,retrain_ms\n");
    let mut finals = Vec::new();
    for (k, run) in runs.iter().enumerate() {
        write_file(&out.join(format!("runs/seed-{k:02}.csv")), iterations_csv(run)?)?;
        write_file(&out.join(format!("models/seed-{k:02}.svm")), run.model.to_text())?;
        for r in &run.reports {
            let _ = writeln!(timing, "{k},{},{},{:.3}", run.seed, r.iteration, r.retrain_time.as_secs_f64() * 1e3);
        }
        let last = run.final_report();
        finals.push(serde_json::json!({
            "replicate": k,
            "seed": run.seed,
            "labeled": last.labeled,
            "retrains": last.retrains,
            "oracle_calls": run.oracle_calls,
            "error": last.error,
        }));
    }
    write_file(
        &out.join("summary.csv"),
        two_column_csv(
            SUMMARY_SCHEMA,
            ["iteration", "mean_error", "sigma"],
            agg.mean.iter().zip(&agg.sigma).enumerate().map(|(i, (m, s))| [i.to_string(), m.to_string(), s.to_string()]),
        ),
    )?;
    write_file(&out.join("timing.csv"), timing)?;
    let meta = serde_json::json!({
        "format": "clverify run v1",
        "name": p.name,
        "config": cfg,
        "formula": p.formula.to_string(),
        "grid_points": p.grid.len(),
        "unsafe_fraction": truth.as_ref().map(GroundTruth::unsafe_fraction),
        "seeds": seeds,
        "final": finals,
    });
    let meta_text = serde_json::to_string_pretty(&meta).map_err(|e| CliError::runtime("run.json", e))?;
    write_file(&out.join("run.json"), meta_text + "\n")?;
    if cfg.svg && truth.is_some() {
        write_file(&out.join("errors.svg"), svg_chart(&[(p.name.clone(), agg.mean.clone(), agg.sigma.clone())]))?;
    }
    Ok(RunBundle { output: out.clone(), seeds, runs, mean: agg.mean, sigma: agg.sigma })
}

// ─── compare ─────────────────────────────────────────────────────────

/// Mean and σ of one family's error curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Family {
    pub name: String,
    pub mean: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Reads every replicate CSV of a result bundle.
pub fn load_family(dir: &Path) -> Result<Family, CliError> {
    let meta_path = dir.join("run.json");
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(&meta_path).map_err(|e| CliError::runtime(meta_path.display(), e))?,
    )
    .map_err(|e| CliError::runtime(meta_path.display(), e))?;
    let name = meta["name"].as_str().map(str::to_string).unwrap_or_else(|| dir.display().to_string());
    let runs_dir = dir.join("runs");
    let mut files: Vec<PathBuf> = std::fs::read_dir(&runs_dir)
        .map_err(|e| CliError::runtime(runs_dir.display(), e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    let mut curves = Vec::new();
    for f in &files {
        let text = std::fs::read_to_string(f).map_err(|e| CliError::runtime(f.display(), e))?;
        let rows = read_iterations_csv(&text)?;
        let curve: Option<Vec<f64>> = rows.iter().map(|(_, e)| *e).collect();
        curves.push(curve.ok_or_else(|| {
            CliError::Runtime(format!("{}: run has no true-error column values", f.display()))
        })?);
    }
    if curves.is_empty() {
        return Err(CliError::Runtime(format!("{}: no replicate CSVs", runs_dir.display())));
    }
    let agg = verify::aggregate(&curves).map_err(|e| CliError::runtime(dir.display(), e))?;
    Ok(Family { name, mean: agg.mean, sigma: agg.sigma })
}

/// Long-format table `family,iteration,mean_error,sigma`.
pub fn compare(dirs: &[PathBuf]) -> Result<(String, Vec<Family>), CliError> {
    if dirs.len() < 2 {
        return Err(CliError::Runtime(
            Error::IncompatibleRuns(format!("need at least two run directories, got {}", dirs.len())).to_string(),
        ));
    }
    let families = dirs.iter().map(|d| load_family(d)).collect::<Result<Vec<_>, _>>()?;
    let counts: Vec<usize> = families.iter().map(|f| f.mean.len()).collect();
    if counts.windows(2).any(|w| w[0] != w[1]) {
        let listing: Vec<String> = families.iter().map(|f| format!("{}={}", f.name, f.mean.len())).collect();
        return Err(CliError::Runtime(
            Error::IncompatibleRuns(format!("iteration counts differ: {}", listing.join(", "))).to_string(),
        ));
    }
    let mut s = format!("{COMPARE_SCHEMA}\nfamily,iteration,mean_error,sigma\n");
    for f in &families {
        for (i, (m, sd)) in f.mean.iter().zip(&f.sigma).enumerate() {
            let _ = writeln!(s, "{},{i},{m},{sd}", f.name);
        }
    }
    Ok((s, families))
}

// ─── SVG ─────────────────────────────────────────────────────────────

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/// Line chart of mean error curves with ±σ bands.
pub fn svg_chart(series: &[(String, Vec<f64>, Vec<f64>)]) -> String {
    let (w, h, ml, mr, mt, mb) = (640.0, 400.0, 60.0, 150.0, 20.0, 40.0);
    let n = series.iter().map(|s| s.1.len()).max().unwrap_or(1).max(2);
    let y_max = series
        .iter()
        .flat_map(|(_, m, s)| m.iter().zip(s).map(|(a, b)| a + b))
        .filter(|v| v.is_finite())
        .fold(0.0_f64, f64::max)
        .max(1e-3)
        * 1.05;
    let px = |i: usize| ml + (w - ml - mr) * i as f64 / (n - 1) as f64;
    let py = |v: f64| mt + (h - mt - mb) * (1.0 - v.clamp(0.0, y_max) / y_max);
    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="11">"#);
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{ml},{mt} V{} H{}" fill="none" stroke="black"/>"#,
        h - mb,
        w - mr
    );
    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{:.1}%</text>"#, ml - 4.0, py(v) + 4.0, 100.0 * v);
    }
    for k in 0..=4 {
        let i = (n - 1) * k / 4;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{i}</text>"#, px(i), h - mb + 15.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">iteration</text>"#, (ml + w - mr) / 2.0, h - 5.0);
    for (k, (name, mean, sigma)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let upper: Vec<String> = mean.iter().zip(sigma).enumerate().map(|(i, (m, sd))| format!("{:.1},{:.1}", px(i), py(m + sd))).collect();
        let lower: Vec<String> =
            mean.iter().zip(sigma).enumerate().rev().map(|(i, (m, sd))| format!("{:.1},{:.1}", px(i), py(m - sd))).collect();
        let _ = writeln!(
            s,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = mean.iter().enumerate().map(|(i, m)| format!("{:.1},{:.1}", px(i), py(*m))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        let ly = mt + 15.0 * (k as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            w - mr + 10.0,
            w - mr + 30.0,
            w - mr + 35.0,
            ly + 4.0,
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

// ─── label ───────────────────────────────────────────────────────────

/// Label of one simulation plus the range of each requirement channel.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelSummary {
    pub label: Label,
    pub diverged: bool,
    pub channels: Vec<(String, f64, f64)>,
}

impl std::fmt::Display for LabelSummary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let word = if self.label.is_safe() { "safe" } else { "unsafe" };
        write!(f, "{} {word}", self.label)?;
        if self.diverged {
            write!(f, " (diverged)")?;
        }
        for (name, lo, hi) in &self.channels {
            write!(f, "\n{name}: min {lo:.6} max {hi:.6}")?;
        }
        Ok(())
    }
}

/// Simulates `theta` and checks the named or written requirement.
pub fn label_one(system: &str, formula: &str, theta: &[f64], reading: Reading) -> crate::Result<LabelSummary> {
    let system = System::by_name(system)?;
    let formula = mtl::resolve(formula, reading)?;
    let traj = system.simulate(theta, &system.default_integrator())?;
    let label = mtl::label(&formula, &traj)?;
    let mut channels = Vec::new();
    for name in formula.channels() {
        if channels.iter().any(|(n, _, _): &(String, f64, f64)| n == name) {
            continue;
        }
        let series = traj.series(name)?;
        let lo = series.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        channels.push((name.to_string(), lo, hi));
    }
    Ok(LabelSummary { label, diverged: traj.diverged(), channels })
}

// ─── Entry point ─────────────────────────────────────────────────────

#[derive(Parser, Debug)]
#[command(name = "clverify", version, about = "Simulation-based closed-loop verification with active learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Maximum number of worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print only data on stdout.
    #[arg(long, global = true)]
    quiet: bool,
    /// Output directory (`run`) or file (`compare`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the experiment described by a config file.
    Run { config: PathBuf },
    /// Merge the error curves of several result bundles.
    Compare { dirs: Vec<PathBuf> },
    /// Simulate and label a single parameter vector.
    #[command(allow_negative_numbers = true)]
    Label {
        system: String,
        formula: String,
        theta: Vec<f64>,
        /// `prose` or `literal` reading of interval requirements.
        #[arg(long, default_value = "prose", value_parser = parse_reading)]
        reading: Reading,
    },
}

fn parse_reading(s: &str) -> Result<Reading, String> {
    match s {
        "prose" => Ok(Reading::Prose),
        "literal" => Ok(Reading::Literal),
        other => Err(format!("unknown reading `{other}` (expected prose or literal)")),
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let quiet = cli.quiet;
    let log = move |msg: &str| {
        if !quiet {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(out) = cli.out {
                cfg.output = Some(out);
            }
            let stem = config.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into());
            let prepared = prepare(cfg, &stem)?;
            let bundle = run_experiment(&prepared, &log)?;
            if !quiet {
                if let (Some(m), Some(s)) = (bundle.mean.last(), bundle.sigma.last()) {
                    println!(
                        "{}: final true error {:.4} ± {:.4} over {} replicate(s); results in {}",
                        prepared.name,
                        m,
                        s,
                        bundle.runs.len(),
                        bundle.output.display()
                    );
                }
            }
            Ok(())
        }
        Command::Compare { dirs } => {
            let (table, families) = compare(&dirs)?;
            match cli.out {
                Some(path) => {
                    write_file(&path, &table)?;
                    let series: Vec<_> = families.into_iter().map(|f| (f.name, f.mean, f.sigma)).collect();
                    write_file(&path.with_extension("svg"), svg_chart(&series))?;
                    log(&format!("wrote {}", path.display()));
                }
                None => print!("{table}"),
            }
            Ok(())
        }
        Command::Label { system, formula, theta, reading } => {
            let summary = label_one(&system, &formula, &theta, reading).map_err(|e| match e {
                Error::DimensionMismatch { .. } | Error::UnknownName { .. } | Error::Parse { .. } => {
                    CliError::config("label", e)
                }
                other => CliError::runtime("label", other),
            })?;
            if quiet {
                println!("{}", summary.label);
            } else {
                println!("{summary}");
            }
            Ok(())
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let jobs = cli.jobs;
    let run = move || dispatch(cli);
    let result = match jobs {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(CliError::runtime("thread pool", e)),
        },
        Some(_) => Err(CliError::Config("--jobs must be >= 1".into())),
        None => run(),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
