//! The `qcseis` command line.
//!
//! Exit codes: 0 success, 1 self-test failure, 2 bad flags or config,
//! 3 I/O or file-format failure, 4 training divergence, 5 checkpoint/data mismatch.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::models::NetConfig;
use crate::objectives::{amplitude_spectrum, fk_spectrum, EvalReport, SampleMetrics};
use crate::seisdata::{build_dataset, read_seis, DatasetSpec, DegradationSpec, GatherSpec, SeisError, SeisFile, Task, SPLITS};
use crate::selftest;
use crate::trainer::{Family, Session, TrainConfig, TrainError};

/// Environment variable that replaces every seed in a run config.
pub const SEED_ENV: &str = "QCSEIS_SEED";

pub mod exit {
    pub const OK: i32 = 0;
    pub const SELFTEST: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const DIVERGED: i32 = 4;
    pub const MISMATCH: i32 = 5;
}

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<SeisError> for CliError {
    fn from(e: SeisError) -> Self {
        let code = match e {
            SeisError::Param(_) | SeisError::Retries(_) => exit::USAGE,
            SeisError::Io { .. } | SeisError::Format(_) => exit::IO,
        };
        Self::new(code, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Config(_) | TrainError::Model(_) | TrainError::Tensor(_) => exit::USAGE,
            TrainError::Diverged { .. } => exit::DIVERGED,
            TrainError::Mismatch(_) => exit::MISMATCH,
            TrainError::Checkpoint(_) | TrainError::Io { .. } => exit::IO,
            TrainError::Data(SeisError::Param(_) | SeisError::Retries(_)) => exit::USAGE,
            TrainError::Data(_) => exit::IO,
        };
        Self::new(code, e.to_string())
    }
}

type CliResult<T> = Result<T, CliError>;

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(exit::IO, format!("I/O error on {}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(name = "qcseis", version, about = "Quantum-classical seismic restoration")]
struct Cli {
    /// Cap on quantum-layer threads (0 = all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write train/val/test SEIS files and a dataset.json sidecar.
    GenData(GenDataArgs),
    /// Train from a run config.
    Train(TrainArgs),
    /// Score a checkpoint on a SEIS file.
    Eval(EvalArgs),
    /// Run the verification suite.
    Selftest(SelftestArgs),
}

#[derive(Debug, Args)]
struct GenDataArgs {
    #[arg(long, value_parser = parse_task)]
    task: Task,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 64)]
    height: usize,
    #[arg(long, default_value_t = 64)]
    width: usize,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Checkpoint to continue from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Output directory; defaults to the directory holding the config.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, required_unless_present = "identity", conflicts_with = "identity")]
    checkpoint: Option<PathBuf>,
    /// Score the network input itself instead of a checkpoint.
    #[arg(long)]
    identity: bool,
    /// Feed the clean targets as input.
    #[arg(long)]
    clean: bool,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    /// Directory for per-sample amplitude-spectrum and F-K CSVs.
    #[arg(long)]
    spectra: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SelftestArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_task(s: &str) -> Result<Task, String> {
    s.parse::<Task>().map_err(|_| {
        let names: Vec<_> = Task::ALL.iter().map(|t| t.name()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

/// Dataset location plus the spec used to (re)generate it when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub dir: PathBuf,
    pub degradation: DegradationSpec,
    pub gather: GatherSpec,
    pub n_patches: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self::from_spec(PathBuf::from("data"), DatasetSpec::default())
    }
}

impl DataConfig {
    pub fn from_spec(dir: PathBuf, spec: DatasetSpec) -> Self {
        Self {
            dir,
            degradation: spec.degradation,
            gather: spec.gather,
            n_patches: spec.n_patches,
        }
    }

    pub fn spec(&self) -> DatasetSpec {
        DatasetSpec {
            degradation: self.degradation.clone(),
            gather: self.gather.clone(),
            n_patches: self.n_patches,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Test-split report written after training.
    pub report: Option<PathBuf>,
    pub spectra_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: NetConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::new(exit::USAGE, format!("config: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn family(&self) -> Family {
        Family::for_task(self.data.degradation.task)
    }

    /// Replaces the data, model and training seeds.
    pub fn override_seed(&mut self, seed: u64) {
        self.data.degradation.seed = seed;
        self.model.seed = seed;
        self.train.seed = seed;
    }

    pub fn validate(&self) -> CliResult<()> {
        self.data.spec().validate()?;
        self.train.validate()?;
        if (self.model.height, self.model.width) != (self.data.gather.t, self.data.gather.s) {
            return Err(CliError::new(
                exit::USAGE,
                format!(
                    "model expects {}x{} patches but data produces {}x{}",
                    self.model.height, self.model.width, self.data.gather.t, self.data.gather.s
                ),
            ));
        }
        Ok(())
    }
}

fn env_seed() -> CliResult<Option<u64>> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| CliError::new(exit::USAGE, format!("{SEED_ENV}={v:?} is not an unsigned integer"))),
        Err(_) => Ok(None),
    }
}

/// Parses `args` (program name first) and runs the command, writing summaries
/// to `out` and diagnostics to `err`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { exit::OK };
            let text = e.render().to_string();
            let _ = if code == exit::OK { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(a) => gen_data(a, out),
        Command::Train(a) => train(a, cli.workers, out, err),
        Command::Eval(a) => eval(a, cli.workers, out),
        Command::Selftest(a) => run_selftest(a, out),
    };
    match result {
        Ok(()) => exit::OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code
        }
    }
}

fn put(out: &mut dyn Write, line: impl AsRef<str>) -> CliResult<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| CliError::new(exit::IO, format!("stdout: {e}")))
}

fn gen_data(a: GenDataArgs, out: &mut dyn Write) -> CliResult<()> {
    let seed = match a.seed {
        Some(s) => s,
        None => env_seed()?.unwrap_or(0),
    };
    let spec = DatasetSpec::for_task(a.task, a.n, a.height, a.width, seed);
    let summary = build_dataset(&spec, &a.out)?;
    let mut line = format!("task={} dir={}", a.task, a.out.display());
    for (k, name) in SPLITS.iter().enumerate() {
        let _ = write!(line, " {name}={} {name}_bytes={}", summary.counts[k], summary.bytes[k]);
    }
    put(out, line)
}

fn load_split(dir: &Path, name: &str) -> CliResult<SeisFile> {
    Ok(read_seis(&dir.join(format!("{name}.seis")))?)
}

/// Reads the dataset, generating it first if `train.seis` is missing.
fn ensure_data(cfg: &DataConfig, err: &mut dyn Write) -> CliResult<[SeisFile; 3]> {
    if !cfg.dir.join("train.seis").exists() {
        let _ = writeln!(err, "generating dataset in {}", cfg.dir.display());
        build_dataset(&cfg.spec(), &cfg.dir)?;
    }
    Ok([load_split(&cfg.dir, "train")?, load_split(&cfg.dir, "val")?, load_split(&cfg.dir, "test")?])
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| io_error(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| io_error(path, e))
}

fn train(a: TrainArgs, workers: Option<usize>, out: &mut dyn Write, err: &mut dyn Write) -> CliResult<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(seed) = env_seed()? {
        cfg.override_seed(seed);
    }
    if let Some(w) = workers {
        cfg.train.workers = w;
    }
    cfg.validate()?;
    let out_dir = a
        .out
        .clone()
        .unwrap_or_else(|| a.config.parent().map(Path::to_path_buf).unwrap_or_default());
    write_file(&out_dir.join("config.json"), cfg.to_json().as_bytes())?;

    let [train_set, val_set, test_set] = ensure_data(&cfg.data, err)?;
    let family = cfg.family();
    let mut session = match &a.resume {
        Some(path) => {
            let mut s = Session::load(path, Some(&cfg.model))?;
            if s.family != family {
                return Err(CliError::new(exit::MISMATCH, format!("checkpoint holds a {:?} model, config asks for {family:?}", s.family)));
            }
            let comparable = |t: &TrainConfig| TrainConfig {
                epochs: 0,
                workers: 0,
                checkpoint_every: 0,
                ..t.clone()
            };
            if comparable(&s.train) != comparable(&cfg.train) {
                return Err(CliError::new(exit::USAGE, "training settings differ from the resumed checkpoint"));
            }
            s.train.epochs = cfg.train.epochs;
            s.train.checkpoint_every = cfg.train.checkpoint_every;
            s.set_workers(cfg.train.workers);
            let _ = writeln!(err, "resuming {} at epoch {}", path.display(), s.epoch);
            s
        }
        None => Session::new(family, &cfg.model, &cfg.train)?,
    };
    let val = (!val_set.is_empty()).then_some(&val_set);
    let mut lines = Vec::new();
    session.fit(&train_set, val, Some(&out_dir), |st| {
        for r in std::iter::once(&st.train).chain(st.val.as_ref()) {
            lines.push(format!("epoch={} split={} mae={:.6} rmse={:.6}", r.epoch, r.split, r.mae, r.rmse));
        }
    })?;
    for l in &lines {
        put(out, l)?;
    }
    if let Some(report) = &cfg.eval.report {
        let report = out_dir.join(report);
        let spectra = cfg.eval.spectra_dir.as_ref().map(|d| out_dir.join(d));
        let preds = session.predict_file(&test_set)?;
        write_report(&test_set, &preds, &report, spectra.as_deref())?;
    }
    let best = session.best_mae.map(|v| format!("{v:.6}")).unwrap_or_default();
    put(out, format!("epochs={} best_mae={best} out={}", session.epoch, out_dir.display()))
}

/// Per-sample and mean metrics of `preds` against the targets of `data`.
pub fn score(data: &SeisFile, preds: &[Vec<f32>]) -> CliResult<EvalReport> {
    let mut report = EvalReport::new(data.task.name());
    for (p, y) in data.patches.iter().zip(preds) {
        let m = SampleMetrics::compute(&p.target, y).map_err(|e| CliError::new(exit::MISMATCH, e.to_string()))?;
        report.samples.push(m);
    }
    Ok(report)
}

fn write_report(data: &SeisFile, preds: &[Vec<f32>], path: &Path, spectra: Option<&Path>) -> CliResult<EvalReport> {
    let report = score(data, preds)?;
    let mut buf = Vec::new();
    report.write_csv(&mut buf).expect("writing to memory");
    write_file(path, &buf)?;
    if let Some(dir) = spectra {
        for (i, pred) in preds.iter().enumerate() {
            write_file(&dir.join(format!("spectrum_{i}.csv")), spectrum_csv(data, i, pred).as_bytes())?;
            write_file(&dir.join(format!("fk_{i}.csv")), fk_csv(data, pred).as_bytes())?;
        }
    }
    Ok(report)
}

fn mean_spectrum(data: &SeisFile, patch: &[f32]) -> (Vec<f64>, Vec<f64>) {
    let mut freqs = Vec::new();
    let mut acc: Vec<f64> = Vec::new();
    for j in 0..data.s {
        let tr: Vec<f64> = (0..data.t).map(|i| patch[i * data.s + j] as f64).collect();
        let (f, m) = amplitude_spectrum(&tr, data.dt);
        if acc.is_empty() {
            acc = vec![0.0; m.len()];
            freqs = f;
        }
        acc.iter_mut().zip(&m).for_each(|(a, v)| *a += v / data.s as f64);
    }
    (freqs, acc)
}

/// Trace-averaged amplitude spectra of target, input and prediction.
fn spectrum_csv(data: &SeisFile, i: usize, pred: &[f32]) -> String {
    let (f, t) = mean_spectrum(data, &data.patches[i].target);
    let (_, d) = mean_spectrum(data, &data.patches[i].degraded);
    let (_, p) = mean_spectrum(data, pred);
    let mut s = String::from("frequency_hz,target,input,prediction\n");
    for k in 0..f.len() {
        let _ = writeln!(s, "{},{},{},{}", f[k], t[k], d[k], p[k]);
    }
    s
}

fn fk_csv(data: &SeisFile, pred: &[f32]) -> String {
    let patch: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
    let fk = fk_spectrum(&patch, data.t, data.s, data.dt, data.dx);
    let mut s = String::from("frequency_hz,wavenumber_per_m,magnitude_db\n");
    let nk = fk.wavenumbers.len();
    for (i, f) in fk.frequencies.iter().enumerate() {
        for (j, k) in fk.wavenumbers.iter().enumerate() {
            let _ = writeln!(s, "{f},{k},{}", fk.magnitude_db[i * nk + j]);
        }
    }
    s
}

fn eval(a: EvalArgs, workers: Option<usize>, out: &mut dyn Write) -> CliResult<()> {
    let mut data = read_seis(&a.data)?;
    if a.clean {
        for p in &mut data.patches {
            p.degraded.clone_from(&p.target);
        }
    }
    let preds = match &a.checkpoint {
        Some(path) => {
            let mut s = Session::load(path, None)?;
            if let Some(w) = workers {
                s.set_workers(w);
            }
            s.check_data(&data)?;
            s.predict_file(&data)?
        }
        None => data.patches.iter().map(|p| p.degraded.clone()).collect(),
    };
    let report = write_report(&data, &preds, &a.report, a.spectra.as_deref())?;
    let m = report.aggregate().unwrap_or(SampleMetrics {
        mae: f64::NAN,
        rmse: f64::NAN,
        psnr_db: f64::NAN,
        ssim: f64::NAN,
    });
    put(
        out,
        format!(
            "samples={} mae={:.6} rmse={:.6} psnr_db={} ssim={:.6} report={}",
            report.len(),
            m.mae,
            m.rmse,
            m.psnr_db,
            m.ssim,
            a.report.display()
        ),
    )
}

fn run_selftest(a: SelftestArgs, out: &mut dyn Write) -> CliResult<()> {
    let (mut checks, readings) = selftest::run_all(a.seed);
    let mutant = selftest::unitarity(a.seed, 1000, &selftest::perturbed_ry(1e-3));
    checks.push(selftest::Check {
        name: "mutation (perturbed Ry)",
        passed: !mutant.passed,
        detail: format!("unitarity check on a perturbed gate {}: {}", if mutant.passed { "passed" } else { "failed" }, mutant.detail),
        seconds: mutant.seconds,
    });
    for c in &checks {
        put(out, format!("{} {} ({:.2}s): {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail))?;
    }
    put(out, "rmse,psnr_db,max_20log10,max_10log10,max_10ln")?;
    for r in &readings {
        put(
            out,
            format!(
                "{},{},{:.4},{:.4},{:.4}",
                r.rmse, r.psnr_db, r.max_amplitude_20log10, r.max_literal_log10, r.max_literal_ln
            ),
        )?;
    }
    match checks.iter().find(|c| !c.passed) {
        Some(c) => Err(CliError::new(exit::SELFTEST, format!("self-test failed at: {}", c.name))),
        None => put(out, format!("all {} checks passed", checks.len())),
    }
}
