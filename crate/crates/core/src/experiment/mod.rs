//! Experiments: every scheduler/allocator pair over one workload, repeated.
//!
//! Each run writes its results and bench files to
//! `<out>/<name>/<dispatcher>/rep<k>/`. Runs share nothing, so they may run
//! in parallel; the report is computed afterwards from the files alone.

mod report;
mod svg;

pub use report::{aggregate, aggregate_dir, render, DispatcherStats, MeanSd, Report, REPORT_FILES};

use std::fs::File;
use std::io::BufReader;
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SystemConfig};
use crate::dispatch::{DispatchOptions, Registry, UnknownDispatcher};
use crate::metrics::tsv::TsvRecorder;
use crate::sim::{LoadHorizon, SimOptions, Simulator, Timing};
use crate::swf::{parse_swf, IngestRules};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("plan {path}: {message}")]
    InvalidPlan { path: String, message: String },
    #[error(transparent)]
    Unknown(#[from] UnknownDispatcher),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("no completed run to report on")]
    NothingToReport,
}

fn invalid(path: &str, message: impl Into<String>) -> ExperimentError {
    ExperimentError::InvalidPlan {
        path: path.to_string(),
        message: message.into(),
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExperimentError + '_ {
    move |source| ExperimentError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn default_repetitions() -> u32 {
    10
}

fn default_parallelism() -> usize {
    1
}

fn default_load_window() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimingMode {
    #[default]
    Measured,
    Disabled,
}

/// What to run. Relative paths are resolved against the plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub workload: PathBuf,
    pub config: PathBuf,
    pub schedulers: Vec<String>,
    pub allocators: Vec<String>,
    #[serde(default = "default_repetitions")]
    pub repetitions: u32,
    #[serde(default)]
    pub seed_base: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_load_window")]
    pub load_window: usize,
    #[serde(default)]
    pub skip_unplaceable: bool,
    /// `disabled` writes zero timings so that runs are byte-reproducible.
    #[serde(default)]
    pub timing: TimingMode,
}

impl ExperimentPlan {
    pub fn new(name: &str, workload: impl Into<PathBuf>, config: impl Into<PathBuf>) -> Self {
        ExperimentPlan {
            name: name.to_string(),
            workload: workload.into(),
            config: config.into(),
            schedulers: Vec::new(),
            allocators: Vec::new(),
            repetitions: default_repetitions(),
            seed_base: 0,
            parallelism: default_parallelism(),
            load_window: default_load_window(),
            skip_unplaceable: false,
            timing: TimingMode::Measured,
        }
    }

    pub fn from_path(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut plan: ExperimentPlan =
            serde_json::from_str(&text).map_err(|e| invalid(&path.display().to_string(), e.to_string()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if plan.workload.is_relative() {
            plan.workload = base.join(&plan.workload);
        }
        if plan.config.is_relative() {
            plan.config = base.join(&plan.config);
        }
        Ok(plan)
    }

    /// Checks the plan and that its input files exist, before any run.
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(invalid("name", "expected a non-empty name without path separators"));
        }
        if self.repetitions == 0 {
            return Err(invalid("repetitions", "must be at least 1"));
        }
        if self.schedulers.is_empty() {
            return Err(invalid("schedulers", "at least one scheduler is required"));
        }
        if self.allocators.is_empty() {
            return Err(invalid("allocators", "at least one allocator is required"));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism", "must be at least 1"));
        }
        for (field, path) in [("workload", &self.workload), ("config", &self.config)] {
            if !path.is_file() {
                return Err(invalid(field, format!("{} does not exist", path.display())));
            }
        }
        Ok(())
    }
}

/// One simulation of the matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub dispatcher: String,
    pub repetition: u32,
    pub seed: u64,
    pub dir: PathBuf,
}

/// The expanded plan.
#[derive(Debug, Clone)]
pub struct RunMatrix {
    pub root: PathBuf,
    /// Dispatcher names in plan order.
    pub dispatchers: Vec<String>,
    pub runs: Vec<RunSpec>,
    pub warnings: Vec<String>,
}

fn dedup(names: &[String], what: &str, warnings: &mut Vec<String>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if out.contains(n) {
            warnings.push(format!("duplicate {what} {n} ignored"));
        } else {
            out.push(n.clone());
        }
    }
    out
}

/// Expands a plan into `|schedulers| * |allocators| * repetitions` runs
/// under `out/<name>`. Repetition `k` uses seed `seed_base + k`.
pub fn expand(plan: &ExperimentPlan, registry: &Registry, out: &Path) -> Result<RunMatrix, ExperimentError> {
    let mut warnings = Vec::new();
    let schedulers = dedup(&plan.schedulers, "scheduler", &mut warnings);
    let allocators = dedup(&plan.allocators, "allocator", &mut warnings);
    let root = out.join(&plan.name);
    let mut dispatchers = Vec::new();
    for s in &schedulers {
        for a in &allocators {
            let name = format!("{s}-{a}");
            let known_s = registry.scheduler_names().any(|n| n == s);
            let known_a = registry.allocator_names().any(|n| n == a);
            if !(known_s && known_a) {
                return Err(UnknownDispatcher {
                    name: if known_s { a.clone() } else { s.clone() },
                    known: registry.names(),
                }
                .into());
            }
            dispatchers.push(name);
        }
    }
    let mut runs = Vec::new();
    for d in &dispatchers {
        for k in 0..plan.repetitions {
            runs.push(RunSpec {
                dispatcher: d.clone(),
                repetition: k,
                seed: plan.seed_base + u64::from(k),
                dir: root.join(d).join(format!("rep{k}")),
            });
        }
    }
    Ok(RunMatrix {
        root,
        dispatchers,
        runs,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed { jobs: u64, wall_ms: u64 },
    Failed(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub spec: RunSpec,
    pub status: RunStatus,
}

impl RunOutcome {
    pub fn is_ok(&self) -> bool {
        matches!(self.status, RunStatus::Completed { .. })
    }
}

fn run_one(plan: &ExperimentPlan, sys: &SystemConfig, registry: &Registry, spec: &RunSpec) -> Result<RunStatus, String> {
    let opts = DispatchOptions {
        skip_unplaceable: plan.skip_unplaceable,
        seed: spec.seed,
    };
    let mut dispatcher = registry.build(&spec.dispatcher, &opts).map_err(|e| e.to_string())?;
    let file = File::open(&plan.workload).map_err(|e| format!("{}: {e}", plan.workload.display()))?;
    let jobs = parse_swf(BufReader::new(file), IngestRules::from_config(sys));
    let mut recorder = TsvRecorder::create(&spec.dir, &spec.dispatcher).map_err(|e| e.to_string())?;
    let sim_opts = SimOptions {
        load: LoadHorizon::Jobs(plan.load_window),
        seed: spec.seed,
        timing: match plan.timing {
            TimingMode::Measured => Timing::Measured,
            TimingMode::Disabled => Timing::Disabled,
        },
        check_invariants: true,
    };
    let summary = Simulator::new(jobs, sys, dispatcher.as_mut(), &mut recorder, sim_opts)
        .run()
        .map_err(|e| e.to_string())?;
    Ok(RunStatus::Completed {
        jobs: summary.jobs_completed,
        wall_ms: summary.report.wall_ms,
    })
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = payload.downcast_ref::<String>() {
        s.clone()
    } else {
        "panic".to_string()
    }
}

/// Runs every simulation of the matrix, up to `plan.parallelism` at once.
///
/// A failing or panicking run is recorded (with an `error.txt` in its
/// directory) and the others continue. Outcomes are in matrix order.
pub fn execute(
    plan: &ExperimentPlan,
    matrix: &RunMatrix,
    registry: &Registry,
) -> Result<Vec<RunOutcome>, ExperimentError> {
    let sys = SystemConfig::from_path(&plan.config)?;
    std::fs::create_dir_all(&matrix.root).map_err(io_err(&matrix.root))?;
    let plan_copy = matrix.root.join("plan.json");
    let mut stored = plan.clone();
    stored.schedulers = dedup(&plan.schedulers, "", &mut Vec::new());
    stored.allocators = dedup(&plan.allocators, "", &mut Vec::new());
    let json = serde_json::to_string_pretty(&stored).expect("plans serialize");
    std::fs::write(&plan_copy, json + "\n").map_err(io_err(&plan_copy))?;

    let one = |spec: &RunSpec| {
        let status = match panic::catch_unwind(AssertUnwindSafe(|| run_one(plan, &sys, registry, spec))) {
            Ok(Ok(status)) => status,
            Ok(Err(msg)) => RunStatus::Failed(msg),
            Err(payload) => RunStatus::Failed(format!("panicked: {}", panic_message(payload))),
        };
        if let RunStatus::Failed(msg) = &status {
            let _ = std::fs::create_dir_all(&spec.dir);
            let _ = std::fs::write(spec.dir.join("error.txt"), format!("{msg}\n"));
        }
        RunOutcome {
            spec: spec.clone(),
            status,
        }
    };

    if plan.parallelism <= 1 {
        return Ok(matrix.runs.iter().map(one).collect());
    }
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.parallelism)
        .build()
        .map_err(|e| invalid("parallelism", e.to_string()))?;
    Ok(pool.install(|| matrix.runs.par_iter().map(one).collect()))
}

/// Everything an experiment produced.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub matrix: RunMatrix,
    pub runs: Vec<RunOutcome>,
    pub report: Option<Report>,
    pub elapsed_ms: u64,
}

impl ExperimentOutcome {
    pub fn failed(&self) -> usize {
        self.runs.iter().filter(|r| !r.is_ok()).count()
    }
}

/// Validates, expands, executes and reports on a plan.
pub fn run_experiment(plan: &ExperimentPlan, registry: &Registry, out: &Path) -> Result<ExperimentOutcome, ExperimentError> {
    let started = Instant::now();
    plan.validate()?;
    let matrix = expand(plan, registry, out)?;
    let runs = execute(plan, &matrix, registry)?;
    let report = if runs.iter().any(RunOutcome::is_ok) {
        let report = aggregate(&matrix.root, &matrix.dispatchers)?;
        render(&report, &matrix.root.join("report"))?;
        Some(report)
    } else {
        None
    };
    Ok(ExperimentOutcome {
        matrix,
        runs,
        report,
        elapsed_ms: started.elapsed().as_millis() as u64,
    })
}
