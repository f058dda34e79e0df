//! Synthetic workloads that mimic a real trace.
//!
//! A [`GeneratorProfile`] is fitted from a real trace. Jobs are then drawn
//! one at a time: the submission time walks the half-hour slot weights of
//! the day, and the job's request and duration come from the trace's
//! serial share, node counts and per-job GFLOP.
//!
//! ```
//! use batchsim::generator::{update_vmax, SLOT_SECONDS};
//!
//! assert_eq!(update_vmax(7200, SLOT_SECONDS, 0.5), 4500);
//! assert_eq!(update_vmax(7200, SLOT_SECONDS, 0.0), SLOT_SECONDS);
//! ```

mod arrival;
mod profile;
mod shape;

pub use arrival::{
    draw_interarrival, next_submit_time, place_submission, progress_ratio, update_vmax, PeriodCounts,
};
pub use profile::{
    fit_profile, hour_of, is_serial, job_gflop, month_of, slot_of, weekday_of, GeneratorProfile,
    SlotWeightModel, SLOTS, SLOT_SECONDS,
};
pub use shape::{duration_for, generate_job_shape, JobKind, JobShape, ShapeLimits};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, SystemConfig};
use crate::job::JobRecord;
use crate::resources::ResourceVector;
use crate::swf::{parse_swf, IngestRules, SwfError, SwfWriter};

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("the trace has no usable jobs")]
    EmptyTrace,
    #[error("degenerate profile: {0}")]
    DegenerateProfile(&'static str),
    #[error("trace is not ordered by submit time at job {0}")]
    Unordered(u64),
    #[error("no request with a positive performance rating could be drawn")]
    NoRatedRequest,
    #[error("generator config {path}: {message}")]
    InvalidConfig { path: String, message: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trace: {0}")]
    Workload(#[from] SwfError),
    #[error("{0}")]
    Io(#[from] io::Error),
}

fn invalid(path: &str, message: impl Into<String>) -> GeneratorError {
    GeneratorError::InvalidConfig {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestLimits {
    pub min: ResourceVector,
    pub max: ResourceVector,
}

fn default_estimate_factor() -> [f64; 2] {
    [1.0, 3.0]
}

/// Generator parameters, read from JSON:
///
/// ```json
/// {
///   "performance": {"core": 1.667},
///   "request_limits": {"min": {"core": 1, "mem": 256}, "max": {"core": 8, "mem": 1024}},
///   "count": 500000,
///   "seed": 0,
///   "estimate_factor": [1.0, 3.0]
/// }
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    /// GFLOPS per unit of each processing resource.
    pub performance: BTreeMap<String, f64>,
    pub request_limits: RequestLimits,
    #[serde(default)]
    pub count: u64,
    #[serde(default)]
    pub seed: u64,
    /// Wall-time estimates are `duration * U[lo, hi]`.
    #[serde(default = "default_estimate_factor")]
    pub estimate_factor: [f64; 2],
}

impl GeneratorConfig {
    pub fn new(performance: BTreeMap<String, f64>, min: ResourceVector, max: ResourceVector) -> Self {
        GeneratorConfig {
            performance,
            request_limits: RequestLimits { min, max },
            count: 0,
            seed: 0,
            estimate_factor: default_estimate_factor(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, GeneratorError> {
        let cfg: GeneratorConfig =
            serde_json::from_str(text).map_err(|e| invalid("$", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| {
            GeneratorError::Config(ConfigError::Io {
                path: path.display().to_string(),
                source,
            })
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), GeneratorError> {
        let RequestLimits { min, max } = &self.request_limits;
        for (kind, lo) in min.iter() {
            if lo > max.get(kind) {
                return Err(invalid(
                    &format!("request_limits.min.{kind}"),
                    format!("{lo} exceeds the maximum {}", max.get(kind)),
                ));
            }
        }
        for (kind, rate) in &self.performance {
            if !(rate.is_finite() && *rate > 0.0) {
                return Err(invalid(&format!("performance.{kind}"), "expected a positive number"));
            }
        }
        if !max.kinds().any(|k| self.performance.contains_key(k)) {
            return Err(invalid(
                "performance",
                "no resource in request_limits.max has a performance rating",
            ));
        }
        let [lo, hi] = self.estimate_factor;
        if !(lo >= 1.0 && hi >= lo && hi.is_finite()) {
            return Err(invalid("estimate_factor", "expected 1 <= lo <= hi"));
        }
        Ok(())
    }

    /// Request limits clamped to what one node of `sys` can hold. Returns
    /// the limits and a note for every clamped bound.
    pub fn shape_limits(&self, sys: &SystemConfig, rules: &IngestRules) -> (ShapeLimits, Vec<String>) {
        let mut notes = Vec::new();
        let mut min = ResourceVector::new();
        let mut max = ResourceVector::new();
        for (kind, hi) in self.request_limits.max.iter() {
            let largest = sys.groups.iter().map(|g| g.capacity.get(kind)).max().unwrap_or(0);
            if hi > largest {
                notes.push(format!("max {kind} clamped from {hi} to node capacity {largest}"));
            }
            let hi = hi.min(largest);
            let lo = self.request_limits.min.get(kind).min(hi);
            max.set(kind, hi);
            min.set(kind, lo);
        }
        let max_nodes = sys
            .groups
            .iter()
            .filter(|g| g.capacity.get(&rules.processor.resource) > 0)
            .map(|g| g.count)
            .sum::<u64>()
            .clamp(1, u64::from(u32::MAX)) as u32;
        (
            ShapeLimits {
                min,
                max,
                processor: rules.processor.resource.clone(),
                processor_unit: rules.processor.multiplier,
                max_nodes,
            },
            notes,
        )
    }
}

/// Streams generated jobs with ids `1..=count`.
pub struct Generator<'a> {
    profile: &'a GeneratorProfile,
    cfg: &'a GeneratorConfig,
    limits: ShapeLimits,
    rules: IngestRules,
    rng: ChaCha8Rng,
    counts: PeriodCounts,
    prev_submit: u64,
    next_id: u64,
    target: u64,
}

impl<'a> Generator<'a> {
    pub fn new(profile: &'a GeneratorProfile, sys: &SystemConfig, cfg: &'a GeneratorConfig) -> Self {
        let rules = IngestRules::from_config(sys);
        let (limits, _) = cfg.shape_limits(sys, &rules);
        Generator {
            profile,
            cfg,
            limits,
            rules,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            counts: PeriodCounts::default(),
            prev_submit: profile.first_submit,
            next_id: 1,
            target: cfg.count,
        }
    }

    fn next_job(&mut self) -> Result<JobRecord, GeneratorError> {
        let pr = progress_ratio(&self.counts, self.target, self.profile);
        let v_max = update_vmax(self.profile.v_max0, SLOT_SECONDS, pr).min(self.profile.v_max0);
        let submit = next_submit_time(self.prev_submit, v_max, self.profile, &mut self.rng)?;
        let shape = generate_job_shape(
            self.profile,
            &self.limits,
            &self.cfg.performance,
            &self.rules,
            &mut self.rng,
        )?;
        let [lo, hi] = self.cfg.estimate_factor;
        let factor = if hi > lo { self.rng.gen_range(lo..=hi) } else { lo };
        let estimate = ((shape.duration as f64 * factor).ceil() as u64).max(shape.duration);

        self.counts.record(self.profile.epoch + submit as i64);
        self.prev_submit = submit;
        let mut job = JobRecord::new(
            self.next_id,
            submit,
            shape.duration,
            shape.requested_nodes,
            shape.per_node_request,
        )
        .with_estimate(estimate);
        job.queue_id = 1;
        self.next_id += 1;
        Ok(job)
    }
}

impl Iterator for Generator<'_> {
    type Item = Result<JobRecord, GeneratorError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next_id > self.target {
            return None;
        }
        let job = self.next_job();
        if job.is_err() {
            self.target = 0;
        }
        Some(job)
    }
}

/// `UnixStartTime` from the comment header of an SWF stream, if present.
pub fn swf_unix_start_time<R: BufRead>(source: R) -> io::Result<Option<i64>> {
    for line in source.lines() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        let Some(body) = text.strip_prefix(';') else {
            break;
        };
        if let Some((key, value)) = body.split_once(':') {
            if key.trim().eq_ignore_ascii_case("UnixStartTime") {
                return Ok(value.trim().parse().ok());
            }
        }
    }
    Ok(None)
}

/// Fits a profile from an SWF file. The epoch comes from the file's
/// `UnixStartTime` header, or else from the system configuration.
pub fn fit_profile_from_swf(
    path: &Path,
    sys: &SystemConfig,
    performance: &BTreeMap<String, f64>,
) -> Result<GeneratorProfile, GeneratorError> {
    let epoch = swf_unix_start_time(BufReader::new(File::open(path)?))?.unwrap_or(sys.start_time);
    let rules = IngestRules::from_config(sys);
    let reader = parse_swf(BufReader::new(File::open(path)?), rules.clone());
    fit_profile(reader, epoch, &rules, performance)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GenerationReport {
    pub jobs: u64,
    pub notes: Vec<String>,
}

/// Generates `cfg.count` jobs from `profile` and writes them as SWF.
pub fn generate<W: Write>(
    profile: &GeneratorProfile,
    sys: &SystemConfig,
    cfg: &GeneratorConfig,
    sink: W,
) -> Result<GenerationReport, GeneratorError> {
    cfg.validate()?;
    let rules = IngestRules::from_config(sys);
    let (_, mut notes) = cfg.shape_limits(sys, &rules);
    if profile.flop_excluded > 0 {
        notes.push(format!(
            "{} trace jobs without a performance rating left out of the GFLOP samples",
            profile.flop_excluded
        ));
    }
    let provenance = vec![
        format!("UnixStartTime: {}", profile.epoch),
        format!("Note: synthetic workload of {} jobs, seed {}", cfg.count, cfg.seed),
    ];
    let mut writer = SwfWriter::new(sink, rules, &provenance)?;
    for job in Generator::new(profile, sys, cfg) {
        writer.write_job(&job?)?;
    }
    let jobs = writer.lines();
    writer.finish()?;
    Ok(GenerationReport { jobs, notes })
}
