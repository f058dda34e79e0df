use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Datelike};

use super::GeneratorError;
use crate::job::JobRecord;
use crate::swf::{IngestRules, SwfError};

pub const SLOTS: usize = 48;
pub const SLOT_SECONDS: u64 = 1800;

/// Index of the half-hour slot of the day that holds `abs_time`.
pub fn slot_of(abs_time: i64) -> usize {
    (abs_time.rem_euclid(86_400) / SLOT_SECONDS as i64) as usize
}

pub fn hour_of(abs_time: i64) -> usize {
    (abs_time.rem_euclid(86_400) / 3600) as usize
}

/// Day of the week, Monday = 0.
pub fn weekday_of(abs_time: i64) -> usize {
    datetime(abs_time).weekday().num_days_from_monday() as usize
}

/// Month of the year, January = 0.
pub fn month_of(abs_time: i64) -> usize {
    datetime(abs_time).month0() as usize
}

fn datetime(abs_time: i64) -> DateTime<chrono::Utc> {
    DateTime::from_timestamp(abs_time, 0).unwrap_or(DateTime::UNIX_EPOCH)
}

/// Share of submissions falling in each half-hour slot of the day.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotWeightModel {
    weights: Vec<f64>,
}

impl SlotWeightModel {
    pub fn from_counts(counts: &[u64; SLOTS]) -> Result<Self, GeneratorError> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(GeneratorError::DegenerateProfile("every slot weight is zero"));
        }
        Ok(SlotWeightModel {
            weights: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        })
    }

    pub fn uniform() -> Self {
        SlotWeightModel {
            weights: vec![1.0 / SLOTS as f64; SLOTS],
        }
    }

    /// Weights that need not come from counts. They are normalized.
    pub fn from_weights(weights: [f64; SLOTS]) -> Result<Self, GeneratorError> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(GeneratorError::DegenerateProfile("every slot weight is zero"));
        }
        Ok(SlotWeightModel {
            weights: weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, slot: usize) -> f64 {
        self.weights[slot % SLOTS]
    }
}

/// Statistics of a real trace that drive generation.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorProfile {
    pub slot_model: SlotWeightModel,
    /// Consecutive submit-time gaps in seconds, ascending.
    pub interarrival_samples: Vec<u64>,
    /// Upper bound of the interarrival draw: the largest gap in the trace,
    /// and never less than one slot.
    pub v_max0: u64,
    /// Converts seconds into slot-weight units. Defaults to
    /// `1 / (SLOT_SECONDS * SLOTS)`, one day per unit of total weight.
    pub v_units_per_second: f64,
    pub hourly: [f64; 24],
    pub daily: [f64; 7],
    pub monthly: [f64; 12],
    pub has_months: bool,
    pub serial_fraction: f64,
    /// Node counts of the parallel jobs.
    pub node_counts: Vec<u32>,
    /// Per-job GFLOP, ascending.
    pub flop_samples: Vec<f64>,
    /// Jobs left out of `flop_samples` because their request has no
    /// performance rating.
    pub flop_excluded: u64,
    /// Absolute time of trace second zero.
    pub epoch: i64,
    /// First submit time of the trace, relative to `epoch`.
    pub first_submit: u64,
    pub jobs: u64,
}

/// Theoretical GFLOP of a job: `duration * dot(per_node, performance) * nodes`.
pub fn job_gflop(job: &JobRecord, performance: &BTreeMap<String, f64>) -> f64 {
    job.duration as f64 * job.per_node_request.dot(performance) * f64::from(job.requested_nodes)
}

/// A job that uses at most one processor's worth of the processor resource
/// on one node.
pub fn is_serial(job: &JobRecord, rules: &IngestRules) -> bool {
    job.requested_nodes == 1
        && job.per_node_request.get(&rules.processor.resource) <= rules.processor.multiplier
}

fn ratios<const N: usize>(counts: &[u64; N], total: u64) -> [f64; N] {
    let mut out = [0.0; N];
    for (o, &c) in out.iter_mut().zip(counts) {
        *o = c as f64 / total as f64;
    }
    out
}

/// Fits a profile from a submit-ordered job stream in one pass.
///
/// `epoch` is the absolute time of trace second zero, used to place jobs in
/// slots, hours, weekdays and months (UTC).
pub fn fit_profile<I>(
    trace: I,
    epoch: i64,
    rules: &IngestRules,
    performance: &BTreeMap<String, f64>,
) -> Result<GeneratorProfile, GeneratorError>
where
    I: IntoIterator<Item = Result<JobRecord, SwfError>>,
{
    let mut slots = [0u64; SLOTS];
    let mut hours = [0u64; 24];
    let mut days = [0u64; 7];
    let mut months = [0u64; 12];
    let mut seen_months = BTreeSet::new();
    let mut gaps = Vec::new();
    let mut node_counts = Vec::new();
    let mut flops = Vec::new();
    let mut flop_excluded = 0;
    let mut serial = 0u64;
    let mut jobs = 0u64;
    let mut prev: Option<u64> = None;
    let mut first_submit = 0;

    for job in trace {
        let job = job?;
        if let Some(p) = prev {
            if job.submit_time < p {
                return Err(GeneratorError::Unordered(job.job_id));
            }
            gaps.push(job.submit_time - p);
        } else {
            first_submit = job.submit_time;
        }
        prev = Some(job.submit_time);
        jobs += 1;

        let abs = epoch + job.submit_time as i64;
        slots[slot_of(abs)] += 1;
        hours[hour_of(abs)] += 1;
        days[weekday_of(abs)] += 1;
        let dt = datetime(abs);
        months[dt.month0() as usize] += 1;
        seen_months.insert((dt.year(), dt.month0()));

        if is_serial(&job, rules) {
            serial += 1;
        } else {
            node_counts.push(job.requested_nodes);
        }
        let gflop = job_gflop(&job, performance);
        if gflop > 0.0 {
            flops.push(gflop);
        } else {
            flop_excluded += 1;
        }
    }
    if jobs == 0 {
        return Err(GeneratorError::EmptyTrace);
    }
    if flops.is_empty() {
        return Err(GeneratorError::DegenerateProfile(
            "no job has a positive performance rating",
        ));
    }
    if gaps.is_empty() {
        gaps.push(SLOT_SECONDS);
    }
    gaps.sort_unstable();
    flops.sort_by(f64::total_cmp);
    let v_max0 = gaps[gaps.len() - 1].max(SLOT_SECONDS);

    Ok(GeneratorProfile {
        slot_model: SlotWeightModel::from_counts(&slots)?,
        interarrival_samples: gaps,
        v_max0,
        v_units_per_second: 1.0 / (SLOT_SECONDS as f64 * SLOTS as f64),
        hourly: ratios(&hours, jobs),
        daily: ratios(&days, jobs),
        monthly: ratios(&months, jobs),
        has_months: seen_months.len() >= 2,
        serial_fraction: serial as f64 / jobs as f64,
        node_counts,
        flop_samples: flops,
        flop_excluded,
        epoch,
        first_submit,
        jobs,
    })
}
