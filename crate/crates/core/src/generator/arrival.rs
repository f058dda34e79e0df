//! Submission times: a circular walk over half-hour slot weights with an
//! interarrival cap that adapts to how far generation has progressed.

use rand::Rng;

use super::profile::{hour_of, month_of, weekday_of, GeneratorProfile, SLOTS, SLOT_SECONDS};
use super::GeneratorError;

/// Shrinks `v_max` towards `s` as the progress ratio drops below one:
/// `v_max - (v_max - s) * (1 - pr)`, never below `s`.
pub fn update_vmax(v_max: u64, s: u64, pr: f64) -> u64 {
    let v = v_max as f64 - (v_max as f64 - s as f64) * (1.0 - pr);
    if v.is_nan() || v <= s as f64 {
        s
    } else {
        v.round() as u64
    }
}

/// Generated submissions per hour of day, day of week and month.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PeriodCounts {
    pub hourly: [u64; 24],
    pub daily: [u64; 7],
    pub monthly: [u64; 12],
    pub last: Option<i64>,
}

impl PeriodCounts {
    pub fn record(&mut self, abs_time: i64) {
        self.hourly[hour_of(abs_time)] += 1;
        self.daily[weekday_of(abs_time)] += 1;
        self.monthly[month_of(abs_time)] += 1;
        self.last = Some(abs_time);
    }
}

fn period_factor(generated: u64, target: u64, real: f64) -> f64 {
    if real == 0.0 {
        1.0
    } else {
        (generated as f64 / target as f64) / real
    }
}

/// Product over the periods of (generated share / real share), each taken
/// for the bucket of the last generated submission. Zero before anything
/// has been generated. Months count only when the profile has them.
pub fn progress_ratio(counts: &PeriodCounts, target: u64, profile: &GeneratorProfile) -> f64 {
    assert!(target > 0, "target job count must be positive");
    let Some(last) = counts.last else {
        return 0.0;
    };
    let (h, d, m) = (hour_of(last), weekday_of(last), month_of(last));
    let mut pr = period_factor(counts.hourly[h], target, profile.hourly[h])
        * period_factor(counts.daily[d], target, profile.daily[d]);
    if profile.has_months {
        pr *= period_factor(counts.monthly[m], target, profile.monthly[m]);
    }
    pr
}

/// Draws an interarrival gap from the profile's samples, restricted to
/// those not above `v_max`.
pub fn draw_interarrival<R: Rng>(profile: &GeneratorProfile, v_max: u64, rng: &mut R) -> u64 {
    let samples = &profile.interarrival_samples;
    let within = samples.partition_point(|&g| g <= v_max);
    if within == 0 {
        v_max
    } else {
        samples[rng.gen_range(0..within)]
    }
}

/// Places the submission following `prev_submit` (relative seconds), with
/// an interarrival value of `v_seconds`.
///
/// Starting at the slot of `prev_submit`, whole slots are passed while the
/// remaining value covers their weight. The result advances `prev_submit` by
/// the passed slots plus the fraction of the stopping slot that the
/// remainder represents, and is always later than `prev_submit`.
pub fn place_submission(
    prev_submit: u64,
    v_seconds: u64,
    profile: &GeneratorProfile,
) -> Result<u64, GeneratorError> {
    let weights = profile.slot_model.weights();
    if weights.iter().all(|&w| w <= 0.0) {
        return Err(GeneratorError::DegenerateProfile("every slot weight is zero"));
    }
    let mut v = v_seconds as f64 * profile.v_units_per_second;
    let mut slot = super::profile::slot_of(profile.epoch + prev_submit as i64);
    let mut passed = 0u64;
    loop {
        let w = weights[slot];
        // tolerate rounding when v is an exact sum of weights
        if v >= w - 1e-12 {
            v = (v - w).max(0.0);
            slot = (slot + 1) % SLOTS;
            passed += 1;
        } else {
            break;
        }
    }
    let offset = ((v / weights[slot]) * SLOT_SECONDS as f64).floor() as u64;
    let next = prev_submit + passed * SLOT_SECONDS + offset.min(SLOT_SECONDS - 1);
    Ok(next.max(prev_submit + 1))
}

/// Draws a value and places the next submission.
pub fn next_submit_time<R: Rng>(
    prev_submit: u64,
    v_max: u64,
    profile: &GeneratorProfile,
    rng: &mut R,
) -> Result<u64, GeneratorError> {
    let v = draw_interarrival(profile, v_max, rng);
    place_submission(prev_submit, v, profile)
}
