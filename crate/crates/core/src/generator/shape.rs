//! Job type, request and duration of a generated job.

use std::collections::BTreeMap;

use rand::Rng;

use super::profile::GeneratorProfile;
use super::GeneratorError;
use crate::job::JobRecord;
use crate::resources::ResourceVector;
use crate::swf::IngestRules;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JobKind {
    Serial,
    Parallel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobShape {
    pub kind: JobKind,
    pub requested_nodes: u32,
    pub per_node_request: ResourceVector,
    pub duration: u64,
    pub gflop: f64,
}

/// Effective per-node request bounds after clamping to the machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShapeLimits {
    pub min: ResourceVector,
    pub max: ResourceVector,
    /// Resource that SWF processor counts map to, and its unit.
    pub processor: String,
    pub processor_unit: u64,
    /// Most nodes any job may use.
    pub max_nodes: u32,
}

/// `ceil(gflop / (dot(per_node, performance) * nodes))`, at least one second.
pub fn duration_for(
    gflop: f64,
    per_node: &ResourceVector,
    performance: &BTreeMap<String, f64>,
    nodes: u32,
) -> Option<u64> {
    let rate = per_node.dot(performance) * f64::from(nodes);
    if !(rate > 0.0) {
        return None;
    }
    Some(((gflop / rate).ceil() as u64).max(1))
}

fn uniform<R: Rng>(lo: u64, hi: u64, rng: &mut R) -> u64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..=hi)
    }
}

/// Rounds `x` up to whole processors unless that would pass `cap`.
fn round_up_to(x: u64, unit: u64, cap: u64) -> u64 {
    let r = x.div_ceil(unit) * unit;
    if r > cap {
        x
    } else {
        r
    }
}

const MAX_ATTEMPTS: usize = 100;

/// Draws a job shape in three phases: job type and node count, a uniform
/// quantity per limited resource, then a duration derived from a sampled
/// GFLOP value. Requests with no performance rating are redrawn.
pub fn generate_job_shape<R: Rng>(
    profile: &GeneratorProfile,
    limits: &ShapeLimits,
    performance: &BTreeMap<String, f64>,
    rules: &IngestRules,
    rng: &mut R,
) -> Result<JobShape, GeneratorError> {
    for _ in 0..MAX_ATTEMPTS {
        let kind = if rng.gen_bool(profile.serial_fraction.clamp(0.0, 1.0)) {
            JobKind::Serial
        } else {
            JobKind::Parallel
        };
        let nodes = match kind {
            JobKind::Serial => 1,
            JobKind::Parallel if profile.node_counts.is_empty() => 1,
            JobKind::Parallel => {
                profile.node_counts[rng.gen_range(0..profile.node_counts.len())].min(limits.max_nodes)
            }
        };

        let mut per_node = ResourceVector::new();
        for (kind_name, hi) in limits.max.iter() {
            let lo = limits.min.get(kind_name);
            per_node.set(kind_name, uniform(lo, hi, rng));
        }
        let unit = limits.processor_unit;
        let cap = limits.max.get(&limits.processor);
        let cores = match kind {
            JobKind::Serial => unit.max(limits.min.get(&limits.processor)).min(cap.max(1)),
            JobKind::Parallel => {
                let lo = limits.min.get(&limits.processor).max(1);
                // a one-node parallel job needs more than one processor
                let lo = if nodes == 1 { lo.max(unit + 1) } else { lo };
                if lo > cap {
                    continue;
                }
                round_up_to(uniform(lo, cap, rng), unit, cap)
            }
        };
        per_node.set(&limits.processor, cores.max(1));

        let candidate = JobRecord::new(0, 0, 1, nodes, per_node.clone());
        // SWF keeps only total processors, so use the shape a reader would
        // rebuild from the written line
        let Ok(canon) = rules.to_record(&rules.to_line(&candidate)) else {
            continue;
        };
        let nodes = canon.requested_nodes;
        for kind in std::iter::once(&rules.processor).chain(&rules.memory).map(|e| &e.resource) {
            per_node.set(kind, canon.per_node_request.get(kind));
        }
        if !rules.is_feasible(&JobRecord::new(0, 0, 1, nodes, per_node.clone())) {
            continue;
        }
        if !(limits.min.fits_within(&per_node) && per_node.fits_within(&limits.max)) {
            continue;
        }
        let gflop = profile.flop_samples[rng.gen_range(0..profile.flop_samples.len())];
        let Some(duration) = duration_for(gflop, &per_node, performance, nodes) else {
            continue;
        };
        return Ok(JobShape {
            kind,
            requested_nodes: nodes,
            per_node_request: per_node,
            duration,
            gflop,
        });
    }
    Err(GeneratorError::NoRatedRequest)
}
