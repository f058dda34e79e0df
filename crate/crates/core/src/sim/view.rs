//! The dispatcher-facing picture of the system.
//!
//! None of these types carries a job's true duration. Dispatchers can only
//! reason about wall-time estimates, exactly like a production scheduler.

use std::collections::BTreeMap;

use crate::job::JobRecord;
use crate::pool::{Allocation, NodeState};
use crate::resources::ResourceVector;

/// A job waiting in the queue.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueuedJob {
    pub job_id: u64,
    pub submit_time: u64,
    pub wall_time_estimate: u64,
    pub requested_nodes: u32,
    pub per_node_request: ResourceVector,
}

impl From<&JobRecord> for QueuedJob {
    fn from(r: &JobRecord) -> Self {
        QueuedJob {
            job_id: r.job_id,
            submit_time: r.submit_time,
            wall_time_estimate: r.wall_time_estimate,
            requested_nodes: r.requested_nodes,
            per_node_request: r.per_node_request.clone(),
        }
    }
}

/// A job currently holding resources.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunningJob {
    pub job_id: u64,
    pub submit_time: u64,
    pub start_time: u64,
    pub wall_time_estimate: u64,
    pub allocation: Allocation,
}

impl RunningJob {
    /// When the job is expected to end according to its estimate.
    pub fn estimated_end(&self) -> u64 {
        self.start_time + self.wall_time_estimate
    }
}

/// Read-only snapshot handed to a dispatcher.
#[derive(Debug, Clone, Copy)]
pub struct SystemView<'a> {
    pub now: u64,
    /// In arrival order: submit time, then job id.
    pub queued: &'a [QueuedJob],
    pub running: &'a [RunningJob],
    pub nodes: &'a [NodeState],
    /// Key/value observations published by additional-data hooks.
    pub additional: &'a BTreeMap<String, String>,
}

impl<'a> SystemView<'a> {
    pub fn is_idle(&self) -> bool {
        self.queued.is_empty() && self.running.is_empty()
    }
}
