use crate::resources::ResourceVector;

/// One job as read from a workload trace.
///
/// `duration` is the job's true run time and is known only to the event
/// manager; dispatchers see `wall_time_estimate` instead.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JobRecord {
    pub job_id: u64,
    /// Seconds since the trace epoch.
    pub submit_time: u64,
    pub duration: u64,
    pub wall_time_estimate: u64,
    pub requested_nodes: u32,
    pub per_node_request: ResourceVector,
    /// Carried through from the trace; `-1` when unknown.
    pub user_id: i64,
    pub group_id: i64,
    pub queue_id: i64,
}

impl JobRecord {
    pub fn new(
        job_id: u64,
        submit_time: u64,
        duration: u64,
        requested_nodes: u32,
        per_node_request: ResourceVector,
    ) -> Self {
        JobRecord {
            job_id,
            submit_time,
            duration,
            wall_time_estimate: duration,
            requested_nodes,
            per_node_request,
            user_id: -1,
            group_id: -1,
            queue_id: -1,
        }
    }

    pub fn with_estimate(mut self, estimate: u64) -> Self {
        self.wall_time_estimate = estimate;
        self
    }

    /// Checks the record-level invariants, naming the first one violated.
    pub fn check(&self) -> Result<(), &'static str> {
        if self.duration == 0 {
            return Err("duration must be at least 1 second");
        }
        if self.wall_time_estimate == 0 {
            return Err("wall time estimate must be at least 1 second");
        }
        if self.requested_nodes == 0 {
            return Err("at least one node must be requested");
        }
        if !self.per_node_request.has_positive() {
            return Err("per-node request has no positive resource");
        }
        Ok(())
    }

    /// Sum of the request over all requested nodes.
    pub fn total_request(&self) -> ResourceVector {
        self.per_node_request.scaled(u64::from(self.requested_nodes))
    }
}
