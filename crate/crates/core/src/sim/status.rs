use std::io::{self, Write};
use std::time::Instant;

use super::Lifecycle;
use crate::pool::NodePool;

/// Periodic one-line system status, tab-separated:
///
/// ```text
/// <time>\t<queued>\t<running>\t<completed>\t<kind>=<ratio>...\t<wall_ms>
/// ```
///
/// `interval` is in simulated seconds. A line is written at the first step
/// at or after each multiple of the interval, plus a final line at the end
/// of the run.
pub struct StatusReporter {
    interval: u64,
    next_due: u64,
    sink: Box<dyn Write + Send>,
    started: Instant,
}

impl StatusReporter {
    pub fn new(interval: u64, sink: Box<dyn Write + Send>) -> Self {
        StatusReporter {
            interval: interval.max(1),
            next_due: 0,
            sink,
            started: Instant::now(),
        }
    }

    pub fn stderr(interval: u64) -> Self {
        Self::new(interval, Box::new(io::stderr()))
    }

    pub fn maybe_emit(&mut self, t: u64, counts: &Lifecycle, pool: &NodePool) -> io::Result<()> {
        if t < self.next_due {
            return Ok(());
        }
        self.next_due = (t / self.interval + 1) * self.interval;
        self.emit(t, counts, pool)
    }

    pub fn emit(&mut self, t: u64, counts: &Lifecycle, pool: &NodePool) -> io::Result<()> {
        let line = status_line(t, counts, pool, self.started.elapsed().as_millis() as u64);
        writeln!(self.sink, "{line}")?;
        self.sink.flush()
    }
}

/// Formats one status record.
pub fn status_line(t: u64, counts: &Lifecycle, pool: &NodePool, wall_ms: u64) -> String {
    let mut out = format!("{t}\t{}\t{}\t{}", counts.queued, counts.running, counts.completed);
    for (kind, usage) in pool.utilization() {
        out.push_str(&format!("\t{kind}={:.3}", usage.ratio));
    }
    out.push_str(&format!("\t{wall_ms}"));
    out
}
