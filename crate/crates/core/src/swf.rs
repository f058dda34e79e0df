//! Standard Workload Format (SWF) reading and writing.
//!
//! An SWF data line has 18 whitespace-separated integer columns:
//!
//! | # | column                | # | column            |
//! |---|-----------------------|---|-------------------|
//! | 1 | job number            | 10| requested memory  |
//! | 2 | submit time           | 11| status            |
//! | 3 | wait time             | 12| user id           |
//! | 4 | run time              | 13| group id          |
//! | 5 | allocated processors  | 14| executable number |
//! | 6 | average CPU time used | 15| queue number      |
//! | 7 | used memory           | 16| partition number  |
//! | 8 | requested processors  | 17| preceding job     |
//! | 9 | requested time        | 18| think time        |
//!
//! Lines starting with `;` are comments. `-1` marks a missing value.
//!
//! SWF describes a job by its total processor count; the simulator works with
//! nodes. [`map_processors_to_nodes`] splits the total as evenly as possible
//! over the fewest nodes that can hold it.

use std::collections::HashSet;
use std::io::{self, BufRead, Write};

use thiserror::Error;

use crate::config::{Equivalence, SystemConfig};
use crate::job::JobRecord;
use crate::resources::ResourceVector;

pub const SWF_COLUMNS: usize = 18;

#[derive(Debug, Error)]
pub enum SwfError {
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },
    #[error("line {line}: submit time {found} is earlier than the previous job's {previous}")]
    Unordered { line: u64, previous: i64, found: i64 },
    #[error("line {line}: duplicate job id {job_id}")]
    DuplicateId { line: u64, job_id: u64 },
    #[error("line {line}: {source}")]
    Io {
        line: u64,
        #[source]
        source: io::Error,
    },
}

impl SwfError {
    pub fn line(&self) -> u64 {
        match self {
            SwfError::Malformed { line, .. }
            | SwfError::Unordered { line, .. }
            | SwfError::DuplicateId { line, .. }
            | SwfError::Io { line, .. } => *line,
        }
    }
}

/// Raw SWF data line. Missing values are `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwfLine(pub [i64; SWF_COLUMNS]);

impl SwfLine {
    pub fn job_number(&self) -> i64 {
        self.0[0]
    }
    pub fn submit_time(&self) -> i64 {
        self.0[1]
    }
    pub fn run_time(&self) -> i64 {
        self.0[3]
    }
    pub fn allocated_processors(&self) -> i64 {
        self.0[4]
    }
    pub fn requested_processors(&self) -> i64 {
        self.0[7]
    }
    pub fn requested_time(&self) -> i64 {
        self.0[8]
    }
    pub fn requested_memory(&self) -> i64 {
        self.0[9]
    }
    pub fn user_id(&self) -> i64 {
        self.0[11]
    }
    pub fn group_id(&self) -> i64 {
        self.0[12]
    }
    pub fn queue_number(&self) -> i64 {
        self.0[14]
    }

    /// Requested processors, falling back to allocated processors.
    pub fn processors(&self) -> i64 {
        if self.requested_processors() > 0 {
            self.requested_processors()
        } else {
            self.allocated_processors()
        }
    }

    pub fn parse(text: &str, line: u64) -> Result<SwfLine, SwfError> {
        let mut cols = [0i64; SWF_COLUMNS];
        let mut n = 0;
        for field in text.split_whitespace() {
            if n == SWF_COLUMNS {
                return Err(SwfError::Malformed {
                    line,
                    message: format!("more than {SWF_COLUMNS} fields"),
                });
            }
            cols[n] = field.parse().map_err(|_| SwfError::Malformed {
                line,
                message: format!("field {} is not an integer: {field:?}", n + 1),
            })?;
            n += 1;
        }
        if n != SWF_COLUMNS {
            return Err(SwfError::Malformed {
                line,
                message: format!("expected {SWF_COLUMNS} fields, found {n}"),
            });
        }
        Ok(SwfLine(cols))
    }
}

/// Splits `total_units` of a per-node resource across the fewest nodes of
/// `cores_per_node` units, balancing the share per node.
///
/// Returns `(nodes, per_node)` with `nodes * per_node >= total_units`.
pub fn map_processors_to_nodes(total_units: u64, cores_per_node: u64) -> (u64, u64) {
    assert!(total_units >= 1 && cores_per_node >= 1, "arguments must be positive");
    let nodes = total_units.div_ceil(cores_per_node);
    let per_node = total_units.div_ceil(nodes);
    (nodes, per_node)
}

/// How SWF columns become per-node resource requests.
#[derive(Debug, Clone, PartialEq)]
pub struct IngestRules {
    pub processor: Equivalence,
    /// Target of the requested-memory column, if memory is modelled.
    pub memory: Option<Equivalence>,
    /// Node size (in `processor.resource` units) used to split requests.
    pub cores_per_node: u64,
    /// `(per-node capacity, node count)` classes. When non-empty, jobs that
    /// no set of nodes could ever hold are dropped at ingest.
    pub capacity_classes: Vec<(ResourceVector, u64)>,
}

impl IngestRules {
    /// Maps processors 1:1 onto `"core"` with no memory and no feasibility
    /// filtering.
    pub fn simple(cores_per_node: u64) -> Self {
        IngestRules {
            processor: Equivalence {
                resource: "core".into(),
                multiplier: 1,
            },
            memory: None,
            cores_per_node,
            capacity_classes: Vec::new(),
        }
    }

    /// Derives the rules from a system configuration.
    ///
    /// The `processor` equivalence defaults to one `core` per processor. The
    /// `memory` equivalence defaults to `mem` when the machine has a `mem`
    /// resource. Requests are split using the smallest node that has the
    /// processor resource at all.
    pub fn from_config(cfg: &SystemConfig) -> Self {
        let processor = cfg.equivalence.get("processor").cloned().unwrap_or(Equivalence {
            resource: "core".into(),
            multiplier: 1,
        });
        let memory = cfg.equivalence.get("memory").cloned().or_else(|| {
            cfg.groups
                .iter()
                .any(|g| g.capacity.get("mem") > 0)
                .then(|| Equivalence {
                    resource: "mem".into(),
                    multiplier: 1,
                })
        });
        let cores_per_node = cfg
            .groups
            .iter()
            .map(|g| g.capacity.get(&processor.resource))
            .filter(|&c| c > 0)
            .min()
            .unwrap_or(1);
        IngestRules {
            processor,
            memory,
            cores_per_node,
            capacity_classes: cfg
                .groups
                .iter()
                .map(|g| (g.capacity.clone(), g.count))
                .collect(),
        }
    }

    /// `true` if enough nodes exist whose capacity can hold the request.
    pub fn is_feasible(&self, job: &JobRecord) -> bool {
        if self.capacity_classes.is_empty() {
            return true;
        }
        let fitting: u64 = self
            .capacity_classes
            .iter()
            .filter(|(cap, _)| job.per_node_request.fits_within(cap))
            .map(|(_, count)| count)
            .sum();
        fitting >= u64::from(job.requested_nodes)
    }

    /// Converts a raw line into a record, or `Err(reason)` if the line is
    /// filtered out.
    pub fn to_record(&self, line: &SwfLine) -> Result<JobRecord, SkipReason> {
        if line.submit_time() < 0 {
            return Err(SkipReason::NegativeSubmit);
        }
        if line.run_time() < 0 {
            return Err(SkipReason::NegativeRunTime);
        }
        let processors = line.processors();
        if processors <= 0 {
            return Err(SkipReason::NoProcessors);
        }
        let job_id = u64::try_from(line.job_number()).map_err(|_| SkipReason::BadJobNumber)?;
        let duration = (line.run_time() as u64).max(1);
        let estimate = if line.requested_time() > 0 {
            line.requested_time() as u64
        } else {
            duration
        };
        let total = processors as u64 * self.processor.multiplier;
        let (nodes, per_node_cores) = map_processors_to_nodes(total, self.cores_per_node);
        let nodes = u32::try_from(nodes).map_err(|_| SkipReason::Infeasible)?;
        let mut per_node = ResourceVector::new().with(self.processor.resource.clone(), per_node_cores);
        if let Some(mem) = &self.memory {
            if line.requested_memory() > 0 {
                let procs_per_node = per_node_cores.div_ceil(self.processor.multiplier);
                per_node.set(
                    mem.resource.clone(),
                    line.requested_memory() as u64 * procs_per_node * mem.multiplier,
                );
            }
        }
        let record = JobRecord {
            job_id,
            submit_time: line.submit_time() as u64,
            duration,
            wall_time_estimate: estimate,
            requested_nodes: nodes,
            per_node_request: per_node,
            user_id: line.user_id(),
            group_id: line.group_id(),
            queue_id: line.queue_number(),
        };
        if !self.is_feasible(&record) {
            return Err(SkipReason::Infeasible);
        }
        Ok(record)
    }

    /// Inverse of [`IngestRules::to_record`] for records it produces.
    pub fn to_line(&self, job: &JobRecord) -> SwfLine {
        let per_node_cores = job.per_node_request.get(&self.processor.resource);
        let total = per_node_cores * u64::from(job.requested_nodes);
        let processors = total.div_ceil(self.processor.multiplier).max(1) as i64;
        let requested_memory = match &self.memory {
            Some(mem) => {
                let qty = job.per_node_request.get(&mem.resource);
                let procs_per_node = per_node_cores.div_ceil(self.processor.multiplier).max(1);
                if qty == 0 {
                    -1
                } else {
                    (qty / (procs_per_node * mem.multiplier)) as i64
                }
            }
            None => -1,
        };
        SwfLine([
            job.job_id as i64,
            job.submit_time as i64,
            -1,
            job.duration as i64,
            processors,
            -1,
            -1,
            processors,
            job.wall_time_estimate as i64,
            requested_memory,
            1,
            job.user_id,
            job.group_id,
            -1,
            job.queue_id,
            -1,
            -1,
            -1,
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SkipReason {
    NegativeSubmit,
    NegativeRunTime,
    NoProcessors,
    BadJobNumber,
    Infeasible,
}

/// Counts of lines dropped by the preprocessing filters.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipCounts {
    pub negative_submit: u64,
    pub negative_run_time: u64,
    pub no_processors: u64,
    pub bad_job_number: u64,
    pub infeasible: u64,
}

impl SkipCounts {
    pub fn total(&self) -> u64 {
        self.negative_submit
            + self.negative_run_time
            + self.no_processors
            + self.bad_job_number
            + self.infeasible
    }

    fn count(&mut self, reason: SkipReason) {
        match reason {
            SkipReason::NegativeSubmit => self.negative_submit += 1,
            SkipReason::NegativeRunTime => self.negative_run_time += 1,
            SkipReason::NoProcessors => self.no_processors += 1,
            SkipReason::BadJobNumber => self.bad_job_number += 1,
            SkipReason::Infeasible => self.infeasible += 1,
        }
    }
}

/// Running statistics of a [`SwfReader`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseStats {
    /// Data lines seen, before filtering.
    pub raw_jobs: u64,
    pub yielded: u64,
    pub skipped: SkipCounts,
}

/// Streaming SWF parser. Yields one [`JobRecord`] at a time in file order.
///
/// Reading stops at the first error; subsequent calls return `None`.
pub struct SwfReader<R> {
    source: R,
    rules: IngestRules,
    line_no: u64,
    last_submit: i64,
    seen: HashSet<u64>,
    stats: ParseStats,
    unix_start_time: Option<i64>,
    buf: String,
    failed: bool,
}

impl<R: BufRead> SwfReader<R> {
    pub fn new(source: R, rules: IngestRules) -> Self {
        SwfReader {
            source,
            rules,
            line_no: 0,
            last_submit: i64::MIN,
            seen: HashSet::new(),
            stats: ParseStats::default(),
            unix_start_time: None,
            buf: String::new(),
            failed: false,
        }
    }

    pub fn stats(&self) -> ParseStats {
        self.stats
    }

    /// Value of the `; UnixStartTime:` header, once it has been read.
    pub fn unix_start_time(&self) -> Option<i64> {
        self.unix_start_time
    }

    fn read_header(&mut self, line: &str) {
        let body = line.trim_start_matches(';').trim();
        if let Some((key, value)) = body.split_once(':') {
            if key.trim().eq_ignore_ascii_case("UnixStartTime") {
                self.unix_start_time = value.trim().parse().ok();
            }
        }
    }

    fn next_record(&mut self) -> Result<Option<JobRecord>, SwfError> {
        loop {
            self.buf.clear();
            let n = self
                .source
                .read_line(&mut self.buf)
                .map_err(|source| SwfError::Io {
                    line: self.line_no + 1,
                    source,
                })?;
            if n == 0 {
                return Ok(None);
            }
            self.line_no += 1;
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            if text.starts_with(';') {
                let text = text.to_string();
                self.read_header(&text);
                continue;
            }
            let line = SwfLine::parse(text, self.line_no)?;
            self.stats.raw_jobs += 1;
            if line.submit_time() >= 0 {
                if line.submit_time() < self.last_submit {
                    return Err(SwfError::Unordered {
                        line: self.line_no,
                        previous: self.last_submit,
                        found: line.submit_time(),
                    });
                }
                self.last_submit = line.submit_time();
            }
            match self.rules.to_record(&line) {
                Ok(record) => {
                    if !self.seen.insert(record.job_id) {
                        return Err(SwfError::DuplicateId {
                            line: self.line_no,
                            job_id: record.job_id,
                        });
                    }
                    self.stats.yielded += 1;
                    return Ok(Some(record));
                }
                Err(reason) => self.stats.skipped.count(reason),
            }
        }
    }
}

impl<R: BufRead> Iterator for SwfReader<R> {
    type Item = Result<JobRecord, SwfError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        match self.next_record() {
            Ok(Some(r)) => Some(Ok(r)),
            Ok(None) => None,
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// Streams SWF records from `source`.
pub fn parse_swf<R: BufRead>(source: R, rules: IngestRules) -> SwfReader<R> {
    SwfReader::new(source, rules)
}

/// Writes SWF lines for a submit-ordered job stream.
pub struct SwfWriter<W: Write> {
    sink: W,
    rules: IngestRules,
    lines: u64,
}

impl<W: Write> SwfWriter<W> {
    /// Writes the comment header. `provenance` lines are emitted verbatim
    /// after a `; ` prefix.
    pub fn new(mut sink: W, rules: IngestRules, provenance: &[String]) -> io::Result<Self> {
        writeln!(sink, "; Version: 2.2")?;
        writeln!(sink, "; Generator: batchsim {}", env!("CARGO_PKG_VERSION"))?;
        for line in provenance {
            writeln!(sink, "; {line}")?;
        }
        writeln!(
            sink,
            "; Note: jobs of every status code are kept; only numeric sanity filters apply"
        )?;
        Ok(SwfWriter {
            sink,
            rules,
            lines: 0,
        })
    }

    pub fn write_job(&mut self, job: &JobRecord) -> io::Result<()> {
        let line = self.rules.to_line(job);
        let mut first = true;
        for v in line.0 {
            if !first {
                self.sink.write_all(b" ")?;
            }
            first = false;
            write!(self.sink, "{v}")?;
        }
        self.sink.write_all(b"\n")?;
        self.lines += 1;
        Ok(())
    }

    pub fn lines(&self) -> u64 {
        self.lines
    }

    pub fn finish(mut self) -> io::Result<W> {
        self.sink.flush()?;
        Ok(self.sink)
    }
}

/// Writes all `jobs` and returns the number of data lines.
pub fn write_swf<W: Write, I: IntoIterator<Item = JobRecord>>(
    jobs: I,
    sink: W,
    rules: IngestRules,
    provenance: &[String],
) -> io::Result<u64> {
    let mut w = SwfWriter::new(sink, rules, provenance)?;
    for job in jobs {
        w.write_job(&job)?;
    }
    let n = w.lines();
    w.finish()?;
    Ok(n)
}
