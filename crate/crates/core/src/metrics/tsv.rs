//! Tab-separated result and benchmark files.
//!
//! Each file starts with one `#`-prefixed header naming the columns and
//! ends with a footer:
//!
//! ```text
//! # end seed=<n> dispatcher=<name> config=<hash> wall_ms=<n>
//! ```
//!
//! A run that stops on an error ends with `# partial ...` instead.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{JobResult, Recorder, RunFooter, StepBenchmark};

pub const RESULTS_HEADER: &str =
    "# job_id\tsubmit\tstart\tend\twait\tduration\tslowdown\tnodes\trequest";
pub const BENCH_HEADER: &str = "# time\tqueued\trunning\tdispatch_us\tstep_us\tloaded";

pub fn results_path(dir: &Path, run: &str) -> PathBuf {
    dir.join(format!("{run}.results.tsv"))
}

pub fn bench_path(dir: &Path, run: &str) -> PathBuf {
    dir.join(format!("{run}.bench.tsv"))
}

pub fn format_footer(f: &RunFooter) -> String {
    format!(
        "# end seed={} dispatcher={} config={} wall_ms={}",
        f.seed, f.dispatcher, f.config_hash, f.wall_ms
    )
}

/// Writes `<run>.results.tsv` and `<run>.bench.tsv` into a directory.
pub struct TsvRecorder<W: Write = BufWriter<File>> {
    results: W,
    bench: W,
}

impl TsvRecorder {
    pub fn create(dir: &Path, run: &str) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        let results = BufWriter::new(File::create(results_path(dir, run))?);
        let bench = BufWriter::new(File::create(bench_path(dir, run))?);
        TsvRecorder::new(results, bench)
    }
}

impl<W: Write> TsvRecorder<W> {
    pub fn new(mut results: W, mut bench: W) -> io::Result<Self> {
        writeln!(results, "{RESULTS_HEADER}")?;
        writeln!(bench, "{BENCH_HEADER}")?;
        Ok(TsvRecorder { results, bench })
    }

    pub fn into_inner(self) -> (W, W) {
        (self.results, self.bench)
    }
}

impl<W: Write> Recorder for TsvRecorder<W> {
    fn record_job(&mut self, r: &JobResult) -> io::Result<()> {
        writeln!(
            self.results,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.job_id,
            r.submit,
            r.start,
            r.end,
            r.wait,
            r.duration,
            r.slowdown,
            r.nodes.join(";"),
            r.per_node_request
        )
    }

    fn record_step(&mut self, s: &StepBenchmark) -> io::Result<()> {
        writeln!(
            self.bench,
            "{}\t{}\t{}\t{}\t{}\t{}",
            s.time, s.queued, s.running, s.dispatch_us, s.step_us, s.loaded
        )
    }

    fn finish(&mut self, footer: &RunFooter) -> io::Result<()> {
        let line = format_footer(footer);
        writeln!(self.results, "{line}")?;
        writeln!(self.bench, "{line}")?;
        self.results.flush()?;
        self.bench.flush()
    }

    fn abort(&mut self, footer: &RunFooter, reason: &str) -> io::Result<()> {
        let line = format!(
            "# partial seed={} dispatcher={} config={} reason={}",
            footer.seed,
            footer.dispatcher,
            footer.config_hash,
            reason.replace(['\n', '\t'], " ")
        );
        // best effort: one sink may be the one that failed
        let a = writeln!(self.results, "{line}").and_then(|_| self.results.flush());
        let b = writeln!(self.bench, "{line}").and_then(|_| self.bench.flush());
        a.and(b)
    }
}

fn bad(line: usize, msg: impl std::fmt::Display) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, format!("line {line}: {msg}"))
}

fn field<T: std::str::FromStr>(cols: &[&str], i: usize, line: usize) -> io::Result<T>
where
    T::Err: std::fmt::Display,
{
    cols.get(i)
        .ok_or_else(|| bad(line, format!("missing column {}", i + 1)))?
        .parse()
        .map_err(|e| bad(line, e))
}

/// Parses a footer line, if `line` is one.
pub fn parse_footer(line: &str) -> Option<RunFooter> {
    let rest = line.strip_prefix("# end ")?;
    let mut footer = RunFooter {
        seed: 0,
        dispatcher: String::new(),
        config_hash: String::new(),
        wall_ms: 0,
    };
    for part in rest.split(' ') {
        let (k, v) = part.split_once('=')?;
        match k {
            "seed" => footer.seed = v.parse().ok()?,
            "dispatcher" => footer.dispatcher = v.to_string(),
            "config" => footer.config_hash = v.to_string(),
            "wall_ms" => footer.wall_ms = v.parse().ok()?,
            _ => {}
        }
    }
    Some(footer)
}

/// Rows of a results file and its footer (absent for a partial run).
pub fn read_results(path: &Path) -> io::Result<(Vec<JobResult>, Option<RunFooter>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut footer = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') {
            footer = footer.or_else(|| parse_footer(&line));
            continue;
        }
        let n = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 9 {
            return Err(bad(n, format!("expected 9 columns, found {}", cols.len())));
        }
        rows.push(JobResult {
            job_id: field(&cols, 0, n)?,
            submit: field(&cols, 1, n)?,
            start: field(&cols, 2, n)?,
            end: field(&cols, 3, n)?,
            wait: field(&cols, 4, n)?,
            duration: field(&cols, 5, n)?,
            slowdown: field(&cols, 6, n)?,
            nodes: if cols[7].is_empty() {
                Vec::new()
            } else {
                cols[7].split(';').map(str::to_string).collect()
            },
            per_node_request: cols[8].parse().map_err(|e| bad(n, e))?,
        });
    }
    Ok((rows, footer))
}

pub fn read_bench(path: &Path) -> io::Result<(Vec<StepBenchmark>, Option<RunFooter>)> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows = Vec::new();
    let mut footer = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.starts_with('#') {
            footer = footer.or_else(|| parse_footer(&line));
            continue;
        }
        let n = i + 1;
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 6 {
            return Err(bad(n, format!("expected 6 columns, found {}", cols.len())));
        }
        rows.push(StepBenchmark {
            time: field(&cols, 0, n)?,
            queued: field(&cols, 1, n)?,
            running: field(&cols, 2, n)?,
            dispatch_us: field(&cols, 3, n)?,
            step_us: field(&cols, 4, n)?,
            loaded: field(&cols, 5, n)?,
        });
    }
    Ok((rows, footer))
}
