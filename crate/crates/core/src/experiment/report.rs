//! Aggregation of completed runs and the report bundle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::{io_err, svg, ExperimentError, ExperimentPlan};
use crate::metrics::tsv::{bench_path, read_bench, read_results, results_path};
use crate::metrics::{summarize, BoxStats, QueueBin, QUEUE_BIN_WIDTH};

/// Files written by [`render`], in order.
pub const REPORT_FILES: [&str; 9] = [
    "slowdown.svg",
    "slowdown.tsv",
    "queue.svg",
    "queue.tsv",
    "steptime.svg",
    "steptime.tsv",
    "time_vs_queue.svg",
    "time_vs_queue.tsv",
    "usage_table.txt",
];

/// Mean and sample standard deviation over repetitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    /// Values are sorted first so the result does not depend on their order.
    pub fn of(values: &[f64]) -> MeanSd {
        if values.is_empty() {
            return MeanSd { mean: 0.0, sd: 0.0 };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let sd = if v.len() < 2 {
            0.0
        } else {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        MeanSd { mean, sd }
    }
}

/// Everything reported for one dispatcher.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatcherStats {
    pub name: String,
    pub runs: usize,
    /// Slowdowns of every job of every run.
    pub slowdown: Option<BoxStats>,
    /// Queue size at every dispatcher invocation of every run.
    pub queue: Option<BoxStats>,
    /// Per-run mean CPU time of a simulation step, in microseconds.
    pub step_us: MeanSd,
    /// Per-run mean dispatch CPU time of a simulation step, in microseconds.
    pub dispatch_us: MeanSd,
    /// Dispatch time by queue-size bin, pooled over runs.
    pub dispatch_by_queue: BTreeMap<u64, QueueBin>,
    pub total_ms: MeanSd,
    pub dispatch_ms: MeanSd,
    pub peak_loaded: MeanSd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub dispatchers: Vec<DispatcherStats>,
    pub notes: Vec<String>,
}

fn rep_dirs(dir: &Path) -> Vec<(u32, PathBuf)> {
    let mut reps: Vec<(u32, PathBuf)> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let k = name.strip_prefix("rep")?.parse().ok()?;
            Some((k, e.path()))
        })
        .collect();
    reps.sort();
    reps
}

/// Reads every completed run of `dispatchers` under `root`.
///
/// A run counts as completed when both of its files end with a footer.
/// Dispatchers without any completed run are left out with a note.
pub fn aggregate(root: &Path, dispatchers: &[String]) -> Result<Report, ExperimentError> {
    let mut out = Vec::new();
    let mut notes = Vec::new();
    for name in dispatchers {
        let mut slowdowns = Vec::new();
        let mut queue = Vec::new();
        let mut step_us = Vec::new();
        let mut dispatch_us = Vec::new();
        let mut total_ms = Vec::new();
        let mut dispatch_ms = Vec::new();
        let mut peak = Vec::new();
        let mut bins: BTreeMap<u64, QueueBin> = BTreeMap::new();
        let mut runs = 0;
        for (k, dir) in rep_dirs(&root.join(name)) {
            let rp = results_path(&dir, name);
            let bp = bench_path(&dir, name);
            let (Ok((results, Some(footer))), Ok((bench, Some(_)))) = (read_results(&rp), read_bench(&bp)) else {
                notes.push(format!("{name} rep{k}: incomplete outputs skipped"));
                continue;
            };
            let s = summarize(&results, &bench, footer.wall_ms);
            runs += 1;
            slowdowns.extend(results.iter().map(|r| r.slowdown));
            queue.extend(bench.iter().filter(|b| b.queued > 0).map(|b| b.queued as f64));
            step_us.push(s.mean_step_us);
            dispatch_us.push(s.mean_dispatch_us);
            total_ms.push(footer.wall_ms as f64);
            dispatch_ms.push(s.total_dispatch_us as f64 / 1000.0);
            peak.push(s.peak_loaded as f64);
            for (b, q) in s.dispatch_by_queue {
                let e = bins.entry(b).or_insert(QueueBin {
                    samples: 0,
                    total_dispatch_us: 0,
                });
                e.samples += q.samples;
                e.total_dispatch_us += q.total_dispatch_us;
            }
        }
        if runs == 0 {
            notes.push(format!("{name}: no completed runs, series omitted"));
            continue;
        }
        out.push(DispatcherStats {
            name: name.clone(),
            runs,
            slowdown: BoxStats::of(&slowdowns),
            queue: BoxStats::of(&queue),
            step_us: MeanSd::of(&step_us),
            dispatch_us: MeanSd::of(&dispatch_us),
            dispatch_by_queue: bins,
            total_ms: MeanSd::of(&total_ms),
            dispatch_ms: MeanSd::of(&dispatch_ms),
            peak_loaded: MeanSd::of(&peak),
        });
    }
    if out.is_empty() {
        return Err(ExperimentError::NothingToReport);
    }
    Ok(Report {
        dispatchers: out,
        notes,
    })
}

/// Aggregates an experiment directory, taking the dispatcher order from
/// its `plan.json` or, failing that, from the directory names.
pub fn aggregate_dir(root: &Path) -> Result<Report, ExperimentError> {
    let names = match std::fs::read_to_string(root.join("plan.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<ExperimentPlan>(&t).ok())
    {
        Some(plan) => plan
            .schedulers
            .iter()
            .flat_map(|s| plan.allocators.iter().map(move |a| format!("{s}-{a}")))
            .collect(),
        None => {
            let mut names: Vec<String> = std::fs::read_dir(root)
                .map_err(io_err(root))?
                .flatten()
                .filter(|e| e.path().is_dir())
                .filter_map(|e| e.file_name().into_string().ok())
                .filter(|n| n != "report")
                .collect();
            names.sort();
            names
        }
    };
    aggregate(root, &names)
}

fn box_table(rows: impl Iterator<Item = (String, Option<BoxStats>)>) -> String {
    let mut t = String::from(
        "# dispatcher\tcount\tmean\tmin\twhisker_low\tq1\tmedian\tq3\twhisker_high\tmax\n",
    );
    for (name, b) in rows {
        if let Some(b) = b {
            let d = b.dist;
            let _ = writeln!(
                t,
                "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                d.count, d.mean, d.min, b.whisker_low, d.q1, d.median, d.q3, b.whisker_high, d.max
            );
        }
    }
    t
}

fn usage_table(report: &Report) -> String {
    let headers = [
        "dispatcher",
        "runs",
        "total_ms μ",
        "total_ms σ",
        "dispatch_ms μ",
        "dispatch_ms σ",
        "peak_loaded μ",
        "peak_loaded σ",
    ];
    let mut rows: Vec<Vec<String>> = vec![headers.iter().map(|s| s.to_string()).collect()];
    for d in &report.dispatchers {
        rows.push(vec![
            d.name.clone(),
            d.runs.to_string(),
            format!("{:.1}", d.total_ms.mean),
            format!("{:.1}", d.total_ms.sd),
            format!("{:.1}", d.dispatch_ms.mean),
            format!("{:.1}", d.dispatch_ms.sd),
            format!("{:.1}", d.peak_loaded.mean),
            format!("{:.1}", d.peak_loaded.sd),
        ]);
    }
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let pad = widths[c] - cell.chars().count();
                if c == 0 {
                    format!("{cell}{}", " ".repeat(pad))
                } else {
                    format!("{}{cell}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    for n in &report.notes {
        let _ = writeln!(out, "note: {n}");
    }
    out
}

/// Writes the nine report files into `dir`.
pub fn render(report: &Report, dir: &Path) -> Result<Vec<PathBuf>, ExperimentError> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let ds = &report.dispatchers;
    let names: Vec<String> = ds.iter().map(|d| d.name.clone()).collect();

    let slow: Vec<(String, _)> = ds.iter().filter_map(|d| Some((d.name.clone(), d.slowdown?))).collect();
    let queue: Vec<(String, _)> = ds.iter().filter_map(|d| Some((d.name.clone(), d.queue?))).collect();

    let mut step_tsv = String::from("# dispatcher\tstep_us_mean\tstep_us_sd\tdispatch_us_mean\tdispatch_us_sd\n");
    for d in ds {
        let _ = writeln!(
            step_tsv,
            "{}\t{}\t{}\t{}\t{}",
            d.name, d.step_us.mean, d.step_us.sd, d.dispatch_us.mean, d.dispatch_us.sd
        );
    }

    let mut tvq_tsv = String::from("# dispatcher\tqueue_bin\tsamples\tdispatch_us_mean\n");
    let mut lines = Vec::new();
    for d in ds {
        let mut pts = Vec::new();
        for (bin, q) in &d.dispatch_by_queue {
            let _ = writeln!(tvq_tsv, "{}\t{bin}\t{}\t{}", d.name, q.samples, q.mean_us());
            pts.push(((bin + QUEUE_BIN_WIDTH / 2) as f64, q.mean_us()));
        }
        lines.push((d.name.clone(), pts));
    }

    let files: [(&str, String); 9] = [
        ("slowdown.svg", svg::box_plot("Job slowdown", "slowdown", &slow)),
        (
            "slowdown.tsv",
            box_table(ds.iter().map(|d| (d.name.clone(), d.slowdown))),
        ),
        ("queue.svg", svg::box_plot("Queue size", "queued jobs", &queue)),
        ("queue.tsv", box_table(ds.iter().map(|d| (d.name.clone(), d.queue)))),
        (
            "steptime.svg",
            svg::bar_chart(
                "Mean CPU time per simulation step",
                "microseconds",
                &names,
                &[
                    ("step", ds.iter().map(|d| d.step_us.mean).collect()),
                    ("dispatch", ds.iter().map(|d| d.dispatch_us.mean).collect()),
                ],
            ),
        ),
        ("steptime.tsv", step_tsv),
        (
            "time_vs_queue.svg",
            svg::line_chart(
                "Dispatch time by queue size",
                "queue size",
                "microseconds",
                &lines,
            ),
        ),
        ("time_vs_queue.tsv", tvq_tsv),
        ("usage_table.txt", usage_table(report)),
    ];
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
