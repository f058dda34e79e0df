//! Shared fixtures for the integration and acceptance tests: small machine
//! builders, random instances, a per-second reference scheduler and the
//! Seth-shaped trace.

#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use batchsim::config::SystemConfig;
use batchsim::dispatch::{DispatchOptions, Dispatcher, Registry};
use batchsim::job::JobRecord;
use batchsim::metrics::MemoryRecorder;
use batchsim::resources::ResourceVector;
use batchsim::sim::{LoadHorizon, SimOptions, SimulationSummary, Timing};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const DISPATCHERS: [&str; 8] = [
    "FIFO-FF", "FIFO-BF", "SJF-FF", "SJF-BF", "LJF-FF", "LJF-BF", "EBF-FF", "EBF-BF",
];

/// Builds a config from `(count, capacity)` groups named g0, g1, ...
pub fn config(groups: &[(u64, &[(&str, u64)])]) -> SystemConfig {
    let mut defs = serde_json::Map::new();
    let mut counts = serde_json::Map::new();
    for (i, (count, cap)) in groups.iter().enumerate() {
        let cap: serde_json::Map<_, _> = cap.iter().map(|(k, v)| (k.to_string(), (*v).into())).collect();
        defs.insert(format!("g{i}"), cap.into());
        counts.insert(format!("g{i}"), (*count).into());
    }
    let json = serde_json::json!({
        "system_name": "test",
        "start_time": 0,
        "equivalence": {},
        "groups": defs,
        "resources": counts,
    });
    SystemConfig::from_json(&json.to_string()).expect("valid test config")
}

pub fn cores_config(nodes: u64, cores: u64) -> SystemConfig {
    config(&[(nodes, &[("core", cores)])])
}

pub fn cores(n: u64) -> ResourceVector {
    ResourceVector::new().with("core", n)
}

pub fn job(id: u64, submit: u64, duration: u64, nodes: u32, per_node: ResourceVector) -> JobRecord {
    JobRecord::new(id, submit, duration, nodes, per_node)
}

pub fn quiet_opts() -> SimOptions {
    SimOptions {
        timing: Timing::Disabled,
        ..SimOptions::default()
    }
}

pub fn dispatcher(name: &str) -> Box<dyn Dispatcher> {
    Registry::builtin()
        .build(name, &DispatchOptions::default())
        .expect("built-in dispatcher")
}

/// Runs `jobs` to completion and keeps every output row in memory.
pub fn simulate(jobs: &[JobRecord], cfg: &SystemConfig, name: &str) -> (SimulationSummary, MemoryRecorder) {
    simulate_with(jobs, cfg, dispatcher(name).as_mut(), quiet_opts())
}

pub fn simulate_with(
    jobs: &[JobRecord],
    cfg: &SystemConfig,
    dispatcher: &mut dyn Dispatcher,
    opts: SimOptions,
) -> (SimulationSummary, MemoryRecorder) {
    let mut rec = MemoryRecorder::default();
    let summary = batchsim::sim::run(jobs.iter().cloned().map(Ok), cfg, dispatcher, &mut rec, opts)
        .expect("simulation succeeds");
    (summary, rec)
}

/// Start time of every job, by id.
pub fn starts(rec: &MemoryRecorder) -> BTreeMap<u64, u64> {
    rec.jobs.iter().map(|r| (r.job_id, r.start)).collect()
}

pub fn bulk_load() -> LoadHorizon {
    LoadHorizon::Jobs(usize::MAX)
}

// ---------------------------------------------------------------------------
// Reference scheduler

/// Node capacities in declaration order, independent of the library's pool.
pub fn node_capacities(cfg: &SystemConfig) -> Vec<(String, BTreeMap<String, u64>)> {
    let mut out = Vec::new();
    for g in &cfg.groups {
        for i in 0..g.count {
            let cap = g.capacity.iter().map(|(k, v)| (k.to_string(), v)).collect();
            out.push((format!("{}_{}", g.name, i), cap));
        }
    }
    out
}

/// Plain FIFO with first-fit placement, advanced one second at a time.
///
/// At every second: release jobs ending now, enqueue jobs submitted now (in
/// id order), then start queue heads while the first `nodes` nodes in
/// declaration order that can hold the per-node request exist. Returns
/// `job_id -> (start, node names)`.
pub fn reference_fifo_ff(cfg: &SystemConfig, jobs: &[JobRecord]) -> BTreeMap<u64, (u64, Vec<String>)> {
    let nodes = node_capacities(cfg);
    let mut free: Vec<BTreeMap<String, u64>> = nodes.iter().map(|(_, c)| c.clone()).collect();
    let mut pending: Vec<&JobRecord> = jobs.iter().collect();
    pending.sort_by_key(|j| (j.submit_time, j.job_id));
    let mut pending = pending.into_iter().peekable();
    let mut queue: Vec<&JobRecord> = Vec::new();
    let mut running: Vec<(u64, Vec<usize>, &JobRecord)> = Vec::new();
    let mut out = BTreeMap::new();

    let mut t = 0u64;
    while out.len() < jobs.len() {
        let mut still = Vec::new();
        for (end, on, j) in running.drain(..) {
            if end == t {
                for &n in &on {
                    for (k, v) in j.per_node_request.iter() {
                        *free[n].get_mut(k).unwrap() += v;
                    }
                }
            } else {
                still.push((end, on, j));
            }
        }
        running = still;
        while let Some(j) = pending.next_if(|j| j.submit_time == t) {
            queue.push(j);
        }
        while let Some(head) = queue.first().copied() {
            let fits = |f: &BTreeMap<String, u64>| {
                head.per_node_request
                    .iter()
                    .all(|(k, v)| f.get(k).copied().unwrap_or(0) >= v)
            };
            let chosen: Vec<usize> = (0..free.len())
                .filter(|&n| fits(&free[n]))
                .take(head.requested_nodes as usize)
                .collect();
            if chosen.len() < head.requested_nodes as usize {
                break;
            }
            for &n in &chosen {
                for (k, v) in head.per_node_request.iter() {
                    *free[n].get_mut(k).unwrap() -= v;
                }
            }
            out.insert(
                head.job_id,
                (t, chosen.iter().map(|&n| nodes[n].0.clone()).collect()),
            );
            running.push((t + head.duration, chosen, head));
            queue.remove(0);
        }
        t += 1;
        assert!(t < 1_000_000, "reference scheduler did not terminate");
    }
    out
}

/// Checks a finished run against the machine: every job ran exactly its
/// duration, never before submission, and at no instant did the jobs on a
/// node ask for more than it has. Returns a description of the first
/// violation.
pub fn audit(cfg: &SystemConfig, jobs: &[JobRecord], rec: &MemoryRecorder) -> Result<(), String> {
    let by_id: BTreeMap<u64, &JobRecord> = jobs.iter().map(|j| (j.job_id, j)).collect();
    if rec.jobs.len() != jobs.len() {
        return Err(format!("{} of {} jobs completed", rec.jobs.len(), jobs.len()));
    }
    let caps: BTreeMap<String, BTreeMap<String, u64>> = node_capacities(cfg).into_iter().collect();
    // (node, kind) -> [(time, delta)]
    let mut deltas: BTreeMap<(String, String), Vec<(u64, i64)>> = BTreeMap::new();
    for r in &rec.jobs {
        let j = by_id.get(&r.job_id).ok_or(format!("unknown job {}", r.job_id))?;
        if r.end - r.start != j.duration {
            return Err(format!("job {} ran {} s, duration {}", r.job_id, r.end - r.start, j.duration));
        }
        if r.start < j.submit_time || r.submit != j.submit_time {
            return Err(format!("job {} started at {} before submit {}", r.job_id, r.start, j.submit_time));
        }
        let mut seen = r.nodes.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != r.nodes.len() || r.nodes.len() != j.requested_nodes as usize {
            return Err(format!("job {} got nodes {:?}", r.job_id, r.nodes));
        }
        for n in &r.nodes {
            for (k, v) in j.per_node_request.iter() {
                let d = deltas.entry((n.clone(), k.to_string())).or_default();
                d.push((r.start, v as i64));
                d.push((r.end, -(v as i64)));
            }
        }
    }
    for ((node, kind), mut d) in deltas {
        // Releases at an instant happen before acquisitions.
        d.sort();
        let cap = caps.get(&node).and_then(|c| c.get(&kind)).copied().unwrap_or(0) as i64;
        let mut used = 0i64;
        for (t, delta) in d {
            used += delta;
            if used > cap {
                return Err(format!("{node} {kind} at {t}: {used} > {cap}"));
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Random instances

/// 1 to 4 node groups with cores, optional memory and optional gpus.
pub fn random_config(rng: &mut ChaCha8Rng) -> SystemConfig {
    let groups = rng.gen_range(1..=4);
    let mut specs: Vec<(u64, Vec<(&str, u64)>)> = Vec::new();
    for _ in 0..groups {
        let mut cap = vec![("core", [1, 2, 4, 8, 16][rng.gen_range(0..5)])];
        if rng.gen_bool(0.5) {
            cap.push(("mem", rng.gen_range(1..=32) * 1000));
        }
        if rng.gen_bool(0.25) {
            cap.push(("gpu", rng.gen_range(1..=2)));
        }
        specs.push((rng.gen_range(1..=16), cap));
    }
    let borrowed: Vec<(u64, &[(&str, u64)])> = specs.iter().map(|(c, v)| (*c, v.as_slice())).collect();
    config(&borrowed)
}

/// `n` jobs that all fit on `cfg`, with submissions spaced for roughly
/// `load` utilization of the cores. About one estimate in ten is shorter
/// than the true duration.
pub fn random_jobs(rng: &mut ChaCha8Rng, cfg: &SystemConfig, n: usize, load: f64) -> Vec<JobRecord> {
    let total_cores = cfg.total_capacity().get("core").max(1) as f64;
    let mut jobs = Vec::with_capacity(n);
    let mut submit = 0u64;
    for id in 1..=n as u64 {
        let g = &cfg.groups[rng.gen_range(0..cfg.groups.len())];
        let nodes = rng.gen_range(1..=g.count.min(4)) as u32;
        let mut req = ResourceVector::new();
        for (kind, cap) in g.capacity.iter() {
            let q = match kind {
                "core" => rng.gen_range(1..=cap),
                _ if rng.gen_bool(0.5) => rng.gen_range(0..=cap),
                _ => 0,
            };
            req.set(kind, q);
        }
        let duration = (10f64.powf(rng.gen_range(0.0..3.5)) as u64).max(1);
        let estimate = if rng.gen_bool(0.1) {
            rng.gen_range(1..=duration)
        } else {
            (duration as f64 * rng.gen_range(1.0..3.0)).ceil() as u64
        };
        let work = duration as f64 * req.get("core") as f64 * f64::from(nodes);
        let gap = -(1.0 - rng.gen::<f64>()).ln() * work / (total_cores * load);
        submit += gap.round() as u64;
        jobs.push(JobRecord::new(id, submit, duration, nodes, req).with_estimate(estimate));
    }
    jobs
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Seth-shaped trace

pub const SETH_JOBS: usize = 202_871;
pub const SETH_EPOCH: i64 = 1_027_839_845;
const SURROGATE_VERSION: u32 = 1;

/// A Seth workload file and whether it is the published trace.
pub struct SethTrace {
    pub path: PathBuf,
    pub real: bool,
}

impl SethTrace {
    pub fn label(&self) -> &'static str {
        if self.real {
            "real trace"
        } else {
            "surrogate trace"
        }
    }
}

/// The published HPC2N Seth trace when it is available locally (through
/// `BATCHSIM_SETH_SWF` or `data/HPC2N-2002-2.2-cln.swf` in the workspace),
/// otherwise a deterministic stand-in of the same size and machine shape.
pub fn seth_trace() -> SethTrace {
    if let Some(p) = std::env::var_os("BATCHSIM_SETH_SWF").map(PathBuf::from) {
        if p.is_file() {
            return SethTrace { path: p, real: true };
        }
    }
    let local = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/HPC2N-2002-2.2-cln.swf");
    if local.is_file() {
        return SethTrace { path: local, real: true };
    }
    SethTrace {
        path: surrogate_path(SETH_JOBS),
        real: false,
    }
}

/// Writes (once) and returns the surrogate trace with `jobs` lines.
pub fn surrogate_path(jobs: usize) -> PathBuf {
    let dir = std::env::temp_dir().join("batchsim-tests");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join(format!("seth-surrogate-v{SURROGATE_VERSION}-{jobs}.swf"));
    if !path.is_file() {
        let tmp = dir.join(format!("{}.{}.tmp", path.file_name().unwrap().to_string_lossy(), std::process::id()));
        let mut w = BufWriter::new(fs::File::create(&tmp).unwrap());
        write_surrogate(&mut w, jobs).unwrap();
        w.into_inner().unwrap().sync_all().unwrap();
        fs::rename(&tmp, &path).unwrap();
    }
    path
}

fn hour_factor(h: f64) -> f64 {
    0.25 + 1.6 * (-((h - 12.0) / 3.5).powi(2)).exp()
}

fn day_factor(d: i64) -> f64 {
    match d {
        5 => 0.45,
        6 => 0.35,
        _ => 1.0,
    }
}

/// Seth-like jobs: 120 dual-processor nodes, daytime and weekday peaks,
/// mostly small jobs with a heavy tail in width and run time.
pub fn write_surrogate<W: Write>(w: &mut W, jobs: usize) -> std::io::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5e74);
    writeln!(w, "; Version: 2.2")?;
    writeln!(w, "; Computer: 120 dual-processor nodes (test surrogate)")?;
    writeln!(w, "; UnixStartTime: {SETH_EPOCH}")?;
    writeln!(w, "; MaxNodes: 120")?;
    writeln!(w, "; MaxProcs: 240")?;
    writeln!(w, "; Note: deterministic synthetic workload shaped like the HPC2N Seth log")?;

    // Mean rate over a week, so that the average gap is about 620 s.
    let mut mean_f = 0.0;
    for d in 0..7 {
        for h in 0..24 {
            mean_f += day_factor(d) * hour_factor(h as f64 + 0.5);
        }
    }
    mean_f /= 168.0;
    let base_rate = 1.0 / (620.0 * mean_f);

    let mut t = 0f64;
    for id in 1..=jobs {
        let abs = SETH_EPOCH + t as i64;
        let hour = (abs.rem_euclid(86_400)) as f64 / 3600.0;
        // 1970-01-01 was a Thursday; Monday = 0.
        let day = (abs.div_euclid(86_400) + 3).rem_euclid(7);
        let rate = base_rate * hour_factor(hour) * day_factor(day);
        t += -(1.0 - rng.gen::<f64>()).ln() / rate;

        let procs: i64 = match rng.gen::<f64>() {
            x if x < 0.30 => 1,
            x if x < 0.85 => {
                let k = [1, 1, 1, 2, 2, 3, 3, 4, 5, 6][rng.gen_range(0..10)];
                1 << k
            }
            x if x < 0.995 => rng.gen_range(2..=48),
            _ => [96, 120, 128, 240][rng.gen_range(0..4)],
        };
        let run: i64 = if rng.gen_bool(0.04) {
            rng.gen_range(0..=5)
        } else {
            10f64.powf(rng.gen_range(1.0..4.9)) as i64
        };
        let requested = ((run.max(60) as f64 * rng.gen_range(1.0..4.0)) / 300.0).ceil() as i64 * 300;
        let status = if rng.gen_bool(0.93) { 1 } else { [0, 5][rng.gen_range(0..2)] };
        let user = rng.gen_range(1..=256);
        writeln!(
            w,
            "{id} {} -1 {run} {procs} -1 -1 {procs} {requested} -1 {status} {user} {} -1 1 -1 -1 -1",
            t as i64,
            user % 32 + 1,
        )?;
    }
    Ok(())
}
