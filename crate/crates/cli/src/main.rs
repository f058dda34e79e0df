use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use batchsim::config::SystemConfig;
use batchsim::dispatch::{DispatchOptions, Registry};
use batchsim::experiment::{self, ExperimentPlan, RunStatus, TimingMode};
use batchsim::generator::{self, GeneratorConfig};
use batchsim::metrics::tsv::{bench_path, results_path, TsvRecorder};
use batchsim::metrics::Distribution;
use batchsim::sim::{LoadHorizon, SimError, SimOptions, SimulationSummary, Simulator, StatusReporter, Timing};
use batchsim::swf::{parse_swf, IngestRules};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "batchsim", version, about = "Simulate HPC workload management and job dispatching")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a workload on a system with one dispatcher.
    Simulate(SimulateArgs),
    /// Generate a synthetic workload that mimics a real trace.
    Generate(GenerateArgs),
    /// Run every scheduler/allocator pair of a plan and report.
    Experiment(ExperimentArgs),
    /// Re-render the report of an experiment directory.
    Report(ReportArgs),
    /// Parse a workload or system config and print statistics.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// SWF workload file.
    #[arg(long)]
    workload: PathBuf,
    /// System configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Dispatcher name, SCHEDULER-ALLOCATOR.
    #[arg(long)]
    dispatcher: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "./results")]
    out: PathBuf,
    /// Print a status line every this many simulated seconds (0 = off).
    #[arg(long, default_value_t = 0)]
    status_interval: u64,
    /// Jobs read ahead of the simulation clock.
    #[arg(long, default_value_t = 1000)]
    load_window: usize,
    /// Let FIFO, SJF and LJF skip jobs that cannot start yet.
    #[arg(long)]
    fifo_skip: bool,
    /// Write zero host timings so that outputs are byte-reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Args)]
struct GenerateArgs {
    /// Real SWF trace to mimic.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    config: PathBuf,
    /// Generator parameters (JSON).
    #[arg(long)]
    gen_config: PathBuf,
    /// Number of jobs; overrides the generator config.
    #[arg(long)]
    count: Option<u64>,
    /// Overrides the generator config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output SWF file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment plan (JSON). Inline flags override its fields.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    name: Option<String>,
    #[arg(long)]
    workload: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Comma-separated scheduler names.
    #[arg(long, value_delimiter = ',')]
    schedulers: Vec<String>,
    /// Comma-separated allocator names.
    #[arg(long, value_delimiter = ',')]
    allocators: Vec<String>,
    #[arg(long)]
    repetitions: Option<u32>,
    /// Seed of the first repetition.
    #[arg(long)]
    seed: Option<u64>,
    /// Runs executed at once.
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    load_window: Option<usize>,
    #[arg(long)]
    fifo_skip: bool,
    #[arg(long)]
    no_timing: bool,
    #[arg(long, default_value = "./results")]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment directory, `<out>/<name>`.
    #[arg(long)]
    dir: PathBuf,
    /// Where to write the bundle; defaults to `<dir>/report`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = true)]
struct ValidateArgs {
    #[arg(long)]
    workload: Option<PathBuf>,
    /// System configuration; also sets how a workload is mapped to nodes.
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Exit status: 1 for usage, configuration and input errors, 2 for
/// failures while running.
enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn open(path: &Path) -> Result<BufReader<File>, Failure> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn dispatcher_help(registry: &Registry) -> String {
    format!("Dispatchers:\n  {}", registry.names().join("\n  "))
}

fn fmt_dist(d: &Option<Distribution>) -> String {
    match d {
        Some(d) => format!(
            "mean {:.3}  min {:.3}  q1 {:.3}  median {:.3}  q3 {:.3}  max {:.3}",
            d.mean, d.min, d.q1, d.median, d.q3, d.max
        ),
        None => "n/a".into(),
    }
}

fn summary_text(s: &SimulationSummary) -> String {
    let r = &s.report;
    format!(
        "dispatcher\t{}\njobs\t{}\njobs_read\t{}\nfinal_time\t{}\nfinal_timestamp\t{}\nsteps\t{}\n\
         dispatch_invocations\t{}\nslowdown\t{}\nqueue_size\t{}\nmean_step_us\t{:.3}\n\
         mean_dispatch_us\t{:.3}\npeak_loaded\t{}\nmean_loaded\t{:.3}\nwall_ms\t{}\n",
        s.dispatcher,
        r.jobs,
        s.jobs_read,
        s.final_time,
        s.final_timestamp(),
        r.steps,
        r.dispatch_invocations,
        fmt_dist(&r.slowdown),
        fmt_dist(&r.queue_size),
        r.mean_step_us,
        r.mean_dispatch_us,
        r.peak_loaded,
        r.mean_loaded,
        r.wall_ms
    )
}

fn simulate(args: SimulateArgs, registry: &Registry) -> Result<(), Failure> {
    let sys = SystemConfig::from_path(&args.config).map_err(usage)?;
    let opts = DispatchOptions {
        skip_unplaceable: args.fifo_skip,
        seed: args.seed,
    };
    let mut dispatcher = registry.build(&args.dispatcher, &opts).map_err(usage)?;
    let jobs = parse_swf(open(&args.workload)?, IngestRules::from_config(&sys));
    let name = dispatcher.name().to_string();
    let mut recorder = TsvRecorder::create(&args.out, &name)
        .map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let sim_opts = SimOptions {
        load: LoadHorizon::Jobs(args.load_window),
        seed: args.seed,
        timing: if args.no_timing {
            Timing::Disabled
        } else {
            Timing::Measured
        },
        check_invariants: true,
    };
    let mut sim = Simulator::new(jobs, &sys, dispatcher.as_mut(), &mut recorder, sim_opts);
    if args.status_interval > 0 {
        sim = sim.with_status(StatusReporter::stderr(args.status_interval));
    }
    let summary = sim.run().map_err(|e| match e {
        SimError::Workload(_)
        | SimError::InvalidJob { .. }
        | SimError::Unordered { .. }
        | SimError::DuplicateJob(_) => usage(e),
        _ => runtime(e),
    })?;
    let text = summary_text(&summary);
    let summary_path = args.out.join(format!("{name}.summary.txt"));
    std::fs::write(&summary_path, &text).map_err(|e| runtime(format!("{}: {e}", summary_path.display())))?;
    print!("{text}");
    println!("results\t{}", results_path(&args.out, &name).display());
    println!("bench\t{}", bench_path(&args.out, &name).display());
    Ok(())
}

fn generate(args: GenerateArgs) -> Result<(), Failure> {
    let sys = SystemConfig::from_path(&args.config).map_err(usage)?;
    let mut cfg = GeneratorConfig::from_path(&args.gen_config).map_err(usage)?;
    if let Some(n) = args.count {
        cfg.count = n;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if !args.trace.is_file() {
        return Err(usage(format!("{}: no such file", args.trace.display())));
    }
    let profile = generator::fit_profile_from_swf(&args.trace, &sys, &cfg.performance).map_err(usage)?;
    if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    let file = File::create(&args.out).map_err(|e| runtime(format!("{}: {e}", args.out.display())))?;
    let report = generator::generate(&profile, &sys, &cfg, BufWriter::new(file)).map_err(runtime)?;
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    println!("{} jobs written to {}", report.jobs, args.out.display());
    Ok(())
}

fn experiment_plan(args: &ExperimentArgs) -> Result<ExperimentPlan, Failure> {
    let mut plan = match &args.plan {
        Some(p) => ExperimentPlan::from_path(p).map_err(usage)?,
        None => {
            let (Some(name), Some(w), Some(c)) = (&args.name, &args.workload, &args.config) else {
                return Err(usage("without --plan, --name, --workload and --config are required"));
            };
            ExperimentPlan::new(name, w, c)
        }
    };
    if let Some(n) = &args.name {
        plan.name = n.clone();
    }
    if let Some(w) = &args.workload {
        plan.workload = w.clone();
    }
    if let Some(c) = &args.config {
        plan.config = c.clone();
    }
    if !args.schedulers.is_empty() {
        plan.schedulers = args.schedulers.clone();
    }
    if !args.allocators.is_empty() {
        plan.allocators = args.allocators.clone();
    }
    if let Some(r) = args.repetitions {
        plan.repetitions = r;
    }
    if let Some(s) = args.seed {
        plan.seed_base = s;
    }
    if let Some(p) = args.parallelism {
        plan.parallelism = p;
    }
    if let Some(l) = args.load_window {
        plan.load_window = l;
    }
    plan.skip_unplaceable |= args.fifo_skip;
    if args.no_timing {
        plan.timing = TimingMode::Disabled;
    }
    Ok(plan)
}

fn run_experiment(args: ExperimentArgs, registry: &Registry) -> Result<(), Failure> {
    let plan = experiment_plan(&args)?;
    plan.validate().map_err(usage)?;
    let matrix = experiment::expand(&plan, registry, &args.out).map_err(usage)?;
    for w in &matrix.warnings {
        eprintln!("warning: {w}");
    }
    let runs = experiment::execute(&plan, &matrix, registry).map_err(runtime)?;
    let mut failed = 0;
    for r in &runs {
        match &r.status {
            RunStatus::Completed { jobs, wall_ms } => println!(
                "ok\t{}\trep{}\t{jobs} jobs\t{wall_ms} ms",
                r.spec.dispatcher, r.spec.repetition
            ),
            RunStatus::Failed(msg) => {
                failed += 1;
                println!("failed\t{}\trep{}\t{msg}", r.spec.dispatcher, r.spec.repetition);
            }
        }
    }
    if failed < runs.len() {
        let report = experiment::aggregate(&matrix.root, &matrix.dispatchers).map_err(runtime)?;
        let dir = matrix.root.join("report");
        experiment::render(&report, &dir).map_err(runtime)?;
        for n in &report.notes {
            eprintln!("note: {n}");
        }
        println!("report\t{}", dir.display());
    }
    if failed > 0 {
        return Err(runtime(format!("{failed} of {} runs failed", runs.len())));
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<(), Failure> {
    if !args.dir.is_dir() {
        return Err(usage(format!("{}: not a directory", args.dir.display())));
    }
    let report = experiment::aggregate_dir(&args.dir).map_err(usage)?;
    let out = args.out.unwrap_or_else(|| args.dir.join("report"));
    experiment::render(&report, &out).map_err(runtime)?;
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    println!("report\t{}", out.display());
    Ok(())
}

fn validate(args: ValidateArgs) -> Result<(), Failure> {
    let mut sys = None;
    if let Some(path) = &args.config {
        let cfg = SystemConfig::from_path(path).map_err(usage)?;
        let totals: Vec<String> = cfg
            .total_capacity()
            .iter()
            .map(|(k, v)| format!("{v} {k}"))
            .collect();
        println!("{}: {} nodes, {}", path.display(), cfg.node_count(), totals.join(", "));
        sys = Some(cfg);
    }
    if let Some(path) = &args.workload {
        let rules = sys.as_ref().map(IngestRules::from_config).unwrap_or_else(|| IngestRules::simple(1));
        let mut reader = parse_swf(open(path)?, rules);
        for job in reader.by_ref() {
            job.map_err(|e| usage(format!("{}: {e}", path.display())))?;
        }
        let stats = reader.stats();
        if stats.raw_jobs == 0 {
            return Err(usage(format!("{}: no job lines", path.display())));
        }
        let s = stats.skipped;
        println!(
            "{}: {} job lines, {} usable, {} filtered (negative submit {}, negative run time {}, \
             no processors {}, bad job number {}, never fits {})",
            path.display(),
            stats.raw_jobs,
            stats.yielded,
            s.total(),
            s.negative_submit,
            s.negative_run_time,
            s.no_processors,
            s.bad_job_number,
            s.infeasible
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let registry = Registry::builtin();
    let help = dispatcher_help(&registry);
    let cmd = Cli::command()
        .after_help(help.clone())
        .mut_subcommand("simulate", |c| c.after_help(help.clone()))
        .mut_subcommand("experiment", |c| c.after_help(help.clone()));
    let parsed = cmd
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(1);
        }
        Err(e) => e.exit(),
    };
    let result = match cli.command {
        Command::Simulate(a) => simulate(a, &registry),
        Command::Generate(a) => generate(a),
        Command::Experiment(a) => run_experiment(a, &registry),
        Command::Report(a) => report(a),
        Command::Validate(a) => validate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let _ = io::stdout().flush();
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
