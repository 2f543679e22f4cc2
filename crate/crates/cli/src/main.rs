use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use depin_core::bench::{self, PlatformStats, Ranking, SampleSet};
use depin_core::discovery::{analyze, parse_log, PrefixTable, VendorMap};
use depin_core::simulator::{self, Scenario, SimError};

#[derive(Parser)]
#[command(name = "depin", version, about = "Simulate, benchmark and analyse a decentralized compute network")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file through the discrete-event simulator.
    Simulate(SimulateArgs),
    /// Time the prime-sieve workload on this machine.
    Bench(BenchArgs),
    /// Resolve request logs to nodes, countries and devices.
    Discover(DiscoverArgs),
    /// Energy per execution and executions per watt-hour.
    Power(PowerArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario file (TOML).
    #[arg(long)]
    scenario: PathBuf,
    /// Override the scenario's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report.json, samples.csv, stats.json and run.json.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Sieve upper bound.
    #[arg(long, default_value_t = bench::DEFAULT_WORKLOAD_PARAM)]
    max: usize,
    #[arg(long, default_value_t = 10, value_parser = clap::value_parser!(u32).range(1..))]
    iterations: u32,
    #[arg(long, default_value_t = bench::DEFAULT_WARMUP_RUNS)]
    warmup: u32,
    /// Platform label written into the samples.
    #[arg(long, default_value = "local")]
    platform: String,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct DiscoverArgs {
    /// JSON-lines request log.
    #[arg(long)]
    log: PathBuf,
    /// CSV table `prefix,country,organization`.
    #[arg(long)]
    prefixes: PathBuf,
    /// CSV table `model_prefix,vendor`.
    #[arg(long)]
    vendors: PathBuf,
    /// Organization whose addresses are ignored; repeatable.
    #[arg(long = "deny")]
    deny: Vec<String>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
#[command(group(clap::ArgGroup::new("source").required(true).args(["watts", "tdp"])))]
struct PowerArgs {
    /// Power draw of one execution unit in watts.
    #[arg(long, allow_negative_numbers = true)]
    watts: Option<f64>,
    /// CPU thermal design power, split evenly over `--cores`.
    #[arg(long, requires = "cores", allow_negative_numbers = true)]
    tdp: Option<f64>,
    #[arg(long, requires = "tdp", allow_negative_numbers = true)]
    cores: Option<i64>,
    /// Duration of one execution in milliseconds.
    #[arg(long, allow_negative_numbers = true)]
    duration: f64,
}

/// What one invocation does, after argument parsing.
#[derive(Debug, Serialize)]
struct RunConfig {
    command: &'static str,
    inputs: Vec<PathBuf>,
    out: PathBuf,
    seed: Option<u64>,
    workload_param: Option<u64>,
    iterations: Option<u32>,
}

#[derive(Serialize)]
struct StatsFile<'a> {
    platforms: &'a [PlatformStats],
    #[serde(skip_serializing_if = "Option::is_none")]
    ranking: Option<&'a Ranking>,
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    tool_version: &'a str,
    started_unix_s: u64,
    config: &'a RunConfig,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 1 for an internal invariant violation, 2 for anything the operator can fix.
fn exit_code(err: &anyhow::Error) -> u8 {
    let invariant = err
        .chain()
        .any(|e| matches!(e.downcast_ref::<SimError>(), Some(SimError::Invariant { .. })));
    if invariant {
        1
    } else {
        2
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Simulate(a) => simulate(a),
        Command::Bench(a) => run_bench(a),
        Command::Discover(a) => discover(a),
        Command::Power(a) => power(a),
    }
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create output directory {}", dir.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    let file = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_metadata(config: &RunConfig) -> Result<()> {
    let started_unix_s = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let meta = RunMetadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        started_unix_s,
        config,
    };
    write_json(&config.out.join("run.json"), &meta)
}

fn stats_of(sets: &[SampleSet]) -> Result<(Vec<PlatformStats>, Option<Ranking>)> {
    let stats = sets.iter().map(bench::stats).collect::<Result<Vec<_>, _>>()?;
    let ranking = if stats.len() >= 2 { Some(bench::compare(&stats)?) } else { None };
    Ok((stats, ranking))
}

fn print_stats_table(stats: &[PlatformStats]) {
    println!(
        "{:<12} {:>8} {:>12} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "platform", "samples", "mean_ms", "std_ms", "min_ms", "p50_ms", "p95_ms", "max_ms"
    );
    for s in stats {
        println!(
            "{:<12} {:>8} {:>12.3} {:>10.3} {:>12.3} {:>12.3} {:>12.3} {:>12.3}",
            s.platform, s.samples, s.mean_ms, s.std_ms, s.min_ms, s.p50_ms, s.p95_ms, s.max_ms
        );
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&args.scenario)
        .with_context(|| format!("cannot read scenario {}", args.scenario.display()))?;
    let mut scenario =
        Scenario::from_toml(&text).with_context(|| format!("invalid scenario {}", args.scenario.display()))?;
    if let Some(seed) = args.seed {
        scenario.seed = seed;
    }
    let config = RunConfig {
        command: "simulate",
        inputs: vec![args.scenario.clone()],
        out: args.out.clone(),
        seed: Some(scenario.seed),
        workload_param: None,
        iterations: None,
    };
    info!(
        "simulating {} jobs on {} processors with seed {}",
        scenario.jobs.len(),
        scenario.processors.len(),
        scenario.seed
    );
    let report = simulator::run(&scenario)?;
    prepare_out(&args.out)?;
    fs::write(args.out.join("report.json"), report.to_json())
        .with_context(|| format!("cannot write {}", args.out.join("report.json").display()))?;
    let mut csv = create(&args.out.join("samples.csv"))?;
    report.write_samples_csv(&mut csv)?;
    csv.flush()?;

    let workload = scenario.jobs.first().map_or(0, |j| j.spec.workload.param);
    let (stats, ranking) = stats_of(&report.sample_sets(workload))?;
    write_json(
        &args.out.join("stats.json"),
        &StatsFile {
            platforms: &stats,
            ranking: ranking.as_ref(),
        },
    )?;
    write_metadata(&config)?;
    info!(
        "{} of {} slots succeeded (success rate {:.4}); simulated time {} ms",
        report.successful_slots, report.reported_slots, report.success_rate, report.end_time_ms
    );
    print_stats_table(&stats);
    Ok(())
}

fn run_bench(args: BenchArgs) -> Result<()> {
    let config = RunConfig {
        command: "bench",
        inputs: Vec::new(),
        out: args.out.clone(),
        seed: None,
        workload_param: Some(args.max as u64),
        iterations: Some(args.iterations),
    };
    prepare_out(&args.out)?;
    info!(
        "sieve up to {} for {} iterations after {} warm-up runs",
        args.max, args.iterations, args.warmup
    );
    let run = bench::run_benchmark_with(args.max, args.iterations, args.warmup, &args.platform)?;
    info!("prime count {}", run.prime_count);
    let sets = [run.samples];
    let mut csv = create(&args.out.join("samples.csv"))?;
    bench::write_samples_csv(&mut csv, &sets)?;
    csv.flush()?;
    let (stats, ranking) = stats_of(&sets)?;
    write_json(
        &args.out.join("stats.json"),
        &StatsFile {
            platforms: &stats,
            ranking: ranking.as_ref(),
        },
    )?;
    write_metadata(&config)?;
    print_stats_table(&stats);
    Ok(())
}

fn discover(args: DiscoverArgs) -> Result<()> {
    let open = |p: &Path| File::open(p).with_context(|| format!("cannot read {}", p.display()));
    let log = parse_log(BufReader::new(open(&args.log)?))
        .with_context(|| format!("cannot read {}", args.log.display()))?;
    let table = PrefixTable::from_csv(open(&args.prefixes)?)
        .with_context(|| format!("invalid prefix table {}", args.prefixes.display()))?;
    let vendors = VendorMap::from_csv(open(&args.vendors)?)
        .with_context(|| format!("invalid vendor map {}", args.vendors.display()))?;
    let config = RunConfig {
        command: "discover",
        inputs: vec![args.log.clone(), args.prefixes.clone(), args.vendors.clone()],
        out: args.out.clone(),
        seed: None,
        workload_param: None,
        iterations: None,
    };
    for r in &log.rejected {
        log::warn!("{}: line {} rejected: {}", args.log.display(), r.line, r.reason);
    }
    let denied: BTreeSet<String> = args.deny.into_iter().collect();
    let report = analyze(log, &table, &vendors, &denied);
    prepare_out(&args.out)?;
    write_json(&args.out.join("discovery.json"), &report)?;
    write_metadata(&config)?;
    info!(
        "{} records, {} nodes in {} countries, {} distinct devices",
        report.records,
        report.nodes.len(),
        report.countries.len(),
        report.devices_by_prefix.distinct_devices
    );
    Ok(())
}

fn positive(name: &str, value: f64) -> Result<f64> {
    if !(value.is_finite() && value > 0.0) {
        bail!("--{name} must be a positive number, got {value}");
    }
    Ok(value)
}

fn power(args: PowerArgs) -> Result<()> {
    let watts = match (args.watts, args.tdp, args.cores) {
        (Some(w), _, _) => positive("watts", w)?,
        (None, Some(tdp), Some(cores)) => {
            let tdp = positive("tdp", tdp)?;
            if cores < 1 {
                bail!("--cores must be at least 1, got {cores}");
            }
            let cores = u32::try_from(cores).context("--cores is too large")?;
            bench::per_core_watts(tdp, cores)
        }
        _ => bail!("give either --watts or both --tdp and --cores"),
    };
    let duration = positive("duration", args.duration)?;
    let energy = bench::energy_wh(watts, duration);
    println!("power_watts: {watts}");
    println!("energy_wh: {energy:.6e}");
    println!("executions_per_wh: {}", bench::executions_per_wh(energy));
    Ok(())
}
