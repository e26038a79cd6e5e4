use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use pircsi_core::audit::{AuditMode, AuditOptions, DEFAULT_CAP, DEFAULT_SAMPLES};
use pircsi_core::harness::{self, GridSpec};
use pircsi_core::ratio::{display, to_fraction_string};
use pircsi_core::{capacity_model_i, capacity_model_ii, posterior_audit, Error, Model, Params, Protocol};

#[derive(Parser, Debug)]
#[command(name = "pircsi", version, about = "Private information retrieval with coded side information")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the capacity for a configuration.
    Capacity(CapacityArgs),
    /// Run seeded retrievals and write one transcript per trial.
    Run(RunArgs),
    /// Audit the privacy of a configuration and write a JSON report.
    Audit(AuditArgs),
    /// Measure rate against capacity over a grid and write bench.csv.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct ShapeArgs {
    /// I: demand outside the side information; II: inside.
    #[arg(long)]
    model: Model,
    /// Number of servers.
    #[arg(short = 'N')]
    n: usize,
    /// Number of messages.
    #[arg(short = 'K')]
    k: usize,
    /// Side-information support size.
    #[arg(short = 'M')]
    m: usize,
}

#[derive(Args, Debug)]
struct ParamArgs {
    #[command(flatten)]
    shape: ShapeArgs,
    /// Prime field order.
    #[arg(short = 'q', default_value_t = 3)]
    q: u64,
}

impl ParamArgs {
    fn params(&self) -> Result<Params, Failure> {
        let s = &self.shape;
        Params::new(s.model, s.n, s.k, s.m, self.q).map_err(Failure::from)
    }
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[command(flatten)]
    shape: ShapeArgs,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    trials: u64,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Spread trials over worker threads.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[command(flatten)]
    params: ParamArgs,
    /// Enumerate every outcome; fail if over the cap.
    #[arg(long, conflicts_with = "sampled")]
    exhaustive: bool,
    /// Statistical check only.
    #[arg(long)]
    sampled: bool,
    /// Replace the selection distribution with a uniform one over profiles.
    #[arg(long)]
    broken_distribution: bool,
    /// Also search indistinguishability witnesses for every demand pair.
    #[arg(long)]
    witnesses: bool,
    /// List every view rather than grouping views by posterior.
    #[arg(long)]
    list_views: bool,
    #[arg(long, default_value_t = DEFAULT_CAP)]
    cap: u128,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Grid such as "N=1..3;K=2..6;model=I,II;q=3".
    #[arg(long, default_value = "")]
    grid: String,
    #[arg(long, default_value_t = 3)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out: PathBuf,
    #[arg(long)]
    parallel: bool,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Recovery(String),
    Privacy(String),
    Cap(String),
    Io(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) | Failure::Io(_) => 1,
            Failure::Recovery(_) => 2,
            Failure::Privacy(_) => 3,
            Failure::Cap(_) => 4,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::CapExceeded { .. } => Failure::Cap(e.to_string()),
            Error::RecoveryFailed(_) => Failure::Recovery(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Io(e)
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, Failure> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn capacity(args: &CapacityArgs) -> Result<(), Failure> {
    let s = &args.shape;
    let c = match s.model {
        Model::I => capacity_model_i(s.n, s.k, s.m),
        Model::II => capacity_model_ii(s.n, s.k, s.m),
    }?;
    println!("{}", display(&c));
    Ok(())
}

fn run(args: &RunArgs) -> Result<(), Failure> {
    let params = args.params.params()?;
    let out = harness::run(params, args.seed, args.trials, args.parallel)?;
    let mut first_bad = None;
    for t in &out.transcripts {
        let path = write(&args.out, &t.file_name(), &t.to_json())?;
        if !t.user.recovered_ok && first_bad.is_none() {
            first_bad = Some(path);
        }
    }
    let s = &out.summary;
    println!("config {}", s.config);
    println!("recovered {}/{}", s.recovered, s.trials);
    println!("downloaded {} symbols for {}-symbol messages", s.downloaded_symbols, s.message_len);
    println!("measured rate {}", to_fraction_string(&s.measured_rate));
    println!("capacity {}", to_fraction_string(&s.capacity));
    println!("match {}", s.matches);
    match first_bad {
        Some(path) => Err(Failure::Recovery(format!("see {}", path.display()))),
        None => Ok(()),
    }
}

fn audit(args: &AuditArgs) -> Result<(), Failure> {
    let params = args.params.params()?;
    let protocol = if args.broken_distribution {
        let dist = Protocol::new(params)?
            .distribution()
            .ok_or_else(|| Failure::Usage(format!("{} has no selection distribution to break", params.label())))?
            .uniform_over_profiles();
        Protocol::with_distribution(params, dist)?
    } else {
        Protocol::new(params)?
    };
    let mode = if args.exhaustive {
        AuditMode::Exhaustive
    } else if args.sampled {
        AuditMode::Sampled
    } else {
        AuditMode::Auto
    };
    let opts = AuditOptions {
        mode,
        cap: args.cap,
        samples: args.samples,
        seed: args.seed,
        witnesses: args.witnesses,
        list_views: args.list_views,
        ..AuditOptions::default()
    };
    let report = match posterior_audit(&protocol, &opts) {
        Err(e @ Error::CapExceeded { .. }) => {
            return Err(Failure::Cap(format!("{e}; rerun with --sampled")));
        }
        other => other?,
    };
    let suffix = if args.broken_distribution { "-broken" } else { "" };
    let path = write(&args.out, &format!("audit-{}{suffix}.json", report.config), &report.to_json())?;
    println!("config {}", report.config);
    match (&report.max_deviation, &report.sampled_tv) {
        (Some(d), _) => println!("exact audit: max deviation {}", to_fraction_string(d)),
        (None, Some(tv)) => println!(
            "sampled audit ({} samples): total variation {}",
            report.samples.unwrap_or(0),
            display(tv)
        ),
        _ => {}
    }
    if let Some(done) = report.witnesses_complete {
        let missing = report.witnesses.iter().filter(|w| w.witness.is_none()).count();
        println!("witnesses complete {done} ({missing} missing)");
    }
    println!("report {}", path.display());
    if report.private {
        Ok(())
    } else {
        Err(Failure::Privacy(format!("{} is not private", report.config)))
    }
}

fn bench(args: &BenchArgs) -> Result<(), Failure> {
    let grid: GridSpec = args.grid.parse()?;
    let rows = harness::sweep(&grid, args.trials, args.seed, args.parallel)?;
    let path = write(&args.out, "bench.csv", &harness::to_csv(&rows))?;
    let matched = rows.iter().filter(|r| r.matches).count();
    println!("{matched}/{} configurations at capacity, wrote {}", rows.len(), path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Capacity(a) => capacity(a),
        Command::Run(a) => run(a),
        Command::Audit(a) => audit(a),
        Command::Bench(a) => bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(m) => eprintln!("usage error: {m}"),
                Failure::Recovery(m) => eprintln!("recovery failed: {m}"),
                Failure::Privacy(m) => eprintln!("privacy check failed: {m}"),
                Failure::Cap(m) => eprintln!("{m}"),
                Failure::Io(e) => eprintln!("error: {e:#}"),
            }
            ExitCode::from(f.code())
        }
    }
}
