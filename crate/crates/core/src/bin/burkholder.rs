use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use burkholder::optimizer::CgOptions;
use burkholder::runner::{self, ExperimentConfig, Format, RayTable, Suite, TrialCounts};
use burkholder::torus::GridFunction;
use burkholder::Error;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_ABORT: u8 = 3;

/// Numerical experiments on the Burkholder functions.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    /// Cap on worker threads; defaults to all cores.
    #[arg(long, global = true, env = "BURKHOLDER_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one suite or all of them and write a run record.
    Run(RunArgs),
    /// Re-execute the config stored in a JSON record and report drift.
    Replay {
        record: PathBuf,
    },
    /// Tabulate h(t) = F_N(t·x) for a stored direction as CSV.
    Ray {
        #[arg(long, env = "BURKHOLDER_DIRECTION")]
        direction: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        half_width: f64,
        #[arg(long, default_value_t = 401)]
        points: usize,
        #[arg(long, env = "BURKHOLDER_OUT")]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, env = "BURKHOLDER_SUITE", default_value = "all", value_parser = parse_suite)]
    suite: Suite,
    /// Mesh sizes, comma separated.
    #[arg(long = "n", env = "BURKHOLDER_N", value_delimiter = ',')]
    sizes: Option<Vec<usize>>,
    #[arg(long, env = "BURKHOLDER_STARTS")]
    starts: Option<usize>,
    #[arg(long, env = "BURKHOLDER_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "BURKHOLDER_AMPLITUDE")]
    amplitude: Option<f64>,
    /// Exponents, comma separated.
    #[arg(long, env = "BURKHOLDER_P", value_delimiter = ',')]
    p: Option<Vec<f64>>,
    #[arg(long, env = "BURKHOLDER_TOL_GRAD")]
    tol_grad: Option<f64>,
    #[arg(long, env = "BURKHOLDER_OUT")]
    out: Option<PathBuf>,
    #[arg(long, env = "BURKHOLDER_FORMAT", default_value = "json", value_parser = parse_format)]
    format: Format,
    /// Fixed ray direction (GridFunction JSON or binary) for the ray suite.
    #[arg(long, env = "BURKHOLDER_DIRECTION")]
    direction: Option<PathBuf>,
    /// Small sample counts for a fast smoke run.
    #[arg(long)]
    quick: bool,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_format(s: &str) -> Result<Format, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn load_direction(path: &Path) -> burkholder::Result<GridFunction> {
    let bytes = fs::read(path)?;
    match std::str::from_utf8(&bytes) {
        Ok(text) if text.trim_start().starts_with('{') => GridFunction::from_json(text),
        _ => GridFunction::read_binary(bytes.as_slice()),
    }
}

fn config_from(args: RunArgs) -> burkholder::Result<ExperimentConfig> {
    let defaults = ExperimentConfig::default();
    let mut tolerances = CgOptions::default();
    if let Some(t) = args.tol_grad {
        tolerances.gradient_tolerance = t;
    }
    Ok(ExperimentConfig {
        suite: args.suite,
        sizes: args.sizes.unwrap_or(defaults.sizes),
        starts: args.starts.unwrap_or(defaults.starts),
        master_seed: args.seed.unwrap_or(defaults.master_seed),
        amplitude: args.amplitude.unwrap_or(defaults.amplitude),
        p_list: args.p.unwrap_or(defaults.p_list),
        tolerances,
        output_path: args.out,
        format: args.format,
        trials: if args.quick { TrialCounts::small() } else { TrialCounts::default() },
        ray_direction: args.direction.as_deref().map(load_direction).transpose()?,
    })
}

fn failure(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::InvalidArgument { .. } | Error::Io(_) | Error::Json(_) | Error::Format(_) => ExitCode::from(EXIT_USAGE),
        _ => ExitCode::from(EXIT_ABORT),
    }
}

fn run(args: RunArgs) -> ExitCode {
    let cfg = match config_from(args) {
        Ok(c) => c,
        Err(e) => return failure(&e),
    };
    let record = match runner::run(&cfg) {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    for s in &record.suites {
        println!("{s}");
        for note in &s.notes {
            println!("           {note}");
        }
    }
    if record.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn replay(path: &Path) -> ExitCode {
    let report = match runner::replay(path) {
        Ok(r) => r,
        Err(e) => return failure(&e),
    };
    for d in &report.drift {
        let at = d.item.map(|k| format!("item {k} ")).unwrap_or_default();
        println!("drift: {at}{}: recorded {} replayed {}", d.field, d.recorded, d.replayed);
    }
    if report.clean() {
        println!("replay: no drift in {} items", report.replayed.items.len());
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILED)
    }
}

fn ray(direction: &Path, half_width: f64, points: usize, out: Option<&Path>) -> ExitCode {
    let result = (|| -> burkholder::Result<(String, f64)> {
        let dir = load_direction(direction)?;
        if !(half_width > 0.0 && half_width.is_finite()) || points < 2 {
            return Err(Error::InvalidArgument {
                name: "half_width/points",
                reason: "need a positive width and at least two points".into(),
            });
        }
        let t = burkholder::optimizer::linspace(-half_width, half_width, points);
        let prof = burkholder::optimizer::ray_profile(&dir, &t)?;
        let worst = prof.increasing_violation.max(prof.decreasing_violation);
        let table = RayTable {
            n: dir.grid().n(),
            seed: None,
            t: prof.t,
            h: prof.h,
            concavity_witnesses: prof.concavity_witnesses,
        };
        Ok((runner::ray_table_csv(&table)?, worst))
    })();
    match result {
        Ok((csv, worst)) => {
            match out {
                Some(p) => {
                    if let Err(e) = fs::write(p, csv) {
                        return failure(&e.into());
                    }
                }
                None => print!("{csv}"),
            }
            eprintln!("monotonicity violation {worst:.3e}");
            ExitCode::SUCCESS
        }
        Err(e) => failure(&e),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(k).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE);
        }
    }
    match cli.command {
        Command::Run(args) => run(args),
        Command::Replay { record } => replay(&record),
        Command::Ray {
            direction,
            half_width,
            points,
            out,
        } => ray(&direction, half_width, points, out.as_deref()),
    }
}
