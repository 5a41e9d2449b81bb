use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use d2dsim::config::{RunConfig, RunLabel};
use d2dsim::runner;
use d2dsim::SimError;

/// System-level simulator for cluster-based D2D relaying of machine-type
/// traffic in a dense urban macro cell.
#[derive(Parser)]
#[command(name = "d2dsim", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenarios and write their artifacts.
    Run(RunArgs),
    /// Print the default configuration as JSON (edit and pass via --config).
    PrintConfig,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Baseline,
    Geometric,
    Kmeans,
    Distance,
    DistanceCsi,
    All,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Clustering method to run; `all` runs the four methods.
    #[arg(long, value_enum)]
    method: Option<MethodArg>,

    /// Override the geometric cluster area, m^2.
    #[arg(long)]
    a_sector: Option<f64>,

    /// Include the D2D-disabled baseline run.
    #[arg(long)]
    baseline: bool,

    /// Override the number of simulated days.
    #[arg(long)]
    days: Option<u32>,

    /// Output directory for run artifacts.
    #[arg(long, short)]
    out: Option<PathBuf>,

    /// Dump every evaluated link to links.csv.
    #[arg(long)]
    write_links: bool,

    /// Dump the event trace.
    #[arg(long)]
    write_trace: bool,

    /// Dump environment and deployment JSON for replay.
    #[arg(long)]
    write_env: bool,
}

fn labels_for(args: &RunArgs, cfg: &RunConfig) -> Vec<RunLabel> {
    let mut labels = Vec::new();
    if args.baseline {
        labels.push(RunLabel::Baseline);
    }
    match args.method {
        Some(MethodArg::All) => labels.extend(RunLabel::all_methods()),
        Some(MethodArg::Baseline) => {
            if labels.is_empty() {
                labels.push(RunLabel::Baseline);
            }
        }
        Some(MethodArg::Geometric) => labels.push(RunLabel::Geometric),
        Some(MethodArg::Kmeans) => labels.push(RunLabel::KMeans),
        Some(MethodArg::Distance) => labels.push(RunLabel::Distance),
        Some(MethodArg::DistanceCsi) => labels.push(RunLabel::DistanceCsi),
        None => {
            if labels.is_empty() {
                labels = cfg.methods.clone();
            }
        }
    }
    labels
}

fn run(args: RunArgs) -> Result<(), SimError> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_json(&std::fs::read_to_string(path)?)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(a) = args.a_sector {
        cfg.clustering.a_sector_m2 = a;
    }
    if let Some(days) = args.days {
        cfg.simulated_days = days;
    }
    cfg.outputs.write_links |= args.write_links;
    cfg.outputs.write_trace |= args.write_trace;
    cfg.outputs.write_environment |= args.write_env;

    let labels = labels_for(&args, &cfg);
    cfg.methods = labels.clone();
    cfg.validate()?;

    let summaries = runner::compare_methods(&cfg, &labels, args.out.as_deref())?;
    print!("{}", runner::format_comparison(&summaries));
    if let Some(out) = &args.out {
        eprintln!("artifacts written to {}", out.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::PrintConfig => RunConfig::default()
            .canonical_json()
            .map(|text| println!("{text}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
