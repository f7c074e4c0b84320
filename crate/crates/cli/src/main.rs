use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use kdisc_cli::experiments::ExperimentSpec;
use kdisc_cli::{find, CliError, CliResult, Config, EXPERIMENTS};

#[derive(Parser, Debug)]
#[command(name = "kdisc", about = "Kernel discrepancy experiment runner", disable_help_subcommand = true)]
struct Args {
    /// Experiment id
    experiment: Option<String>,
    /// Flat key=value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// CSV destination, default `<experiment>.csv`
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    reps: Option<usize>,
    /// Extra key=value overrides
    overrides: Vec<String>,
}

fn overview() -> String {
    let mut s = String::from("usage: kdisc <experiment> [--config PATH] [--seed U64] [--out PATH] [--reps N] [key=value]...\n\nexperiments:\n");
    for e in EXPERIMENTS {
        s.push_str(&format!("  {:<14} {}\n", e.id, e.about));
    }
    s
}

fn build_config(args: &Args, spec: &ExperimentSpec) -> CliResult<Config> {
    let mut cfg = match &args.config {
        Some(path) => {
            let cfg = Config::parse(&std::fs::read_to_string(path)?)?;
            if cfg.is_empty() && args.overrides.is_empty() {
                return Err(CliError::Usage(format!("config file {} is empty\n\n{}", path.display(), spec.usage())));
            }
            cfg
        }
        None => Config::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    if let Some(seed) = args.seed {
        cfg.set("seed", seed);
    }
    if let Some(reps) = args.reps {
        cfg.set("reps", reps);
    }
    if let Some(out) = &args.out {
        cfg.set("out", out.display());
    }
    Ok(cfg)
}

fn run(args: Args) -> CliResult<()> {
    let id = args.experiment.as_deref().ok_or_else(|| CliError::Usage(overview()))?;
    let spec = find(id).ok_or_else(|| CliError::Usage(format!("unknown experiment '{id}'\n\n{}", overview())))?;
    let cfg = build_config(&args, spec)?;
    let out = cfg.get_str("out").map(PathBuf::from).unwrap_or_else(|| PathBuf::from(format!("{id}.csv")));
    let start = Instant::now();
    let report = spec.run(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    std::fs::write(&out, report.to_csv()?)?;
    println!("{}", report.summary_line(seconds));
    for note in &report.notes {
        println!("  {note}");
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };
    match run(args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
