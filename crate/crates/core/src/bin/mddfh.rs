use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mddfh::harness::{run_experiment, ExperimentConfig};
use mddfh::scheduler::Scheme;

/// Monte Carlo runs of the two-tier THz fronthaul schemes.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML experiment file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Comma-separated, e.g. MDD-TTWL,TDD-TTWL,TTW.
    #[arg(long, value_delimiter = ',')]
    schemes: Option<Vec<Scheme>>,
    #[arg(long, default_value = "results")]
    out: PathBuf,
    /// 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Write every channel coefficient, one CSV per trial.
    #[arg(long)]
    dump_channels: bool,
    /// Write the fronthaul bisection trace of every solve.
    #[arg(long)]
    trace_solver: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut cfg = match &args.config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("{}: {e}", p.display());
                return ExitCode::FAILURE;
            }
        },
        None => ExperimentConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.schemes {
        cfg.schemes = s;
    }
    if let Some(t) = args.threads {
        cfg.threads = t;
    }
    cfg.out_dir = Some(args.out.clone());
    cfg.dump_channels |= args.dump_channels;
    cfg.trace_solver |= args.trace_solver;
    match run_experiment(&cfg) {
        Ok(res) => {
            let flagged = res.trials.iter().filter(|t| t.flagged()).count();
            for &s in &cfg.schemes {
                if let Ok(c) = mddfh::harness::emit_cdf(&res, s) {
                    println!("{:9} q10 {:.3e}  median {:.3e}  q90 {:.3e}", s.name(), c.q10, c.q50, c.q90);
                }
            }
            println!("{} trials, {flagged} flagged, results in {}", cfg.trials, args.out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
