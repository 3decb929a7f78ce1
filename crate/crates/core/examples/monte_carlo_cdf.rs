//! Small Monte Carlo run over chosen schemes and the per-device rate CDF of
//! each, optionally writing the CSV set.
//!
//! cargo run --release --example monte_carlo_cdf [trials] [out_dir]

use mddfh::harness::{emit_cdf, run_experiment, ExperimentConfig};
use mddfh::scheduler::Scheme;

fn main() -> mddfh::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let trials = args.next().and_then(|s| s.parse().ok()).unwrap_or(4);
    let cfg = ExperimentConfig {
        trials,
        schemes: vec![Scheme::MddTtwl, Scheme::TddTtwl, Scheme::Ttw, Scheme::Stw],
        out_dir: args.next().map(Into::into),
        ..ExperimentConfig::default()
    };
    let results = run_experiment(&cfg)?;
    for &scheme in &cfg.schemes {
        let cdf = emit_cdf(&results, scheme)?;
        println!(
            "{:9} n={:3}  q10 {:.3e}  median {:.3e}  q90 {:.3e}",
            scheme.name(),
            cdf.samples.len(),
            cdf.q10,
            cdf.q50,
            cdf.q90
        );
        let bar: String = cdf
            .table()
            .iter()
            .step_by((cdf.samples.len() / 8).max(1))
            .map(|(x, p)| format!(" {:.2}@{:.2e}", p, x))
            .collect();
        println!("          cdf:{bar}");
    }
    if let Some(dir) = &cfg.out_dir {
        println!("wrote results to {}", dir.display());
    }
    Ok(())
}
