//! CPU->CAP fronthaul power and subcarrier allocation with the quadratic
//! transform and smoothed-l0 surrogate, printing the bisection trace.
//!
//! cargo run --release --example fronthaul_allocation

use mddfh::association::ClusteringMethod;
use mddfh::conic::ClarabelEngine;
use mddfh::fronthaul::{build_cc_problem, initial_allocation, solve_fronthaul_maxmin};
use mddfh::scenario::{generate_scenario, ScenarioConfig};
use mddfh::scheduler::{SchedulerConfig, Trial};

fn main() -> mddfh::error::Result<()> {
    let scenario = generate_scenario(&ScenarioConfig::default(), 5)?;
    let cfg = SchedulerConfig::default();
    let engine = ClarabelEngine::default();
    let trial = Trial::new(&scenario, &cfg, &engine)?;
    let st = trial.state(ClusteringMethod::Dc, 4)?.expect("DC with 4 clusters serves all devices");

    let subcarriers: Vec<usize> = (0..scenario.band.n_fronthaul_subcarriers).collect();
    let (problem, _) = build_cc_problem(
        &trial.channels,
        &st.assignment,
        &st.precoders,
        &subcarriers,
        scenario.power.fronthaul_noise(&scenario.band),
        &vec![0.0; st.assignment.n_clusters()],
        scenario.power.p_cpu,
        scenario.band.subcarrier_bandwidth(),
    );
    println!("{} rows, {} power variables", problem.n_rows, problem.vars.len());
    let start = problem.min_rate(&initial_allocation(&problem)).unwrap_or(0.0);
    println!("round-robin start: {:.3e} bit/s", start);

    let sol = solve_fronthaul_maxmin(&problem, &cfg.fronthaul, &engine)?;
    println!("{:>5} {:>5} {:>12} {:>12} {:>12} feasible", "round", "iter", "chi", "lower", "upper");
    for r in &sol.trace {
        println!("{:5} {:5} {:12.4e} {:12.4e} {:12.4e} {}", r.round, r.iteration, r.chi, r.lower, r.upper, r.feasible);
    }
    println!("max-min rate {:.3e} bit/s (upper bound {:.3e})", sol.min_rate, sol.upper0);
    let active = sol.p.iter().filter(|&&x| x > 0.0).count();
    println!("{active} of {} variables carry power", sol.p.len());
    for (row, rate) in problem.row_rates(&sol.p).iter().enumerate() {
        println!("  row {row}: {rate:.3e} bit/s");
    }
    Ok(())
}
