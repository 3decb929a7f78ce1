//! Max-min access power control by bisection over SOC feasibility, compared
//! with an even power split.
//!
//! cargo run --release --example access_power

use mddfh::access::{chi_upper, even_split, solve_access_maxmin, AccessProblem, BisectionConfig};
use mddfh::association::ClusteringMethod;
use mddfh::conic::ClarabelEngine;
use mddfh::scenario::{generate_scenario, ScenarioConfig};
use mddfh::scheduler::{SchedulerConfig, Trial};

fn main() -> mddfh::error::Result<()> {
    let scenario = generate_scenario(&ScenarioConfig::default(), 11)?;
    let cfg = SchedulerConfig::default();
    let engine = ClarabelEngine::default();
    let trial = Trial::new(&scenario, &cfg, &engine)?;
    let st = trial.state(ClusteringMethod::Dc, 4)?.expect("DC with 4 clusters serves all devices");

    let problem = AccessProblem::build(&scenario, &trial.channels, &st.assignment, &st.precoders);
    let (_, even) = even_split(&problem);
    println!("{} amplitude variables, {} streams", problem.vars.len(), problem.streams.len());
    println!("SINR upper bound  {:8.2} dB", 10.0 * chi_upper(&problem).log10());
    println!("even split        {:8.2} dB", 10.0 * even.log10());
    // Plain bisection stops at a gap relative to the loose upper bound, so
    // it needs a much smaller tolerance to reach the same point.
    for (warm_start, eps_rel) in [(false, 1e-3), (false, 1e-7), (true, 1e-3)] {
        let sol = solve_access_maxmin(&problem, &BisectionConfig { warm_start, eps_rel, ..Default::default() }, &engine)?;
        println!(
            "bisection ({}, eps {eps_rel:.0e}) {:8.2} dB after {} SOC solves",
            if warm_start { "warm" } else { "cold" },
            10.0 * sol.min_sinr().log10(),
            sol.iterations
        );
    }
    for (node, p) in problem.node_power(&solve_access_maxmin(&problem, &BisectionConfig::default(), &engine)?.amplitudes) {
        println!("  {node}: {:.1}% of budget", 100.0 * p / problem.budget);
    }
    Ok(())
}
