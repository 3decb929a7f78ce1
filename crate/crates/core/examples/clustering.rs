//! AP clusters, CAP choice and device association for the three clustering
//! methods on one deployment.
//!
//! cargo run --release --example clustering [seed]

use mddfh::association::ClusteringMethod;
use mddfh::conic::ClarabelEngine;
use mddfh::scenario::{generate_scenario, ScenarioConfig};
use mddfh::scheduler::{SchedulerConfig, Trial};

fn main() -> mddfh::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let scenario = generate_scenario(&ScenarioConfig::default(), seed)?;
    let cfg = SchedulerConfig::default();
    let engine = ClarabelEngine::default();
    let trial = Trial::new(&scenario, &cfg, &engine)?;

    for method in [ClusteringMethod::Dc, ClusteringMethod::Sc, ClusteringMethod::Idsc] {
        for l in trial.cluster_counts(method) {
            let Some(st) = trial.state(method, l)? else {
                println!("{method:?} L={l}: cannot serve every device");
                continue;
            };
            println!("{method:?} L={l}: min access SINR {:.2} dB", 10.0 * st.access.min_sinr().log10());
            for (c, devs) in st.assignment.clusters.iter().zip(&st.assignment.served_devices) {
                if !devs.is_empty() {
                    println!("   CAP {:<8} APs {:?} devices {:?}", c.cap.to_string(), c.members, devs);
                }
            }
        }
    }
    Ok(())
}
