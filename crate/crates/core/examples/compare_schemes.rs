//! Every transmission scheme on one channel draw: chosen cluster count,
//! frame split, and min and median per-device rate.
//!
//! cargo run --release --example compare_schemes [seed]

use std::time::Instant;

use mddfh::conic::ClarabelEngine;
use mddfh::linkrates::FrameInfo;
use mddfh::scenario::{generate_scenario, ScenarioConfig};
use mddfh::scheduler::{Scheme, SchedulerConfig, Trial};

fn main() -> mddfh::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let scenario = generate_scenario(&ScenarioConfig::default(), seed)?;
    let cfg = SchedulerConfig::default();
    let engine = ClarabelEngine::default();
    let trial = Trial::new(&scenario, &cfg, &engine)?;

    println!("{:9} {:>6} {:>3} {:>24} {:>11} {:>11} {:>8}", "scheme", "method", "L", "frame", "min", "median", "time");
    for scheme in Scheme::ALL {
        let t = Instant::now();
        let o = trial.run_scheme(scheme)?;
        let frame = match o.report.frame {
            FrameInfo::Mdd { m_cc, m_ca, .. } => format!("MDD {m_cc}/{m_ca} subcarriers"),
            FrameInfo::Tdd { tau_cc, tau_ca, tau_ad, .. } => format!("TDD {tau_cc:.2}/{tau_ca:.2}/{tau_ad:.2}"),
            FrameInfo::SingleTier { .. } => "single tier".into(),
        };
        println!(
            "{:9} {:>6} {:3} {:>24} {:11.4e} {:11.4e} {:8.2?}",
            scheme.name(),
            format!("{:?}", o.method).to_uppercase(),
            o.best_l,
            frame,
            o.objective().or(f64::INFINITY),
            o.report.median(f64::INFINITY),
            t.elapsed()
        );
    }
    println!("{} fronthaul solves", trial.records.borrow().len());
    Ok(())
}
