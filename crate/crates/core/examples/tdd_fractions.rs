//! Optimal TDD time split between the three tiers for a few rate triples.
//!
//! cargo run --release --example tdd_fractions

use mddfh::linkrates::Rate;
use mddfh::scheduler::solve_tdd_fractions;

fn main() -> mddfh::error::Result<()> {
    let cases = [
        ("equal", Rate::Finite(2e9), Rate::Finite(2e9), Rate::Finite(2e9)),
        ("weak CC", Rate::Finite(5e8), Rate::Finite(3e9), Rate::Finite(2e9)),
        ("weak access", Rate::Finite(4e9), Rate::Finite(4e9), Rate::Finite(6e8)),
        ("wired CA", Rate::Finite(2e9), Rate::Unbounded, Rate::Finite(2e9)),
    ];
    println!("{:12} {:>5} {:>7} {:>7} {:>7} {:>12}", "case", "gp", "tau_cc", "tau_ca", "tau_ad", "rate");
    for (name, cc, ca, ad) in cases {
        for gp in [0.0, 0.05] {
            let s = solve_tdd_fractions(cc, ca, ad, gp)?;
            println!(
                "{name:12} {gp:5.2} {:7.4} {:7.4} {:7.4} {:12.4e}",
                s.tau_cc,
                s.tau_ca,
                s.tau_ad,
                s.objective.or(f64::INFINITY)
            );
        }
    }
    Ok(())
}
