//! LoS path gain against distance, then one multipath tap channel and its
//! per-subcarrier gains.
//!
//! cargo run --release --example thz_channel

use mddfh::channel::{path_gain_los, thz_subcarrier_channels, thz_tap_channel, ThzRayParams};
use mddfh::scenario::{linear_to_db, Position, UpaGeometry};

fn main() -> mddfh::error::Result<()> {
    let params = ThzRayParams::default();
    println!("{:>8} {:>12} {:>12}", "d [m]", "200 GHz dB", "300 GHz dB");
    for d in [1.0, 5.0, 10.0, 20.0, 50.0, 100.0] {
        let a = linear_to_db(path_gain_los(200e9, d, params.absorption)?);
        let b = linear_to_db(path_gain_los(300e9, d, params.absorption)?);
        println!("{d:8.1} {a:12.2} {b:12.2}");
    }

    let cpu = Position::new(50.0, 50.0, 10.0);
    let ap = Position::new(20.0, 75.0, 5.0);
    let taps = thz_tap_channel(&UpaGeometry::new(4, 4), &cpu, &ap, &params, 200e9, 3)?;
    let n_sc = 16;
    let per_sc = thz_subcarrier_channels(&taps, n_sc);
    println!("\nCPU -> AP at {:.1} m, tap energy {:.3} dB", (ap - cpu).norm(), linear_to_db(taps.energy()));
    for (m, h) in per_sc.iter().enumerate() {
        println!("  subcarrier {m:2}: |h|^2 = {:8.2} dB", linear_to_db(h.norm_squared()));
    }
    let total: f64 = per_sc.iter().map(|h| h.norm_squared()).sum();
    println!("sum over subcarriers / (N * tap energy) = {:.12}", total / (n_sc as f64 * taps.energy()));
    Ok(())
}
