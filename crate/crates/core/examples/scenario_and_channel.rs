//! Draws a desk-profile scenario, builds its wideband uplink channel and
//! prints the path geometry and per-subcarrier channel energy.
//!
//! cargo run --example scenario_and_channel -- [seed]

use ilsc::channel::build_channel;
use ilsc::scenario::{sample_scenario, SystemConfig};

fn main() -> ilsc::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SystemConfig::desk();
    let scenario = sample_scenario(&cfg, seed)?;
    let ut = scenario.ut_polar();
    println!(
        "UT at ({:.2}, {:.2}) m, r = {:.2} m, theta = {:.1} deg, orientation {:.1} deg",
        scenario.ut.x,
        scenario.ut.y,
        ut.r,
        ut.theta.to_degrees(),
        scenario.ut.phi.to_degrees()
    );
    if let Some(los) = &scenario.los {
        println!("LoS: beta = {:.3e}, UT-side angle {:.1} deg", los.beta, los.ut.theta.to_degrees());
    }
    for (i, s) in scenario.scatterers.iter().enumerate() {
        println!(
            "scatterer {i}: ({:.2}, {:.2}) m, BS r = {:.2} m, theta = {:.1} deg, beta = {:.3e}",
            s.x,
            s.y,
            s.bs.r,
            s.bs.theta.to_degrees(),
            s.beta
        );
    }

    let h = build_channel(&scenario, &cfg)?;
    println!("\nsubcarrier  f (GHz)  ||H||_F^2");
    for (m, f) in cfg.subcarrier_freqs().iter().enumerate() {
        println!("{m:>10}  {:>7.3}  {:.4e}", f / 1e9, h.mats[m].norm_squared());
    }
    Ok(())
}
