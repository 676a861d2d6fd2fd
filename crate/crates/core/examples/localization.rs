//! Runs the sensing chain on one trial: path counting, virtual-anchor
//! extraction, coarse bearing intersection and TDoA refinement.
//!
//! cargo run --release --example localization -- [seed]

use ilsc::channel::build_channel;
use ilsc::dictionary::{DictionaryVariant, PolarDictionary};
use ilsc::estimator::{amp_em_estimate, sensing_matrices, AmpOptions};
use ilsc::locator::locate;
use ilsc::pilot::{build_pilot_frame, simulate_uplink};
use ilsc::scenario::{sample_scenario, SystemConfig};

fn main() -> ilsc::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SystemConfig::desk();
    let scenario = sample_scenario(&cfg, seed)?;
    let h = build_channel(&scenario, &cfg)?;
    let frame = build_pilot_frame(&cfg, seed);
    let meas = simulate_uplink(&h, &frame, &cfg, seed)?;
    let dict = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
    let est = amp_em_estimate(&meas, &sensing_matrices(&frame, &dict), &AmpOptions::from_config(&cfg))?;
    let report = locate(&meas, &est, &dict.lattice, &cfg, seed)?;

    println!("paths: true {}, counted {}", scenario.num_paths(), report.num_mpc);
    for v in &report.vas {
        println!("  VA {:?} at ({:.2}, {:.2}) m", v.class, v.x, v.y);
    }
    let truth = [scenario.ut.x, scenario.ut.y];
    let err = |p: [f64; 2]| (p[0] - truth[0]).hypot(p[1] - truth[1]);
    println!("UT truth   ({:.2}, {:.2})", truth[0], truth[1]);
    if let Some(p) = report.los_only_ut {
        println!("LoS only   ({:.2}, {:.2})  error {:.3} m", p[0], p[1], err(p));
    }
    let (c, r) = (report.coarse_ut, report.refined_ut);
    println!("coarse     ({:.2}, {:.2})  error {:.3} m", c[0], c[1], err(c));
    println!("refined    ({:.2}, {:.2})  error {:.3} m", r[0], r[1], err(r));
    println!(
        "TDoA loss  {:.3e} -> {:.3e} s^2 over {} iterations",
        report.loss_trace[0],
        report.loss_trace[report.loss_trace.len() - 1],
        report.loss_trace.len() - 1
    );
    Ok(())
}
