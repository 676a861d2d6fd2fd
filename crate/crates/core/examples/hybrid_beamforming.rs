//! Locates one desk-profile UT and compares the spectral efficiency of every
//! hybrid beamforming scheme across subcarriers.
//!
//! cargo run --release --example hybrid_beamforming -- [seed]

use ilsc::beamformer::BeamformingScheme;
use ilsc::harness::{run_trial, EstimatorScheme, TrialContext};
use ilsc::scenario::SystemConfig;

fn main() -> ilsc::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let ctx = TrialContext::new(SystemConfig::desk(), &[EstimatorScheme::AmpPolarFd], &BeamformingScheme::ALL)?;
    let trial = run_trial(&ctx, seed)?;
    for f in &trial.summary.failures {
        println!("stage {} failed: {}", f.stage, f.message);
    }
    println!("scheme         mean   spread  edge   (bits/s/Hz)");
    for o in &trial.summary.beamforming {
        println!(
            "{:<13} {:>6.2} {:>7.2} {:>6.2}",
            o.scheme.name(),
            o.se.mean(),
            o.se.spread(),
            o.se.edge()
        );
    }
    Ok(())
}
