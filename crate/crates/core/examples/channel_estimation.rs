//! Estimates one desk-profile channel with AMP-EM on the frequency-dependent
//! polar dictionary and with OMP on the three dictionary variants, then
//! prints the NMSE of each.
//!
//! cargo run --release --example channel_estimation -- [seed]

use ilsc::channel::build_channel;
use ilsc::dictionary::{DictionaryVariant, PolarDictionary};
use ilsc::estimator::{amp_em_estimate, omp_estimate, reconstruct_spatial, sensing_matrices, AmpOptions};
use ilsc::harness::nmse_db;
use ilsc::pilot::{build_pilot_frame, simulate_uplink};
use ilsc::scenario::{sample_scenario, SystemConfig};

fn main() -> ilsc::error::Result<()> {
    let seed = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(1);
    let cfg = SystemConfig::desk();
    let scenario = sample_scenario(&cfg, seed)?;
    let h = build_channel(&scenario, &cfg)?;
    let frame = build_pilot_frame(&cfg, seed);
    let meas = simulate_uplink(&h, &frame, &cfg, seed)?;
    println!("P = {} measurements per UT antenna, SNR {:.1} dB", cfg.n_meas(), meas.snr_db);

    let polar = PolarDictionary::new(&cfg, DictionaryVariant::FrequencyDependent);
    let sensing = sensing_matrices(&frame, &polar);
    let amp = amp_em_estimate(&meas, &sensing, &AmpOptions::from_config(&cfg))?;
    println!(
        "amp-polar-fd    NMSE {:>7.2} dB ({} iterations)",
        nmse_db(&h, &reconstruct_spatial(&amp, &polar)?)?,
        amp.iterations
    );

    let k = scenario.num_paths().min(cfg.n_meas());
    for (name, variant) in [
        ("omp-polar-fd", DictionaryVariant::FrequencyDependent),
        ("omp-polar-flat", DictionaryVariant::FrequencyFlat),
        ("omp-dft", DictionaryVariant::Dft),
    ] {
        let dict = PolarDictionary::new(&cfg, variant);
        let est = omp_estimate(&meas, &sensing_matrices(&frame, &dict), k)?;
        println!("{name:<15} NMSE {:>7.2} dB", nmse_db(&h, &reconstruct_spatial(&est, &dict)?)?);
    }
    Ok(())
}
