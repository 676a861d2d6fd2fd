//! Runs a small uplink-SNR sweep on a reduced configuration and prints the
//! aggregated metrics table.
//!
//! cargo run --release --example sweep -- [trials]

use ilsc::harness::{run_pipeline, ExperimentSpec, Sweep, SweepVariable};

fn main() -> ilsc::error::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(4);
    let spec = ExperimentSpec {
        name: "snr-sweep".into(),
        config: serde_json::json!({
            "n_bs": 64, "n_ut": 8, "m_subcarriers": 8, "q_bs": 9, "n_rf_bs": 4,
            "t_iter": 40, "lattice": { "rho": 2, "s_rings": 6, "eta": 5.7 }
        }),
        sweep: Some(Sweep { variable: SweepVariable::UplinkSnr, values: vec![0.0, 10.0, 20.0, 30.0] }),
        trials,
        seed: 3,
        ..Default::default()
    };
    let result = run_pipeline(&spec, std::thread::available_parallelism().map_or(1, |n| n.get()))?;
    print!("{}", result.metrics_csv());
    eprintln!("{} stage failures", result.failures.len());
    Ok(())
}
