//! Compares a focused beam with the broadened subarray beam across the band
//! for a near-field target: closed-form squinted focus per subcarrier and the
//! array gain each beam delivers at the true target.
//!
//! cargo run --example beam_squint

use ilsc::beamformer::{array_gain, broadened_beam, focused_beam, squint_position, BeamGeometry};
use ilsc::scenario::SystemConfig;

fn main() -> ilsc::error::Result<()> {
    let cfg = SystemConfig::paper();
    let geom = BeamGeometry::bs(&cfg);
    let (r0, theta0) = (7.01, 46.6f64.to_radians());
    let focused = focused_beam(r0, theta0, geom.lambda_c, geom.n, geom.d)?;
    let broad = broadened_beam(r0, theta0, &geom)?;
    println!("N = {}, G = {} subarrays of {} (feasible: {})", geom.n, broad.g, broad.n_sub, broad.feasible);
    println!(" m   f (GHz)  squint r (m)  squint theta (deg)  focused gain  broadened gain");
    for (m, (&lambda, f)) in geom.wavelengths.iter().zip(cfg.subcarrier_freqs()).enumerate().step_by(8) {
        let (r, th) = squint_position(r0, theta0, lambda, geom.lambda_c, m)?;
        println!(
            "{m:>2}   {:>7.3}  {r:>12.3}  {:>18.2}  {:>12.3}  {:>14.3}",
            f / 1e9,
            th.to_degrees(),
            array_gain(&focused, r0, theta0, lambda, geom.d)?,
            array_gain(&broad.vector, r0, theta0, lambda, geom.d)?
        );
    }
    Ok(())
}
