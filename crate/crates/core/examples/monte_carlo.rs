//! A small Monte Carlo sweep: estimator RMSE against the bound, plus
//! convergence and success rates.
//!
//! `cargo run --release --example monte_carlo -- 50` sets the trial count.

use nfisac::harness::{rmse_sweep, SweepConfig};

fn main() -> nfisac::Result<()> {
    let trials = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(20);
    let config = SweepConfig {
        radii_m: vec![0.5, 1.0],
        distances_m: vec![10.0, 50.0],
        trials_per_point: trials,
        ..SweepConfig::default()
    };
    let (summary, _records) = rmse_sweep(&config)?;
    println!("R [m]  d [m]  RMSE d [m]   bound d [m]  RMSE θ [rad]  bound θ [rad]  conv  success");
    for s in summary {
        println!(
            "{:>5} {:>6} {:>11.3e} {:>13.3e} {:>13.3e} {:>14.3e} {:>5.2} {:>8.2}",
            s.radius_m, s.d_m, s.rmse_d_m, s.crlb_d_m, s.rmse_theta_rad, s.crlb_theta_rad, s.convergence_rate, s.success_rate
        );
    }
    Ok(())
}
