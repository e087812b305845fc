//! Loads a JSON run configuration (or the defaults) and shows what the
//! library receives in SI units.
//!
//! `cargo run --example run_config -- path/to/config.json`

use nfisac::config::RunConfig;

fn main() {
    let cfg = match std::env::args().nth(1) {
        Some(path) => RunConfig::from_path(path.as_ref()),
        None => RunConfig::from_json(r#"{"sigma2_dbm": "-80 dBm", "trials": 50, "theta_deg": 15}"#),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(1);
        }
    };
    let ofdm = cfg.ofdm();
    println!(
        "carrier {} Hz, Δf {} Hz, M = {}, N = {}, CP {:.3e} s, P_t {} W, σ² {:.3e} W",
        ofdm.carrier_hz, ofdm.delta_f_hz, ofdm.m_subcarriers, ofdm.n_symbols, ofdm.t_cp_s, ofdm.p_t_w, ofdm.sigma2_w
    );
    let sweep = cfg.sweep(true);
    println!(
        "Monte Carlo: {} trials per point over radii {:?} and distances {:?}, {} subcarriers, θ {:?}",
        sweep.trials_per_point, sweep.radii_m, sweep.distances_m, sweep.trial.ofdm.m_subcarriers, sweep.theta_policy
    );
    println!("{}", cfg.to_json());
}
