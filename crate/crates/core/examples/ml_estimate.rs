//! One sensing slot end to end: synthesize the echo, then recover range and
//! angle with the grid search and local refinement.

use nfisac::beamformer::conjugate_focus_beamformer;
use nfisac::harness::GridPolicy;
use nfisac::ml::{estimate, LmSettings};
use nfisac::signal::{generate_pilots, synthesize_observation};
use nfisac::{angle_distance, OfdmConfig, PolarPosition, UcaGeometry};

fn main() -> nfisac::Result<()> {
    let cfg = OfdmConfig {
        m_subcarriers: 128,
        ..OfdmConfig::reference_60ghz()
    };
    let geom = UcaGeometry::from_carrier(64, 1.0, cfg.carrier_hz)?;
    let truth = PolarPosition::new(42.0, 2.0)?;
    let f = conjugate_focus_beamformer(&geom, &truth);
    let spec = GridPolicy::default().spec(&geom, &cfg);

    for (label, link) in [("noisy", cfg), ("noise-free", cfg.with_noise(0.0))] {
        let pilots = generate_pilots(&link, 11);
        let obs = synthesize_observation(&geom, &truth, &f, &link, &pilots, 12)?;
        let est = estimate(&obs, &geom, &spec, &LmSettings::default())?;
        println!(
            "{label:>10}: d = {:.6} m (err {:+.2e}), θ err {:.2e} rad, converged {}, {} LM steps, basin {}",
            est.d_hat_m,
            est.d_hat_m - truth.d_m,
            angle_distance(est.theta_hat_rad, truth.theta_rad),
            est.converged,
            est.iterations,
            est.basin_index
        );
    }
    Ok(())
}
