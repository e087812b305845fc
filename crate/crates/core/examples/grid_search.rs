//! The coarse likelihood grid alone: the best few basins it hands to the
//! local refinement, for the default and a plain log-spaced grid.

use nfisac::beamformer::conjugate_focus_beamformer;
use nfisac::harness::GridPolicy;
use nfisac::ml::{coarse_grid_search, matched_filter_bank};
use nfisac::signal::{generate_pilots, synthesize_observation};
use nfisac::{OfdmConfig, PolarPosition, UcaGeometry};

fn main() -> nfisac::Result<()> {
    let cfg = OfdmConfig {
        m_subcarriers: 128,
        ..OfdmConfig::reference_60ghz()
    };
    let geom = UcaGeometry::from_carrier(64, 0.5, cfg.carrier_hz)?;
    let truth = PolarPosition::new(18.0, 1.0)?;
    let f = conjugate_focus_beamformer(&geom, &truth);
    let obs = synthesize_observation(&geom, &truth, &f, &cfg, &generate_pilots(&cfg, 5), 6)?;
    let bank = matched_filter_bank(&obs);

    let policies = [
        ("resolving", GridPolicy::default()),
        (
            "log-spaced",
            GridPolicy::LogSpaced {
                d_max_m: 400.0,
                n_d: 256,
                n_theta: 512,
                n_basins: 5,
            },
        ),
    ];
    for (name, policy) in policies {
        let spec = policy.spec(&geom, &cfg);
        let t0 = std::time::Instant::now();
        let basins = coarse_grid_search(&obs, &geom, &bank, &spec)?;
        println!("{name} grid ({} angles), {:.2?}:", spec.n_theta, t0.elapsed());
        for b in basins.iter().take(5) {
            println!("  d = {:>8.3} m  θ = {:>7.4} rad  cost {:.4e}", b.position.d_m, b.position.theta_rad, b.cost);
        }
    }
    println!("truth: d = {} m, θ = {} rad", truth.d_m, truth.theta_rad);
    Ok(())
}
