//! Designs the bound-minimizing beam and compares it with simply focusing
//! on the user.

use nfisac::beamformer::{conjugate_focus_beamformer, optimize_beamformer, trace_objective, OptimizerConfig};
use nfisac::signal::ue_received_snr;
use nfisac::{OfdmConfig, PolarPosition, UcaGeometry};

fn main() -> nfisac::Result<()> {
    let cfg = OfdmConfig::reference_60ghz();
    let pos = PolarPosition::new(10.0, 0.0)?;
    for radius in [0.5, 5.0] {
        let geom = UcaGeometry::from_carrier(64, radius, cfg.carrier_hz)?;
        let focus = conjugate_focus_beamformer(&geom, &pos);
        let res = optimize_beamformer(&geom, &pos, &cfg, &OptimizerConfig::default(), None)?;
        println!(
            "R = {radius} m: trace {:.3e} -> {:.3e} in {} iterations ({:?}), user SNR {:.2} dB -> {:.2} dB",
            trace_objective(&focus, &geom, &pos, &cfg)?,
            res.final_trace(),
            res.iterations,
            res.stop,
            ue_received_snr(&geom, &pos, &focus, &cfg)?.db(),
            ue_received_snr(&geom, &pos, &res.beamformer, &cfg)?.db(),
        );
    }
    Ok(())
}
