//! Range and angle bounds for one user: the closed form, the 2×2 Fisher
//! matrix it summarizes, and the bound when the delay also carries range.

use nfisac::beamformer::conjugate_focus_beamformer;
use nfisac::crlb::{crlb_expanded, crlb_from_fim, fim, fim_full_model};
use nfisac::{OfdmConfig, PolarPosition, UcaGeometry};

fn main() -> nfisac::Result<()> {
    let cfg = OfdmConfig::reference_60ghz();
    let pos = PolarPosition::new(25.0, 0.4)?;
    println!("{:>5} {:>14} {:>14} {:>16} {:>18}", "R [m]", "std d [m]", "std θ [deg]", "via FIM [m]", "with delay [m]");
    for radius in [0.5, 1.0, 2.0, 5.0] {
        let geom = UcaGeometry::from_carrier(64, radius, cfg.carrier_hz)?;
        let f = conjugate_focus_beamformer(&geom, &pos);
        let closed = crlb_expanded(&geom, &pos, &f, &cfg)?;
        let via_fim = crlb_from_fim(&fim(&geom, &pos, &f, &cfg)?)?;
        let full = crlb_from_fim(&fim_full_model(&geom, &pos, &f, &cfg)?)?;
        println!(
            "{radius:>5} {:>14.4e} {:>14.4e} {:>16.4e} {:>18.4e}",
            closed.std_d_m(),
            closed.std_theta_deg(),
            via_fim.std_d_m(),
            full.std_d_m()
        );
    }
    Ok(())
}
