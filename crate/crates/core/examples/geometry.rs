//! Circular-array geometry: element ranges, steering, and where the near
//! field ends compared with a linear array of the same size.

use nfisac::geometry::ula_rayleigh_distance;
use nfisac::{OfdmConfig, PolarPosition, UcaGeometry};

fn main() -> nfisac::Result<()> {
    let lambda = OfdmConfig::reference_60ghz().wavelength_m();
    let ula = ula_rayleigh_distance(64, lambda)?;
    println!("wavelength {:.3} mm, 64-element ULA Rayleigh distance {ula:.2} m", lambda * 1e3);
    for radius in [0.5, 1.0, 2.0, 5.0] {
        let geom = UcaGeometry::new(64, radius, lambda)?;
        println!(
            "R = {radius:>3} m: Rayleigh distance {:>7.0} m ({:.0}x the ULA)",
            geom.rayleigh_distance(),
            geom.rayleigh_distance() / ula
        );
    }

    let geom = UcaGeometry::new(64, 0.5, lambda)?;
    let pos = PolarPosition::new(10.0, 30f64.to_radians())?;
    let ranges = geom.element_ranges(&pos);
    let (lo, hi) = ranges.iter().fold((f64::MAX, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let a = geom.steering_vector(&pos);
    println!("user at 10 m, 30°: element ranges {lo:.4}..{hi:.4} m, ‖a‖ = {:.15}", a.norm());
    for k in [0, 16, 32, 48] {
        println!("  a[{k:>2}] = {:.4}", a.as_slice()[k]);
    }
    Ok(())
}
