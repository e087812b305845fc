//! Uniform circular array (UCA) geometry.
//!
//! Elements sit on a circle of radius `R` in the azimuth plane; element `k`
//! (0-based here) is at angle `2πk/N_a`. A user at polar position `(d, θ)`
//! sees element `k` at range `r_k = sqrt(d² + R² − 2dR cos(θ − ψ_k))`.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Wraps an angle into `[0, 2π)`.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    // rem_euclid can return TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Absolute angular separation modulo 2π, in `[0, π]`.
pub fn angle_distance(a: f64, b: f64) -> f64 {
    let diff = wrap_angle(a - b);
    diff.min(TAU - diff)
}

/// Candidate or true user position relative to the array centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarPosition {
    /// Centre-to-user distance in metres.
    pub d_m: f64,
    /// Azimuth in radians, measured from the direction of element 0.
    pub theta_rad: f64,
}

impl PolarPosition {
    pub fn new(d_m: f64, theta_rad: f64) -> Result<Self> {
        if !(d_m.is_finite() && d_m > 0.0) {
            return Err(invalid("d_m", format!("distance must be positive, got {d_m}")));
        }
        if !theta_rad.is_finite() {
            return Err(invalid("theta_rad", "angle must be finite"));
        }
        Ok(Self { d_m, theta_rad })
    }

    /// Same position with the azimuth wrapped into `[0, 2π)`.
    pub fn wrapped(self) -> Self {
        Self {
            d_m: self.d_m,
            theta_rad: wrap_angle(self.theta_rad),
        }
    }
}

/// UCA description: element count, radius and carrier wavelength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UcaGeometry {
    n_a: usize,
    radius_m: f64,
    wavelength_m: f64,
}

impl UcaGeometry {
    pub fn new(n_a: usize, radius_m: f64, wavelength_m: f64) -> Result<Self> {
        if n_a == 0 {
            return Err(invalid("n_a", "need at least one element"));
        }
        if !(radius_m.is_finite() && radius_m > 0.0) {
            return Err(invalid("radius_m", format!("must be positive, got {radius_m}")));
        }
        if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
            return Err(invalid(
                "wavelength_m",
                format!("must be positive, got {wavelength_m}"),
            ));
        }
        Ok(Self {
            n_a,
            radius_m,
            wavelength_m,
        })
    }

    /// Builds the geometry from a carrier frequency instead of a wavelength.
    pub fn from_carrier(n_a: usize, radius_m: f64, carrier_hz: f64) -> Result<Self> {
        if !(carrier_hz.is_finite() && carrier_hz > 0.0) {
            return Err(invalid("carrier_hz", format!("must be positive, got {carrier_hz}")));
        }
        Self::new(n_a, radius_m, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn n_elements(&self) -> usize {
        self.n_a
    }

    pub fn radius_m(&self) -> f64 {
        self.radius_m
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    pub fn wavenumber(&self) -> f64 {
        TAU / self.wavelength_m
    }

    /// Rejects positions on or inside the array circle.
    pub fn check_position(&self, pos: &PolarPosition) -> Result<()> {
        if pos.d_m <= self.radius_m || !pos.d_m.is_finite() || !pos.theta_rad.is_finite() {
            return Err(Error::PositionInsideArray {
                d_m: pos.d_m,
                radius_m: self.radius_m,
            });
        }
        Ok(())
    }

    /// Angle of element `k` (0-based), i.e. `ψ_{k+1} = 2πk/N_a`.
    pub fn element_angle(&self, k: usize) -> f64 {
        TAU * k as f64 / self.n_a as f64
    }

    pub fn element_angles(&self) -> Vec<f64> {
        (0..self.n_a).map(|k| self.element_angle(k)).collect()
    }

    /// Per-element ranges `r_k` from the law of cosines.
    pub fn element_ranges(&self, pos: &PolarPosition) -> Vec<f64> {
        (0..self.n_a)
            .map(|k| range_at(pos.d_m, self.radius_m, pos.theta_rad - self.element_angle(k)))
            .collect()
    }

    /// Near-field steering vector, entries `e^{jk(d − r_k)}/√N_a`.
    pub fn steering_vector(&self, pos: &PolarPosition) -> SteeringVector {
        let k0 = self.wavenumber();
        let scale = 1.0 / (self.n_a as f64).sqrt();
        SteeringVector(
            self.element_ranges(pos)
                .iter()
                .map(|&r| Complex64::from_polar(scale, k0 * (pos.d_m - r)))
                .collect(),
        )
    }

    /// Ranges, range/angle derivatives of the ranges, and free-space gains.
    pub fn sensitivities(&self, pos: &PolarPosition) -> GeometrySensitivities {
        let (d, big_r) = (pos.d_m, self.radius_m);
        let n = self.n_a;
        let mut out = GeometrySensitivities {
            ranges_m: Vec::with_capacity(n),
            alpha_d: Vec::with_capacity(n),
            one_minus_alpha_d: Vec::with_capacity(n),
            alpha_theta: Vec::with_capacity(n),
            gains: Vec::with_capacity(n),
        };
        for k in 0..n {
            let phi = pos.theta_rad - self.element_angle(k);
            let (s, c) = phi.sin_cos();
            let r = range_at(d, big_r, phi);
            let along = d - big_r * c;
            out.ranges_m.push(r);
            out.alpha_d.push(along / r);
            // 1 − (d − R cos φ)/r without cancellation
            out.one_minus_alpha_d
                .push(big_r * big_r * s * s / (r * (r + along)));
            out.alpha_theta.push(d * big_r * s / r);
            out.gains.push(self.wavelength_m / (4.0 * PI * r));
        }
        out
    }

    /// Rayleigh distance `2D²/λ` with aperture `D = 2R`.
    pub fn rayleigh_distance(&self) -> f64 {
        let aperture = 2.0 * self.radius_m;
        2.0 * aperture * aperture / self.wavelength_m
    }
}

#[inline]
pub(crate) fn range_at(d: f64, big_r: f64, phi: f64) -> f64 {
    (d * d + big_r * big_r - 2.0 * d * big_r * phi.cos()).sqrt()
}

/// Free-space amplitude gains `λ/(4π r_k)`.
pub fn element_gains(ranges_m: &[f64], wavelength_m: f64) -> Result<Vec<f64>> {
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(invalid("wavelength_m", "must be positive"));
    }
    ranges_m
        .iter()
        .enumerate()
        .map(|(index, &r)| {
            if r > 0.0 && r.is_finite() {
                Ok(wavelength_m / (4.0 * PI * r))
            } else {
                Err(Error::NonPositiveRange { index, range_m: r })
            }
        })
        .collect()
}

/// Rayleigh distance of a half-wavelength ULA with `n_a` elements.
pub fn ula_rayleigh_distance(n_a: usize, wavelength_m: f64) -> Result<f64> {
    if n_a < 2 {
        return Err(invalid("n_a", "a ULA needs at least two elements"));
    }
    if !(wavelength_m.is_finite() && wavelength_m > 0.0) {
        return Err(invalid("wavelength_m", "must be positive"));
    }
    let aperture = (n_a - 1) as f64 * wavelength_m / 2.0;
    Ok(2.0 * aperture * aperture / wavelength_m)
}

/// Unit-norm array response at one position.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm(&self.0)
    }

    /// Entry-wise conjugate, which is also unit norm.
    pub fn conj(&self) -> Vec<Complex64> {
        self.0.iter().map(|a| a.conj()).collect()
    }
}

/// Per-element quantities the bound and the estimator are built from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySensitivities {
    /// `r_k` in metres.
    pub ranges_m: Vec<f64>,
    /// `∂r_k/∂d = (d − R cos φ_k)/r_k`, a direction cosine.
    pub alpha_d: Vec<f64>,
    /// `1 − α_k^d`, evaluated in a cancellation-free form.
    pub one_minus_alpha_d: Vec<f64>,
    /// `∂r_k/∂θ = dR sin φ_k / r_k`, in metres per radian.
    pub alpha_theta: Vec<f64>,
    /// `g_k = λ/(4π r_k)`.
    pub gains: Vec<f64>,
}

impl GeometrySensitivities {
    pub fn len(&self) -> usize {
        self.ranges_m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranges_m.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(n: usize, r: f64) -> UcaGeometry {
        UcaGeometry::new(n, r, 0.005).unwrap()
    }

    #[test]
    fn element_angles_match_formula() {
        let g = geom(4, 0.5);
        let a = g.element_angles();
        assert_eq!(a[0], 0.0);
        assert!((a[2] - PI).abs() < 1e-15);
        let g64 = geom(64, 0.5);
        assert!((g64.element_angles()[63] - 6.185010536754892).abs() < 1e-12);
        assert!(g64.element_angles().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn ranges_collinear_and_right_angle() {
        let g = geom(4, 0.5);
        let r = g.element_ranges(&PolarPosition::new(10.0, 0.0).unwrap());
        assert!((r[0] - 9.5).abs() < 1e-12);
        assert!((r[2] - 10.5).abs() < 1e-12);
        assert!((r[1] - 100.25f64.sqrt()).abs() < 1e-12);
        assert!((r[1] - 10.012492).abs() < 1e-6);
    }

    #[test]
    fn single_element_small_radius_has_identity_phase() {
        let g = UcaGeometry::new(1, 1e-12, 0.005).unwrap();
        let a = g.steering_vector(&PolarPosition::new(10.0, 0.3).unwrap());
        assert!((a.0[0] - Complex64::new(1.0, 0.0)).norm() < 1e-8);
    }

    #[test]
    fn steering_matches_scalar_loop() {
        let g = UcaGeometry::new(64, 0.5, 0.005).unwrap();
        let pos = PolarPosition::new(10.0, 0.0).unwrap();
        let a = g.steering_vector(&pos);
        for k in 0..64 {
            let psi = 2.0 * PI * k as f64 / 64.0;
            let r = (100.0 + 0.25 - 10.0 * psi.cos()).sqrt();
            let ph = 2.0 * PI * (10.0 - r) / 0.005;
            let expect = Complex64::new(ph.cos() / 8.0, ph.sin() / 8.0);
            assert!((a.0[k] - expect).norm() < 1e-12);
        }
        assert!((a.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gains_formula_and_errors() {
        let lam = 0.005;
        let g = element_gains(&[lam / (4.0 * PI), 10.0, 20.0], lam).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[1] - 3.97887e-5).abs() < 1e-10);
        assert!((g[1] / g[2] - 2.0).abs() < 1e-12);
        assert!(matches!(
            element_gains(&[1.0, 0.0], lam),
            Err(Error::NonPositiveRange { index: 1, .. })
        ));
    }

    #[test]
    fn sensitivity_special_cases() {
        let g = geom(4, 0.5);
        let s = g.sensitivities(&PolarPosition::new(10.0, 0.0).unwrap());
        assert!((s.alpha_d[0] - 1.0).abs() < 1e-15);
        assert!(s.alpha_theta[0].abs() < 1e-15);
        // element 1 sits at φ = −π/2
        let root = 100.25f64.sqrt();
        assert!((s.alpha_d[1] - 10.0 / root).abs() < 1e-12);
        assert!((s.alpha_theta[1].abs() - 5.0 / root).abs() < 1e-12);
        assert!((s.alpha_d[1] - 0.998752).abs() < 1e-6);
        for k in 0..4 {
            assert!((s.one_minus_alpha_d[k] - (1.0 - s.alpha_d[k])).abs() < 1e-14);
        }
    }

    #[test]
    fn rayleigh_distances() {
        assert!((geom(64, 0.5).rayleigh_distance() - 400.0).abs() < 1e-9);
        assert!((geom(64, 5.0).rayleigh_distance() - 40000.0).abs() < 1e-6);
        let ula = ula_rayleigh_distance(64, 0.005).unwrap();
        assert!((ula - 9.9225).abs() < 1e-12);
        assert!((ula_rayleigh_distance(2, 0.005).unwrap() - 0.0025).abs() < 1e-15);
        assert!(ula_rayleigh_distance(1, 0.005).is_err());
    }

    #[test]
    fn rejects_inside_positions_and_bad_geometry() {
        let g = geom(8, 0.5);
        assert!(g.check_position(&PolarPosition::new(0.4, 0.0).unwrap()).is_err());
        assert!(g.check_position(&PolarPosition::new(0.5, 0.0).unwrap()).is_err());
        assert!(g.check_position(&PolarPosition::new(0.6, 0.0).unwrap()).is_ok());
        assert!(UcaGeometry::new(0, 0.5, 0.005).is_err());
        assert!(UcaGeometry::new(4, -1.0, 0.005).is_err());
        assert!(PolarPosition::new(-1.0, 0.0).is_err());
    }

    #[test]
    fn wrap_and_distance() {
        assert!((wrap_angle(-0.1) - (TAU - 0.1)).abs() < 1e-15);
        assert!((angle_distance(0.05, TAU - 0.05) - 0.1).abs() < 1e-12);
        assert_eq!(wrap_angle(TAU), 0.0);
    }
}
