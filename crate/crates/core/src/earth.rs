//! WGS-84 Earth model: normal gravity, gravitation and ECEF/geodetic conversions.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::liegroup::{skew, Rotation};
use crate::scalar::Real;

/// Positions closer to the Earth's center than this are rejected.
pub const MIN_RADIUS: f64 = 6.2e6;

const MAX_GEODETIC_ITERATIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EarthError {
    #[error("position radius {radius} m is inside the {MIN_RADIUS} m validity sphere")]
    BelowValidity { radius: f64 },
    #[error("geodetic latitude did not converge after {MAX_GEODETIC_ITERATIONS} iterations")]
    NoConvergence,
}

/// Reference ellipsoid with its normal-gravity parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthModel<T: Real> {
    /// rad/s
    pub omega_ie: T,
    /// m
    pub semi_major_axis: T,
    pub flattening: T,
    /// m^3/s^2
    pub gm: T,
    /// Normal gravity on the equator and at the poles, m/s^2.
    pub gamma_equator: T,
    pub gamma_pole: T,
}

impl<T: Real> Default for EarthModel<T> {
    fn default() -> Self {
        Self::wgs84()
    }
}

/// Geodetic coordinates on the reference ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodetic<T: Real> {
    /// rad
    pub latitude: T,
    /// rad
    pub longitude: T,
    /// m above the ellipsoid
    pub height: T,
}

impl<T: Real> Geodetic<T> {
    pub fn new(latitude: T, longitude: T, height: T) -> Self {
        Self { latitude, longitude, height }
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, height: f64) -> Self {
        Self::new(
            T::lit(lat_deg.to_radians()),
            T::lit(lon_deg.to_radians()),
            T::lit(height),
        )
    }
}

/// Source of Earth rate and gravitation for the mechanization.
///
/// The filter treats gravitation as a known field; tests freeze it to a
/// constant to exercise the exact group-affine algebra.
pub trait GravityField<T: Real> {
    /// rad/s about the ECEF z axis.
    fn earth_rate(&self) -> T;

    /// Gravitational acceleration (gravity plus centrifugal reaction) at `p`.
    fn gravitation(&self, p: &Vector3<T>) -> Result<Vector3<T>, EarthError>;

    fn omega_ie_vec(&self) -> Vector3<T> {
        Vector3::new(T::zero(), T::zero(), self.earth_rate())
    }
}

impl<T: Real> EarthModel<T> {
    pub fn wgs84() -> Self {
        Self {
            omega_ie: T::lit(7.292115e-5),
            semi_major_axis: T::lit(6_378_137.0),
            flattening: T::lit(1.0 / 298.257_223_563),
            gm: T::lit(3.986_004_418e14),
            gamma_equator: T::lit(9.780_325_335_9),
            gamma_pole: T::lit(9.832_184_937_8),
        }
    }

    pub fn omega_vec(&self) -> Vector3<T> {
        Vector3::new(T::zero(), T::zero(), self.omega_ie)
    }

    pub fn semi_minor_axis(&self) -> T {
        self.semi_major_axis * (T::one() - self.flattening)
    }

    /// First eccentricity squared.
    pub fn e2(&self) -> T {
        self.flattening * (T::lit(2.0) - self.flattening)
    }

    /// Prime vertical radius of curvature.
    pub fn prime_vertical_radius(&self, latitude: T) -> T {
        let s = latitude.sin();
        self.semi_major_axis / (T::one() - self.e2() * s * s).sqrt()
    }

    /// Meridian radius of curvature.
    pub fn meridian_radius(&self, latitude: T) -> T {
        let s = latitude.sin();
        let w2 = T::one() - self.e2() * s * s;
        self.semi_major_axis * (T::one() - self.e2()) / (w2 * w2.sqrt())
    }

    fn check_domain(&self, p: &Vector3<T>) -> Result<(), EarthError> {
        let r = p.norm();
        if r > T::lit(MIN_RADIUS) {
            Ok(())
        } else {
            Err(EarthError::BelowValidity { radius: r.as_f64() })
        }
    }

    /// Somigliana normal gravity with a linear height correction, m/s^2.
    pub fn normal_gravity(&self, g: &Geodetic<T>) -> T {
        let a = self.semi_major_axis;
        let b = self.semi_minor_axis();
        let s2 = g.latitude.sin().powi(2);
        let c2 = T::one() - s2;
        let gamma0 = (a * self.gamma_equator * c2 + b * self.gamma_pole * s2)
            / (a * a * c2 + b * b * s2).sqrt();
        let m = self.omega_ie * self.omega_ie * a * a * b / self.gm;
        let two = T::lit(2.0);
        gamma0 * (T::one() - two * g.height / a * (T::one() + self.flattening + m - two * self.flattening * s2))
    }

    /// Plumb-line gravity in ECEF.
    pub fn gravity(&self, p: &Vector3<T>) -> Result<Vector3<T>, EarthError> {
        self.check_domain(p)?;
        let g = self.ecef_to_geodetic(p)?;
        let down = self.ecef_to_ned_rotation(&g).matrix().row(2).transpose();
        Ok(down * self.normal_gravity(&g))
    }

    pub fn geodetic_to_ecef(&self, g: &Geodetic<T>) -> Vector3<T> {
        let n = self.prime_vertical_radius(g.latitude);
        let (sl, cl) = g.latitude.sin_cos();
        let (so, co) = g.longitude.sin_cos();
        Vector3::new(
            (n + g.height) * cl * co,
            (n + g.height) * cl * so,
            (n * (T::one() - self.e2()) + g.height) * sl,
        )
    }

    pub fn ecef_to_geodetic(&self, p: &Vector3<T>) -> Result<Geodetic<T>, EarthError> {
        self.check_domain(p)?;
        let e2 = self.e2();
        let rho = (p.x * p.x + p.y * p.y).sqrt();
        let longitude = p.y.atan2(p.x);
        let tol = T::tol(1e-12, 8.0);
        let mut lat = p.z.atan2(rho * (T::one() - e2));
        for _ in 0..MAX_GEODETIC_ITERATIONS {
            let n = self.prime_vertical_radius(lat);
            let next = (p.z + e2 * n * lat.sin()).atan2(rho);
            let done = (next - lat).abs() < tol;
            lat = next;
            if done {
                let (s, c) = lat.sin_cos();
                let height = rho * c + p.z * s
                    - self.semi_major_axis * (T::one() - e2 * s * s).sqrt();
                return Ok(Geodetic::new(lat, longitude, height));
            }
        }
        Err(EarthError::NoConvergence)
    }

    /// `C_e^n`: rows are the north, east and down unit vectors.
    pub fn ecef_to_ned_rotation(&self, g: &Geodetic<T>) -> Rotation<T> {
        ecef_to_ned(g.latitude, g.longitude)
    }
}

/// `C_e^n` for the given latitude and longitude.
#[rustfmt::skip]
pub fn ecef_to_ned<T: Real>(latitude: T, longitude: T) -> Rotation<T> {
    let (sl, cl) = latitude.sin_cos();
    let (so, co) = longitude.sin_cos();
    Rotation::from_matrix_unchecked(Matrix3::new(
        -sl * co, -sl * so, cl,
        -so, co, T::zero(),
        -cl * co, -cl * so, -sl,
    ))
}

impl<T: Real> GravityField<T> for EarthModel<T> {
    fn earth_rate(&self) -> T {
        self.omega_ie
    }

    fn gravitation(&self, p: &Vector3<T>) -> Result<Vector3<T>, EarthError> {
        let w = skew(&self.omega_vec());
        Ok(self.gravity(p)? + w * w * p)
    }
}

/// Gravitation frozen to a constant vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedGravitation<T: Real> {
    pub omega_ie: T,
    pub gbar: Vector3<T>,
}

impl<T: Real> GravityField<T> for FixedGravitation<T> {
    fn earth_rate(&self) -> T {
        self.omega_ie
    }

    fn gravitation(&self, _p: &Vector3<T>) -> Result<Vector3<T>, EarthError> {
        Ok(self.gbar)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn wgs() -> EarthModel<f64> {
        EarthModel::wgs84()
    }

    // Closed-form Somigliana on the ellipsoid written from the defining
    // constants k = (b gp)/(a ge) - 1.
    fn somigliana(lat: f64) -> f64 {
        let e = wgs();
        let b = e.semi_minor_axis();
        let k = b * e.gamma_pole / (e.semi_major_axis * e.gamma_equator) - 1.0;
        let s2 = lat.sin().powi(2);
        e.gamma_equator * (1.0 + k * s2) / (1.0 - e.e2() * s2).sqrt()
    }

    #[test]
    fn gravity_magnitude_at_equator_and_pole() {
        let e = wgs();
        let eq = Vector3::new(e.semi_major_axis, 0.0, 0.0);
        let g = e.gravity(&eq).unwrap();
        assert!((9.77..=9.79).contains(&g.norm()));
        assert_relative_eq!(g.norm(), somigliana(0.0), epsilon = 1e-12);

        let pole = Vector3::new(0.0, 0.0, e.semi_minor_axis());
        let g = e.gravity(&pole).unwrap();
        assert!((9.82..=9.84).contains(&g.norm()));
        assert_relative_eq!(g.norm(), somigliana(FRAC_PI_2), epsilon = 1e-12);
    }

    #[test]
    fn gravity_points_down_at_equator() {
        let e = wgs();
        let p = Vector3::new(e.semi_major_axis, 0.0, 0.0);
        let g = e.gravity(&p).unwrap();
        let angle = (g.dot(&-p) / (g.norm() * p.norm())).clamp(-1.0, 1.0).acos();
        assert!(angle.to_degrees() < 0.2);
    }

    #[test]
    fn gravity_rejects_interior_points() {
        let e = wgs();
        assert!(matches!(
            e.gravity(&Vector3::new(1.0e6, 0.0, 0.0)),
            Err(EarthError::BelowValidity { .. })
        ));
        assert!(e.gravitation(&Vector3::zeros()).is_err());
    }

    #[test]
    fn gravitation_on_polar_axis_equals_gravity() {
        let e = wgs();
        let p = Vector3::new(0.0, 0.0, e.semi_minor_axis() + 100.0);
        assert_eq!(e.gravitation(&p).unwrap(), e.gravity(&p).unwrap());
    }

    #[test]
    fn centrifugal_term_at_equator() {
        let e = wgs();
        let p = Vector3::new(e.semi_major_axis, 0.0, 0.0);
        let diff = (e.gravitation(&p).unwrap() - e.gravity(&p).unwrap()).norm();
        let expected = 7.292115e-5f64.powi(2) * 6378137.0;
        assert_relative_eq!(diff, expected, epsilon = 1e-15);
        assert!((diff - 0.0339).abs() < 1e-4);
    }

    #[test]
    fn geodetic_special_points() {
        let e = wgs();
        let g = e.ecef_to_geodetic(&Vector3::new(e.semi_major_axis, 0.0, 0.0)).unwrap();
        assert_eq!((g.latitude, g.longitude), (0.0, 0.0));
        assert!(g.height.abs() < 1e-9);
        let g = e.ecef_to_geodetic(&Vector3::new(0.0, e.semi_major_axis, 0.0)).unwrap();
        assert_eq!(g.longitude, FRAC_PI_2);
    }

    #[test]
    fn ned_axes_at_special_points() {
        let c = ecef_to_ned(0.0f64, 0.0);
        assert_eq!(c.matrix().row(2).transpose(), Vector3::new(-1.0, 0.0, 0.0));
        let c = ecef_to_ned(FRAC_PI_2, 0.3);
        assert_relative_eq!(c.matrix().row(2).transpose(), Vector3::new(0.0, 0.0, -1.0), epsilon = 1e-15);
    }

    #[test]
    fn normal_gravity_height_gradient() {
        // Free-air gradient is about -3.086e-6 s^-2.
        let e = wgs();
        let g0 = e.normal_gravity(&Geodetic::new(0.5, 0.0, 0.0));
        let g1 = e.normal_gravity(&Geodetic::new(0.5, 0.0, 1000.0));
        assert!(((g1 - g0) / 1000.0 + 3.086e-6).abs() < 2e-8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn geodetic_roundtrip(lat in -1.57..1.57f64, lon in -3.14..3.14f64, h in -500.0..10_000.0f64) {
            let e = wgs();
            let p = e.geodetic_to_ecef(&Geodetic::new(lat, lon, h));
            let g = e.ecef_to_geodetic(&p).unwrap();
            prop_assert!((e.geodetic_to_ecef(&g) - p).norm() < 1e-6);
            prop_assert!((g.latitude - lat).abs() < 1e-12);
            prop_assert!((g.height - h).abs() < 1e-6);
        }

        #[test]
        fn ned_rotation_is_orthonormal(lat in -1.57..1.57f64, lon in -3.14..3.14f64) {
            let c = ecef_to_ned(lat, lon);
            let m = c.matrix();
            prop_assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-14);
            prop_assert!(m.row(0).dot(&m.row(2)).abs() < 1e-15);
            prop_assert!((m.determinant() - 1.0).abs() < 1e-14);
        }

        #[test]
        fn gravitation_identity(lat in -1.57..1.57f64, lon in -3.14..3.14f64, h in 0.0..10_000.0f64) {
            let e = wgs();
            let p = e.geodetic_to_ecef(&Geodetic::new(lat, lon, h));
            let w = skew(&e.omega_vec());
            let back = e.gravitation(&p).unwrap() - w * w * p;
            prop_assert!((back - e.gravity(&p).unwrap()).norm() < 1e-14);
        }
    }
}
