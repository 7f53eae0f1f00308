//! Errors of a navigation solution against a reference, in local-level terms.

use nalgebra::Vector3;

use se23nav::earth::{ecef_to_ned, EarthError, EarthModel, Geodetic};
use se23nav::{NavState, Rotation};

/// Column names of a per-run error log.
pub const COLUMNS: [&str; 16] = [
    "t", "err_pitch_deg", "err_roll_deg", "err_yaw_deg", "err_lat_m", "err_lon_m", "err_h_m", "err_vn", "err_ve", "err_vd",
    "bgx", "bgy", "bgz", "bax", "bay", "baz",
];

pub type ErrorRow = [f64; 16];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttitudeError {
    /// `[pitch, roll, yaw]`, deg.
    pub deg: Vector3<f64>,
    /// Pitch error within 1 deg of +-90 deg, where roll and yaw are coupled.
    pub gimbal_lock: bool,
}

/// Yaw-pitch-roll angles of `C_b^n(est) C_b^n(truth)^T`, with both
/// attitudes expressed in the NED frame at `at`.
pub fn attitude_error_angles(est: &Rotation<f64>, truth: &Rotation<f64>, at: &Geodetic<f64>) -> AttitudeError {
    let c_en = ecef_to_ned(at.latitude, at.longitude);
    let d = (c_en * est) * (c_en * truth).inverse();
    let (roll, pitch, yaw) = d.euler_angles();
    let deg = Vector3::new(pitch, roll, yaw).map(f64::to_degrees);
    AttitudeError { deg, gimbal_lock: deg.x.abs() > 89.0 }
}

/// Attitude, position (north/east/up offsets in m) and NED velocity errors.
pub fn nav_errors(est: &NavState<f64>, truth: &NavState<f64>, earth: &EarthModel<f64>) -> Result<[f64; 9], EarthError> {
    let gt = earth.ecef_to_geodetic(&truth.pos)?;
    let ge = earth.ecef_to_geodetic(&est.pos)?;
    let att = attitude_error_angles(&est.att, &truth.att, &gt).deg;
    let lat = (ge.latitude - gt.latitude) * (earth.meridian_radius(gt.latitude) + gt.height);
    let lon = (ge.longitude - gt.longitude) * (earth.prime_vertical_radius(gt.latitude) + gt.height) * gt.latitude.cos();
    let dv = ecef_to_ned(gt.latitude, gt.longitude) * (est.vel - truth.vel);
    Ok([att.x, att.y, att.z, lat, lon, ge.height - gt.height, dv.x, dv.y, dv.z])
}

pub fn error_row(t: f64, nav: &[f64; 9], gyro_bias: &Vector3<f64>, accel_bias: &Vector3<f64>) -> ErrorRow {
    let mut row = [0.0; 16];
    row[0] = t;
    row[1..10].copy_from_slice(nav);
    row[10..13].copy_from_slice(gyro_bias.as_slice());
    row[13..16].copy_from_slice(accel_bias.as_slice());
    row
}

pub fn horizontal_position_error(row: &ErrorRow) -> f64 {
    row[4].hypot(row[5])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use se23nav::liegroup::so3_exp;

    fn site() -> (Geodetic<f64>, Rotation<f64>) {
        let g = Geodetic::from_degrees(30.5, 114.3, 20.0);
        let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
        (g, c_ne * so3_exp(&Vector3::new(0.02, -0.01, 1.2)))
    }

    #[test]
    fn identical_attitudes() {
        let (g, c) = site();
        assert!(attitude_error_angles(&c, &c, &g).deg.amax() < 1e-12);
    }

    #[test]
    fn pure_yaw_error() {
        let (g, c) = site();
        let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
        let est = c_ne * so3_exp(&Vector3::new(0.0, 0.0, 1f64.to_radians())) * c_ne.inverse() * c;
        let e = attitude_error_angles(&est, &c, &g).deg;
        assert!((e - Vector3::new(0.0, 0.0, 1.0)).amax() < 1e-9, "{e}");
    }

    #[test]
    fn gimbal_lock_flag() {
        let (g, c) = site();
        let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
        let est = c_ne * so3_exp(&Vector3::new(0.0, 89.5f64.to_radians(), 0.0)) * c_ne.inverse() * c;
        assert!(attitude_error_angles(&est, &c, &g).gimbal_lock);
    }

    #[test]
    fn position_and_velocity_offsets() {
        let earth = EarthModel::wgs84();
        let (g, c) = site();
        let truth = NavState::new(c, Vector3::zeros(), earth.geodetic_to_ecef(&g));
        let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
        let est = NavState::new(c, c_ne * Vector3::new(0.1, -0.2, 0.3), truth.pos + c_ne * Vector3::new(3.0, -4.0, -5.0));
        let e = nav_errors(&est, &truth, &earth).unwrap();
        assert!((e[3] - 3.0).abs() < 1e-5 && (e[4] + 4.0).abs() < 1e-5 && (e[5] - 5.0).abs() < 1e-5, "{e:?}");
        assert!((e[6] - 0.1).abs() < 1e-12 && (e[7] + 0.2).abs() < 1e-12 && (e[8] - 0.3).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn small_errors_add_linearly(a in prop::array::uniform3(-1e-3..1e-3f64), b in prop::array::uniform3(-1e-3..1e-3f64)) {
            let (g, c) = site();
            let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
            // Small rotations about the NED axes in pitch/roll/yaw order.
            let rot = |v: [f64; 3]| c_ne * so3_exp(&Vector3::new(v[1], v[0], v[2])) * c_ne.inverse();
            let ea = attitude_error_angles(&(rot(a) * c), &c, &g).deg;
            let eb = attitude_error_angles(&(rot(b) * c), &c, &g).deg;
            let eab = attitude_error_angles(&(rot(a) * rot(b) * c), &c, &g).deg;
            prop_assert!((eab - ea - eb).amax() < 1e-4);
        }
    }
}
