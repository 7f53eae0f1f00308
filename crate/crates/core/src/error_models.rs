//! Linear error-state models for the three filters.
//!
//! The 15-dimensional error state is `[phi, dv, dp, gyro_bias, accel_bias]`.
//! Its first nine components mean different things per [`ErrorDefinition`]:
//!
//! * `Right`: first-order columns of `chi * chi_est^-1` on the transformed state.
//! * `Left`: first-order columns of `chi_est^-1 * chi` on the transformed state.
//! * `So`: attitude error with `C = (I + phi x) C_est`, velocity and position
//!   errors as estimate minus truth on the classic state.

use nalgebra::{Matrix3, Matrix6, SMatrix, SVector, Vector3};

use crate::earth::{EarthError, GravityField};
use crate::liegroup::{left_error, right_error, se23_log, skew, so3_log, LieError};
use crate::mechanization::{ImuSample, NavState, TransformedNavState};
use crate::scalar::Real;

pub const STATE_DIM: usize = 15;

pub type Matrix15<T> = SMatrix<T, 15, 15>;
pub type Matrix15x6<T> = SMatrix<T, 15, 6>;
pub type Vector15<T> = SVector<T, 15>;
pub type Vector9<T> = SVector<T, 9>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorDefinition {
    Right,
    Left,
    So,
}

impl ErrorDefinition {
    pub const ALL: [ErrorDefinition; 3] = [ErrorDefinition::Left, ErrorDefinition::Right, ErrorDefinition::So];

    /// Short lowercase name used on the command line and in file names.
    pub fn tag(self) -> &'static str {
        match self {
            ErrorDefinition::Right => "rse",
            ErrorDefinition::Left => "lse",
            ErrorDefinition::So => "so",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|d| d.tag() == tag)
    }

    /// Whether the filter runs the transformed mechanization.
    pub fn is_transformed(self) -> bool {
        self != ErrorDefinition::So
    }
}

/// Error state tagged with the definition it was produced under.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorState15<T: Real> {
    pub definition: ErrorDefinition,
    pub phi: Vector3<T>,
    pub dv: Vector3<T>,
    pub dp: Vector3<T>,
    pub gyro_bias: Vector3<T>,
    pub accel_bias: Vector3<T>,
}

impl<T: Real> ErrorState15<T> {
    pub fn zero(definition: ErrorDefinition) -> Self {
        Self::from_vector(definition, &Vector15::zeros())
    }

    pub fn from_vector(definition: ErrorDefinition, x: &Vector15<T>) -> Self {
        let block = |i: usize| x.fixed_rows::<3>(3 * i).into_owned();
        Self {
            definition,
            phi: block(0),
            dv: block(1),
            dp: block(2),
            gyro_bias: block(3),
            accel_bias: block(4),
        }
    }

    pub fn to_vector(&self) -> Vector15<T> {
        let mut x = Vector15::zeros();
        for (i, b) in [self.phi, self.dv, self.dp, self.gyro_bias, self.accel_bias].iter().enumerate() {
            x.fixed_rows_mut::<3>(3 * i).copy_from(b);
        }
        x
    }

    pub fn nav_vector(&self) -> Vector9<T> {
        self.to_vector().fixed_rows::<9>(0).into_owned()
    }
}

/// Inertial sensor error statistics, SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec<T: Real> {
    /// Angle random walk, rad/sqrt(s).
    pub gyro_psd: Vector3<T>,
    /// Velocity random walk, (m/s^2)/sqrt(Hz).
    pub accel_psd: Vector3<T>,
    /// rad/s
    pub gyro_bias: Vector3<T>,
    /// m/s^2
    pub accel_bias: Vector3<T>,
}

impl<T: Real> NoiseSpec<T> {
    /// `Q_c = diag(gyro_psd^2, accel_psd^2)`.
    pub fn continuous_noise(&self) -> Matrix6<T> {
        let mut d = SVector::<T, 6>::zeros();
        d.fixed_rows_mut::<3>(0).copy_from(&self.gyro_psd.component_mul(&self.gyro_psd));
        d.fixed_rows_mut::<3>(3).copy_from(&self.accel_psd.component_mul(&self.accel_psd));
        Matrix6::from_diagonal(&d)
    }
}

/// Continuous-time model `dx/dt = F dx + G w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessModel<T: Real> {
    pub f: Matrix15<T>,
    pub g: Matrix15x6<T>,
}

impl<T: Real> ProcessModel<T> {
    pub fn nav_block(&self) -> SMatrix<T, 9, 9> {
        self.f.fixed_view::<9, 9>(0, 0).into_owned()
    }
}

/// Linearized measurement `z = H dx + n`, `n ~ N(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation<T: Real, const M: usize> {
    pub h: SMatrix<T, M, 15>,
    pub z: SVector<T, M>,
    pub r: SMatrix<T, M, M>,
}

fn put<T: Real, const R: usize, const C: usize>(m: &mut SMatrix<T, R, C>, row: usize, col: usize, b: &Matrix3<T>) {
    m.fixed_view_mut::<3, 3>(3 * row, 3 * col).copy_from(b);
}

fn omega_skew<T: Real>(omega_ie: T) -> Matrix3<T> {
    skew(&Vector3::new(T::zero(), T::zero(), omega_ie))
}

/// Right-invariant model of the transformed mechanization.
pub fn f_right<T: Real, G: GravityField<T>>(
    nav: &TransformedNavState<T>,
    field: &G,
) -> Result<ProcessModel<T>, EarthError> {
    let w = omega_skew(field.earth_rate());
    let gbar = field.gravitation(&nav.pos)?;
    let c = *nav.att.matrix();
    let vc = skew(&nav.tvel) * c;
    let pc = skew(&nav.pos) * c;
    let i = Matrix3::identity();

    let mut f = Matrix15::zeros();
    put(&mut f, 0, 0, &-w);
    put(&mut f, 0, 3, &-c);
    put(&mut f, 1, 0, &skew(&gbar));
    put(&mut f, 1, 1, &-w);
    put(&mut f, 1, 3, &-vc);
    put(&mut f, 1, 4, &-c);
    put(&mut f, 2, 1, &i);
    put(&mut f, 2, 2, &-w);
    put(&mut f, 2, 3, &-pc);

    let mut g = Matrix15x6::zeros();
    put(&mut g, 0, 0, &-c);
    put(&mut g, 1, 0, &-vc);
    put(&mut g, 1, 1, &-c);
    put(&mut g, 2, 0, &-pc);
    Ok(ProcessModel { f, g })
}

/// Left-invariant model; depends on the raw IMU sample only.
pub fn f_left<T: Real>(u: &ImuSample<T>) -> ProcessModel<T> {
    let wx = skew(&u.gyro);
    let i = Matrix3::identity();
    let mut f = Matrix15::zeros();
    put(&mut f, 0, 0, &-wx);
    put(&mut f, 0, 3, &-i);
    put(&mut f, 1, 0, &-skew(&u.accel));
    put(&mut f, 1, 1, &-wx);
    put(&mut f, 1, 4, &-i);
    put(&mut f, 2, 1, &i);
    put(&mut f, 2, 2, &-wx);

    let mut g = Matrix15x6::zeros();
    put(&mut g, 0, 0, &-i);
    put(&mut g, 1, 1, &-i);
    ProcessModel { f, g }
}

/// Conventional model of the classic mechanization. Like the invariant models
/// it treats gravitation as error-free, so there is no position feedback in
/// the velocity row.
pub fn f_so<T: Real>(nav: &NavState<T>, u: &ImuSample<T>, omega_ie: T) -> ProcessModel<T> {
    let w = omega_skew(omega_ie);
    let c = *nav.att.matrix();
    let i = Matrix3::identity();
    let mut f = Matrix15::zeros();
    put(&mut f, 0, 0, &-w);
    put(&mut f, 0, 3, &-c);
    put(&mut f, 1, 0, &skew(&(c * u.accel)));
    put(&mut f, 1, 1, &(w * -T::lit(2.0)));
    put(&mut f, 1, 4, &c);
    put(&mut f, 2, 1, &i);

    let mut g = Matrix15x6::zeros();
    put(&mut g, 0, 0, &-c);
    put(&mut g, 1, 1, &c);
    ProcessModel { f, g }
}

/// GPS velocity and position combined into the transformed velocity
/// `y = v + omega_ie x p`.
pub fn gps_transformed_velocity<T: Real>(v_gps: &Vector3<T>, p_gps: &Vector3<T>, omega_ie: T) -> Vector3<T> {
    v_gps + omega_skew(omega_ie) * p_gps
}

/// Covariance of [`gps_transformed_velocity`] for independent velocity and
/// position noise.
pub fn gps_transformed_velocity_cov<T: Real>(r_v: &Matrix3<T>, r_p: &Matrix3<T>, omega_ie: T) -> Matrix3<T> {
    let w = omega_skew(omega_ie);
    r_v + w * r_p * w.transpose()
}

/// Left model, innovation rotated into the body frame so that `H` is constant.
pub fn h_gps_left<T: Real>(nav: &TransformedNavState<T>, y: &Vector3<T>, r_y: &Matrix3<T>) -> Observation<T, 3> {
    let ct = nav.att.matrix().transpose();
    let mut h = SMatrix::<T, 3, 15>::zeros();
    put(&mut h, 0, 1, &-Matrix3::identity());
    Observation { h, z: ct * (nav.tvel - y), r: ct * r_y * ct.transpose() }
}

/// Right model. The velocity block is `-I`: the innovation is estimate minus
/// measurement while the right error is truth minus rotated estimate.
pub fn h_gps_right<T: Real>(nav: &TransformedNavState<T>, y: &Vector3<T>, r_y: &Matrix3<T>) -> Observation<T, 3> {
    let mut h = SMatrix::<T, 3, 15>::zeros();
    put(&mut h, 0, 0, &skew(&nav.tvel));
    put(&mut h, 0, 1, &-Matrix3::identity());
    Observation { h, z: nav.tvel - y, r: *r_y }
}

pub fn h_gps_so<T: Real>(
    nav: &NavState<T>,
    v_gps: &Vector3<T>,
    p_gps: &Vector3<T>,
    r_v: &Matrix3<T>,
    r_p: &Matrix3<T>,
) -> Observation<T, 6> {
    let mut h = SMatrix::<T, 6, 15>::zeros();
    put(&mut h, 0, 1, &Matrix3::identity());
    put(&mut h, 1, 2, &Matrix3::identity());
    let mut z = SVector::<T, 6>::zeros();
    z.fixed_rows_mut::<3>(0).copy_from(&(nav.vel - v_gps));
    z.fixed_rows_mut::<3>(3).copy_from(&(nav.pos - p_gps));
    let mut r = SMatrix::<T, 6, 6>::zeros();
    r.fixed_view_mut::<3, 3>(0, 0).copy_from(r_v);
    r.fixed_view_mut::<3, 3>(3, 3).copy_from(r_p);
    Observation { h, z, r }
}

/// Odometer innovation `vbar - omega_ie x p - C v_b` shared by both
/// invariant filters, with its noise mapped into ECEF.
fn odo_innovation<T: Real>(
    nav: &TransformedNavState<T>,
    v_body: &Vector3<T>,
    r_body: &Matrix3<T>,
    omega_ie: T,
) -> (SVector<T, 3>, Matrix3<T>) {
    let c = nav.att.matrix();
    let z = nav.ground_velocity(omega_ie) - c * v_body;
    (z, c * r_body * c.transpose())
}

pub fn h_odo_right<T: Real>(
    nav: &TransformedNavState<T>,
    v_body: &Vector3<T>,
    r_body: &Matrix3<T>,
    omega_ie: T,
) -> Observation<T, 3> {
    let w = omega_skew(omega_ie);
    let (z, r) = odo_innovation(nav, v_body, r_body, omega_ie);
    let mut h = SMatrix::<T, 3, 15>::zeros();
    put(&mut h, 0, 0, &-(skew(&nav.pos) * w));
    put(&mut h, 0, 1, &-Matrix3::identity());
    put(&mut h, 0, 2, &w);
    Observation { h, z, r }
}

pub fn h_odo_left<T: Real>(
    nav: &TransformedNavState<T>,
    v_body: &Vector3<T>,
    r_body: &Matrix3<T>,
    omega_ie: T,
) -> Observation<T, 3> {
    let w = omega_skew(omega_ie);
    let c = *nav.att.matrix();
    let px = skew(&nav.pos);
    let (z, r) = odo_innovation(nav, v_body, r_body, omega_ie);
    let mut h = SMatrix::<T, 3, 15>::zeros();
    put(&mut h, 0, 0, &((-skew(&nav.tvel) + w * px - px * w) * c));
    put(&mut h, 0, 1, &-c);
    put(&mut h, 0, 2, &(w * c));
    Observation { h, z, r }
}

pub fn h_odo_so<T: Real>(nav: &NavState<T>, v_body: &Vector3<T>, r_body: &Matrix3<T>) -> Observation<T, 3> {
    let c = nav.att.matrix();
    let mut h = SMatrix::<T, 3, 15>::zeros();
    put(&mut h, 0, 0, &-skew(&nav.vel));
    put(&mut h, 0, 1, &Matrix3::identity());
    Observation { h, z: nav.vel - c * v_body, r: c * r_body * c.transpose() }
}

fn stack<T: Real>(a: Vector3<T>, b: Vector3<T>, c: Vector3<T>) -> Vector9<T> {
    let mut v = Vector9::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&a);
    v.fixed_rows_mut::<3>(3).copy_from(&b);
    v.fixed_rows_mut::<3>(6).copy_from(&c);
    v
}

/// `log(chi * chi_est^-1)`.
pub fn right_error_vector<T: Real>(
    truth: &TransformedNavState<T>,
    est: &TransformedNavState<T>,
) -> Result<Vector9<T>, LieError> {
    Ok(se23_log(&right_error(&truth.as_pose(), &est.as_pose()))?.to_vector())
}

/// `log(chi_est^-1 * chi)`.
pub fn left_error_vector<T: Real>(
    truth: &TransformedNavState<T>,
    est: &TransformedNavState<T>,
) -> Result<Vector9<T>, LieError> {
    Ok(se23_log(&left_error(&truth.as_pose(), &est.as_pose()))?.to_vector())
}

/// `[log(C C_est^T), v_est - v, p_est - p]`.
pub fn so_error_vector<T: Real>(truth: &NavState<T>, est: &NavState<T>) -> Result<Vector9<T>, LieError> {
    let phi = so3_log(&(truth.att * est.att.inverse())).regular()?;
    Ok(stack(phi, est.vel - truth.vel, est.pos - truth.pos))
}

/// Right error with the velocity and position parts written to first order
/// in the attitude error: `dv = (v_est x) phi - (v_est - v)`.
pub fn linearized_right_error<T: Real>(
    truth: &TransformedNavState<T>,
    est: &TransformedNavState<T>,
) -> Result<Vector9<T>, LieError> {
    let phi = so3_log(&(truth.att * est.att.inverse())).regular()?;
    Ok(stack(
        phi,
        est.tvel.cross(&phi) - (est.tvel - truth.tvel),
        est.pos.cross(&phi) - (est.pos - truth.pos),
    ))
}

/// Left error with `dv = C_est^T (v - v_est)`.
pub fn linearized_left_error<T: Real>(
    truth: &TransformedNavState<T>,
    est: &TransformedNavState<T>,
) -> Result<Vector9<T>, LieError> {
    let ct = est.att.inverse();
    let phi = so3_log(&(ct * truth.att)).regular()?;
    Ok(stack(phi, ct * (truth.tvel - est.tvel), ct * (truth.pos - est.pos)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::earth::{EarthModel, Geodetic};
    use crate::liegroup::{so3_exp, Rotation};

    fn estimate() -> (TransformedNavState<f64>, EarthModel<f64>) {
        let e = EarthModel::wgs84();
        let p = e.geodetic_to_ecef(&Geodetic::from_degrees(30.5, 114.3, 40.0));
        let c = so3_exp(&Vector3::new(0.4, -1.0, 2.2));
        let s = NavState::new(c, Vector3::new(8.0, -3.0, 1.0), p).to_transformed(e.omega_ie);
        (s, e)
    }

    fn imu() -> ImuSample<f64> {
        ImuSample::new(0.0, Vector3::new(0.01, -0.02, 0.03), Vector3::new(0.3, 0.1, -9.8), 0.01)
    }

    fn block<const C: usize>(m: &SMatrix<f64, 15, C>, r: usize, c: usize) -> Matrix3<f64> {
        m.fixed_view::<3, 3>(3 * r, 3 * c).into_owned()
    }

    // Truth built from the estimate and a right error vector, using the exact
    // group exponential.
    fn right_truth(est: &TransformedNavState<f64>, xi: &Vector9<f64>) -> TransformedNavState<f64> {
        let eta = crate::liegroup::se23_exp(&crate::liegroup::Twist::from_vector(xi));
        TransformedNavState::from_pose(&eta.compose(&est.as_pose()))
    }

    fn left_truth(est: &TransformedNavState<f64>, xi: &Vector9<f64>) -> TransformedNavState<f64> {
        let eta = crate::liegroup::se23_exp(&crate::liegroup::Twist::from_vector(xi));
        TransformedNavState::from_pose(&est.as_pose().compose(&eta))
    }

    fn small_error() -> Vector9<f64> {
        Vector9::from_column_slice(&[1e-4, -2e-4, 1.5e-4, 0.01, -0.02, 0.015, 0.5, -0.3, 0.8])
    }

    fn nav15(xi: &Vector9<f64>) -> Vector15<f64> {
        let mut x = Vector15::zeros();
        x.fixed_rows_mut::<9>(0).copy_from(xi);
        x
    }

    #[test]
    fn right_attitude_row_matches_layout() {
        let (s, e) = estimate();
        let m = f_right(&s, &e).unwrap();
        let w = omega_skew(e.omega_ie);
        assert_eq!(block(&m.f, 0, 0), -w);
        assert_eq!(block(&m.f, 0, 1), Matrix3::zeros());
        assert_eq!(block(&m.f, 0, 3), -s.att.matrix());
        assert_eq!(block(&m.f, 2, 1), Matrix3::identity());
    }

    #[test]
    fn right_nav_block_ignores_attitude() {
        let (s, e) = estimate();
        let other = TransformedNavState::new(so3_exp(&Vector3::new(-1.0, 0.3, 0.2)), s.tvel, s.pos);
        assert_eq!(f_right(&s, &e).unwrap().nav_block(), f_right(&other, &e).unwrap().nav_block());
    }

    #[test]
    fn left_model_layout() {
        let u = imu();
        let m = f_left(&u);
        assert_eq!(block(&m.f, 1, 0), -skew(&u.accel));
        assert_eq!(block(&m.f, 1, 1), -skew(&u.gyro));
        assert_eq!(block(&m.f, 1, 4), -Matrix3::identity());
        assert_eq!(block(&m.g, 0, 0), -Matrix3::identity());
        assert_eq!(block(&m.g, 1, 1), -Matrix3::identity());
        assert_eq!(m.g.fixed_rows::<9>(6).into_owned(), SMatrix::<f64, 9, 6>::zeros());
    }

    #[test]
    fn so_model_layout() {
        let (s, e) = estimate();
        let c = s.to_classic(e.omega_ie);
        let u = imu();
        let m = f_so(&c, &u, e.omega_ie);
        assert_eq!(block(&m.f, 1, 0), skew(&(c.att * u.accel)));
        assert_eq!(block(&m.f, 1, 1), omega_skew(e.omega_ie) * -2.0);
        assert_eq!(block(&m.f, 1, 4), *c.att.matrix());
        assert_eq!(block(&m.f, 2, 1), Matrix3::identity());
        assert_eq!(block(&m.f, 2, 2), Matrix3::zeros());
    }

    #[test]
    fn perfect_estimates_give_zero_innovation() {
        let (s, e) = estimate();
        let c = s.to_classic(e.omega_ie);
        let y = gps_transformed_velocity(&c.vel, &c.pos, e.omega_ie);
        let r = Matrix3::identity();
        assert!(h_gps_left(&s, &y, &r).z.norm() < 1e-9);
        assert!(h_gps_right(&s, &y, &r).z.norm() < 1e-9);
        assert_eq!(h_gps_so(&c, &c.vel, &c.pos, &r, &r).z, SVector::<f64, 6>::zeros());
        let vb = c.att.inverse() * c.vel;
        assert!(h_odo_right(&s, &vb, &r, e.omega_ie).z.norm() < 1e-9);
        assert!(h_odo_left(&s, &vb, &r, e.omega_ie).z.norm() < 1e-9);
        assert!(h_odo_so(&c, &vb, &r).z.norm() < 1e-12);
    }

    #[test]
    fn left_gps_matrix_is_constant() {
        let (s, e) = estimate();
        let other = TransformedNavState::new(Rotation::identity(), s.tvel * 3.0, s.pos * 1.1);
        let y = Vector3::new(1.0, 2.0, 3.0);
        let r = Matrix3::identity();
        assert_eq!(h_gps_left(&s, &y, &r).h, h_gps_left(&other, &y, &r).h);
        let _ = e;
    }

    #[test]
    fn gps_models_match_linearization() {
        let (est, e) = estimate();
        let xi = small_error();
        let r = Matrix3::identity();

        let truth = left_truth(&est, &xi);
        let c = truth.to_classic(e.omega_ie);
        let y = gps_transformed_velocity(&c.vel, &c.pos, e.omega_ie);
        let obs = h_gps_left(&est, &y, &r);
        let pred = obs.h * nav15(&xi);
        assert!((obs.z - pred).norm() <= 1e-3 * obs.z.norm() + 1e-12);

        let truth = right_truth(&est, &xi);
        let c = truth.to_classic(e.omega_ie);
        let y = gps_transformed_velocity(&c.vel, &c.pos, e.omega_ie);
        let obs = h_gps_right(&est, &y, &r);
        let pred = obs.h * nav15(&xi);
        assert!((obs.z - pred).norm() <= 1e-3 * obs.z.norm() + 1e-12);
    }

    #[test]
    fn so_gps_recovers_injected_errors() {
        let (s, e) = estimate();
        let truth = s.to_classic(e.omega_ie);
        let est = NavState::new(truth.att, truth.vel + Vector3::new(0.1, -0.2, 0.3), truth.pos + Vector3::new(5.0, 6.0, -7.0));
        let dx = nav15(&so_error_vector(&truth, &est).unwrap());
        let obs = h_gps_so(&est, &truth.vel, &truth.pos, &Matrix3::identity(), &Matrix3::identity());
        assert!((obs.z - obs.h * dx).norm() < 1e-9);
    }

    #[test]
    fn odometer_models_match_linearization() {
        let (est, e) = estimate();
        let xi = small_error();
        let r = Matrix3::identity();

        let truth = right_truth(&est, &xi);
        let c = truth.to_classic(e.omega_ie);
        let obs = h_odo_right(&est, &(c.att.inverse() * c.vel), &r, e.omega_ie);
        let pred = obs.h * nav15(&xi);
        assert!((obs.z - pred).norm() <= 1e-4 * obs.z.norm(), "{} {}", obs.z, pred);

        let truth = left_truth(&est, &xi);
        let c = truth.to_classic(e.omega_ie);
        let obs = h_odo_left(&est, &(c.att.inverse() * c.vel), &r, e.omega_ie);
        let pred = obs.h * nav15(&xi);
        assert!((obs.z - pred).norm() <= 1e-4 * obs.z.norm(), "{} {}", obs.z, pred);

        let est_c = est.to_classic(e.omega_ie);
        let phi = Vector3::new(1e-4, -2e-4, 1.5e-4);
        let truth = NavState::new(so3_exp(&phi) * est_c.att, est_c.vel - Vector3::new(0.01, 0.02, -0.01), est_c.pos);
        let dx = nav15(&so_error_vector(&truth, &est_c).unwrap());
        let obs = h_odo_so(&est_c, &(truth.att.inverse() * truth.vel), &r);
        assert!((obs.z - obs.h * dx).norm() <= 1e-3 * obs.z.norm());
    }

    #[test]
    fn noise_maps_to_expected_rows() {
        let spec = NoiseSpec {
            gyro_psd: Vector3::new(1.0, 2.0, 3.0),
            accel_psd: Vector3::new(4.0, 5.0, 6.0),
            gyro_bias: Vector3::zeros(),
            accel_bias: Vector3::zeros(),
        };
        let q = spec.continuous_noise();
        assert_eq!(q.diagonal(), SVector::<f64, 6>::from_column_slice(&[1.0, 4.0, 9.0, 16.0, 25.0, 36.0]));
    }

    #[test]
    fn linearized_errors_agree_with_logs_to_first_order() {
        let (est, _) = estimate();
        let xi = small_error() * 0.01;
        let truth = left_truth(&est, &xi);
        let a = linearized_left_error(&truth, &est).unwrap();
        let b = left_error_vector(&truth, &est).unwrap();
        assert!((a - b).norm() < 1e-6 * b.norm());
        // Second-order terms carry the full position magnitude.
        let truth = right_truth(&est, &xi);
        let a = linearized_right_error(&truth, &est).unwrap();
        let b = right_error_vector(&truth, &est).unwrap();
        let phi2 = xi.fixed_rows::<3>(0).norm_squared();
        assert!((a - b).norm() < phi2 * est.pos.norm());
    }

    #[test]
    fn tags_roundtrip() {
        for d in ErrorDefinition::ALL {
            assert_eq!(ErrorDefinition::from_tag(d.tag()), Some(d));
        }
        assert_eq!(ErrorDefinition::from_tag("ekf"), None);
    }
}
