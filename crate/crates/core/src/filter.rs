//! Error-state Kalman filter shared by the three error definitions.
//!
//! The navigation part of the error is fed back into the mechanization after
//! every update and then zeroed. The bias part is estimated open loop: it is
//! propagated and updated like any other state but never applied to the IMU
//! samples. The covariance is left unchanged by the reset.

use std::hash::{DefaultHasher, Hash, Hasher};

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use thiserror::Error;

use crate::earth::{ecef_to_ned, EarthError, GravityField};
use crate::error_models::{
    f_left, f_right, f_so, gps_transformed_velocity, gps_transformed_velocity_cov, h_gps_left, h_gps_right,
    h_gps_so, h_odo_left, h_odo_right, h_odo_so, linearized_left_error, linearized_right_error, so_error_vector,
    ErrorDefinition, ErrorState15, Matrix15, NoiseSpec, Observation, ProcessModel, Vector15, Vector9,
};
use crate::liegroup::{skew, so3_exp, LieError, Rotation};
use crate::mechanization::{
    propagate, propagate_classic, ImuSample, Integrator, MechanizationError, NavState, TransformedNavState,
};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum FilterError {
    #[error(transparent)]
    Mechanization(#[from] MechanizationError),
    #[error(transparent)]
    Earth(#[from] EarthError),
    #[error("innovation covariance is not positive definite")]
    SingularInnovation,
    #[error("error state defined as {got:?} fed to a {expected:?} filter")]
    DefinitionMismatch { expected: ErrorDefinition, got: ErrorDefinition },
    #[error(transparent)]
    Lie(#[from] LieError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig<T: Real> {
    pub definition: ErrorDefinition,
    /// Initial attitude error std `[pitch, roll, yaw]`, rad, as small
    /// rotations about east, north and down.
    pub init_attitude_std: Vector3<T>,
    /// Initial velocity error std, NED, m/s.
    pub init_vel_std: Vector3<T>,
    /// Initial position error std, NED, m.
    pub init_pos_std: Vector3<T>,
    pub init_gyro_bias_std: Vector3<T>,
    pub init_accel_bias_std: Vector3<T>,
    /// Sensor noise densities used for the process noise.
    pub noise: NoiseSpec<T>,
    pub integrator: Integrator,
}

/// Navigation solution carried by a filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Navigation<T: Real> {
    Transformed(TransformedNavState<T>),
    Classic(NavState<T>),
}

impl<T: Real> Navigation<T> {
    pub fn new(definition: ErrorDefinition, nav: &NavState<T>, omega_ie: T) -> Self {
        if definition.is_transformed() {
            Navigation::Transformed(nav.to_transformed(omega_ie))
        } else {
            Navigation::Classic(*nav)
        }
    }

    pub fn to_classic(&self, omega_ie: T) -> NavState<T> {
        match self {
            Navigation::Transformed(s) => s.to_classic(omega_ie),
            Navigation::Classic(s) => *s,
        }
    }

    pub fn att(&self) -> Rotation<T> {
        match self {
            Navigation::Transformed(s) => s.att,
            Navigation::Classic(s) => s.att,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState<T: Real> {
    pub nav: Navigation<T>,
    /// Error-state mean. The navigation part is zero right after feedback.
    pub mean: Vector15<T>,
    pub p: Matrix15<T>,
    pub t: T,
}

impl<T: Real> FilterState<T> {
    pub fn bias_estimate(&self) -> (Vector3<T>, Vector3<T>) {
        (self.mean.fixed_rows::<3>(9).into_owned(), self.mean.fixed_rows::<3>(12).into_owned())
    }
}

/// Corrections smaller than this (rad, m/s, m) are compared in absolute
/// terms: ECEF positions carry about 1e-9 m of rounding.
pub const ROUNDTRIP_FLOOR: f64 = 1e-2;

/// Running record of the numerical health checks.
#[derive(Debug, Clone)]
pub struct Hygiene {
    /// Largest `|dx' - dx| / max(|dx|, ROUNDTRIP_FLOOR)` where `dx'` is the
    /// error definition evaluated between the states before and after
    /// feedback.
    pub max_roundtrip_residual: f64,
    /// Smallest `min eig(P) / trace(P)` seen.
    pub min_eigen_ratio: f64,
    /// Largest `|P - P^T|` seen.
    pub max_asymmetry: f64,
    pub covariance_checks: usize,
    pub updates: usize,
    imu: DefaultHasher,
}

impl Default for Hygiene {
    fn default() -> Self {
        Self {
            max_roundtrip_residual: 0.0,
            min_eigen_ratio: f64::INFINITY,
            max_asymmetry: 0.0,
            covariance_checks: 0,
            updates: 0,
            imu: DefaultHasher::new(),
        }
    }
}

impl Hygiene {
    /// Hash of every IMU sample handed to the mechanization, in order.
    pub fn imu_digest(&self) -> u64 {
        self.imu.finish()
    }

    pub fn record_imu<T: Real>(&mut self, u: &ImuSample<T>) {
        hash_sample(&mut self.imu, u);
    }

    /// PSD tolerance: `min eig >= -1e-10 trace`.
    pub fn covariance_ok(&self) -> bool {
        self.min_eigen_ratio >= -1e-10 && self.max_asymmetry <= 1e-12
    }
}

/// Covariance for `[phi, dv, dp, gyro_bias, accel_bias]` under the filter's
/// error definition, built from NED standard deviations for the conventional
/// attitude/velocity/position error.
pub fn init_covariance<T: Real>(cfg: &FilterConfig<T>, nav0: &NavState<T>, omega_ie: T) -> Result<Matrix15<T>, FilterError> {
    let p_avp = conventional_covariance(cfg, nav0)?;
    let t = match cfg.definition {
        ErrorDefinition::So => SMatrix::<T, 9, 9>::identity(),
        ErrorDefinition::Right => t_right(&nav0.to_transformed(omega_ie), omega_ie),
        ErrorDefinition::Left => t_left(&nav0.att, omega_ie),
    };
    let mut p = Matrix15::zeros();
    p.fixed_view_mut::<9, 9>(0, 0).copy_from(&(t * p_avp * t.transpose()));
    let sq = |v: &Vector3<T>| Matrix3::from_diagonal(&v.component_mul(v));
    p.fixed_view_mut::<3, 3>(9, 9).copy_from(&sq(&cfg.init_gyro_bias_std));
    p.fixed_view_mut::<3, 3>(12, 12).copy_from(&sq(&cfg.init_accel_bias_std));
    Ok(symmetrize(&p))
}

/// Covariance of `[phi, dv, dp]` in ECEF for the conventional error.
fn conventional_covariance<T: Real>(cfg: &FilterConfig<T>, nav0: &NavState<T>) -> Result<SMatrix<T, 9, 9>, FilterError> {
    // Latitude/longitude only set the local axes here, so a spherical
    // approximation of the position is enough.
    let p = nav0.pos;
    let lat = p.z.atan2((p.x * p.x + p.y * p.y).sqrt());
    let lon = p.y.atan2(p.x);
    let c_ne = ecef_to_ned(lat, lon).inverse();
    let sq = |v: &Vector3<T>| Matrix3::from_diagonal(&v.component_mul(v));
    let s = &cfg.init_attitude_std;
    // Roll is about north, pitch about east, yaw about down.
    let att = sq(&Vector3::new(s.y, s.x, s.z));
    let mut p = SMatrix::<T, 9, 9>::zeros();
    p.fixed_view_mut::<3, 3>(0, 0).copy_from(&(c_ne * att * c_ne.transpose()));
    p.fixed_view_mut::<3, 3>(3, 3).copy_from(&(c_ne * sq(&cfg.init_vel_std) * c_ne.transpose()));
    p.fixed_view_mut::<3, 3>(6, 6).copy_from(&(c_ne * sq(&cfg.init_pos_std) * c_ne.transpose()));
    Ok(p)
}

/// Map from the conventional error to the right error.
pub fn t_right<T: Real>(nav0: &TransformedNavState<T>, omega_ie: T) -> SMatrix<T, 9, 9> {
    let w = skew(&Vector3::new(T::zero(), T::zero(), omega_ie));
    let i = Matrix3::identity();
    let mut t = SMatrix::<T, 9, 9>::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&i);
    t.fixed_view_mut::<3, 3>(3, 0).copy_from(&skew(&nav0.tvel));
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&-i);
    t.fixed_view_mut::<3, 3>(3, 6).copy_from(&-w);
    t.fixed_view_mut::<3, 3>(6, 0).copy_from(&skew(&nav0.pos));
    t.fixed_view_mut::<3, 3>(6, 6).copy_from(&-i);
    t
}

/// Map from the conventional error to the left error. The left attitude error
/// lives in the body frame, hence the `C^T` in the first block.
pub fn t_left<T: Real>(att0: &Rotation<T>, omega_ie: T) -> SMatrix<T, 9, 9> {
    let w = skew(&Vector3::new(T::zero(), T::zero(), omega_ie));
    let ct = att0.matrix().transpose();
    let mut t = SMatrix::<T, 9, 9>::zeros();
    t.fixed_view_mut::<3, 3>(0, 0).copy_from(&ct);
    t.fixed_view_mut::<3, 3>(3, 3).copy_from(&-ct);
    t.fixed_view_mut::<3, 3>(3, 6).copy_from(&-(ct * w));
    t.fixed_view_mut::<3, 3>(6, 6).copy_from(&-ct);
    t
}

fn symmetrize<T: Real, const N: usize>(p: &SMatrix<T, N, N>) -> SMatrix<T, N, N> {
    (p + p.transpose()) * T::lit(0.5)
}

/// `Phi = I + F dt + (F dt)^2 / 2`.
pub fn transition<T: Real>(f: &Matrix15<T>, dt: T) -> Matrix15<T> {
    let fd = f * dt;
    Matrix15::identity() + fd + fd * fd * T::lit(0.5)
}

/// `Q_d = G Q_c G^T dt`.
pub fn discrete_noise<T: Real>(model: &ProcessModel<T>, noise: &NoiseSpec<T>, dt: T) -> Matrix15<T> {
    model.g * noise.continuous_noise() * model.g.transpose() * dt
}

/// Kalman update of `(mean, p)`; returns the posterior error estimate.
pub fn kalman_update<T: Real, const M: usize>(
    mean: &Vector15<T>,
    p: &Matrix15<T>,
    obs: &Observation<T, M>,
) -> Result<(Vector15<T>, Matrix15<T>), FilterError> {
    let ht = obs.h.transpose();
    let s = symmetrize(&(obs.h * p * ht + obs.r));
    let chol = s.cholesky().ok_or(FilterError::SingularInnovation)?;
    // K = P H^T S^-1, solved as S K^T = H P.
    let k: SMatrix<T, 15, M> = chol.solve(&(obs.h * p)).transpose();
    let innovation = obs.z - obs.h * mean;
    let x = mean + k * innovation;
    let ikh = Matrix15::identity() - k * obs.h;
    let p = ikh * p * ikh.transpose() + k * obs.r * k.transpose();
    Ok((x, symmetrize(&p)))
}

/// The rotation vector of `exp(phi)` with angle at most pi.
pub fn principal_rotation_vector<T: Real>(phi: &Vector3<T>) -> Vector3<T> {
    let n = phi.norm();
    let pi = T::lit(std::f64::consts::PI);
    if n <= pi {
        return *phi;
    }
    let mut a = n % (pi + pi);
    if a > pi {
        a -= pi + pi;
    }
    phi * (a / n)
}

/// Applies the navigation part of `dx` to `nav`.
pub fn feedback<T: Real>(nav: &Navigation<T>, dx: &ErrorState15<T>) -> Result<Navigation<T>, FilterError> {
    let expected = match nav {
        Navigation::Classic(_) => ErrorDefinition::So,
        Navigation::Transformed(_) if dx.definition == ErrorDefinition::So => ErrorDefinition::Right,
        Navigation::Transformed(_) => dx.definition,
    };
    if expected != dx.definition {
        return Err(FilterError::DefinitionMismatch { expected, got: dx.definition });
    }
    Ok(match (nav, dx.definition) {
        (Navigation::Transformed(s), ErrorDefinition::Right) => Navigation::Transformed(TransformedNavState::new(
            so3_exp(&dx.phi) * s.att,
            s.tvel + dx.dv - s.tvel.cross(&dx.phi),
            s.pos + dx.dp - s.pos.cross(&dx.phi),
        )),
        (Navigation::Transformed(s), ErrorDefinition::Left) => Navigation::Transformed(TransformedNavState::new(
            s.att * so3_exp(&dx.phi),
            s.att * dx.dv + s.tvel,
            s.att * dx.dp + s.pos,
        )),
        (Navigation::Classic(s), _) => {
            Navigation::Classic(NavState::new(so3_exp(&dx.phi) * s.att, s.vel - dx.dv, s.pos - dx.dp))
        }
        _ => unreachable!("definition checked above"),
    })
}

/// The error definition evaluated with `truth` and `est`, linearized in the
/// same way as the feedback so that the two are exact inverses.
pub fn linearized_error<T: Real>(
    definition: ErrorDefinition,
    truth: &Navigation<T>,
    est: &Navigation<T>,
) -> Result<Vector9<T>, FilterError> {
    Ok(match (definition, truth, est) {
        (ErrorDefinition::Right, Navigation::Transformed(a), Navigation::Transformed(b)) => {
            linearized_right_error(a, b)?
        }
        (ErrorDefinition::Left, Navigation::Transformed(a), Navigation::Transformed(b)) => {
            linearized_left_error(a, b)?
        }
        (ErrorDefinition::So, Navigation::Classic(a), Navigation::Classic(b)) => so_error_vector(a, b)?,
        (d, _, _) => {
            return Err(FilterError::DefinitionMismatch { expected: d, got: d });
        }
    })
}

/// One filter run.
#[derive(Debug, Clone)]
pub struct Filter<T: Real, G: GravityField<T>> {
    pub cfg: FilterConfig<T>,
    pub state: FilterState<T>,
    pub hygiene: Hygiene,
    field: G,
}

impl<T: Real, G: GravityField<T>> Filter<T, G> {
    /// Starts from the estimated classic state `nav0` at time `t0`.
    pub fn new(cfg: FilterConfig<T>, nav0: &NavState<T>, t0: T, field: G) -> Result<Self, FilterError> {
        let omega = field.earth_rate();
        let p = init_covariance(&cfg, nav0, omega)?;
        let state = FilterState { nav: Navigation::new(cfg.definition, nav0, omega), mean: Vector15::zeros(), p, t: t0 };
        let mut f = Self { cfg, state, hygiene: Hygiene::default(), field };
        f.check_covariance();
        Ok(f)
    }

    pub fn definition(&self) -> ErrorDefinition {
        self.cfg.definition
    }

    pub fn field(&self) -> &G {
        &self.field
    }

    /// Current estimate in the classic form.
    pub fn nav(&self) -> NavState<T> {
        self.state.nav.to_classic(self.field.earth_rate())
    }

    pub fn process_model(&self, u: &ImuSample<T>) -> Result<ProcessModel<T>, FilterError> {
        let omega = self.field.earth_rate();
        Ok(match &self.state.nav {
            Navigation::Transformed(s) => match self.cfg.definition {
                ErrorDefinition::Left => f_left(u),
                _ => f_right(s, &self.field)?,
            },
            Navigation::Classic(s) => f_so(s, u, omega),
        })
    }

    /// Mechanizes one IMU sample and propagates the error mean and covariance.
    pub fn propagate(&mut self, u: &ImuSample<T>) -> Result<(), FilterError> {
        let model = self.process_model(u)?;
        let phi = transition(&model.f, u.dt);
        let qd = discrete_noise(&model, &self.cfg.noise, u.dt);

        self.hygiene.record_imu(u);
        self.state.nav = match &self.state.nav {
            Navigation::Transformed(s) => Navigation::Transformed(propagate(s, u, &self.field, self.cfg.integrator)?),
            Navigation::Classic(s) => Navigation::Classic(propagate_classic(s, u, &self.field, self.cfg.integrator)?),
        };
        self.state.mean = phi * self.state.mean;
        self.state.p = symmetrize(&(phi * self.state.p * phi.transpose() + qd));
        self.state.t = u.t + u.dt;
        Ok(())
    }

    /// Kalman update followed by feedback and reset of the navigation error.
    pub fn correct<const M: usize>(&mut self, obs: &Observation<T, M>) -> Result<ErrorState15<T>, FilterError> {
        let (x, p) = kalman_update(&self.state.mean, &self.state.p, obs)?;
        let mut dx = ErrorState15::from_vector(self.cfg.definition, &x);
        dx.phi = principal_rotation_vector(&dx.phi);
        let before = self.state.nav;
        let after = feedback(&before, &dx)?;

        let back = linearized_error(self.cfg.definition, &after, &before)?;
        let scale = dx.nav_vector().norm().max(T::lit(ROUNDTRIP_FLOOR));
        let r = ((back - dx.nav_vector()).norm() / scale).as_f64();
        self.hygiene.max_roundtrip_residual = self.hygiene.max_roundtrip_residual.max(r);

        self.state.nav = after;
        self.state.mean = x;
        self.state.mean.fixed_rows_mut::<9>(0).fill(T::zero());
        self.state.p = p;
        self.hygiene.updates += 1;
        self.check_covariance();
        Ok(dx)
    }

    /// GPS velocity/position update (ground velocity and position in ECEF).
    pub fn update_gps(
        &mut self,
        v_gps: &Vector3<T>,
        p_gps: &Vector3<T>,
        r_v: &Matrix3<T>,
        r_p: &Matrix3<T>,
    ) -> Result<ErrorState15<T>, FilterError> {
        let omega = self.field.earth_rate();
        match self.state.nav {
            Navigation::Transformed(s) => {
                let y = gps_transformed_velocity(v_gps, p_gps, omega);
                let r_y = gps_transformed_velocity_cov(r_v, r_p, omega);
                let obs = match self.cfg.definition {
                    ErrorDefinition::Left => h_gps_left(&s, &y, &r_y),
                    _ => h_gps_right(&s, &y, &r_y),
                };
                self.correct(&obs)
            }
            Navigation::Classic(s) => self.correct(&h_gps_so(&s, v_gps, p_gps, r_v, r_p)),
        }
    }

    /// Odometer update with body-frame velocity `v_body`.
    pub fn update_odometer(&mut self, v_body: &Vector3<T>, r_body: &Matrix3<T>) -> Result<ErrorState15<T>, FilterError> {
        let omega = self.field.earth_rate();
        match self.state.nav {
            Navigation::Transformed(s) => {
                let obs = match self.cfg.definition {
                    ErrorDefinition::Left => h_odo_left(&s, v_body, r_body, omega),
                    _ => h_odo_right(&s, v_body, r_body, omega),
                };
                self.correct(&obs)
            }
            Navigation::Classic(s) => self.correct(&h_odo_so(&s, v_body, r_body)),
        }
    }

    /// Records symmetry and the smallest eigenvalue ratio of `P`.
    pub fn check_covariance(&mut self) {
        let p = &self.state.p;
        let asym = (p - p.transpose()).amax().as_f64();
        let trace = p.trace();
        let min_eig = p.symmetric_eigenvalues().min();
        let ratio = if trace > T::zero() { (min_eig / trace).as_f64() } else { 0.0 };
        let h = &mut self.hygiene;
        h.max_asymmetry = h.max_asymmetry.max(asym);
        h.min_eigen_ratio = h.min_eigen_ratio.min(ratio);
        h.covariance_checks += 1;
    }
}

fn hash_sample<T: Real>(h: &mut DefaultHasher, u: &ImuSample<T>) {
    let bits = |x: T| x.as_f64().to_bits();
    bits(u.t).hash(h);
    bits(u.dt).hash(h);
    for i in 0..3 {
        bits(u.gyro[i]).hash(h);
        bits(u.accel[i]).hash(h);
    }
}

/// Helper for building diagonal measurement covariances from stds.
pub fn diag_cov<T: Real>(std: &Vector3<T>) -> Matrix3<T> {
    Matrix3::from_diagonal(&std.component_mul(std))
}

/// Splits a 15-vector into its navigation part.
pub fn nav_part<T: Real>(x: &Vector15<T>) -> SVector<T, 9> {
    x.fixed_rows::<9>(0).into_owned()
}
