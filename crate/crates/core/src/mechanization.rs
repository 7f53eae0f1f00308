//! Strapdown mechanization in ECEF, in both the classic ground-velocity form
//! and the transformed form with `vbar = v + omega_ie x p`.
//!
//! One propagation step updates the attitude with the exact solution for a
//! constant body rate, then integrates the velocity/position pair, which is
//! linear apart from the forcing `C f + gbar`, with the trapezoidal rule. The
//! forcing is frozen at the step midpoint. Because the trapezoidal rule is
//! affine-covariant the classic and transformed steps map onto each other
//! exactly, and static equilibria are reproduced to rounding.

use nalgebra::{Matrix3, Matrix5, Matrix6, Vector3, Vector6};
use thiserror::Error;

use crate::earth::{EarthError, FixedGravitation, GravityField};
use crate::liegroup::{renormalize_if_needed, skew, so3_exp, ExtendedPose, Rotation};
use crate::scalar::Real;

/// Largest accepted propagation step, s.
pub const MAX_STEP: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MechanizationError {
    #[error("step {dt} s is outside [0, {MAX_STEP}]")]
    InvalidStep { dt: f64 },
    #[error(transparent)]
    Earth(#[from] EarthError),
    #[error("velocity/position step matrix is singular")]
    Singular,
}

/// Classic ECEF state with ground velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavState<T: Real> {
    /// `C_b^e`
    pub att: Rotation<T>,
    /// m/s
    pub vel: Vector3<T>,
    /// m
    pub pos: Vector3<T>,
}

/// ECEF state carrying the transformed velocity `v + omega_ie x p`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransformedNavState<T: Real> {
    pub att: Rotation<T>,
    /// m/s
    pub tvel: Vector3<T>,
    pub pos: Vector3<T>,
}

/// One IMU sample, held constant over `[t, t + dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample<T: Real> {
    pub t: T,
    /// rad/s
    pub gyro: Vector3<T>,
    /// m/s^2
    pub accel: Vector3<T>,
    pub dt: T,
}

impl<T: Real> ImuSample<T> {
    pub fn new(t: T, gyro: Vector3<T>, accel: Vector3<T>, dt: T) -> Self {
        Self { t, gyro, accel, dt }
    }
}

/// Time derivative of a navigation state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavRate<T: Real> {
    pub att: Matrix3<T>,
    pub vel: Vector3<T>,
    pub pos: Vector3<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Exponential attitude and trapezoidal velocity/position.
    #[default]
    Midpoint,
    /// Exact attitude with classical Runge-Kutta on velocity and position.
    Rk4,
}

impl<T: Real> NavState<T> {
    pub fn new(att: Rotation<T>, vel: Vector3<T>, pos: Vector3<T>) -> Self {
        Self { att, vel, pos }
    }

    pub fn to_transformed(&self, omega_ie: T) -> TransformedNavState<T> {
        TransformedNavState::new(self.att, self.vel + earth_rate_vec(omega_ie).cross(&self.pos), self.pos)
    }

    /// Non-transformed group element `(C, v, p)`.
    pub fn as_pose(&self) -> ExtendedPose<T> {
        ExtendedPose::new(self.att, self.vel, self.pos)
    }
}

impl<T: Real> TransformedNavState<T> {
    pub fn new(att: Rotation<T>, tvel: Vector3<T>, pos: Vector3<T>) -> Self {
        Self { att, tvel, pos }
    }

    pub fn from_pose(x: &ExtendedPose<T>) -> Self {
        Self::new(x.rot, x.vel, x.pos)
    }

    pub fn to_classic(&self, omega_ie: T) -> NavState<T> {
        NavState::new(self.att, self.ground_velocity(omega_ie), self.pos)
    }

    pub fn ground_velocity(&self, omega_ie: T) -> Vector3<T> {
        self.tvel - earth_rate_vec(omega_ie).cross(&self.pos)
    }

    pub fn as_pose(&self) -> ExtendedPose<T> {
        ExtendedPose::new(self.att, self.tvel, self.pos)
    }
}

pub(crate) fn earth_rate_vec<T: Real>(omega_ie: T) -> Vector3<T> {
    Vector3::new(T::zero(), T::zero(), omega_ie)
}

pub fn to_transformed<T: Real, G: GravityField<T>>(s: &NavState<T>, field: &G) -> TransformedNavState<T> {
    s.to_transformed(field.earth_rate())
}

pub fn from_transformed<T: Real, G: GravityField<T>>(s: &TransformedNavState<T>, field: &G) -> NavState<T> {
    s.to_classic(field.earth_rate())
}

pub fn classic_derivative<T: Real, G: GravityField<T>>(
    s: &NavState<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<NavRate<T>, EarthError> {
    let w = skew(&field.omega_ie_vec());
    let c = s.att.matrix();
    Ok(NavRate {
        att: c * skew(&u.gyro) - w * c,
        vel: c * u.accel - w * s.vel * T::lit(2.0) - w * w * s.pos + field.gravitation(&s.pos)?,
        pos: s.vel,
    })
}

pub fn transformed_derivative<T: Real, G: GravityField<T>>(
    s: &TransformedNavState<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<NavRate<T>, EarthError> {
    let w = skew(&field.omega_ie_vec());
    let c = s.att.matrix();
    Ok(NavRate {
        att: c * skew(&u.gyro) - w * c,
        vel: c * u.accel - w * s.tvel + field.gravitation(&s.pos)?,
        pos: s.tvel - w * s.pos,
    })
}

fn check_step<T: Real>(dt: T) -> Result<(), MechanizationError> {
    if dt >= T::zero() && dt <= T::lit(MAX_STEP) {
        Ok(())
    } else {
        Err(MechanizationError::InvalidStep { dt: dt.as_f64() })
    }
}

/// Attitude after `tau` seconds of constant body rate.
pub(crate) fn attitude_at<T: Real>(att: &Rotation<T>, gyro: &Vector3<T>, omega_ie: T, tau: T) -> Rotation<T> {
    so3_exp(&earth_rate_vec(-omega_ie * tau)) * att * so3_exp(&(gyro * tau))
}

/// Forcing `C f + gbar` at the step midpoint, with the midpoint position
/// predicted from the ground velocity at the start of the step.
fn midpoint_forcing<T: Real, G: GravityField<T>>(
    att: &Rotation<T>,
    ground_vel: &Vector3<T>,
    pos: &Vector3<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<Vector3<T>, EarthError> {
    let half = u.dt * T::lit(0.5);
    let c_mid = attitude_at(att, &u.gyro, field.earth_rate(), half);
    let p_mid = pos + ground_vel * half;
    Ok(c_mid * u.accel + field.gravitation(&p_mid)?)
}

/// One strapdown step of the transformed mechanization.
pub fn propagate<T: Real, G: GravityField<T>>(
    s: &TransformedNavState<T>,
    u: &ImuSample<T>,
    field: &G,
    integrator: Integrator,
) -> Result<TransformedNavState<T>, MechanizationError> {
    check_step(u.dt)?;
    match integrator {
        Integrator::Midpoint => propagate_midpoint(s, u, field),
        Integrator::Rk4 => propagate_rk4(s, u, field),
    }
}

fn propagate_midpoint<T: Real, G: GravityField<T>>(
    s: &TransformedNavState<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<TransformedNavState<T>, MechanizationError> {
    let dt = u.dt;
    let wie = field.earth_rate();
    let b = midpoint_forcing(&s.att, &s.ground_velocity(wie), &s.pos, u, field)?;
    let half = skew(&earth_rate_vec(wie)) * (dt * T::lit(0.5));
    let lhs = (Matrix3::identity() + half).lu();
    let rhs = Matrix3::identity() - half;
    let tvel = lhs.solve(&(rhs * s.tvel + b * dt)).ok_or(MechanizationError::Singular)?;
    let pos = lhs
        .solve(&(rhs * s.pos + (s.tvel + tvel) * (dt * T::lit(0.5))))
        .ok_or(MechanizationError::Singular)?;
    let att = renormalize_if_needed(attitude_at(&s.att, &u.gyro, wie, dt));
    Ok(TransformedNavState::new(att, tvel, pos))
}

fn propagate_rk4<T: Real, G: GravityField<T>>(
    s: &TransformedNavState<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<TransformedNavState<T>, MechanizationError> {
    let dt = u.dt;
    let wie = field.earth_rate();
    let w = skew(&earth_rate_vec(wie));
    let rate = |tau: T, v: &Vector3<T>, p: &Vector3<T>| -> Result<(Vector3<T>, Vector3<T>), EarthError> {
        let c = attitude_at(&s.att, &u.gyro, wie, tau);
        Ok((c * u.accel - w * v + field.gravitation(p)?, v - w * p))
    };
    let half = dt * T::lit(0.5);
    let (v0, p0) = (s.tvel, s.pos);
    let (k1v, k1p) = rate(T::zero(), &v0, &p0)?;
    let (k2v, k2p) = rate(half, &(v0 + k1v * half), &(p0 + k1p * half))?;
    let (k3v, k3p) = rate(half, &(v0 + k2v * half), &(p0 + k2p * half))?;
    let (k4v, k4p) = rate(dt, &(v0 + k3v * dt), &(p0 + k3p * dt))?;
    let sixth = dt / T::lit(6.0);
    let two = T::lit(2.0);
    let tvel = v0 + (k1v + k2v * two + k3v * two + k4v) * sixth;
    let pos = p0 + (k1p + k2p * two + k3p * two + k4p) * sixth;
    let att = renormalize_if_needed(attitude_at(&s.att, &u.gyro, wie, dt));
    Ok(TransformedNavState::new(att, tvel, pos))
}

/// One strapdown step of the classic mechanization.
pub fn propagate_classic<T: Real, G: GravityField<T>>(
    s: &NavState<T>,
    u: &ImuSample<T>,
    field: &G,
    integrator: Integrator,
) -> Result<NavState<T>, MechanizationError> {
    check_step(u.dt)?;
    match integrator {
        Integrator::Midpoint => propagate_classic_midpoint(s, u, field),
        // The transformation is linear in (v, p), so RK4 commutes with it.
        Integrator::Rk4 => {
            let wie = field.earth_rate();
            Ok(propagate_rk4(&s.to_transformed(wie), u, field)?.to_classic(wie))
        }
    }
}

fn propagate_classic_midpoint<T: Real, G: GravityField<T>>(
    s: &NavState<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<NavState<T>, MechanizationError> {
    let dt = u.dt;
    let wie = field.earth_rate();
    let b = midpoint_forcing(&s.att, &s.vel, &s.pos, u, field)?;
    let w = skew(&earth_rate_vec(wie));
    let mut a = Matrix6::zeros();
    a.fixed_view_mut::<3, 3>(0, 0).copy_from(&(w * -T::lit(2.0)));
    a.fixed_view_mut::<3, 3>(0, 3).copy_from(&-(w * w));
    a.fixed_view_mut::<3, 3>(3, 0).copy_from(&Matrix3::identity());
    let half = a * (dt * T::lit(0.5));
    let x = Vector6::new(s.vel.x, s.vel.y, s.vel.z, s.pos.x, s.pos.y, s.pos.z);
    let mut forcing = Vector6::zeros();
    forcing.fixed_rows_mut::<3>(0).copy_from(&(b * dt));
    let next = (Matrix6::identity() - half)
        .lu()
        .solve(&((Matrix6::identity() + half) * x + forcing))
        .ok_or(MechanizationError::Singular)?;
    let att = renormalize_if_needed(attitude_at(&s.att, &u.gyro, wie, dt));
    Ok(NavState::new(
        att,
        next.fixed_rows::<3>(0).into_owned(),
        next.fixed_rows::<3>(3).into_owned(),
    ))
}

/// The 5x5 matrix `f(chi)` of the transformed dynamics on SE2(3).
pub fn group_dynamics<T: Real, G: GravityField<T>>(
    x: &ExtendedPose<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<Matrix5<T>, EarthError> {
    let d = transformed_derivative(&TransformedNavState::from_pose(x), u, field)?;
    Ok(embed_rate(&d))
}

/// The classic dynamics written on the non-transformed group `(C, v, p)`.
pub fn classic_group_dynamics<T: Real, G: GravityField<T>>(
    x: &ExtendedPose<T>,
    u: &ImuSample<T>,
    field: &G,
) -> Result<Matrix5<T>, EarthError> {
    let d = classic_derivative(&NavState::new(x.rot, x.vel, x.pos), u, field)?;
    Ok(embed_rate(&d))
}

fn embed_rate<T: Real>(d: &NavRate<T>) -> Matrix5<T> {
    let mut m = Matrix5::zeros();
    m.fixed_view_mut::<3, 3>(0, 0).copy_from(&d.att);
    m.fixed_view_mut::<3, 1>(0, 3).copy_from(&d.vel);
    m.fixed_view_mut::<3, 1>(0, 4).copy_from(&d.pos);
    m
}

fn affine_residual<T: Real>(
    x1: &ExtendedPose<T>,
    x2: &ExtendedPose<T>,
    f: impl Fn(&ExtendedPose<T>) -> Matrix5<T>,
) -> (T, T) {
    let (m1, m2) = (x1.to_matrix(), x2.to_matrix());
    let f12 = f(&x1.compose(x2));
    let rhs = f(x1) * m2 + m1 * f(x2) - m1 * f(&ExtendedPose::identity()) * m2;
    ((f12 - rhs).norm(), f12.norm())
}

/// Frobenius norm of `f(x1 x2) - [f(x1) x2 + x1 f(x2) - x1 f(I) x2]` for the
/// transformed dynamics, together with `|f(x1 x2)|`. The gravitation is held
/// fixed so that the identity can hold exactly.
pub fn group_affine_residual<T: Real>(
    x1: &ExtendedPose<T>,
    x2: &ExtendedPose<T>,
    u: &ImuSample<T>,
    field: &FixedGravitation<T>,
) -> (T, T) {
    affine_residual(x1, x2, |x| group_dynamics(x, u, field).expect("fixed gravitation is total"))
}

/// Same residual for the classic dynamics on the non-transformed group.
pub fn classic_group_affine_residual<T: Real>(
    x1: &ExtendedPose<T>,
    x2: &ExtendedPose<T>,
    u: &ImuSample<T>,
    field: &FixedGravitation<T>,
) -> (T, T) {
    affine_residual(x1, x2, |x| {
        classic_group_dynamics(x, u, field).expect("fixed gravitation is total")
    })
}
