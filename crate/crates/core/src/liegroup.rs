//! SO(3) and SE2(3) group operations.
//!
//! An [`ExtendedPose`] bundles a rotation with two translation-like columns
//! (velocity and position) and embeds in 5x5 matrices as
//!
//! ```text
//! | C  v  p |
//! | 0  1  0 |
//! | 0  0  1 |
//! ```
//!
//! Tangent vectors ([`Twist`]) are ordered `[phi, nu, rho]` (rotation,
//! velocity, position). Exponential and logarithm maps are closed form and
//! switch to Taylor expansions below [`SMALL_ANGLE`].

use nalgebra::{Matrix3, Matrix5, SVector, Vector3};
use thiserror::Error;

use crate::scalar::Real;

/// Direction cosine matrix.
pub type Rotation<T> = nalgebra::Rotation3<T>;

/// Angle below which series expansions replace closed forms.
pub const SMALL_ANGLE: f64 = 1e-6;

/// Distance from pi inside which the rotation axis sign is ambiguous.
pub const NEAR_PI: f64 = 1e-6;

/// Orthogonality defect above which rotations are re-projected onto SO(3).
pub const REORTHONORMALIZE_DEFECT: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LieError {
    #[error("rotation angle {angle} rad is within {NEAR_PI} of pi; axis sign is ambiguous")]
    NearPi { angle: f64 },
    #[error("rotation angle {angle} rad is outside the domain of the inverse left Jacobian")]
    JacobianDomain { angle: f64 },
}

/// Cross-product matrix: `skew(v) * w == v.cross(&w)`.
#[inline]
pub fn skew<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    let z = T::zero();
    Matrix3::new(z, -v.z, v.y, v.z, z, -v.x, -v.y, v.x, z)
}

/// Inverse of [`skew`], reading the antisymmetric part of `m`.
#[inline]
pub fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    let half = T::lit(0.5);
    Vector3::new(
        (m[(2, 1)] - m[(1, 2)]) * half,
        (m[(0, 2)] - m[(2, 0)]) * half,
        (m[(1, 0)] - m[(0, 1)]) * half,
    )
}

/// Rodrigues formula.
pub fn so3_exp<T: Real>(phi: &Vector3<T>) -> Rotation<T> {
    let angle = phi.norm();
    let k = skew(phi);
    let m = if angle < T::lit(SMALL_ANGLE) {
        Matrix3::identity() + k + k * k * T::lit(0.5)
    } else {
        let a = phi / angle;
        let (s, c) = angle.sin_cos();
        Matrix3::identity() * c + a * a.transpose() * (T::one() - c) + skew(&a) * s
    };
    Rotation::from_matrix_unchecked(m)
}

/// Result of the SO(3) logarithm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RotationLog<T: Real> {
    Regular(Vector3<T>),
    /// The angle is within [`NEAR_PI`] of pi. The axis was extracted from the
    /// symmetric part; its sign is taken from the antisymmetric part when that
    /// is resolvable, otherwise the largest-magnitude component is made
    /// nonnegative.
    NearPi(Vector3<T>),
}

impl<T: Real> RotationLog<T> {
    pub fn vector(self) -> Vector3<T> {
        match self {
            RotationLog::Regular(v) | RotationLog::NearPi(v) => v,
        }
    }

    pub fn is_near_pi(&self) -> bool {
        matches!(self, RotationLog::NearPi(_))
    }

    /// Rejects the ambiguous case.
    pub fn regular(self) -> Result<Vector3<T>, LieError> {
        match self {
            RotationLog::Regular(v) => Ok(v),
            RotationLog::NearPi(v) => Err(LieError::NearPi {
                angle: v.norm().as_f64(),
            }),
        }
    }
}

/// Rotation vector of `r`.
pub fn so3_log<T: Real>(r: &Rotation<T>) -> RotationLog<T> {
    let m = r.matrix();
    let w = vee(m); // sin(angle) * axis
    let s = w.norm();
    let c = ((m.trace() - T::one()) * T::lit(0.5)).clamp(-T::one(), T::one());
    let angle = s.atan2(c);

    if angle < T::lit(SMALL_ANGLE) {
        // angle / sin(angle) ~ 1 + angle^2 / 6
        return RotationLog::Regular(w * (T::one() + angle * angle / T::lit(6.0)));
    }
    if angle < T::lit(2.5) {
        return RotationLog::Regular(w * (angle / s));
    }

    // Large angles: the axis is better conditioned in the symmetric part,
    // (R + R^T)/2 = cI + (1 - c) a a^T.
    let sym = (m + m.transpose()) * T::lit(0.5) - Matrix3::identity() * c;
    let outer = sym / (T::one() - c);
    let mut k = 0;
    for i in 1..3 {
        if outer[(i, i)] > outer[(k, k)] {
            k = i;
        }
    }
    let mut axis: Vector3<T> = outer.column(k).into_owned();
    axis /= axis.norm();

    let alignment = axis.dot(&w);
    let resolvable = T::lit(64.0) * T::default_epsilon();
    if alignment.abs() > resolvable {
        if alignment < T::zero() {
            axis = -axis;
        }
    } else {
        let imax = axis.iamax();
        if axis[imax] < T::zero() {
            axis = -axis;
        }
    }
    let phi = axis * angle;
    if T::pi() - angle < T::lit(NEAR_PI) {
        RotationLog::NearPi(phi)
    } else {
        RotationLog::Regular(phi)
    }
}

/// Left Jacobian of SO(3).
pub fn left_jacobian<T: Real>(phi: &Vector3<T>) -> Matrix3<T> {
    let angle = phi.norm();
    let k = skew(phi);
    if angle < T::lit(SMALL_ANGLE) {
        return Matrix3::identity() + k * T::lit(0.5) + k * k / T::lit(6.0);
    }
    let a = phi / angle;
    let (s, c) = angle.sin_cos();
    let sinc = s / angle;
    Matrix3::identity() * sinc
        + a * a.transpose() * (T::one() - sinc)
        + skew(&a) * ((T::one() - c) / angle)
}

/// Inverse of [`left_jacobian`]; first order `I - skew(phi)/2` near zero.
pub fn left_jacobian_inv<T: Real>(phi: &Vector3<T>) -> Result<Matrix3<T>, LieError> {
    let angle = phi.norm();
    if angle >= T::two_pi() - T::lit(1e-3) {
        return Err(LieError::JacobianDomain {
            angle: angle.as_f64(),
        });
    }
    let k = skew(phi);
    if angle < T::lit(SMALL_ANGLE) {
        return Ok(Matrix3::identity() - k * T::lit(0.5));
    }
    let a = phi / angle;
    let half = angle * T::lit(0.5);
    let hc = half / half.tan();
    Ok(Matrix3::identity() * hc + a * a.transpose() * (T::one() - hc) - skew(&a) * half)
}

/// Element of SE2(3).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtendedPose<T: Real> {
    pub rot: Rotation<T>,
    pub vel: Vector3<T>,
    pub pos: Vector3<T>,
}

impl<T: Real> ExtendedPose<T> {
    pub fn new(rot: Rotation<T>, vel: Vector3<T>, pos: Vector3<T>) -> Self {
        Self { rot, vel, pos }
    }

    pub fn identity() -> Self {
        Self::new(Rotation::identity(), Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_matrix(&self) -> Matrix5<T> {
        let mut m = Matrix5::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(self.rot.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.vel);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.pos);
        m
    }

    /// Reads the rotation and the two columns; the bottom rows are ignored.
    pub fn from_matrix(m: &Matrix5<T>) -> Self {
        Self {
            rot: Rotation::from_matrix_unchecked(m.fixed_view::<3, 3>(0, 0).into_owned()),
            vel: m.fixed_view::<3, 1>(0, 3).into_owned(),
            pos: m.fixed_view::<3, 1>(0, 4).into_owned(),
        }
    }

    pub fn inverse(&self) -> Self {
        se23_inverse(self)
    }

    pub fn compose(&self, other: &Self) -> Self {
        compose(self, other)
    }
}

/// Tangent vector of SE2(3): `[phi, nu, rho]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Twist<T: Real> {
    pub phi: Vector3<T>,
    pub nu: Vector3<T>,
    pub rho: Vector3<T>,
}

impl<T: Real> Twist<T> {
    pub fn new(phi: Vector3<T>, nu: Vector3<T>, rho: Vector3<T>) -> Self {
        Self { phi, nu, rho }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros(), Vector3::zeros())
    }

    pub fn to_vector(&self) -> SVector<T, 9> {
        let mut v = SVector::<T, 9>::zeros();
        v.fixed_rows_mut::<3>(0).copy_from(&self.phi);
        v.fixed_rows_mut::<3>(3).copy_from(&self.nu);
        v.fixed_rows_mut::<3>(6).copy_from(&self.rho);
        v
    }

    pub fn from_vector(v: &SVector<T, 9>) -> Self {
        Self::new(
            v.fixed_rows::<3>(0).into_owned(),
            v.fixed_rows::<3>(3).into_owned(),
            v.fixed_rows::<3>(6).into_owned(),
        )
    }

    /// The 5x5 Lie algebra matrix.
    pub fn hat(&self) -> Matrix5<T> {
        let mut m = Matrix5::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.phi));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.nu);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.rho);
        m
    }
}

pub fn se23_exp<T: Real>(z: &Twist<T>) -> ExtendedPose<T> {
    let jl = left_jacobian(&z.phi);
    ExtendedPose::new(so3_exp(&z.phi), jl * z.nu, jl * z.rho)
}

/// Logarithm of an extended pose; fails when the rotation angle is near pi.
pub fn se23_log<T: Real>(t: &ExtendedPose<T>) -> Result<Twist<T>, LieError> {
    let phi = so3_log(&t.rot).regular()?;
    let jinv = left_jacobian_inv(&phi)?;
    Ok(Twist::new(phi, jinv * t.vel, jinv * t.pos))
}

pub fn se23_inverse<T: Real>(t: &ExtendedPose<T>) -> ExtendedPose<T> {
    let rt = t.rot.inverse();
    ExtendedPose::new(rt, -(rt * t.vel), -(rt * t.pos))
}

/// Group product `a * b`.
pub fn compose<T: Real>(a: &ExtendedPose<T>, b: &ExtendedPose<T>) -> ExtendedPose<T> {
    ExtendedPose::new(
        a.rot * b.rot,
        a.rot * b.vel + a.vel,
        a.rot * b.pos + a.pos,
    )
}

/// Right-invariant error `truth * estimate^-1`.
pub fn right_error<T: Real>(truth: &ExtendedPose<T>, estimate: &ExtendedPose<T>) -> ExtendedPose<T> {
    let dc = truth.rot * estimate.rot.inverse();
    ExtendedPose::new(dc, truth.vel - dc * estimate.vel, truth.pos - dc * estimate.pos)
}

/// Left-invariant error `estimate^-1 * truth`.
pub fn left_error<T: Real>(truth: &ExtendedPose<T>, estimate: &ExtendedPose<T>) -> ExtendedPose<T> {
    let ct = estimate.rot.inverse();
    ExtendedPose::new(
        ct * truth.rot,
        ct * (truth.vel - estimate.vel),
        ct * (truth.pos - estimate.pos),
    )
}

/// Frobenius norm of `R R^T - I`.
pub fn orthogonality_defect<T: Real>(r: &Rotation<T>) -> T {
    let m = r.matrix();
    (m * m.transpose() - Matrix3::identity()).norm()
}

/// Closest rotation in the Frobenius sense (polar factor of the SVD).
pub fn orthonormalize<T: Real>(r: &Rotation<T>) -> Rotation<T> {
    let svd = r.matrix().svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut q = u * vt;
    if q.determinant() < T::zero() {
        // Reflection: flip the direction of the smallest singular value.
        let mut u = u;
        let imin = svd.singular_values.imin();
        u.column_mut(imin).neg_mut();
        q = u * vt;
    }
    Rotation::from_matrix_unchecked(q)
}

/// Re-projects onto SO(3) only when the defect exceeds
/// [`REORTHONORMALIZE_DEFECT`].
pub fn renormalize_if_needed<T: Real>(r: Rotation<T>) -> Rotation<T> {
    if orthogonality_defect(&r) > T::tol(REORTHONORMALIZE_DEFECT, 16.0) {
        orthonormalize(&r)
    } else {
        r
    }
}
