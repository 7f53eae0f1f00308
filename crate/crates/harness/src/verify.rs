//! Model checks against independent numerical oracles: the group-affine
//! identity, log-linearity of the error propagation, exactness of the Lie
//! maps, and finite-difference linearizations of every F and H.

use std::fmt;
use std::time::{Duration, Instant};

use nalgebra::{Matrix3, Matrix5, SMatrix, SVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use se23nav::error_models::{
    f_left, f_right, f_so, gps_transformed_velocity, h_gps_left, h_gps_right, h_gps_so, h_odo_left, h_odo_right,
    h_odo_so, left_error_vector, right_error_vector, so_error_vector, Observation, ProcessModel, Vector15, Vector9,
};
use se23nav::filter::{feedback, Navigation};
use se23nav::liegroup::{left_jacobian, left_jacobian_inv, se23_exp, se23_log, so3_exp, so3_log, vee};
use se23nav::mechanization::{
    classic_derivative, classic_group_affine_residual, group_affine_residual, group_dynamics, propagate,
    propagate_classic,
};
use se23nav::{
    EarthModel, ErrorDefinition, ErrorState15, ExtendedPose, FixedGravitation, Geodetic, GravityField, ImuSample,
    Integrator, NavState, Twist,
};

/// Outcome of one suite.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub elapsed: Duration,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {} [{:.2} s]", self.name, self.detail, self.elapsed.as_secs_f64())
    }
}

const OMEGA_IE: f64 = 7.292_115e-5;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn uniform3(r: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| r.random_range(-scale..scale))
}

fn unit3(r: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = uniform3(r, 1.0);
        let n = v.norm();
        if n > 1e-3 && n <= 1.0 {
            return v / n;
        }
    }
}

fn random_rotation(r: &mut ChaCha8Rng) -> se23nav::Rotation<f64> {
    let angle = r.random_range(0.0..std::f64::consts::PI);
    so3_exp(&(unit3(r) * angle))
}

/// Random state near the Earth's surface moving at up to `speed` m/s.
fn random_nav(r: &mut ChaCha8Rng, earth: &EarthModel<f64>, speed: f64) -> NavState<f64> {
    let g = Geodetic::new(r.random_range(-1.4..1.4), r.random_range(-3.1..3.1), r.random_range(-100.0..3000.0));
    NavState::new(random_rotation(r), unit3(r) * r.random_range(0.0..speed), earth.geodetic_to_ecef(&g))
}

fn random_imu(r: &mut ChaCha8Rng) -> ImuSample<f64> {
    ImuSample::new(0.0, uniform3(r, 0.5), uniform3(r, 12.0), 0.01)
}

/// Transformed dynamics satisfy `f(ab) = f(a) b + a f(b) - a f(I) b`; the
/// classic dynamics on the same group do not.
pub fn group_affine(seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let (mut worst, mut classic_min, mut classic_max) = (0.0f64, f64::INFINITY, 0.0f64);
    for _ in 0..1000 {
        let field = FixedGravitation { omega_ie: OMEGA_IE, gbar: unit3(&mut r) * 9.8 };
        let pose = |r: &mut ChaCha8Rng| {
            ExtendedPose::new(random_rotation(r), unit3(r) * r.random_range(0.0..500.0), unit3(r) * r.random_range(6.35e6..6.4e6))
        };
        let (a, b) = (pose(&mut r), pose(&mut r));
        let u = random_imu(&mut r);
        let (res, scale) = group_affine_residual(&a, &b, &u, &field);
        worst = worst.max(res / scale);
        let (res, scale) = classic_group_affine_residual(&a, &b, &u, &field);
        classic_min = classic_min.min(res / scale);
        classic_max = classic_max.max(res / scale);
    }
    let elapsed = start.elapsed();
    Check {
        name: "group-affine identity",
        pass: worst < 1e-9 && classic_max > 1e-3 && elapsed < Duration::from_secs(1),
        detail: format!(
            "1000 pairs: transformed max rel residual {worst:.2e} (< 1e-9); classic max {classic_max:.2e} (> 1e-3), min {classic_min:.2e}"
        ),
        elapsed,
    }
}

/// Static, noise-free alignment: the nonlinear error after 60 s compared with
/// the initial error carried by `exp(F dt)`. Returns the blockwise relative
/// mismatch per definition.
pub fn log_linearity_mismatch(definition: ErrorDefinition, axis: usize) -> f64 {
    let earth = EarthModel::wgs84();
    let g0 = Geodetic::from_degrees(30.5, 114.3, 20.0);
    let p = earth.geodetic_to_ecef(&g0);
    // Gravitation frozen at the start so that F is exact in position.
    let field = FixedGravitation { omega_ie: earth.omega_ie, gbar: earth.gravitation(&p).expect("surface point") };
    let c_ne = earth.ecef_to_ned_rotation(&g0).inverse();
    let truth = NavState::new(c_ne * so3_exp(&Vector3::new(0.0, 0.0, 0.7)), Vector3::zeros(), p);
    let w = field.omega_ie_vec();
    // IMU that holds the truth at rest in the rotating frame.
    let gyro = truth.att.inverse() * w;
    let accel = truth.att.inverse() * (w.cross(&w.cross(&p)) - field.gbar);

    let mut tilt = Vector3::zeros();
    tilt[axis] = 30f64.to_radians();
    let est = NavState::new(c_ne * so3_exp(&tilt) * c_ne.inverse() * truth.att, truth.vel, truth.pos);

    let dt = 0.01;
    let steps = 6000;
    let u = |k: usize| ImuSample::new(k as f64 * dt, gyro, accel, dt);
    let error = |t: &NavState<f64>, e: &NavState<f64>| -> Vector9<f64> {
        match definition {
            ErrorDefinition::Right => right_error_vector(&t.to_transformed(field.omega_ie), &e.to_transformed(field.omega_ie)),
            ErrorDefinition::Left => left_error_vector(&t.to_transformed(field.omega_ie), &e.to_transformed(field.omega_ie)),
            ErrorDefinition::So => so_error_vector(t, e),
        }
        .expect("error stays below pi")
    };
    let mut xi = error(&truth, &est);
    let (mut t, mut e) = (truth, est);
    let (mut tt, mut et) = (truth.to_transformed(field.omega_ie), est.to_transformed(field.omega_ie));
    for k in 0..steps {
        let uk = u(k);
        let model = match definition {
            ErrorDefinition::Right => f_right(&et, &field).expect("fixed gravitation"),
            ErrorDefinition::Left => f_left(&uk),
            ErrorDefinition::So => f_so(&e, &uk, field.omega_ie),
        };
        xi = (model.nav_block() * dt).exp() * xi;
        if definition.is_transformed() {
            tt = propagate(&tt, &uk, &field, Integrator::Rk4).expect("valid step");
            et = propagate(&et, &uk, &field, Integrator::Rk4).expect("valid step");
        } else {
            t = propagate_classic(&t, &uk, &field, Integrator::Rk4).expect("valid step");
            e = propagate_classic(&e, &uk, &field, Integrator::Rk4).expect("valid step");
        }
    }
    let actual = if definition.is_transformed() {
        error(&tt.to_classic(field.omega_ie), &et.to_classic(field.omega_ie))
    } else {
        error(&t, &e)
    };
    blockwise_relative(&xi, &actual)
}

/// Largest per-block `|a - b| / |b|` over the three 3-vectors.
fn blockwise_relative(a: &Vector9<f64>, b: &Vector9<f64>) -> f64 {
    (0..3)
        .map(|i| {
            let (x, y) = (a.fixed_rows::<3>(3 * i), b.fixed_rows::<3>(3 * i));
            (x - y).norm() / y.norm().max(1e-12)
        })
        .fold(0.0, f64::max)
}

pub fn log_linearity() -> Check {
    let start = Instant::now();
    let mut worst = [0.0f64; 3];
    let mut so_min = f64::INFINITY;
    for axis in 0..3 {
        for (i, d) in ErrorDefinition::ALL.into_iter().enumerate() {
            let m = log_linearity_mismatch(d, axis);
            worst[i] = worst[i].max(m);
            if d == ErrorDefinition::So {
                so_min = so_min.min(m);
            }
        }
    }
    let elapsed = start.elapsed();
    Check {
        name: "log-linearity",
        pass: worst[0] < 1e-6 && worst[1] < 1e-6 && so_min > 1e-2 && elapsed < Duration::from_secs(5),
        detail: format!(
            "60 s static, 30 deg about each axis: left {:.2e}, right {:.2e} (< 1e-6); so min {so_min:.2e} (> 1e-2)",
            worst[0], worst[1]
        ),
        elapsed,
    }
}

/// Round trips of the exponential and logarithm maps.
pub fn lie_roundtrips(seed: u64) -> Check {
    let start = Instant::now();
    let mut r = rng(seed);
    let (mut so3, mut se23, mut jac) = (0.0f64, 0.0f64, 0.0f64);
    let max_angle = std::f64::consts::PI - 1e-3;
    for _ in 0..10_000 {
        let phi = unit3(&mut r) * r.random_range(0.0..max_angle);
        so3 = so3.max((so3_log(&so3_exp(&phi)).vector() - phi).norm());
        let z = Twist::new(phi, uniform3(&mut r, 100.0), uniform3(&mut r, 100.0));
        let back = se23_log(&se23_exp(&z)).map(|b| (b.to_vector() - z.to_vector()).norm() / z.to_vector().norm());
        se23 = se23.max(back.unwrap_or(f64::INFINITY));
        let jl = left_jacobian(&phi);
        let err = left_jacobian_inv(&phi).map_or(f64::INFINITY, |ji| (jl * ji - Matrix3::identity()).amax());
        jac = jac.max(err);
    }
    let elapsed = start.elapsed();
    Check {
        name: "Lie-layer exactness",
        pass: so3 < 1e-9 && se23 < 1e-9 && jac < 1e-10,
        detail: format!("10^4 samples: SO(3) {so3:.2e}, SE2(3) rel {se23:.2e} (< 1e-9); J J^-1 - I {jac:.2e} (< 1e-10)"),
        elapsed,
    }
}

fn vee5(m: &Matrix5<f64>) -> Vector9<f64> {
    let mut v = Vector9::zeros();
    v.fixed_rows_mut::<3>(0).copy_from(&vee(&m.fixed_view::<3, 3>(0, 0).into_owned()));
    v.fixed_rows_mut::<3>(3).copy_from(&m.fixed_view::<3, 1>(0, 3));
    v.fixed_rows_mut::<3>(6).copy_from(&m.fixed_view::<3, 1>(0, 4));
    v
}

/// Natural magnitude of each error-state block: 1 for angles and biases,
/// the transformed speed for velocity and the radius for position.
fn scales(nav: &NavState<f64>) -> [f64; 5] {
    let v = (nav.vel.norm() + OMEGA_IE * nav.pos.norm()).max(1.0);
    [1.0, v, nav.pos.norm().max(1.0), 1.0, 1.0]
}

/// Perturbation per coordinate: 1e-5 of its block scale, so that finite
/// differences of ECEF-sized quantities stay above their rounding.
fn steps(s: &[f64; 5]) -> Vector15<f64> {
    Vector15::from_fn(|i, _| 1e-5 * s[i / 3])
}

fn jacobian<const M: usize>(f: impl Fn(&Vector15<f64>) -> SVector<f64, M>, d: &Vector15<f64>) -> SMatrix<f64, M, 15> {
    let mut j = SMatrix::<f64, M, 15>::zeros();
    for i in 0..15 {
        let mut e = Vector15::zeros();
        e[i] = d[i];
        j.set_column(i, &((f(&e) - f(&(-e))) / (2.0 * d[i])));
    }
    j
}

/// Largest per-3x3-block relative difference after scaling rows and
/// columns to unit block magnitudes; blocks smaller than 1e-3 are compared
/// against 1e-3.
fn block_error<const M: usize>(
    analytic: &SMatrix<f64, M, 15>,
    numeric: &SMatrix<f64, M, 15>,
    rows: &[f64],
    cols: &[f64; 5],
) -> f64 {
    let mut worst = 0.0f64;
    for bi in 0..M / 3 {
        for bj in 0..5 {
            let k = cols[bj] / rows[bi];
            let a = analytic.fixed_view::<3, 3>(3 * bi, 3 * bj) * k;
            let n = numeric.fixed_view::<3, 3>(3 * bi, 3 * bj) * k;
            worst = worst.max((a - n).amax() / a.amax().max(1e-3));
        }
    }
    worst
}

/// Truth whose error against `est` is `x`, and the IMU it experiences.
fn truth_at(def: ErrorDefinition, est: &NavState<f64>, x: &Vector15<f64>) -> (NavState<f64>, Vector3<f64>, Vector3<f64>) {
    let nav = Navigation::new(def, est, OMEGA_IE);
    let t = feedback(&nav, &ErrorState15::from_vector(def, x)).expect("matching definition");
    (t.to_classic(OMEGA_IE), x.fixed_rows::<3>(9).into_owned(), x.fixed_rows::<3>(12).into_owned())
}

/// Time derivative of the error at `x` under the nonlinear dynamics, to
/// first order in `x`.
fn error_rate(
    def: ErrorDefinition,
    est: &NavState<f64>,
    u: &ImuSample<f64>,
    field: &FixedGravitation<f64>,
    x: &Vector15<f64>,
) -> Vector15<f64> {
    let (truth, bg, ba) = truth_at(def, est, x);
    let ut = ImuSample::new(u.t, u.gyro - bg, u.accel - ba, u.dt);
    let rate = match def {
        ErrorDefinition::So => {
            // This model treats plumb-bob gravity, centrifugal part included,
            // as constant; the truth sees the estimate's value.
            let w = field.omega_ie_vec();
            let gbar = field.gbar + w.cross(&w.cross(&(truth.pos - est.pos)));
            let truth_field = FixedGravitation { omega_ie: field.omega_ie, gbar };
            let dt = classic_derivative(&truth, &ut, &truth_field).expect("fixed gravitation");
            let de = classic_derivative(est, u, field).expect("fixed gravitation");
            let (c, ce) = (truth.att.matrix(), est.att.matrix());
            let eta = c * ce.transpose();
            let deta = dt.att * ce.transpose() + c * de.att.transpose();
            let mut v = Vector9::zeros();
            v.fixed_rows_mut::<3>(0).copy_from(&vee(&(deta * eta.transpose())));
            v.fixed_rows_mut::<3>(3).copy_from(&(de.vel - dt.vel));
            v.fixed_rows_mut::<3>(6).copy_from(&(de.pos - dt.pos));
            v
        }
        _ => {
            let a = truth.to_transformed(OMEGA_IE).as_pose();
            let b = est.to_transformed(OMEGA_IE).as_pose();
            let fa = group_dynamics(&a, &ut, field).expect("fixed gravitation");
            let fb = group_dynamics(&b, u, field).expect("fixed gravitation");
            let ma = a.to_matrix();
            let (ia, ib) = (a.inverse().to_matrix(), b.inverse().to_matrix());
            if def == ErrorDefinition::Right {
                let eta = ma * ib;
                vee5(&(fa * ia - eta * fb * ib * eta.try_inverse().expect("group element")))
            } else {
                let eta = ib * ma;
                vee5(&(ia * fa - eta.try_inverse().expect("group element") * ib * fb * eta))
            }
        }
    };
    let mut out = Vector15::zeros();
    out.fixed_rows_mut::<9>(0).copy_from(&rate);
    out
}

fn process_model(def: ErrorDefinition, est: &NavState<f64>, u: &ImuSample<f64>, field: &FixedGravitation<f64>) -> ProcessModel<f64> {
    match def {
        ErrorDefinition::Right => f_right(&est.to_transformed(OMEGA_IE), field).expect("fixed gravitation"),
        ErrorDefinition::Left => f_left(u),
        ErrorDefinition::So => f_so(est, u, OMEGA_IE),
    }
}

/// GPS observation as the filter builds it, from a noise-free fix of `truth`.
fn gps_obs(def: ErrorDefinition, est: &NavState<f64>, truth: &NavState<f64>) -> GpsObs {
    let r = Matrix3::identity();
    match def {
        ErrorDefinition::So => GpsObs::Six(h_gps_so(est, &truth.vel, &truth.pos, &r, &r)),
        _ => {
            let y = gps_transformed_velocity(&truth.vel, &truth.pos, OMEGA_IE);
            let s = est.to_transformed(OMEGA_IE);
            GpsObs::Three(if def == ErrorDefinition::Left { h_gps_left(&s, &y, &r) } else { h_gps_right(&s, &y, &r) })
        }
    }
}

enum GpsObs {
    Three(Observation<f64, 3>),
    Six(Observation<f64, 6>),
}

fn odo_obs(def: ErrorDefinition, est: &NavState<f64>, truth: &NavState<f64>) -> Observation<f64, 3> {
    let vb = truth.att.inverse() * truth.vel;
    let r = Matrix3::identity();
    let s = est.to_transformed(OMEGA_IE);
    match def {
        ErrorDefinition::Right => h_odo_right(&s, &vb, &r, OMEGA_IE),
        ErrorDefinition::Left => h_odo_left(&s, &vb, &r, OMEGA_IE),
        ErrorDefinition::So => h_odo_so(est, &vb, &r),
    }
}

/// Worst blockwise relative error of every F and H against finite
/// differences of the nonlinear models, as `(label, error)`.
pub fn jacobian_errors(seed: u64, states: usize) -> Vec<(String, f64)> {
    let earth = EarthModel::wgs84();
    let mut r = rng(seed);
    let mut worst: Vec<(String, f64)> = Vec::new();
    let mut note = |label: String, e: f64| match worst.iter_mut().find(|(l, _)| *l == label) {
        Some(w) => w.1 = w.1.max(e),
        None => worst.push((label, e)),
    };
    for _ in 0..states {
        let est = random_nav(&mut r, &earth, 60.0);
        let u = random_imu(&mut r);
        let field = FixedGravitation { omega_ie: OMEGA_IE, gbar: earth.gravitation(&est.pos).expect("surface point") };
        let sc = scales(&est);
        let d = steps(&sc);
        let speed = [est.vel.norm().max(1.0)];
        for def in ErrorDefinition::ALL {
            let tag = def.tag();
            let model = process_model(def, &est, &u, &field);
            let num = jacobian(|x| error_rate(def, &est, &u, &field, x), &d);
            note(format!("F {tag}"), block_error(&model.f, &num, &sc, &sc));

            let truth = |x: &Vector15<f64>| truth_at(def, &est, x).0;
            match gps_obs(def, &est, &est) {
                GpsObs::Three(o) => {
                    let num = jacobian(
                        |x| match gps_obs(def, &est, &truth(x)) {
                            GpsObs::Three(o) => o.z,
                            GpsObs::Six(_) => unreachable!(),
                        },
                        &d,
                    );
                    note(format!("H gps {tag}"), block_error(&o.h, &num, &sc[1..2], &sc));
                }
                GpsObs::Six(o) => {
                    let num = jacobian(
                        |x| match gps_obs(def, &est, &truth(x)) {
                            GpsObs::Six(o) => o.z,
                            GpsObs::Three(_) => unreachable!(),
                        },
                        &d,
                    );
                    note(format!("H gps {tag}"), block_error(&o.h, &num, &sc[1..3], &sc));
                }
            }
            let h = odo_obs(def, &est, &est).h;
            let num = jacobian(|x| odo_obs(def, &est, &truth(x)).z, &d);
            note(format!("H odo {tag}"), block_error(&h, &num, &speed, &sc));
        }
    }
    worst
}

pub fn jacobians(seed: u64) -> Check {
    let start = Instant::now();
    let errs = jacobian_errors(seed, 100);
    let pass = errs.iter().all(|(_, e)| *e < 1e-4);
    let detail = errs.iter().map(|(l, e)| format!("{l} {e:.1e}")).collect::<Vec<_>>().join(", ");
    Check { name: "Jacobian oracles", pass, detail: format!("100 states, tol 1e-4: {detail}"), elapsed: start.elapsed() }
}

pub fn run_all(seed: u64) -> Vec<Check> {
    vec![group_affine(seed), log_linearity(), lie_roundtrips(seed), jacobians(seed)]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finite_differences_of_a_linear_map_are_exact() {
        let a = SMatrix::<f64, 3, 15>::from_fn(|i, j| (i * 15 + j) as f64 - 20.0);
        let num = jacobian(|x| a * x, &Vector15::repeat(1e-5));
        assert!(block_error(&a, &num, &[1.0], &[1.0; 5]) < 1e-9);
    }

    #[test]
    fn vee5_inverts_hat() {
        let z = Twist::new(Vector3::new(0.1, -0.2, 0.3), Vector3::new(1.0, 2.0, 3.0), Vector3::new(-4.0, 5.0, 6.0));
        assert_eq!(vee5(&z.hat()), z.to_vector());
    }
}


