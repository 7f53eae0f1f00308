//! Truth trajectories from piecewise-constant motion profiles and synthetic
//! IMU, GPS and odometer measurements.
//!
//! The vehicle moves on the ellipsoid with its velocity along the body x axis
//! (front-right-down body frame). Rates in a [`MotionSegment`] are relative to
//! the local level frame. The ideal IMU samples are obtained by inverting one
//! midpoint mechanization step between consecutive truth states, so feeding
//! them back through [`propagate`](crate::mechanization::propagate)
//! reproduces the truth attitude and velocity to rounding.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::earth::{ecef_to_ned, EarthError, EarthModel, Geodetic, GravityField};
use crate::liegroup::{skew, so3_exp, so3_log, Rotation};
use crate::mechanization::{attitude_at, earth_rate_vec, ImuSample, NavState, MAX_STEP};

const IMU_STREAM: u64 = 1;
const GPS_STREAM: u64 = 2;
const ODO_STREAM: u64 = 3;
const MISALIGNMENT_STREAM: u64 = 4;
const SUBSTEPS: usize = 10;

/// One gravitational acceleration, for datasheet units.
pub const G0: f64 = 9.806_65;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("motion profile is empty")]
    EmptyProfile,
    #[error("truth step {dt} s must lie in (0, 0.01]")]
    InvalidStep { dt: f64 },
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("rate {rate} Hz is not a divisor of the sample rate")]
    InvalidRate { rate: f64 },
    #[error(transparent)]
    Earth(#[from] EarthError),
}

/// One row of a motion table. Rates in rad/s, accelerations in m/s^2.
///
/// `wx` is the pitch rate, `wy` the roll rate and `wz` the yaw rate, positive
/// for a left turn. `ay` is the longitudinal acceleration. The lateral `ax`
/// only marks the turn direction: the centripetal term follows from the
/// actual speed and yaw rate. Vertical acceleration is not supported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionSegment {
    pub duration: f64,
    pub wx: f64,
    pub wy: f64,
    pub wz: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl MotionSegment {
    pub fn still(duration: f64) -> Self {
        Self { duration, wx: 0.0, wy: 0.0, wz: 0.0, ax: 0.0, ay: 0.0, az: 0.0 }
    }

    /// Angular rate of the body relative to the level frame, FRD axes.
    pub fn body_rate(&self) -> Vector3<f64> {
        Vector3::new(self.wy, self.wx, -self.wz)
    }
}

pub fn profile_duration(profile: &[MotionSegment]) -> f64 {
    profile.iter().map(|s| s.duration).sum()
}

/// Sensor errors in SI units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    /// rad/s
    pub gyro_bias: f64,
    /// rad/sqrt(s)
    pub gyro_arw: f64,
    /// m/s^2
    pub accel_bias: f64,
    /// (m/s^2)/sqrt(Hz)
    pub accel_vrw: f64,
    /// m/s, per NED axis
    pub gps_vel_std: f64,
    /// m, per NED axis
    pub gps_pos_std: f64,
    /// Fraction of the speed.
    pub odo_scale_std: f64,
}

impl SensorSpec {
    pub fn ideal() -> Self {
        Self::from_datasheet(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)
    }

    /// deg/h, deg/sqrt(h), micro-g, micro-g/sqrt(Hz), m/s, m, fraction.
    pub fn from_datasheet(
        gyro_bias_deg_h: f64,
        gyro_arw_deg_rt_h: f64,
        accel_bias_ug: f64,
        accel_vrw_ug_rt_hz: f64,
        gps_vel_std: f64,
        gps_pos_std: f64,
        odo_scale_std: f64,
    ) -> Self {
        Self {
            gyro_bias: gyro_bias_deg_h.to_radians() / 3600.0,
            gyro_arw: gyro_arw_deg_rt_h.to_radians() / 60.0,
            accel_bias: accel_bias_ug * 1e-6 * G0,
            accel_vrw: accel_vrw_ug_rt_hz * 1e-6 * G0,
            gps_vel_std,
            gps_pos_std,
            odo_scale_std,
        }
    }

    /// Navigation-grade IMU with a 0.1 m/s, 10 m GPS and a 0.5 % odometer.
    pub fn navigation_grade() -> Self {
        Self::from_datasheet(0.01, 0.001, 100.0, 10.0, 0.1, 10.0, 0.005)
    }
}

/// Truth state at `t` and the ideal IMU sample over `[t, t + dt]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthSample {
    pub t: f64,
    pub dt: f64,
    pub nav: NavState<f64>,
    pub body_rate: Vector3<f64>,
    pub specific_force: Vector3<f64>,
}

impl TruthSample {
    pub fn ideal_imu(&self) -> ImuSample<f64> {
        ImuSample::new(self.t, self.body_rate, self.specific_force, self.dt)
    }

    pub fn body_velocity(&self) -> Vector3<f64> {
        self.nav.att.inverse() * self.nav.vel
    }
}

#[derive(Debug, Clone, Copy)]
struct Kinematic {
    lat: f64,
    lon: f64,
    h: f64,
    speed: f64,
    c_bn: Rotation<f64>,
}

/// Lazy truth generator. Yields `steps + 1` samples, from `t = 0` to the end
/// of the profile inclusive; the IMU of the last sample continues the final
/// segment for one more step.
#[derive(Debug, Clone)]
pub struct TruthGenerator {
    earth: EarthModel<f64>,
    profile: Vec<MotionSegment>,
    ends: Vec<f64>,
    dt: f64,
    k: usize,
    steps: usize,
    state: Kinematic,
    nav: NavState<f64>,
}

/// Starts at rest at `origin` with the given heading (rad from north).
pub fn generate_truth(
    profile: &[MotionSegment],
    origin: &Geodetic<f64>,
    heading: f64,
    dt: f64,
) -> Result<TruthGenerator, SimError> {
    TruthGenerator::new(profile, origin, heading, dt, EarthModel::wgs84())
}

impl TruthGenerator {
    pub fn new(
        profile: &[MotionSegment],
        origin: &Geodetic<f64>,
        heading: f64,
        dt: f64,
        earth: EarthModel<f64>,
    ) -> Result<Self, SimError> {
        if profile.is_empty() {
            return Err(SimError::EmptyProfile);
        }
        if !(dt > 0.0 && dt <= 0.01) {
            return Err(SimError::InvalidStep { dt });
        }
        for (index, s) in profile.iter().enumerate() {
            let bad = |reason: &str| Err(SimError::InvalidSegment { index, reason: reason.into() });
            if !(s.duration > 0.0) {
                return bad("duration must be positive");
            }
            if s.az != 0.0 {
                return bad("vertical acceleration is not supported");
            }
            if s.ax != 0.0 && s.wz == 0.0 {
                return bad("lateral acceleration without a yaw rate");
            }
            if s.ax * s.wz > 0.0 {
                return bad("lateral acceleration points away from the turn");
            }
        }
        let ends = profile
            .iter()
            .scan(0.0, |acc, s| {
                *acc += s.duration;
                Some(*acc)
            })
            .collect::<Vec<_>>();
        let steps = (ends[ends.len() - 1] / dt).round() as usize;
        let state = Kinematic {
            lat: origin.latitude,
            lon: origin.longitude,
            h: origin.height,
            speed: 0.0,
            c_bn: so3_exp(&Vector3::new(0.0, 0.0, heading)),
        };
        let nav = nav_of(&earth, &state);
        Ok(Self { earth, profile: profile.to_vec(), ends, dt, k: 0, steps, state, nav })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn segment_at(&self, t: f64) -> &MotionSegment {
        let i = self.ends.partition_point(|&e| e <= t).min(self.profile.len() - 1);
        &self.profile[i]
    }

    fn advance(&self, s: &Kinematic, t0: f64) -> Kinematic {
        let h = self.dt / SUBSTEPS as f64;
        let mut s = *s;
        for j in 0..SUBSTEPS {
            let seg = *self.segment_at(t0 + (j as f64 + 0.5) * h);
            s = substep(&self.earth, &s, &seg, h);
        }
        s
    }
}

fn nav_of(earth: &EarthModel<f64>, s: &Kinematic) -> NavState<f64> {
    let c_ne = ecef_to_ned(s.lat, s.lon).inverse();
    let pos = earth.geodetic_to_ecef(&Geodetic::new(s.lat, s.lon, s.h));
    NavState::new(c_ne * s.c_bn, c_ne * (s.c_bn * Vector3::new(s.speed, 0.0, 0.0)), pos)
}

/// RK4 on the geodetic position; attitude and speed are exact for constant
/// rates.
fn substep(earth: &EarthModel<f64>, s: &Kinematic, seg: &MotionSegment, h: f64) -> Kinematic {
    let w = seg.body_rate();
    let v_ned = |tau: f64| s.c_bn * (so3_exp(&(w * tau)) * Vector3::new(s.speed + seg.ay * tau, 0.0, 0.0));
    let rate = |lat: f64, hgt: f64, v: Vector3<f64>| {
        let m = earth.meridian_radius(lat) + hgt;
        let n = earth.prime_vertical_radius(lat) + hgt;
        Vector3::new(v.x / m, v.y / (n * lat.cos()), -v.z)
    };
    let x0 = Vector3::new(s.lat, s.lon, s.h);
    let k1 = rate(x0.x, x0.z, v_ned(0.0));
    let x1 = x0 + k1 * (h / 2.0);
    let k2 = rate(x1.x, x1.z, v_ned(h / 2.0));
    let x2 = x0 + k2 * (h / 2.0);
    let k3 = rate(x2.x, x2.z, v_ned(h / 2.0));
    let x3 = x0 + k3 * h;
    let k4 = rate(x3.x, x3.z, v_ned(h));
    let x = x0 + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    Kinematic { lat: x.x, lon: x.y, h: x.z, speed: s.speed + seg.ay * h, c_bn: s.c_bn * so3_exp(&(w * h)) }
}

/// Body rate and specific force that carry `a` to `b` in one midpoint
/// mechanization step of length `dt`.
pub fn ideal_imu<G: GravityField<f64>>(
    a: &NavState<f64>,
    b: &NavState<f64>,
    dt: f64,
    field: &G,
) -> Result<(Vector3<f64>, Vector3<f64>), EarthError> {
    let wie = field.earth_rate();
    let step = a.att.inverse() * so3_exp(&earth_rate_vec(wie * dt)) * b.att;
    let gyro = so3_log(&step).vector() / dt;
    let c_mid = attitude_at(&a.att, &gyro, wie, dt / 2.0);
    let p_mid = a.pos + a.vel * (dt / 2.0);
    let half = skew(&earth_rate_vec(wie)) * (dt / 2.0);
    let (va, vb) = (a.to_transformed(wie).tvel, b.to_transformed(wie).tvel);
    let forcing = ((Matrix3::identity() + half) * vb - (Matrix3::identity() - half) * va) / dt;
    let accel = c_mid.inverse() * (forcing - field.gravitation(&p_mid)?);
    Ok((gyro, accel))
}

impl Iterator for TruthGenerator {
    type Item = TruthSample;

    fn next(&mut self) -> Option<TruthSample> {
        if self.k > self.steps {
            return None;
        }
        let t = self.k as f64 * self.dt;
        let next = self.advance(&self.state, t);
        let next_nav = nav_of(&self.earth, &next);
        // The truth stays far above the gravity model's validity floor.
        let (gyro, accel) = ideal_imu(&self.nav, &next_nav, self.dt, &self.earth).expect("truth within gravity domain");
        let out = TruthSample { t, dt: self.dt, nav: self.nav, body_rate: gyro, specific_force: accel };
        self.state = next;
        self.nav = next_nav;
        self.k += 1;
        Some(out)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.steps + 1 - self.k;
        (n, Some(n))
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn normal3(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal))
}

fn random_signs(rng: &mut ChaCha8Rng, magnitude: f64) -> Vector3<f64> {
    Vector3::from_fn(|_, _| if rng.random_bool(0.5) { magnitude } else { -magnitude })
}

/// Adds constant biases and white noise to ideal IMU samples.
#[derive(Debug, Clone)]
pub struct ImuSynth {
    pub gyro_bias: Vector3<f64>,
    pub accel_bias: Vector3<f64>,
    gyro_arw: f64,
    accel_vrw: f64,
    rng: ChaCha8Rng,
}

impl ImuSynth {
    /// Bias magnitudes come from `spec`; each axis gets a random sign.
    pub fn new(spec: &SensorSpec, seed: u64) -> Self {
        let mut rng = rng_for(seed, IMU_STREAM);
        let gyro_bias = random_signs(&mut rng, spec.gyro_bias);
        let accel_bias = random_signs(&mut rng, spec.accel_bias);
        Self { gyro_bias, accel_bias, gyro_arw: spec.gyro_arw, accel_vrw: spec.accel_vrw, rng }
    }

    pub fn measure(&mut self, s: &TruthSample) -> ImuSample<f64> {
        let root = s.dt.sqrt();
        let ng = normal3(&mut self.rng) * (self.gyro_arw / root);
        let na = normal3(&mut self.rng) * (self.accel_vrw / root);
        ImuSample::new(s.t, s.body_rate + self.gyro_bias + ng, s.specific_force + self.accel_bias + na, s.dt)
    }
}

pub fn synthesize_imu<I: Iterator<Item = TruthSample>>(
    truth: I,
    spec: &SensorSpec,
    seed: u64,
) -> impl Iterator<Item = ImuSample<f64>> {
    let mut synth = ImuSynth::new(spec, seed);
    truth.map(move |s| synth.measure(&s))
}

/// GPS fix in the units of the replay logs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsRecord {
    pub t: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub h: f64,
    /// Ground velocity, NED, m/s.
    pub vel_ned: Vector3<f64>,
}

impl GpsRecord {
    pub fn geodetic(&self) -> Geodetic<f64> {
        Geodetic::from_degrees(self.lat_deg, self.lon_deg, self.h)
    }

    pub fn position_ecef(&self, earth: &EarthModel<f64>) -> Vector3<f64> {
        earth.geodetic_to_ecef(&self.geodetic())
    }

    pub fn velocity_ecef(&self) -> Vector3<f64> {
        let g = self.geodetic();
        ecef_to_ned(g.latitude, g.longitude).inverse() * self.vel_ned
    }
}

fn decimation(rate: f64, dt: f64) -> Result<usize, SimError> {
    let every = 1.0 / (rate * dt);
    if !(rate > 0.0) || (every - every.round()).abs() > 1e-9 || every.round() < 1.0 {
        return Err(SimError::InvalidRate { rate });
    }
    Ok(every.round() as usize)
}

/// Samples the truth every `1 / rate` seconds, starting one period in.
#[derive(Debug, Clone)]
pub struct GpsSynth {
    earth: EarthModel<f64>,
    vel_std: f64,
    pos_std: f64,
    every: usize,
    k: usize,
    rng: ChaCha8Rng,
}

impl GpsSynth {
    pub fn new(spec: &SensorSpec, rate: f64, dt: f64, seed: u64) -> Result<Self, SimError> {
        Ok(Self {
            earth: EarthModel::wgs84(),
            vel_std: spec.gps_vel_std,
            pos_std: spec.gps_pos_std,
            every: decimation(rate, dt)?,
            k: 0,
            rng: rng_for(seed, GPS_STREAM),
        })
    }

    /// Call once per truth sample, in order.
    pub fn measure(&mut self, s: &TruthSample) -> Result<Option<GpsRecord>, SimError> {
        let k = self.k;
        self.k += 1;
        if k == 0 || k % self.every != 0 {
            return Ok(None);
        }
        let g = self.earth.ecef_to_geodetic(&s.nav.pos)?;
        let c_en = ecef_to_ned(g.latitude, g.longitude);
        let dv = normal3(&mut self.rng) * self.vel_std;
        let dp = normal3(&mut self.rng) * self.pos_std;
        let lat = g.latitude + dp.x / (self.earth.meridian_radius(g.latitude) + g.height);
        let lon = g.longitude + dp.y / ((self.earth.prime_vertical_radius(g.latitude) + g.height) * g.latitude.cos());
        Ok(Some(GpsRecord {
            t: s.t,
            lat_deg: lat.to_degrees(),
            lon_deg: lon.to_degrees(),
            h: g.height - dp.z,
            vel_ned: c_en * s.nav.vel + dv,
        }))
    }
}

pub fn synthesize_gps<I: Iterator<Item = TruthSample>>(
    truth: I,
    spec: &SensorSpec,
    rate: f64,
    dt: f64,
    seed: u64,
) -> Result<impl Iterator<Item = Result<GpsRecord, SimError>>, SimError> {
    let mut synth = GpsSynth::new(spec, rate, dt, seed)?;
    Ok(truth.filter_map(move |s| synth.measure(&s).transpose()))
}

/// Forward speed averaged over one output period.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdoRecord {
    pub t: f64,
    pub speed: f64,
}

impl OdoRecord {
    /// Non-holonomic body velocity: no lateral or vertical motion.
    pub fn body_velocity(&self) -> Vector3<f64> {
        Vector3::new(self.speed, 0.0, 0.0)
    }
}

/// Averages the truth forward speed over the samples `(t - 1/rate, t]` and
/// applies a white scale-factor error.
#[derive(Debug, Clone)]
pub struct OdoSynth {
    scale_std: f64,
    every: usize,
    k: usize,
    sum: f64,
    rng: ChaCha8Rng,
}

impl OdoSynth {
    pub fn new(spec: &SensorSpec, rate: f64, dt: f64, seed: u64) -> Result<Self, SimError> {
        Ok(Self { scale_std: spec.odo_scale_std, every: decimation(rate, dt)?, k: 0, sum: 0.0, rng: rng_for(seed, ODO_STREAM) })
    }

    pub fn measure(&mut self, s: &TruthSample) -> Option<OdoRecord> {
        let k = self.k;
        self.k += 1;
        if k == 0 {
            return None;
        }
        self.sum += s.body_velocity().x;
        if k % self.every != 0 {
            return None;
        }
        let mean = self.sum / self.every as f64;
        self.sum = 0.0;
        let n: f64 = self.rng.sample(StandardNormal);
        Some(OdoRecord { t: s.t, speed: mean * (1.0 + self.scale_std * n) })
    }
}

pub fn synthesize_odometer<I: Iterator<Item = TruthSample>>(
    truth: I,
    spec: &SensorSpec,
    rate: f64,
    dt: f64,
    seed: u64,
) -> Result<impl Iterator<Item = OdoRecord>, SimError> {
    let mut synth = OdoSynth::new(spec, rate, dt, seed)?;
    Ok(truth.filter_map(move |s| synth.measure(&s)))
}

/// Draws `[pitch, roll, yaw]` misalignment angles, rad.
pub fn misalignment_angles(std: &Vector3<f64>, seed: u64) -> Vector3<f64> {
    normal3(&mut rng_for(seed, MISALIGNMENT_STREAM)).component_mul(std)
}

/// `R_z(yaw) R_y(pitch) R_x(roll)` for angles `[pitch, roll, yaw]`.
pub fn misalignment_rotation(angles: &Vector3<f64>) -> Rotation<f64> {
    so3_exp(&Vector3::new(0.0, 0.0, angles.z))
        * so3_exp(&Vector3::new(0.0, angles.x, 0.0))
        * so3_exp(&Vector3::new(angles.y, 0.0, 0.0))
}

pub fn random_misalignment(std: &Vector3<f64>, seed: u64) -> Rotation<f64> {
    misalignment_rotation(&misalignment_angles(std, seed))
}

/// Perturbs the attitude of `nav` so that the local-level attitude becomes
/// `R C_b^n`.
pub fn misalign(nav: &NavState<f64>, rotation: &Rotation<f64>, earth: &EarthModel<f64>) -> Result<NavState<f64>, SimError> {
    let g = earth.ecef_to_geodetic(&nav.pos)?;
    let c_en = ecef_to_ned(g.latitude, g.longitude);
    Ok(NavState::new(c_en.inverse() * rotation * c_en * nav.att, nav.vel, nav.pos))
}

/// Check on the step bound shared with the mechanization.
pub fn within_mechanization_step(dt: f64) -> bool {
    dt > 0.0 && dt <= MAX_STEP
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanization::{propagate_classic, Integrator};
    use proptest::prelude::*;

    fn origin() -> Geodetic<f64> {
        Geodetic::from_degrees(30.5, 114.3, 20.0)
    }

    fn turn(wz_deg: f64, duration: f64) -> MotionSegment {
        MotionSegment { wz: wz_deg.to_radians(), ax: -wz_deg.signum() * 9.0, ..MotionSegment::still(duration) }
    }

    fn heading(nav: &NavState<f64>) -> f64 {
        let earth = EarthModel::wgs84();
        let g = earth.ecef_to_geodetic(&nav.pos).unwrap();
        let fwd = ecef_to_ned(g.latitude, g.longitude) * nav.att * Vector3::x();
        fwd.y.atan2(fwd.x)
    }

    #[test]
    fn static_body_senses_earth_rate_and_gravity() {
        let earth: EarthModel<f64> = EarthModel::wgs84();
        for s in generate_truth(&[MotionSegment::still(10.0)], &origin(), 0.3, 0.01).unwrap() {
            assert_eq!(s.nav.vel, Vector3::zeros());
            assert!((s.body_rate.norm() - earth.omega_ie).abs() < 1e-9 * earth.omega_ie);
            assert!((s.body_rate - s.nav.att.inverse() * earth.omega_vec()).norm() < 1e-9 * earth.omega_ie);
            let g = earth.gravity(&s.nav.pos).unwrap().norm();
            assert!((s.specific_force.norm() - g).abs() < 1e-9);
        }
    }

    #[test]
    fn ninety_degree_left_turn() {
        let profile = [MotionSegment { ay: 1.0, ..MotionSegment::still(10.0) }, turn(0.9, 100.0)];
        let truth = generate_truth(&profile, &origin(), 0.0, 0.01).unwrap();
        let n = truth.steps();
        assert_eq!(n, 11_000);
        let end = truth.last().unwrap().nav;
        // Left turn in FRD: heading decreases by 90 deg.
        assert!((heading(&end) + 90f64.to_radians()).abs() < 1e-9, "{}", heading(&end).to_degrees());
        assert!((end.vel.norm() - 10.0).abs() < 1e-6);
    }

    #[test]
    fn ideal_imu_reproduces_truth() {
        let earth = EarthModel::wgs84();
        let profile = [
            MotionSegment::still(5.0),
            MotionSegment { ay: 1.0, ..MotionSegment::still(10.0) },
            turn(0.9, 100.0),
            MotionSegment { wx: 0.2f64.to_radians(), ..MotionSegment::still(20.0) },
            turn(-0.9, 100.0),
            MotionSegment::still(365.0),
        ];
        let mut truth = generate_truth(&profile, &origin(), 1.0, 0.01).unwrap().peekable();
        let mut nav = truth.peek().unwrap().nav;
        let mut worst: f64 = 0.0;
        while let Some(s) = truth.next() {
            worst = worst.max((nav.pos - s.nav.pos).norm());
            nav = propagate_classic(&nav, &s.ideal_imu(), &earth, Integrator::Midpoint).unwrap();
        }
        assert!(worst < 1e-3, "{worst}");
    }

    #[test]
    fn validation() {
        let o = origin();
        assert_eq!(generate_truth(&[], &o, 0.0, 0.01).unwrap_err(), SimError::EmptyProfile);
        assert!(matches!(generate_truth(&[MotionSegment::still(1.0)], &o, 0.0, 0.02), Err(SimError::InvalidStep { .. })));
        let up = MotionSegment { az: 1.0, ..MotionSegment::still(1.0) };
        assert!(matches!(generate_truth(&[up], &o, 0.0, 0.01), Err(SimError::InvalidSegment { index: 0, .. })));
        let wrong_side = MotionSegment { ax: 9.0, ..turn(0.9, 1.0) };
        assert!(matches!(
            generate_truth(&[MotionSegment::still(1.0), wrong_side], &o, 0.0, 0.01),
            Err(SimError::InvalidSegment { index: 1, .. })
        ));
    }

    #[test]
    fn zero_spec_is_exact() {
        let truth: Vec<_> = generate_truth(&[turn(0.9, 2.0)], &origin(), 0.0, 0.01).unwrap().collect();
        for (s, u) in truth.iter().zip(synthesize_imu(truth.iter().copied(), &SensorSpec::ideal(), 5)) {
            assert_eq!(u, s.ideal_imu());
        }
        let gps: Vec<_> = synthesize_gps(truth.iter().copied(), &SensorSpec::ideal(), 1.0, 0.01, 5).unwrap().collect();
        assert_eq!(gps.len(), 2);
        let fix = gps[0].clone().unwrap();
        assert_eq!(fix.t, 1.0);
        let earth = EarthModel::wgs84();
        assert!((fix.position_ecef(&earth) - truth[100].nav.pos).norm() < 1e-6);
        assert!((fix.velocity_ecef() - truth[100].nav.vel).norm() < 1e-12);
    }

    #[test]
    fn noise_statistics() {
        let spec = SensorSpec::navigation_grade();
        let dt = 0.01;
        let s = TruthSample { t: 0.0, dt, nav: NavState::new(Rotation::identity(), Vector3::zeros(), Vector3::zeros()), body_rate: Vector3::zeros(), specific_force: Vector3::zeros() };
        let mut synth = ImuSynth::new(&spec, 11);
        let n = 100_000;
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let e = synth.measure(&s).gyro.x - synth.gyro_bias.x;
            sum += e;
            sq += e * e;
        }
        let var = sq / n as f64 - (sum / n as f64).powi(2);
        let expected = (spec.gyro_arw / dt.sqrt()).powi(2);
        assert!((var / expected - 1.0).abs() < 0.05, "{}", var / expected);

        let mut synth = ImuSynth::new(&spec, 12);
        let mean = (0..n).map(|_| synth.measure(&s).gyro.y).sum::<f64>() / n as f64;
        let sigma = spec.gyro_arw / dt.sqrt();
        assert!((mean - synth.gyro_bias.y).abs() < 3.0 * sigma / (n as f64).sqrt());
        assert_eq!(synth.gyro_bias.y.abs(), spec.gyro_bias);
    }

    #[test]
    fn gps_epochs_and_spread() {
        let spec = SensorSpec::navigation_grade();
        let truth = generate_truth(&[MotionSegment::still(1000.0)], &origin(), 0.0, 0.01).unwrap();
        let fixes: Vec<_> = synthesize_gps(truth, &spec, 1.0, 0.01, 3).unwrap().map(Result::unwrap).collect();
        assert_eq!(fixes.len(), 1000);
        for w in fixes.windows(2) {
            assert!((w[1].t - w[0].t - 1.0).abs() < 1e-9);
        }
        let std = |xs: &[f64]| {
            let m = xs.iter().sum::<f64>() / xs.len() as f64;
            (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
        };
        let vn: Vec<_> = fixes.iter().map(|f| f.vel_ned.x).collect();
        let h: Vec<_> = fixes.iter().map(|f| f.h).collect();
        assert!((std(&vn) / spec.gps_vel_std - 1.0).abs() < 0.1);
        assert!((std(&h) / spec.gps_pos_std - 1.0).abs() < 0.1);
    }

    #[test]
    fn odometer() {
        let spec = SensorSpec::navigation_grade();
        let profile = [MotionSegment::still(5.0), MotionSegment { ay: 1.0, ..MotionSegment::still(10.0) }, MotionSegment::still(200.0)];
        let truth: Vec<_> = generate_truth(&profile, &origin(), 0.4, 0.01).unwrap().collect();
        for s in &truth {
            assert!((s.body_velocity().norm() - s.nav.vel.norm()).abs() < 1e-12);
        }
        let odo: Vec<_> = synthesize_odometer(truth.iter().copied(), &spec, 10.0, 0.01, 9).unwrap().collect();
        assert_eq!(odo.len(), 2150);
        assert!(odo.iter().filter(|r| r.t <= 5.0).all(|r| r.speed == 0.0));
        let cruise: Vec<_> = odo.iter().filter(|r| r.t > 16.0).map(|r| r.speed).collect();
        let m = cruise.iter().sum::<f64>() / cruise.len() as f64;
        let sd = (cruise.iter().map(|x| (x - m).powi(2)).sum::<f64>() / cruise.len() as f64).sqrt();
        assert!((sd / 0.05 - 1.0).abs() < 0.1, "{sd}");
    }

    #[test]
    fn misalignment_draws() {
        assert_eq!(random_misalignment(&Vector3::zeros(), 1), Rotation::identity());
        let std = Vector3::new(1f64.to_radians(), 1f64.to_radians(), 3f64.to_radians());
        assert_eq!(random_misalignment(&std, 42), random_misalignment(&std, 42));
        let yaw: Vec<_> = (0..10_000).map(|s| misalignment_angles(&std, s).z).collect();
        let sd = (yaw.iter().map(|y| y * y).sum::<f64>() / yaw.len() as f64).sqrt();
        assert!((sd / std.z - 1.0).abs() < 0.03);
    }

    #[test]
    fn misaligned_yaw_reads_back() {
        let earth = EarthModel::wgs84();
        let nav = generate_truth(&[MotionSegment::still(1.0)], &origin(), 0.5, 0.01).unwrap().next().unwrap().nav;
        let bad = misalign(&nav, &misalignment_rotation(&Vector3::new(0.0, 0.0, 0.1)), &earth).unwrap();
        assert!((heading(&bad) - heading(&nav) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn streams_are_deterministic() {
        let spec = SensorSpec::navigation_grade();
        let run = || {
            let truth = generate_truth(&[turn(0.9, 3.0)], &origin(), 0.0, 0.01).unwrap();
            synthesize_imu(truth, &spec, 77).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn ideal_imu_inverts_one_step(
            w in prop::array::uniform3(-0.2..0.2f64),
            a in prop::array::uniform3(-2.0..2.0f64),
            v in prop::array::uniform3(-30.0..30.0f64),
        ) {
            let earth = EarthModel::wgs84();
            let p = earth.geodetic_to_ecef(&origin());
            let s = NavState::new(so3_exp(&Vector3::new(0.3, -0.2, 1.0)), Vector3::from(v), p);
            let f = Vector3::from(a) - s.att.inverse() * earth.gravity(&p).unwrap();
            let u = ImuSample::new(0.0, Vector3::from(w), f, 0.01);
            let next = propagate_classic(&s, &u, &earth, Integrator::Midpoint).unwrap();
            let (gyro, accel) = ideal_imu(&s, &next, 0.01, &earth).unwrap();
            prop_assert!((gyro - u.gyro).norm() < 1e-9);
            prop_assert!((accel - u.accel).norm() < 1e-6);
        }
    }
}
