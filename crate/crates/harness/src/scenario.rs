//! Scenario files. Angles are given in degrees and sensor errors in datasheet
//! units; everything is converted to SI here.

use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::Deserialize;
use thiserror::Error;

use se23nav::error_models::NoiseSpec;
use se23nav::simulator::{MotionSegment, SensorSpec, G0};
use se23nav::{ErrorDefinition, FilterConfig, Geodetic, Integrator};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: &str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aiding {
    Gps,
    Odometer,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Origin {
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub height_m: f64,
    #[serde(default)]
    pub heading_deg: f64,
}

/// One row of a motion table; rates in deg/s, accelerations in m/s^2.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    #[serde(default)]
    pub status: String,
    pub duration: f64,
    #[serde(default)]
    pub wx: f64,
    #[serde(default)]
    pub wy: f64,
    #[serde(default)]
    pub wz: f64,
    #[serde(default)]
    pub ax: f64,
    #[serde(default)]
    pub ay: f64,
    #[serde(default)]
    pub az: f64,
}

impl Segment {
    pub fn to_motion(&self) -> MotionSegment {
        MotionSegment {
            duration: self.duration,
            wx: self.wx.to_radians(),
            wy: self.wy.to_radians(),
            wz: self.wz.to_radians(),
            ax: self.ax,
            ay: self.ay,
            az: self.az,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sensors {
    pub gyro_bias_deg_h: f64,
    pub gyro_arw_deg_rt_h: f64,
    pub accel_bias_ug: f64,
    pub accel_vrw_ug_rt_hz: f64,
    #[serde(default = "default_gps_vel")]
    pub gps_vel_std: f64,
    #[serde(default = "default_gps_pos")]
    pub gps_pos_std: f64,
    #[serde(default = "default_odo_scale")]
    pub odo_scale_std: f64,
    #[serde(default = "one")]
    pub gps_rate_hz: f64,
    #[serde(default = "ten")]
    pub odo_rate_hz: f64,
}

fn default_gps_vel() -> f64 {
    0.1
}
fn default_gps_pos() -> f64 {
    10.0
}
fn default_odo_scale() -> f64 {
    0.005
}
fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}

impl Sensors {
    pub fn spec(&self) -> SensorSpec {
        SensorSpec::from_datasheet(
            self.gyro_bias_deg_h,
            self.gyro_arw_deg_rt_h,
            self.accel_bias_ug,
            self.accel_vrw_ug_rt_hz,
            self.gps_vel_std,
            self.gps_pos_std,
            self.odo_scale_std,
        )
    }
}

/// Initial attitude error `[pitch, roll, yaw]`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum AttitudeError {
    FixedDeg([f64; 3]),
    FixedArcmin([f64; 3]),
    /// Drawn per run from zero-mean Gaussians with these stds.
    RandomStdDeg([f64; 3]),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Init {
    pub attitude_error: AttitudeError,
    #[serde(default)]
    pub vel_error_ned: [f64; 3],
    #[serde(default)]
    pub pos_error_ned: [f64; 3],
    /// `[pitch, roll, yaw]`
    pub attitude_std_deg: [f64; 3],
    pub vel_std: [f64; 3],
    pub pos_std: [f64; 3],
    /// Defaults to the sensor bias.
    pub gyro_bias_std_deg_h: Option<f64>,
    pub accel_bias_std_ug: Option<f64>,
}

/// Measurement noise assumed by the filters for the odometer.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdometerModel {
    /// Floor on the forward-speed std, m/s.
    #[serde(default = "default_odo_floor")]
    pub min_std: f64,
    /// Std of the zero lateral and vertical body velocity, m/s.
    #[serde(default = "default_nhc")]
    pub lateral_std: f64,
}

fn default_odo_floor() -> f64 {
    0.01
}
fn default_nhc() -> f64 {
    0.05
}

impl Default for OdometerModel {
    fn default() -> Self {
        Self { min_std: default_odo_floor(), lateral_std: default_nhc() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum IntegratorName {
    #[default]
    Midpoint,
    Rk4,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub aiding: Aiding,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "one_run")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_filters")]
    pub filters: Vec<String>,
    #[serde(default = "one")]
    pub output_rate_hz: f64,
    #[serde(default)]
    pub integrator: IntegratorName,
    /// Largest accepted gap between replayed IMU samples, s.
    #[serde(default = "default_gap")]
    pub max_gap: f64,
    pub origin: Origin,
    #[serde(rename = "segment")]
    pub segments: Vec<Segment>,
    pub sensors: Sensors,
    pub init: Init,
    #[serde(default)]
    pub odometer: OdometerModel,
}

fn default_dt() -> f64 {
    0.01
}
fn one_run() -> usize {
    1
}
fn all_filters() -> Vec<String> {
    vec!["lse".into(), "rse".into(), "so".into()]
}
fn default_gap() -> f64 {
    0.05
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.runs < 1 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(invalid("dt", "must lie in (0, 0.01]"));
        }
        if self.segments.is_empty() {
            return Err(invalid("segment", "at least one segment is required"));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if !(seg.duration > 0.0) {
                return Err(invalid(&format!("segment[{i}].duration"), "must be positive"));
            }
            let steps = seg.duration / self.dt;
            if (steps - steps.round()).abs() > 1e-6 {
                return Err(invalid(&format!("segment[{i}].duration"), "must be a multiple of dt"));
            }
        }
        let every = 1.0 / (self.output_rate_hz * self.dt);
        if !(self.output_rate_hz > 0.0) || (every - every.round()).abs() > 1e-9 {
            return Err(invalid("output_rate_hz", "must divide the IMU rate"));
        }
        if self.filters.is_empty() {
            return Err(invalid("filters", "at least one filter is required"));
        }
        for f in &self.filters {
            if ErrorDefinition::from_tag(f).is_none() {
                return Err(invalid("filters", format!("unknown filter '{f}', expected lse, rse or so")));
            }
        }
        let nonneg = |field: &str, v: &[f64]| {
            if v.iter().all(|x| *x >= 0.0 && x.is_finite()) {
                Ok(())
            } else {
                Err(invalid(field, "stds must be finite and nonnegative"))
            }
        };
        nonneg("init.attitude_std_deg", &self.init.attitude_std_deg)?;
        nonneg("init.vel_std", &self.init.vel_std)?;
        nonneg("init.pos_std", &self.init.pos_std)?;
        if let AttitudeError::RandomStdDeg(s) = self.init.attitude_error {
            nonneg("init.attitude_error.random_std_deg", &s)?;
        }
        let s = &self.sensors;
        nonneg(
            "sensors",
            &[s.gyro_bias_deg_h, s.gyro_arw_deg_rt_h, s.accel_bias_ug, s.accel_vrw_ug_rt_hz, s.gps_vel_std, s.gps_pos_std, s.odo_scale_std],
        )?;
        if self.odometer.min_std <= 0.0 || self.odometer.lateral_std <= 0.0 {
            return Err(invalid("odometer", "noise stds must be positive"));
        }
        if self.aiding == Aiding::Gps && (s.gps_vel_std <= 0.0 || s.gps_pos_std <= 0.0) {
            return Err(invalid("sensors.gps_vel_std", "GPS noise must be positive for GPS aiding"));
        }
        Ok(())
    }

    pub fn profile(&self) -> Vec<MotionSegment> {
        self.segments.iter().map(Segment::to_motion).collect()
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn origin(&self) -> Geodetic<f64> {
        Geodetic::from_degrees(self.origin.lat_deg, self.origin.lon_deg, self.origin.height_m)
    }

    pub fn heading(&self) -> f64 {
        self.origin.heading_deg.to_radians()
    }

    pub fn definitions(&self) -> Vec<ErrorDefinition> {
        self.filters.iter().filter_map(|f| ErrorDefinition::from_tag(f)).collect()
    }

    pub fn output_every(&self) -> usize {
        (1.0 / (self.output_rate_hz * self.dt)).round() as usize
    }

    pub fn integrator(&self) -> Integrator {
        match self.integrator {
            IntegratorName::Midpoint => Integrator::Midpoint,
            IntegratorName::Rk4 => Integrator::Rk4,
        }
    }

    pub fn filter_config(&self, definition: ErrorDefinition) -> FilterConfig<f64> {
        let spec = self.sensors.spec();
        let rad = |v: [f64; 3]| Vector3::from(v).map(f64::to_radians);
        let gyro_bias = self.init.gyro_bias_std_deg_h.map_or(spec.gyro_bias, |b| b.to_radians() / 3600.0);
        let accel_bias = self.init.accel_bias_std_ug.map_or(spec.accel_bias, |b| b * 1e-6 * G0);
        FilterConfig {
            definition,
            init_attitude_std: rad(self.init.attitude_std_deg),
            init_vel_std: Vector3::from(self.init.vel_std),
            init_pos_std: Vector3::from(self.init.pos_std),
            init_gyro_bias_std: Vector3::repeat(gyro_bias),
            init_accel_bias_std: Vector3::repeat(accel_bias),
            noise: NoiseSpec {
                gyro_psd: Vector3::repeat(spec.gyro_arw),
                accel_psd: Vector3::repeat(spec.accel_vrw),
                gyro_bias: Vector3::repeat(spec.gyro_bias),
                accel_bias: Vector3::repeat(spec.accel_bias),
            },
            integrator: self.integrator(),
        }
    }

    /// Body-frame odometer covariance for a measured forward speed.
    pub fn odometer_cov(&self, speed: f64) -> Matrix3<f64> {
        let fwd = (self.sensors.odo_scale_std * speed.abs()).max(self.odometer.min_std);
        let lat = self.odometer.lateral_std;
        Matrix3::from_diagonal(&Vector3::new(fwd * fwd, lat * lat, lat * lat))
    }

    /// `[pitch, roll, yaw]` misalignment in rad for a run seed.
    pub fn misalignment(&self, seed: u64) -> Vector3<f64> {
        match self.init.attitude_error {
            AttitudeError::FixedDeg(a) => Vector3::from(a).map(f64::to_radians),
            AttitudeError::FixedArcmin(a) => Vector3::from(a).map(|x| (x / 60.0).to_radians()),
            AttitudeError::RandomStdDeg(s) => {
                se23nav::simulator::misalignment_angles(&Vector3::from(s).map(f64::to_radians), seed)
            }
        }
    }
}
