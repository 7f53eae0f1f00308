//! CSV logs: IMU, GPS, odometer and reference trajectory.
//!
//! Floats are written in Rust's shortest round-trip form, so a log read back
//! yields the exact values that were written.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use nalgebra::{Rotation3, Vector3};
use thiserror::Error;

use se23nav::earth::{ecef_to_ned, EarthError, EarthModel, Geodetic};
use se23nav::simulator::{GpsRecord, OdoRecord};
use se23nav::{ImuSample, NavState};

pub const IMU_HEADER: [&str; 7] = ["t", "gx", "gy", "gz", "ax", "ay", "az"];
pub const GPS_HEADER: [&str; 7] = ["t", "lat_deg", "lon_deg", "h_m", "vn", "ve", "vd"];
pub const ODO_HEADER: [&str; 2] = ["t", "v_body_mps"];
pub const REF_HEADER: [&str; 10] = ["t", "lat_deg", "lon_deg", "h_m", "vn", "ve", "vd", "roll_deg", "pitch_deg", "yaw_deg"];

#[derive(Debug, Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {reason}")]
    Schema { path: String, line: u64, reason: String },
    #[error(transparent)]
    Earth(#[from] EarthError),
}

/// Reference navigation solution in log units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefRecord {
    pub t: f64,
    pub lat_deg: f64,
    pub lon_deg: f64,
    pub h: f64,
    pub vel_ned: Vector3<f64>,
    pub roll_deg: f64,
    pub pitch_deg: f64,
    pub yaw_deg: f64,
}

impl RefRecord {
    pub fn from_nav(t: f64, nav: &NavState<f64>, earth: &EarthModel<f64>) -> Result<Self, EarthError> {
        let g = earth.ecef_to_geodetic(&nav.pos)?;
        let c_en = ecef_to_ned(g.latitude, g.longitude);
        let (roll, pitch, yaw) = (c_en * nav.att).euler_angles();
        Ok(Self {
            t,
            lat_deg: g.latitude.to_degrees(),
            lon_deg: g.longitude.to_degrees(),
            h: g.height,
            vel_ned: c_en * nav.vel,
            roll_deg: roll.to_degrees(),
            pitch_deg: pitch.to_degrees(),
            yaw_deg: yaw.to_degrees(),
        })
    }

    pub fn geodetic(&self) -> Geodetic<f64> {
        Geodetic::from_degrees(self.lat_deg, self.lon_deg, self.h)
    }

    pub fn to_nav(&self, earth: &EarthModel<f64>) -> NavState<f64> {
        let g = self.geodetic();
        let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
        let c_bn = Rotation3::from_euler_angles(self.roll_deg.to_radians(), self.pitch_deg.to_radians(), self.yaw_deg.to_radians());
        NavState::new(c_ne * c_bn, c_ne * self.vel_ned, earth.geodetic_to_ecef(&g))
    }
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// Writer for one log with a fixed header.
pub struct LogWriter {
    path: PathBuf,
    inner: csv::Writer<BufWriter<File>>,
}

impl LogWriter {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self, LogError> {
        let file = File::create(path).map_err(|source| LogError::Io { path: path.display().to_string(), source })?;
        let mut w = Self { path: path.to_path_buf(), inner: csv::Writer::from_writer(BufWriter::new(file)) };
        w.write_strings(header.iter().map(|s| s.to_string()))?;
        Ok(w)
    }

    fn write_strings(&mut self, fields: impl IntoIterator<Item = String>) -> Result<(), LogError> {
        let path = self.path.display().to_string();
        self.inner.write_record(fields.into_iter().collect::<Vec<_>>()).map_err(|source| LogError::Csv { path, source })
    }

    pub fn write_row(&mut self, values: &[f64]) -> Result<(), LogError> {
        self.write_strings(values.iter().map(|v| fmt(*v)))
    }

    /// Two leading text fields followed by numbers.
    pub fn write_fields(&mut self, a: &str, b: &str, values: &[f64]) -> Result<(), LogError> {
        self.write_strings([a.to_string(), b.to_string()].into_iter().chain(values.iter().map(|v| fmt(*v))))
    }

    pub fn finish(mut self) -> Result<(), LogError> {
        let path = self.path.display().to_string();
        self.inner.flush().map_err(|source| LogError::Io { path, source })
    }
}

pub fn imu_row(u: &ImuSample<f64>) -> [f64; 7] {
    [u.t, u.gyro.x, u.gyro.y, u.gyro.z, u.accel.x, u.accel.y, u.accel.z]
}

pub fn gps_row(g: &GpsRecord) -> [f64; 7] {
    [g.t, g.lat_deg, g.lon_deg, g.h, g.vel_ned.x, g.vel_ned.y, g.vel_ned.z]
}

pub fn odo_row(o: &OdoRecord) -> [f64; 2] {
    [o.t, o.speed]
}

pub fn ref_row(r: &RefRecord) -> [f64; 10] {
    [r.t, r.lat_deg, r.lon_deg, r.h, r.vel_ned.x, r.vel_ned.y, r.vel_ned.z, r.roll_deg, r.pitch_deg, r.yaw_deg]
}

/// Streaming reader that checks the header and returns fixed-width rows with
/// nondecreasing timestamps.
pub struct LogReader<const N: usize> {
    path: String,
    records: csv::StringRecordsIntoIter<BufReader<File>>,
    last_t: f64,
}

impl<const N: usize> LogReader<N> {
    pub fn open(path: &Path, header: &[&str; N]) -> Result<Self, LogError> {
        let name = path.display().to_string();
        let file = File::open(path).map_err(|source| LogError::Io { path: name.clone(), source })?;
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(BufReader::new(file));
        let found = reader.headers().map_err(|source| LogError::Csv { path: name.clone(), source })?.clone();
        if found.len() != N || found.iter().zip(header.iter()).any(|(a, b)| a.trim() != *b) {
            return Err(LogError::Schema {
                path: name,
                line: 1,
                reason: format!("expected header {}, found {}", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
            });
        }
        Ok(Self { path: name, records: reader.into_records(), last_t: f64::NEG_INFINITY })
    }

    fn parse(&mut self, rec: csv::StringRecord) -> Result<[f64; N], LogError> {
        let line = rec.position().map_or(0, |p| p.line());
        let schema = |reason: String| LogError::Schema { path: self.path.clone(), line, reason };
        if rec.len() != N {
            return Err(schema(format!("expected {N} fields, found {}", rec.len())));
        }
        let mut row = [0.0; N];
        for (i, field) in rec.iter().enumerate() {
            row[i] = field.trim().parse::<f64>().map_err(|e| schema(format!("column {}: {e}", i + 1)))?;
            if !row[i].is_finite() {
                return Err(schema(format!("column {} is not finite", i + 1)));
            }
        }
        if row[0] < self.last_t {
            return Err(schema(format!("time {} goes backwards", row[0])));
        }
        self.last_t = row[0];
        Ok(row)
    }
}

impl<const N: usize> Iterator for LogReader<N> {
    type Item = Result<[f64; N], LogError>;

    fn next(&mut self) -> Option<Self::Item> {
        let rec = self.records.next()?;
        Some(match rec {
            Ok(rec) => self.parse(rec),
            Err(source) => Err(LogError::Csv { path: self.path.clone(), source }),
        })
    }
}

pub fn gps_from_row(r: &[f64; 7]) -> GpsRecord {
    GpsRecord { t: r[0], lat_deg: r[1], lon_deg: r[2], h: r[3], vel_ned: Vector3::new(r[4], r[5], r[6]) }
}

pub fn odo_from_row(r: &[f64; 2]) -> OdoRecord {
    OdoRecord { t: r[0], speed: r[1] }
}

pub fn ref_from_row(r: &[f64; 10]) -> RefRecord {
    RefRecord {
        t: r[0],
        lat_deg: r[1],
        lon_deg: r[2],
        h: r[3],
        vel_ned: Vector3::new(r[4], r[5], r[6]),
        roll_deg: r[7],
        pitch_deg: r[8],
        yaw_deg: r[9],
    }
}
