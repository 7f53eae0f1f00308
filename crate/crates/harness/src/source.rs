//! Epoch streams: one IMU sample plus whatever aiding and reference records
//! fall on it. The simulator and log replay produce the same stream type, so
//! the filters cannot tell them apart.

use std::path::Path;

use thiserror::Error;

use se23nav::earth::EarthError;
use se23nav::simulator::{generate_truth, GpsRecord, GpsSynth, ImuSynth, OdoRecord, OdoSynth, SimError, TruthGenerator};
use se23nav::{EarthModel, ImuSample};

use crate::records::{
    gps_from_row, odo_from_row, ref_from_row, LogError, LogReader, RefRecord, GPS_HEADER, IMU_HEADER, ODO_HEADER, REF_HEADER,
};
use crate::scenario::{Aiding, Scenario};

#[derive(Debug, Error)]
pub enum SourceError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("IMU gap of {gap} s after t = {t} exceeds {max} s")]
    Gap { t: f64, gap: f64, max: f64 },
    #[error("{0} log is empty")]
    Empty(&'static str),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Earth(#[from] EarthError),
}

/// IMU sample at `t` covering `[t, t + imu.dt]`; `dt` is zero on the last
/// epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Epoch {
    pub t: f64,
    pub imu: ImuSample<f64>,
    pub gps: Option<GpsRecord>,
    pub odo: Option<OdoRecord>,
    pub reference: Option<RefRecord>,
    pub last: bool,
}

/// Synthetic epochs for one Monte Carlo run.
pub struct SimSource {
    truth: TruthGenerator,
    imu: ImuSynth,
    gps: Option<GpsSynth>,
    odo: Option<OdoSynth>,
    earth: EarthModel<f64>,
    dt: f64,
    every: usize,
    k: usize,
}

impl SimSource {
    pub fn new(s: &Scenario, seed: u64) -> Result<Self, SourceError> {
        let spec = s.sensors.spec();
        let (gps, odo) = match s.aiding {
            Aiding::Gps => (Some(GpsSynth::new(&spec, s.sensors.gps_rate_hz, s.dt, seed)?), None),
            Aiding::Odometer => (None, Some(OdoSynth::new(&spec, s.sensors.odo_rate_hz, s.dt, seed)?)),
        };
        Ok(Self {
            truth: generate_truth(&s.profile(), &s.origin(), s.heading(), s.dt)?,
            imu: ImuSynth::new(&spec, seed),
            gps,
            odo,
            earth: EarthModel::wgs84(),
            dt: s.dt,
            every: s.output_every(),
            k: 0,
        })
    }

    /// Constant biases drawn for this run: gyro (rad/s) and accelerometer (m/s^2).
    pub fn biases(&self) -> (nalgebra::Vector3<f64>, nalgebra::Vector3<f64>) {
        (self.imu.gyro_bias, self.imu.accel_bias)
    }

    pub fn len(&self) -> usize {
        self.truth.steps() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    fn epoch(&mut self) -> Result<Option<Epoch>, SourceError> {
        let Some(sample) = self.truth.next() else { return Ok(None) };
        let k = self.k;
        self.k += 1;
        let last = k == self.truth.steps();
        let t = k as f64 * self.dt;
        let mut imu = self.imu.measure(&sample);
        imu.t = t;
        // Same step the replay derives from consecutive timestamps.
        imu.dt = if last { 0.0 } else { (k + 1) as f64 * self.dt - t };
        let gps = match &mut self.gps {
            Some(g) => g.measure(&sample)?,
            None => None,
        };
        let odo = self.odo.as_mut().and_then(|o| o.measure(&sample));
        let reference = if k % self.every == 0 || last { Some(RefRecord::from_nav(t, &sample.nav, &self.earth)?) } else { None };
        Ok(Some(Epoch { t, imu, gps, odo, reference, last }))
    }
}

impl Iterator for SimSource {
    type Item = Result<Epoch, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.epoch().transpose()
    }
}

/// Epochs rebuilt from CSV logs. Aiding and reference records attach to the
/// nearest IMU epoch.
pub struct ReplaySource {
    imu: std::iter::Peekable<LogReader<7>>,
    gps: Option<std::iter::Peekable<LogReader<7>>>,
    odo: Option<std::iter::Peekable<LogReader<2>>>,
    reference: std::iter::Peekable<LogReader<10>>,
    max_gap: f64,
    first: bool,
    failed: bool,
}

impl ReplaySource {
    pub fn open(aiding: Aiding, imu: &Path, aiding_log: &Path, reference: &Path, max_gap: f64) -> Result<Self, SourceError> {
        let (gps, odo) = match aiding {
            Aiding::Gps => (Some(LogReader::open(aiding_log, &GPS_HEADER)?.peekable()), None),
            Aiding::Odometer => (None, Some(LogReader::open(aiding_log, &ODO_HEADER)?.peekable())),
        };
        let mut imu = LogReader::open(imu, &IMU_HEADER)?.peekable();
        if imu.peek().is_none() {
            return Err(SourceError::Empty("IMU"));
        }
        Ok(Self {
            imu,
            gps,
            odo,
            reference: LogReader::open(reference, &REF_HEADER)?.peekable(),
            max_gap,
            first: true,
            failed: false,
        })
    }

    fn epoch(&mut self) -> Result<Option<Epoch>, SourceError> {
        let Some(row) = self.imu.next().transpose()? else { return Ok(None) };
        let t = row[0];
        let next_t = match self.imu.peek() {
            Some(Ok(r)) => Some(r[0]),
            Some(Err(_)) => return Err(self.imu.next().unwrap().unwrap_err().into()),
            None => None,
        };
        if let Some(n) = next_t {
            if n - t > self.max_gap {
                return Err(SourceError::Gap { t, gap: n - t, max: self.max_gap });
            }
        }
        // Records before the midpoint to the next sample belong here; older
        // ones than the first sample by more than the gap bound are dropped.
        let upper = next_t.map_or(t + self.max_gap, |n| 0.5 * (t + n));
        let lower = if self.first { t - self.max_gap } else { f64::NEG_INFINITY };
        self.first = false;
        let gps = match &mut self.gps {
            Some(r) => take_until(r, lower, upper)?.map(|r| gps_from_row(&r)),
            None => None,
        };
        let odo = match &mut self.odo {
            Some(r) => take_until(r, lower, upper)?.map(|r| odo_from_row(&r)),
            None => None,
        };
        let reference = take_until(&mut self.reference, lower, upper)?.map(|r| RefRecord { t, ..ref_from_row(&r) });
        let imu = ImuSample::new(
            t,
            nalgebra::Vector3::new(row[1], row[2], row[3]),
            nalgebra::Vector3::new(row[4], row[5], row[6]),
            next_t.map_or(0.0, |n| n - t),
        );
        Ok(Some(Epoch { t, imu, gps, odo, reference, last: next_t.is_none() }))
    }
}

/// Consumes every record with `t < upper` and returns the latest one at or
/// after `lower`.
fn take_until<const N: usize>(
    r: &mut std::iter::Peekable<LogReader<N>>,
    lower: f64,
    upper: f64,
) -> Result<Option<[f64; N]>, SourceError> {
    let mut out = None;
    loop {
        match r.peek() {
            Some(Ok(row)) if row[0] < upper => {
                let row = *row;
                r.next();
                if row[0] >= lower {
                    out = Some(row);
                }
            }
            Some(Ok(_)) | None => return Ok(out),
            Some(Err(_)) => return Err(r.next().unwrap().unwrap_err().into()),
        }
    }
}

impl Iterator for ReplaySource {
    type Item = Result<Epoch, SourceError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let e = self.epoch().transpose();
        if matches!(e, Some(Err(_))) {
            self.failed = true;
        }
        e
    }
}
