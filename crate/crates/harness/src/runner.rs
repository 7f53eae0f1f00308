//! Runs the requested filters in lockstep over one epoch stream.

use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use thiserror::Error;

use se23nav::earth::{ecef_to_ned, EarthError};
use se23nav::simulator::{misalign, misalignment_rotation, SimError, G0};
use se23nav::{EarthModel, ErrorDefinition, Filter, Hygiene, NavState};

use crate::metrics::{error_row, nav_errors, ErrorRow, COLUMNS};
use crate::records::{gps_row, imu_row, odo_row, ref_row, LogError, LogWriter, GPS_HEADER, IMU_HEADER, ODO_HEADER, REF_HEADER};
use crate::scenario::{Aiding, Scenario};
use crate::source::{Epoch, ReplaySource, SimSource, SourceError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Source(#[from] SourceError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Earth(#[from] EarthError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no reference record at the first epoch (t = {0})")]
    NoInitialReference(f64),
    #[error("epoch stream is empty")]
    Empty,
}

/// One filter's trajectory of errors against the reference.
#[derive(Debug, Clone)]
pub struct FilterRun {
    pub definition: ErrorDefinition,
    pub rows: Vec<ErrorRow>,
    pub hygiene: Hygiene,
    /// Set when the filter stopped with a numerical error; rows end there.
    pub failure: Option<String>,
    /// Whether the IMU stream this filter mechanized hashes to the raw stream.
    pub imu_untouched: bool,
}

impl FilterRun {
    pub fn terminal(&self) -> Option<&ErrorRow> {
        if self.failure.is_some() {
            None
        } else {
            self.rows.last()
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub filters: Vec<FilterRun>,
}

impl RunResult {
    pub fn filter(&self, d: ErrorDefinition) -> Option<&FilterRun> {
        self.filters.iter().find(|f| f.definition == d)
    }
}

/// Writers for the sensor and reference logs of one run.
pub struct LogExport {
    imu: LogWriter,
    aiding: LogWriter,
    reference: LogWriter,
}

/// File names of the exported logs inside a directory.
pub fn log_paths(dir: &Path, aiding: Aiding) -> (PathBuf, PathBuf, PathBuf) {
    let aid = match aiding {
        Aiding::Gps => "gps.csv",
        Aiding::Odometer => "odo.csv",
    };
    (dir.join("imu.csv"), dir.join(aid), dir.join("ref.csv"))
}

impl LogExport {
    pub fn create(dir: &Path, aiding: Aiding) -> Result<Self, LogError> {
        let (imu, aid, reference) = log_paths(dir, aiding);
        let header: &[&str] = match aiding {
            Aiding::Gps => &GPS_HEADER,
            Aiding::Odometer => &ODO_HEADER,
        };
        Ok(Self {
            imu: LogWriter::create(&imu, &IMU_HEADER)?,
            aiding: LogWriter::create(&aid, header)?,
            reference: LogWriter::create(&reference, &REF_HEADER)?,
        })
    }

    fn write(&mut self, e: &Epoch) -> Result<(), LogError> {
        self.imu.write_row(&imu_row(&e.imu))?;
        if let Some(g) = &e.gps {
            self.aiding.write_row(&gps_row(g))?;
        }
        if let Some(o) = &e.odo {
            self.aiding.write_row(&odo_row(o))?;
        }
        if let Some(r) = &e.reference {
            self.reference.write_row(&ref_row(r))?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<(), LogError> {
        self.imu.finish()?;
        self.aiding.finish()?;
        self.reference.finish()
    }
}

/// Estimated starting state: the reference with the scenario's initial
/// attitude, velocity and position errors applied.
pub fn initial_estimate(s: &Scenario, truth: &NavState<f64>, seed: u64, earth: &EarthModel<f64>) -> Result<NavState<f64>, RunError> {
    let mut nav = misalign(truth, &misalignment_rotation(&s.misalignment(seed)), earth)?;
    let g = earth.ecef_to_geodetic(&truth.pos)?;
    let c_ne = ecef_to_ned(g.latitude, g.longitude).inverse();
    nav.vel += c_ne * Vector3::from(s.init.vel_error_ned);
    nav.pos += c_ne * Vector3::from(s.init.pos_error_ned);
    Ok(nav)
}

struct Slot {
    filter: Option<Filter<f64, EarthModel<f64>>>,
    run: FilterRun,
}

impl Slot {
    fn fail(&mut self, e: impl std::fmt::Display) {
        if let Some(f) = self.filter.take() {
            self.run.hygiene = f.hygiene;
        }
        self.run.failure = Some(e.to_string());
    }
}

/// Runs the scenario's filters over an epoch stream.
pub fn run_epochs<I>(
    s: &Scenario,
    definitions: &[ErrorDefinition],
    run: usize,
    seed: u64,
    epochs: I,
    mut export: Option<LogExport>,
) -> Result<RunResult, RunError>
where
    I: Iterator<Item = Result<Epoch, SourceError>>,
{
    let earth = EarthModel::wgs84();
    let gps_r_v = Matrix3::identity() * s.sensors.gps_vel_std.powi(2);
    let gps_r_p = Matrix3::identity() * s.sensors.gps_pos_std.powi(2);
    let mut raw = Hygiene::default();
    let mut slots: Vec<Slot> = Vec::new();
    let mut started = false;

    for epoch in epochs {
        let e = epoch?;
        if let Some(x) = export.as_mut() {
            x.write(&e)?;
        }
        if !started {
            let r = e.reference.ok_or(RunError::NoInitialReference(e.t))?;
            let nav0 = initial_estimate(s, &r.to_nav(&earth), seed, &earth)?;
            for &d in definitions {
                let mut slot = Slot {
                    filter: None,
                    run: FilterRun { definition: d, rows: Vec::new(), hygiene: Hygiene::default(), failure: None, imu_untouched: false },
                };
                match Filter::new(s.filter_config(d), &nav0, e.t, earth) {
                    Ok(f) => slot.filter = Some(f),
                    Err(err) => slot.fail(err),
                }
                slots.push(slot);
            }
            started = true;
        }

        for slot in &mut slots {
            let Some(f) = slot.filter.as_mut() else { continue };
            let mut result = Ok(());
            if let Some(g) = &e.gps {
                result = f.update_gps(&g.velocity_ecef(), &g.position_ecef(&earth), &gps_r_v, &gps_r_p).map(|_| ());
            }
            if let (Ok(()), Some(o)) = (&result, &e.odo) {
                result = f.update_odometer(&o.body_velocity(), &s.odometer_cov(o.speed)).map(|_| ());
            }
            if let Err(err) = result {
                slot.fail(err);
                continue;
            }
            if let Some(r) = &e.reference {
                f.check_covariance();
                match nav_errors(&f.nav(), &r.to_nav(&earth), &earth) {
                    Ok(nav) => {
                        let (bg, ba) = f.state.bias_estimate();
                        let bg = bg.map(|x| x.to_degrees() * 3600.0);
                        let ba = ba.map(|x| x / (1e-6 * G0));
                        slot.run.rows.push(error_row(e.t, &nav, &bg, &ba));
                    }
                    Err(err) => {
                        slot.fail(err);
                        continue;
                    }
                }
            }
            if !e.last {
                if let Err(err) = f.propagate(&e.imu) {
                    slot.fail(err);
                }
            }
        }
        if !e.last {
            raw.record_imu(&e.imu);
        }
    }
    if !started {
        return Err(RunError::Empty);
    }
    if let Some(x) = export {
        x.finish()?;
    }

    let digest = raw.imu_digest();
    let filters = slots
        .into_iter()
        .map(|mut slot| {
            if let Some(f) = slot.filter.take() {
                slot.run.hygiene = f.hygiene;
                slot.run.imu_untouched = slot.run.hygiene.imu_digest() == digest;
            }
            slot.run
        })
        .collect();
    Ok(RunResult { run, seed, filters })
}

/// Seed of Monte Carlo run `r`.
pub fn run_seed(s: &Scenario, r: usize) -> u64 {
    s.seed.wrapping_add(r as u64)
}

/// One simulated run, optionally exporting its sensor and reference logs.
pub fn simulate_run(s: &Scenario, r: usize, export_dir: Option<&Path>) -> Result<RunResult, RunError> {
    let seed = run_seed(s, r);
    let source = SimSource::new(s, seed)?;
    let export = export_dir.map(|d| LogExport::create(d, s.aiding)).transpose()?;
    run_epochs(s, &s.definitions(), r, seed, source, export)
}

/// Every run of the scenario, in run order.
pub fn run_scenario(s: &Scenario) -> Result<Vec<RunResult>, RunError> {
    (0..s.runs).into_par_iter().map(|r| simulate_run(s, r, None)).collect()
}

/// Replays logged data; the scenario supplies the filter setup and the
/// initial errors, drawn with the scenario seed.
pub fn replay_logs(s: &Scenario, imu: &Path, aiding: &Path, reference: &Path) -> Result<RunResult, RunError> {
    let source = ReplaySource::open(s.aiding, imu, aiding, reference, s.max_gap)?;
    run_epochs(s, &s.definitions(), 0, run_seed(s, 0), source, None)
}

/// Writes one error CSV per (run, filter) and a hygiene table.
pub fn write_runs(dir: &Path, results: &[RunResult]) -> Result<(), LogError> {
    for r in results {
        for f in &r.filters {
            let path = dir.join(format!("run{:03}_{}.csv", r.run, f.definition.tag()));
            let mut w = LogWriter::create(&path, &COLUMNS)?;
            for row in &f.rows {
                w.write_row(row)?;
            }
            w.finish()?;
        }
    }
    let header =
        ["run", "filter", "failed", "updates", "min_eigen_ratio", "max_asymmetry", "max_roundtrip_residual", "imu_untouched"];
    let mut w = LogWriter::create(&dir.join("hygiene.csv"), &header)?;
    for r in results {
        for f in &r.filters {
            let h = &f.hygiene;
            let values = [
                f.failure.is_some() as u8 as f64,
                h.updates as f64,
                h.min_eigen_ratio,
                h.max_asymmetry,
                h.max_roundtrip_residual,
                f.imu_untouched as u8 as f64,
            ];
            w.write_fields(&r.run.to_string(), f.definition.tag(), &values)?;
        }
    }
    w.finish()
}
