use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::Summary;
use super::pipeline::{EpochRecord, PlaneStats, RunReport, SolverStats};
use super::sweep::SweepReport;
use super::{EvaluationError, MethodMode};

/// Content of `summary.json` for a single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mode: MethodMode,
    pub rate: f64,
    pub seed: u64,
    pub target_vehicle: usize,
    pub h_rmse: f64,
    pub v_rmse: f64,
    pub cep95: f64,
    pub max_hpe: f64,
    pub max_vpe: f64,
    pub samples: usize,
    pub fleet: Summary,
    pub planes: PlaneStats,
    pub solver: SolverStats,
}

impl From<&RunReport> for RunSummary {
    fn from(r: &RunReport) -> Self {
        Self {
            mode: r.mode,
            rate: r.interruption_rate,
            seed: r.seed,
            target_vehicle: r.target_vehicle,
            h_rmse: r.summary.h_rmse,
            v_rmse: r.summary.v_rmse,
            cep95: r.summary.cep95,
            max_hpe: r.summary.max_hpe,
            max_vpe: r.summary.max_vpe,
            samples: r.summary.samples,
            fleet: r.fleet_summary,
            planes: r.planes,
            solver: r.solver,
        }
    }
}

#[derive(Serialize)]
struct EpochRow<'a> {
    epoch: u64,
    vehicle: usize,
    mode: &'a str,
    err_e: f64,
    err_n: f64,
    err_u: f64,
    hpe: f64,
    vpe: f64,
    n_sats: usize,
    n_ranges: usize,
    plane_status: &'a str,
    solver_iters: usize,
}

fn csv_error(e: csv::Error) -> EvaluationError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => EvaluationError::Io(io),
        other => EvaluationError::Serialize(format!("{other:?}")),
    }
}

/// Per-epoch CSV; modes without planes report `n/a` as plane status.
pub fn write_epoch_csv<W: Write>(writer: W, records: &[EpochRecord]) -> Result<(), EvaluationError> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(EpochRow {
            epoch: r.epoch,
            vehicle: r.vehicle,
            mode: r.mode.as_str(),
            err_e: r.err_e,
            err_n: r.err_n,
            err_u: r.err_u,
            hpe: r.hpe,
            vpe: r.vpe,
            n_sats: r.n_sats,
            n_ranges: r.n_ranges,
            plane_status: r.plane_status.map_or("n/a", |s| s.as_str()),
            solver_iters: r.solver_iters,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(mut writer: W, report: &RunReport) -> Result<(), EvaluationError> {
    serde_json::to_writer_pretty(&mut writer, &RunSummary::from(report))
        .map_err(|e| EvaluationError::Serialize(e.to_string()))?;
    writeln!(writer)?;
    Ok(())
}

#[derive(Serialize)]
struct RunRow {
    rate: f64,
    mode: &'static str,
    seed: u64,
    h_rmse: f64,
    v_rmse: f64,
    cep95: f64,
    max_hpe: f64,
    max_vpe: f64,
    samples: usize,
    planes_available: usize,
    planes_after_exclusion: usize,
    planes_unavailable: usize,
    solver_non_converged: usize,
}

#[derive(Serialize)]
struct MedianRow {
    rate: f64,
    mode: &'static str,
    runs: usize,
    median_h_rmse: f64,
    median_v_rmse: f64,
    median_cep95: f64,
    median_max_hpe: f64,
    median_max_vpe: f64,
}

/// Writes the per-run table to `runs` and the median table to `aggregate`.
pub fn write_sweep_csv<A: Write, B: Write>(runs: A, aggregate: B, report: &SweepReport) -> Result<(), EvaluationError> {
    let mut w = csv::Writer::from_writer(runs);
    for r in &report.rows {
        w.serialize(RunRow {
            rate: r.rate,
            mode: r.mode.as_str(),
            seed: r.seed,
            h_rmse: r.summary.h_rmse,
            v_rmse: r.summary.v_rmse,
            cep95: r.summary.cep95,
            max_hpe: r.summary.max_hpe,
            max_vpe: r.summary.max_vpe,
            samples: r.summary.samples,
            planes_available: r.planes.available,
            planes_after_exclusion: r.planes.available_after_exclusion,
            planes_unavailable: r.planes.unavailable,
            solver_non_converged: r.solver.non_converged,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(aggregate);
    for r in &report.aggregate {
        w.serialize(MedianRow {
            rate: r.rate,
            mode: r.mode.as_str(),
            runs: r.runs,
            median_h_rmse: r.h_rmse,
            median_v_rmse: r.v_rmse,
            median_cep95: r.cep95,
            median_max_hpe: r.max_hpe,
            median_max_vpe: r.max_vpe,
        })
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}
