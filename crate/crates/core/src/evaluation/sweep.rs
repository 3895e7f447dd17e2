use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{median, Summary};
use super::pipeline::{run_scenario, PlaneStats, SolverStats};
use super::{EvaluationError, MethodMode};
use crate::config::{ScenarioConfig, SweepConfig};

/// One run of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub rate: f64,
    pub mode: MethodMode,
    pub seed: u64,
    pub summary: Summary,
    pub planes: PlaneStats,
    pub solver: SolverStats,
}

/// Medians over the seeds of one (rate, mode) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub rate: f64,
    pub mode: MethodMode,
    pub runs: usize,
    pub h_rmse: f64,
    pub v_rmse: f64,
    pub cep95: f64,
    pub max_hpe: f64,
    pub max_vpe: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Rate-major, then mode, then seed, in the order of the sweep config.
    pub rows: Vec<SweepRow>,
    /// One row per (rate, mode), same order.
    pub aggregate: Vec<AggregateRow>,
}

/// Runs every (rate, mode, seed) combination in parallel on the current
/// rayon pool. Seeds are `cfg.seed + i`; results do not depend on the
/// number of worker threads.
pub fn interruption_sweep(cfg: &ScenarioConfig, sweep: &SweepConfig) -> Result<SweepReport, EvaluationError> {
    if sweep.seeds == 0 || sweep.rates.is_empty() || sweep.modes.is_empty() {
        return Err(EvaluationError::Config("sweep needs at least one rate, mode and seed".into()));
    }
    let jobs: Vec<(f64, MethodMode, u64)> = sweep
        .rates
        .iter()
        .flat_map(|&rate| {
            sweep.modes.iter().flat_map(move |&mode| {
                (0..sweep.seeds as u64).map(move |i| (rate, mode, cfg.seed.wrapping_add(i)))
            })
        })
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(rate, mode, seed)| {
            let mut run_cfg = cfg.clone();
            run_cfg.interruption_rate = rate;
            run_cfg.seed = seed;
            let report = run_scenario(&run_cfg, mode)?;
            Ok(SweepRow {
                rate,
                mode,
                seed,
                summary: report.summary,
                planes: report.planes,
                solver: report.solver,
            })
        })
        .collect::<Result<Vec<_>, EvaluationError>>()?;

    let aggregate = rows
        .chunks(sweep.seeds)
        .map(|cell| {
            let pick = |f: fn(&Summary) -> f64| {
                median(&cell.iter().map(|r| f(&r.summary)).collect::<Vec<_>>()).expect("non-empty cell")
            };
            AggregateRow {
                rate: cell[0].rate,
                mode: cell[0].mode,
                runs: cell.len(),
                h_rmse: pick(|s| s.h_rmse),
                v_rmse: pick(|s| s.v_rmse),
                cep95: pick(|s| s.cep95),
                max_hpe: pick(|s| s.max_hpe),
                max_vpe: pick(|s| s.max_vpe),
            }
        })
        .collect();
    Ok(SweepReport { rows, aggregate })
}
