use serde::{Deserialize, Serialize};

use super::metrics::{error_record, summarize, ErrorRecord, Summary};
use super::{EvaluationError, MethodMode};
use crate::config::ScenarioConfig;
use crate::factor_graph::{
    estimate_velocity, gate_pseudoranges, gate_ranges, solve, EpochInput, Factor, FactorGraphError, GraphState,
    StateKey, VehicleEpoch,
};
use crate::geodesy::{ecef_to_geodetic, project_to_road, EcefVector};
use crate::plane::{build_plane, PlaneStatus, PositionHistory, PositionRecord};
use crate::rng;
use crate::simulator::Scenario;

const PLANE_STREAM: u64 = 0x504c_414e_45;

/// One row of the per-epoch output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u64,
    pub vehicle: usize,
    pub mode: MethodMode,
    pub err_e: f64,
    pub err_n: f64,
    pub err_u: f64,
    pub hpe: f64,
    pub vpe: f64,
    /// Pseudoranges that passed the residual gate.
    pub n_sats: usize,
    /// Range factors touching this vehicle at this epoch.
    pub n_ranges: usize,
    /// `None` in modes without plane factors.
    pub plane_status: Option<PlaneStatus>,
    pub solver_iters: usize,
}

impl EpochRecord {
    pub fn error(&self) -> ErrorRecord {
        ErrorRecord {
            key: StateKey::new(self.vehicle, self.epoch),
            enu: nalgebra::Vector3::new(self.err_e, self.err_n, self.err_u),
            hpe: self.hpe,
            vpe: self.vpe,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaneStats {
    pub available: usize,
    pub available_after_exclusion: usize,
    pub unavailable: usize,
}

impl PlaneStats {
    fn add(&mut self, status: PlaneStatus) {
        match status {
            PlaneStatus::Available => self.available += 1,
            PlaneStatus::AvailableAfterExclusion => self.available_after_exclusion += 1,
            PlaneStatus::Unavailable => self.unavailable += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.available + self.available_after_exclusion + self.unavailable
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolverStats {
    pub solves: usize,
    pub iterations: usize,
    pub non_converged: usize,
    /// Epochs whose graph had no factors.
    pub empty: usize,
    /// Solves aborted by a structural error; the window keeps its initial states.
    pub failed: usize,
    /// Vehicle-epochs without any state estimate.
    pub missing_estimates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: MethodMode,
    pub interruption_rate: f64,
    pub seed: u64,
    pub target_vehicle: usize,
    /// Ordered by epoch, then vehicle.
    pub records: Vec<EpochRecord>,
    /// Over the target vehicle's records.
    pub summary: Summary,
    /// Over every vehicle's records.
    pub fleet_summary: Summary,
    pub planes: PlaneStats,
    pub solver: SolverStats,
}

impl RunReport {
    pub fn vehicle_errors(&self, vehicle: usize) -> Vec<ErrorRecord> {
        self.records.iter().filter(|r| r.vehicle == vehicle).map(|r| r.error()).collect()
    }
}

/// Runs the full estimation loop over the scenario.
///
/// Each epoch: simulate, gate pseudoranges with SPP, estimate velocity from
/// Dopplers, build planes from the fed-back history, advance and solve the
/// window, then record the newest states and feed them back.
pub fn run_scenario(cfg: &ScenarioConfig, mode: MethodMode) -> Result<RunReport, EvaluationError> {
    cfg.validate().map_err(|e| EvaluationError::Config(e.to_string()))?;
    let scenario = Scenario::new(cfg);
    let est = &cfg.estimator;
    let n = cfg.n_vehicles;
    let mut plane_cfg = est.plane.clone();
    plane_cfg.fault_exclusion &= mode.fault_exclusion();

    let mut graph = GraphState::new(mode.graph_modes(), est.window_len);
    let mut history = PositionHistory::new(n, plane_cfg.history_capacity);
    let mut last: Vec<Option<EcefVector>> = vec![None; n];
    let mut records = Vec::with_capacity(n * cfg.duration);
    let mut planes = PlaneStats::default();
    let mut solver = SolverStats::default();

    for k in 0..scenario.n_epochs() {
        let meas = scenario.measurements(k);
        let snapshot = if mode.uses_planes() { history.snapshot() } else { Vec::new() };
        let mut vehicles = Vec::with_capacity(n);
        let mut statuses = vec![None; n];
        let mut n_sats = vec![0; n];
        for v in &meas.vehicles {
            let m = v.vehicle;
            let init = last[m].unwrap_or_else(EcefVector::zeros);
            let gated = gate_pseudoranges(&v.pseudoranges, &v.satellites, &init, &est.gate);
            let anchor = gated.spp.map(|s| s.position).or(last[m]);
            let velocity = anchor.and_then(|p| estimate_velocity(&v.dopplers, &v.satellites, &p).ok());
            let mut plane = None;
            if mode.uses_planes() {
                let status = match &gated.spp {
                    Some(fix) => {
                        let seed = rng::derive_seed(cfg.seed, &[PLANE_STREAM, m as u64, k]);
                        let h = cfg.vehicles.antenna_height(m);
                        let built = build_plane(&snapshot, fix.position, h, m, k, &plane_cfg, seed);
                        plane = built.usable().copied();
                        built.status
                    }
                    None => PlaneStatus::Unavailable,
                };
                planes.add(status);
                statuses[m] = Some(status);
            }
            n_sats[m] = gated.kept.len();
            vehicles.push(VehicleEpoch {
                vehicle: m,
                pseudoranges: gated.kept,
                plane,
                velocity,
                spp: gated.spp,
            });
        }
        let spp: Vec<Option<EcefVector>> = (0..n)
            .map(|m| vehicles.iter().find(|v| v.vehicle == m).and_then(|v| v.spp.map(|s| s.position)))
            .collect();
        let ranges = if mode.graph_modes().use_ranges {
            gate_ranges(&meas.ranges, &spp, &est.gate)
        } else {
            Vec::new()
        };
        graph.advance_window(&EpochInput {
            epoch: k,
            time: meas.time,
            vehicles,
            ranges,
        });

        let iterations = match solve(&graph, &est.solver) {
            Ok(sol) => {
                graph.update_states(&sol.states);
                solver.solves += 1;
                sol.iterations
            }
            Err(FactorGraphError::NotConverged(sol)) => {
                graph.update_states(&sol.states);
                solver.solves += 1;
                solver.non_converged += 1;
                sol.iterations
            }
            Err(FactorGraphError::EmptyGraph) => {
                solver.empty += 1;
                0
            }
            Err(_) => {
                solver.failed += 1;
                0
            }
        };
        solver.iterations += iterations;

        let mut n_ranges = vec![0; n];
        for f in &graph.factors {
            if let Factor::Range { a, b, .. } = f {
                if a.epoch == k {
                    n_ranges[a.vehicle] += 1;
                    n_ranges[b.vehicle] += 1;
                }
            }
        }
        for truth in &meas.truth {
            let m = truth.vehicle;
            let Some(state) = graph.states.get(&StateKey::new(m, k)) else {
                solver.missing_estimates += 1;
                continue;
            };
            let e = error_record(StateKey::new(m, k), &state.position, &truth.truth.state.position);
            records.push(EpochRecord {
                epoch: k,
                vehicle: m,
                mode,
                err_e: e.enu.x,
                err_n: e.enu.y,
                err_u: e.enu.z,
                hpe: e.hpe,
                vpe: e.vpe,
                n_sats: n_sats[m],
                n_ranges: n_ranges[m],
                plane_status: statuses[m],
                solver_iters: iterations,
            });
            last[m] = Some(state.position);
            let geo = ecef_to_geodetic(&state.position).map_err(|e| EvaluationError::Numerical(e.to_string()))?;
            history.push(PositionRecord {
                vehicle_id: m,
                epoch: k,
                road_point: project_to_road(&state.position, cfg.vehicles.antenna_height(m), &geo),
            });
        }
    }

    let target: Vec<ErrorRecord> = records
        .iter()
        .filter(|r| r.vehicle == est.target_vehicle)
        .map(|r| r.error())
        .collect();
    let all: Vec<ErrorRecord> = records.iter().map(|r| r.error()).collect();
    Ok(RunReport {
        mode,
        interruption_rate: cfg.interruption_rate,
        seed: cfg.seed,
        target_vehicle: est.target_vehicle,
        summary: summarize(&target)?,
        fleet_summary: summarize(&all)?,
        records,
        planes,
        solver,
    })
}
