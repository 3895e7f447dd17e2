//! Sliding-window factor graph over all vehicles' position and clock states.
//!
//! Pseudorange, road-plane, inter-vehicle range and Doppler-velocity factors
//! are collected for the last few epochs and solved jointly as a weighted
//! nonlinear least-squares problem.

mod factors;
mod gate;
mod graph;
mod solver;
mod velocity;

pub use factors::{
    factor_jacobian, plane_constraint_error, pseudorange_error, range_error, velocity_error, Factor,
    Linearization,
};
pub use gate::{gate_pseudoranges, gate_ranges, GateConfig, GatedPseudoranges};
pub use graph::{build_graph, EpochInput, FactorCounts, GraphModes, GraphState, VehicleEpoch, DEFAULT_WINDOW_LEN};
pub use solver::{objective, objective_gradient, solve, Solution, SolverConfig};
pub use velocity::estimate_velocity;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::EcefVector;

/// Standard deviation of the Doppler velocity factor (m/s).
pub const VELOCITY_SIGMA: f64 = 0.6;
/// Standard deviation of a UWB range (m).
pub const UWB_RANGE_SIGMA: f64 = 0.3;

pub type SatelliteId = u32;
pub type VehicleId = usize;

/// Identifies one node state; orders lexicographically by vehicle, then epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StateKey {
    pub vehicle: VehicleId,
    pub epoch: u64,
}

impl StateKey {
    pub fn new(vehicle: VehicleId, epoch: u64) -> Self {
        Self { vehicle, epoch }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeState {
    pub position: EcefVector,
    /// Receiver clock bias expressed in meters.
    pub clock_bias: f64,
}

impl NodeState {
    pub fn new(position: EcefVector, clock_bias: f64) -> Self {
        Self { position, clock_bias }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub id: SatelliteId,
    pub position: EcefVector,
    /// m/s
    pub velocity: EcefVector,
    /// Satellite clock drift, m/s.
    pub clock_drift: f64,
    /// Elevation seen from the receiving vehicle, radians.
    pub elevation: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudorangeObs {
    pub sat_id: SatelliteId,
    pub value: f64,
    pub dgnss_correction: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DopplerObs {
    pub sat_id: SatelliteId,
    /// Hz
    pub value: f64,
    /// Carrier wavelength, m.
    pub wavelength: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeObs {
    pub vehicle_a: VehicleId,
    pub vehicle_b: VehicleId,
    pub value: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub velocity: EcefVector,
    /// Receiver clock drift, m/s.
    pub clock_drift: f64,
    pub sigma_v: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FactorGraphError {
    #[error("plane is unavailable and cannot constrain a state")]
    PlaneUnavailable,
    #[error("need at least 4 satellites, got {0}")]
    InsufficientSatellites(usize),
    #[error("geometry matrix is singular (condition number {0:.3e})")]
    SingularGeometry(f64),
    #[error("unit vector undefined: points coincide")]
    DegenerateGeometry,
    #[error("graph has no factors")]
    EmptyGraph,
    #[error("factor references state {0:?} that is not in the window")]
    MissingState(StateKey),
    #[error("solver stopped after {} iterations without converging", .0.iterations)]
    NotConverged(Box<Solution>),
}
