use std::collections::{BTreeMap, VecDeque};

use super::{
    Factor, FactorGraphError, NodeState, PseudorangeObs, RangeObs, SatelliteState, StateKey, VehicleId,
    VelocityEstimate,
};
use crate::plane::Plane;

/// Number of epochs kept in the optimization window.
pub const DEFAULT_WINDOW_LEN: usize = 5;

/// One vehicle's inputs at one epoch, after the residual gate.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleEpoch {
    pub vehicle: VehicleId,
    pub pseudoranges: Vec<(PseudorangeObs, SatelliteState)>,
    pub plane: Option<Plane>,
    pub velocity: Option<VelocityEstimate>,
    pub spp: Option<NodeState>,
}

impl VehicleEpoch {
    pub fn new(vehicle: VehicleId) -> Self {
        Self {
            vehicle,
            pseudoranges: Vec::new(),
            plane: None,
            velocity: None,
            spp: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochInput {
    pub epoch: u64,
    /// Seconds since the scenario start.
    pub time: f64,
    pub vehicles: Vec<VehicleEpoch>,
    pub ranges: Vec<RangeObs>,
}

/// Which optional factor classes enter the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphModes {
    pub use_planes: bool,
    pub use_ranges: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FactorCounts {
    pub pseudorange: usize,
    pub plane: usize,
    pub range: usize,
    pub velocity: usize,
}

/// States and factors of the sliding window.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState {
    modes: GraphModes,
    window_len: usize,
    /// (epoch, time) of each epoch in the window, oldest first.
    window: VecDeque<(u64, f64)>,
    pub states: BTreeMap<StateKey, NodeState>,
    pub factors: Vec<Factor>,
}

impl GraphState {
    pub fn new(modes: GraphModes, window_len: usize) -> Self {
        assert!(window_len >= 1, "window must hold at least one epoch");
        Self {
            modes,
            window_len,
            window: VecDeque::with_capacity(window_len + 1),
            states: BTreeMap::new(),
            factors: Vec::new(),
        }
    }

    pub fn modes(&self) -> GraphModes {
        self.modes
    }

    /// Epochs in the window, oldest first.
    pub fn epochs(&self) -> Vec<u64> {
        self.window.iter().map(|w| w.0).collect()
    }

    pub fn newest_epoch(&self) -> Option<u64> {
        self.window.back().map(|w| w.0)
    }

    pub fn counts(&self) -> FactorCounts {
        let mut c = FactorCounts::default();
        for f in &self.factors {
            match f {
                Factor::Pseudorange { .. } => c.pseudorange += 1,
                Factor::Plane { .. } => c.plane += 1,
                Factor::Range { .. } => c.range += 1,
                Factor::Velocity { .. } => c.velocity += 1,
            }
        }
        c
    }

    /// Replaces state values, e.g. with a solver result; unknown keys are ignored.
    pub fn update_states(&mut self, states: &BTreeMap<StateKey, NodeState>) {
        for (k, v) in self.states.iter_mut() {
            if let Some(s) = states.get(k) {
                *v = *s;
            }
        }
    }

    /// Appends an epoch, then prunes everything older than the window.
    ///
    /// New states start at the SPP fix, or at the vehicle's previous state
    /// moved by its velocity estimate when SPP failed. A vehicle with neither
    /// gets no state (and no factors) this epoch. Existing states keep their
    /// current values.
    pub fn advance_window(&mut self, input: &EpochInput) {
        let prev = self.window.back().copied();
        self.window.push_back((input.epoch, input.time));

        for ve in &input.vehicles {
            let key = StateKey::new(ve.vehicle, input.epoch);
            let prev_state = prev.and_then(|(e, t)| {
                self.states
                    .get(&StateKey::new(ve.vehicle, e))
                    .map(|s| (StateKey::new(ve.vehicle, e), *s, input.time - t))
            });
            let init = match (ve.spp, prev_state) {
                (Some(spp), _) => spp,
                (None, Some((_, s, dt))) => {
                    let v = ve.velocity.map(|v| v.velocity).unwrap_or_default();
                    NodeState::new(s.position + v * dt, s.clock_bias)
                }
                (None, None) => continue,
            };
            self.states.insert(key, init);

            for (obs, sat) in &ve.pseudoranges {
                self.factors.push(Factor::Pseudorange {
                    key,
                    sat: *sat,
                    obs: *obs,
                });
            }
            if self.modes.use_planes {
                if let Some(plane) = ve.plane.filter(|p| p.status.is_usable()) {
                    self.factors.push(Factor::Plane { key, plane });
                }
            }
            if let (Some(velocity), Some((prev_key, _, dt))) = (ve.velocity, prev_state) {
                if dt > 0.0 {
                    self.factors.push(Factor::Velocity {
                        prev: prev_key,
                        curr: key,
                        velocity,
                        dt,
                    });
                }
            }
        }

        if self.modes.use_ranges {
            for r in &input.ranges {
                let (a, b) = (StateKey::new(r.vehicle_a, input.epoch), StateKey::new(r.vehicle_b, input.epoch));
                if r.vehicle_a != r.vehicle_b && self.states.contains_key(&a) && self.states.contains_key(&b) {
                    self.factors.push(Factor::Range { a, b, obs: *r });
                }
            }
        }

        while self.window.len() > self.window_len {
            let (oldest, _) = self.window.pop_front().expect("window is non-empty");
            self.states.retain(|k, _| k.epoch != oldest);
            let states = &self.states;
            self.factors.retain(|f| f.keys().iter().all(|k| states.contains_key(k)));
        }
    }
}

/// Builds the window from scratch over consecutive epochs of input.
pub fn build_graph(
    window_data: &[EpochInput],
    modes: GraphModes,
    window_len: usize,
) -> Result<GraphState, FactorGraphError> {
    let mut graph = GraphState::new(modes, window_len);
    for input in window_data {
        graph.advance_window(input);
    }
    if graph.factors.is_empty() {
        return Err(FactorGraphError::EmptyGraph);
    }
    Ok(graph)
}
