//! Deterministic synthetic world: satellites, lane-following vehicles and all
//! of their GNSS, Doppler and UWB observations.

mod constellation;
mod measurements;
mod spp;
mod trajectory;

use std::io::Write;

pub use constellation::{
    elevation_azimuth, epoch_time, generate_constellation, satellite_clocks, visible_satellites, SatelliteClock,
    EARTH_GM, EARTH_ROTATION_RATE,
};
pub use measurements::{synthesize_measurements, EpochMeasurements, MultipathSchedule, VehicleMeasurements, VehicleTruth};
pub use spp::{spp_iterate, spp_solve, SppError};
pub use trajectory::{generate_trajectories, Trajectories, TruthState};

use crate::config::ScenarioConfig;

/// m/s
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
/// Hz
pub const GPS_L1_FREQUENCY: f64 = 1_575.42e6;
/// m
pub const GPS_L1_WAVELENGTH: f64 = SPEED_OF_LIGHT / GPS_L1_FREQUENCY;

/// Tags of the independent random substreams.
pub(crate) mod stream {
    pub const CONSTELLATION: u64 = 1;
    pub const CLOCK: u64 = 2;
    pub const ATMOSPHERE: u64 = 3;
    pub const MULTIPATH: u64 = 4;
    pub const PSEUDORANGE: u64 = 5;
    pub const DOPPLER: u64 = 6;
    pub const UWB: u64 = 7;
    pub const RANGE_DROP: u64 = 8;
}

/// A configured scenario with its truth and multipath bursts precomputed.
#[derive(Debug, Clone)]
pub struct Scenario {
    cfg: ScenarioConfig,
    truth: Trajectories,
    multipath: MultipathSchedule,
}

impl Scenario {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        Self {
            cfg: cfg.clone(),
            truth: generate_trajectories(cfg),
            multipath: MultipathSchedule::generate(cfg),
        }
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn truth(&self) -> &Trajectories {
        &self.truth
    }

    pub fn multipath(&self) -> &MultipathSchedule {
        &self.multipath
    }

    pub fn n_epochs(&self) -> u64 {
        self.cfg.duration as u64
    }

    pub fn measurements(&self, epoch: u64) -> EpochMeasurements {
        let sats = generate_constellation(epoch, &self.cfg);
        synthesize_measurements(&self.truth, &sats, &self.multipath, &self.cfg, epoch)
    }

    /// Writes one JSON record per epoch.
    pub fn dump_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for k in 0..self.n_epochs() {
            serde_json::to_writer(&mut out, &self.measurements(k))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}
