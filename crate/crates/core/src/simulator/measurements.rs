use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::{Distribution, Geometric, Normal};
use serde::{Deserialize, Serialize};

use super::constellation::{epoch_time, satellite_clocks, visible_satellites};
use super::trajectory::{Trajectories, TruthState};
use super::{stream, GPS_L1_WAVELENGTH};
use crate::config::ScenarioConfig;
use crate::factor_graph::{DopplerObs, PseudorangeObs, RangeObs, SatelliteState, VehicleId, UWB_RANGE_SIGMA};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMeasurements {
    pub vehicle: VehicleId,
    /// Tracked satellites, ascending id, elevations relative to this vehicle.
    pub satellites: Vec<SatelliteState>,
    /// One per tracked satellite, same order.
    pub pseudoranges: Vec<PseudorangeObs>,
    pub dopplers: Vec<DopplerObs>,
}

/// Truth record for evaluation; never handed to the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleTruth {
    pub vehicle: VehicleId,
    #[serde(flatten)]
    pub truth: TruthState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMeasurements {
    pub epoch: u64,
    /// s since the scenario start
    pub time: f64,
    pub vehicles: Vec<VehicleMeasurements>,
    /// Surviving inter-vehicle ranges, `vehicle_a < vehicle_b`.
    pub ranges: Vec<RangeObs>,
    pub truth: Vec<VehicleTruth>,
}

/// Multipath bias of every (vehicle, satellite) link over the scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathSchedule {
    /// `[vehicle][satellite index][epoch]`, m
    bias: Vec<Vec<Vec<f64>>>,
}

impl MultipathSchedule {
    /// Bursts start with probability `multipath_rate` on idle epochs, carry a
    /// uniform positive bias and last a geometric number of epochs.
    pub fn generate(cfg: &ScenarioConfig) -> Self {
        let n = &cfg.noise;
        let n_sats = cfg.constellation.planes * cfg.constellation.per_plane;
        let length = Geometric::new(1.0 / n.multipath_mean_duration).expect("mean duration >= 1");
        let bias = (0..cfg.n_vehicles)
            .map(|m| {
                (0..n_sats)
                    .map(|s| {
                        let mut r = rng::substream(cfg.seed, &[stream::MULTIPATH, m as u64, s as u64]);
                        let mut out = vec![0.0; cfg.duration];
                        let mut k = 0;
                        while k < cfg.duration {
                            if n.multipath_rate > 0.0 && r.random::<f64>() < n.multipath_rate {
                                let b = r.random_range(n.multipath_min..=n.multipath_max);
                                let len = 1 + length.sample(&mut r) as usize;
                                for slot in out.iter_mut().skip(k).take(len) {
                                    *slot = b;
                                }
                                k += len;
                            } else {
                                k += 1;
                            }
                        }
                        out
                    })
                    .collect()
            })
            .collect();
        Self { bias }
    }

    pub fn bias(&self, vehicle: usize, sat_id: u32, epoch: u64) -> f64 {
        self.bias[vehicle][sat_id as usize - 1][epoch as usize]
    }

    /// Fraction of link-epochs carrying a burst.
    pub fn occupancy(&self) -> f64 {
        let (hit, total) = self.bias.iter().flatten().fold((0usize, 0usize), |(h, t), link| {
            (h + link.iter().filter(|b| **b != 0.0).count(), t + link.len())
        });
        if total == 0 {
            0.0
        } else {
            hit as f64 / total as f64
        }
    }
}

/// Tropospheric plus ionospheric delay common to the vehicle and the
/// reference station (m).
fn common_mode_delay(elevation: f64, time: f64, phase: f64) -> f64 {
    let s = elevation.sin();
    let tropo = 2.4 / s;
    let iono_zenith = 3.0 + 2.0 * (TAU * time / 7200.0 + phase).sin();
    let obliquity = 1.0 / (1.0 - (0.9478 * elevation.cos()).powi(2)).sqrt();
    tropo + iono_zenith * obliquity
}

/// Zenith-scaled pseudorange noise: `a = b = base / sqrt(2)`, so the sigma
/// at zenith equals `base`.
fn pseudorange_noise_sigma(base: f64, elevation: f64) -> f64 {
    let half = base * base / 2.0;
    (half + half / elevation.sin().powi(2)).sqrt()
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma is finite and non-negative")
}

/// All observations of one epoch.
///
/// Every random draw comes from a substream keyed by measurement class,
/// vehicle (or vehicle pair) and epoch, so the range drop rate changes the
/// range lists and nothing else.
pub fn synthesize_measurements(
    truth: &Trajectories,
    sats: &[SatelliteState],
    multipath: &MultipathSchedule,
    cfg: &ScenarioConfig,
    epoch: u64,
) -> EpochMeasurements {
    let n = &cfg.noise;
    let time = epoch_time(cfg, epoch);
    let clocks = satellite_clocks(cfg, epoch);
    let mut phases = rng::substream(cfg.seed, &[stream::ATMOSPHERE]);
    let phases: Vec<f64> = (0..clocks.len()).map(|_| phases.random_range(0.0..TAU)).collect();

    let mut vehicles = Vec::with_capacity(truth.n_vehicles());
    let mut truths = Vec::with_capacity(truth.n_vehicles());
    for m in 0..truth.n_vehicles() {
        let t: &TruthState = truth.at(m, epoch);
        let p = t.state.position;
        let visible = visible_satellites(sats, &p, m, epoch, cfg);
        let mut pr_rng = rng::substream(cfg.seed, &[stream::PSEUDORANGE, m as u64, epoch]);
        let mut dop_rng = rng::substream(cfg.seed, &[stream::DOPPLER, m as u64, epoch]);
        let doppler_noise = normal(n.doppler_sigma);
        let differential = normal(n.differential_sigma);

        let mut pseudoranges = Vec::with_capacity(visible.len());
        let mut dopplers = Vec::with_capacity(visible.len());
        for s in &visible {
            let i = s.id as usize - 1;
            let los = s.position - p;
            let geometric = los.norm();
            let e = los / geometric;
            let correction = -clocks[i].offset + common_mode_delay(s.elevation, time, phases[i]);
            let error = normal(pseudorange_noise_sigma(n.pseudorange_sigma_base, s.elevation)).sample(&mut pr_rng)
                + differential.sample(&mut pr_rng)
                + multipath.bias(m, s.id, epoch);
            pseudoranges.push(PseudorangeObs {
                sat_id: s.id,
                value: geometric + t.state.clock_bias + correction + error,
                dgnss_correction: correction,
                sigma: cfg.estimator.pseudorange_sigma(s.elevation),
            });
            let rate = (s.velocity - t.velocity).dot(&e) - s.clock_drift + t.clock_drift;
            dopplers.push(DopplerObs {
                sat_id: s.id,
                value: -(rate + doppler_noise.sample(&mut dop_rng)) / GPS_L1_WAVELENGTH,
                wavelength: GPS_L1_WAVELENGTH,
            });
        }
        vehicles.push(VehicleMeasurements {
            vehicle: m,
            satellites: visible,
            pseudoranges,
            dopplers,
        });
        truths.push(VehicleTruth { vehicle: m, truth: *t });
    }

    let mut ranges = Vec::new();
    let uwb = normal(n.uwb_sigma);
    for a in 0..truth.n_vehicles() {
        for b in a + 1..truth.n_vehicles() {
            let pair = [a as u64, b as u64, epoch];
            let mut noise_rng = rng::substream(cfg.seed, &[stream::UWB, pair[0], pair[1], pair[2]]);
            let mut drop_rng = rng::substream(cfg.seed, &[stream::RANGE_DROP, pair[0], pair[1], pair[2]]);
            let value = (truth.at(a, epoch).state.position - truth.at(b, epoch).state.position).norm()
                + uwb.sample(&mut noise_rng);
            if drop_rng.random::<f64>() < cfg.interruption_rate {
                continue;
            }
            ranges.push(RangeObs {
                vehicle_a: a,
                vehicle_b: b,
                value,
                sigma: UWB_RANGE_SIGMA,
            });
        }
    }

    EpochMeasurements {
        epoch,
        time: epoch as f64 * cfg.epoch_interval,
        vehicles,
        ranges,
        truth: truths,
    }
}
