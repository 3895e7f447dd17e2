#![allow(dead_code)]

use std::collections::BTreeMap;

use coopnav::factor_graph::{
    DopplerObs, EpochInput, NodeState, PseudorangeObs, RangeObs, SatelliteState, StateKey, VehicleEpoch,
};
use coopnav::geodesy::{enu_rotation, geodetic_to_ecef, EcefVector, EnuRotation, GeodeticPoint};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const GPS_L1_WAVELENGTH: f64 = 299_792_458.0 / 1_575.42e6;

pub fn site() -> (GeodeticPoint, EcefVector, EnuRotation) {
    let g = GeodeticPoint::from_degrees(39.95, 116.32, 45.0);
    (g, geodetic_to_ecef(&g), enu_rotation(&g))
}

/// `n` satellites at 21,000 km slant range spread over the local sky.
pub fn sky(rx: &EcefVector, s: &EnuRotation, n: usize, seed: u64) -> Vec<SatelliteState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let az = (i as f64 + rng.random_range(0.0..0.8)) * std::f64::consts::TAU / n as f64;
            let el: f64 = rng.random_range(0.2..1.45);
            let dir = s.enu_to_ecef(&Vector3::new(az.sin() * el.cos(), az.cos() * el.cos(), el.sin()));
            SatelliteState {
                id: i as u32 + 1,
                position: rx + dir * 2.1e7,
                velocity: Vector3::new(
                    rng.random_range(-3000.0..3000.0),
                    rng.random_range(-3000.0..3000.0),
                    rng.random_range(-3000.0..3000.0),
                ),
                clock_drift: rng.random_range(-0.1..0.1),
                elevation: el,
            }
        })
        .collect()
}

pub fn pseudoranges(truth: &NodeState, sats: &[SatelliteState], noise: f64, rng: &mut ChaCha8Rng) -> Vec<PseudorangeObs> {
    let normal = Normal::new(0.0, noise.max(1e-300)).unwrap();
    sats.iter()
        .map(|s| PseudorangeObs {
            sat_id: s.id,
            value: (truth.position - s.position).norm()
                + truth.clock_bias
                + 7.5
                + if noise > 0.0 { normal.sample(rng) } else { 0.0 },
            dgnss_correction: 7.5,
            sigma: noise.max(1.0),
        })
        .collect()
}

pub fn dopplers(rx: &EcefVector, v: &Vector3<f64>, drift: f64, sats: &[SatelliteState]) -> Vec<DopplerObs> {
    sats.iter()
        .map(|s| {
            let e = (s.position - rx).normalize();
            DopplerObs {
                sat_id: s.id,
                value: (-(s.velocity - v).dot(&e) + s.clock_drift - drift) / GPS_L1_WAVELENGTH,
                wavelength: GPS_L1_WAVELENGTH,
            }
        })
        .collect()
}

/// Vehicle-epoch input with exact pseudoranges and the SPP seed offset from truth.
pub fn vehicle_epoch(vehicle: usize, truth: &NodeState, sats: &[SatelliteState], init_offset: Vector3<f64>) -> VehicleEpoch {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let obs = pseudoranges(truth, sats, 0.0, &mut rng);
    VehicleEpoch {
        vehicle,
        pseudoranges: obs.into_iter().zip(sats.iter().copied()).collect(),
        plane: None,
        velocity: None,
        spp: Some(NodeState::new(truth.position + init_offset, 0.0)),
    }
}

pub fn range(a: usize, b: usize, pa: &EcefVector, pb: &EcefVector) -> RangeObs {
    RangeObs {
        vehicle_a: a,
        vehicle_b: b,
        value: (pa - pb).norm(),
        sigma: 0.3,
    }
}

pub fn epoch_input(epoch: u64, vehicles: Vec<VehicleEpoch>, ranges: Vec<RangeObs>) -> EpochInput {
    EpochInput {
        epoch,
        time: epoch as f64,
        vehicles,
        ranges,
    }
}

pub fn max_position_error(a: &BTreeMap<StateKey, NodeState>, b: &BTreeMap<StateKey, NodeState>) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .map(|(k, s)| (s.position - b[k].position).norm())
        .fold(0.0, f64::max)
}
