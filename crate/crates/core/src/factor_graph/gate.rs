use serde::{Deserialize, Serialize};

use super::{NodeState, PseudorangeObs, RangeObs, SatelliteId, SatelliteState};
use crate::factor_graph::pseudorange_error;
use crate::geodesy::EcefVector;
use crate::simulator::spp_solve;

/// Thresholds of the measurement residual gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GateConfig {
    /// Largest accepted post-fit SPP residual (m).
    pub pseudorange_threshold: f64,
    /// Largest accepted difference between a UWB range and the SPP baseline (m).
    pub range_threshold: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            pseudorange_threshold: 10.0,
            range_threshold: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatedPseudoranges {
    /// Surviving observations paired with their satellites, in input order.
    pub kept: Vec<(PseudorangeObs, SatelliteState)>,
    pub rejected: Vec<SatelliteId>,
    /// SPP fix on the surviving set, if one exists.
    pub spp: Option<NodeState>,
}

/// Iterated SPP innovation test: while the largest post-fit residual exceeds
/// the threshold and more than four observations remain, drop that
/// observation and re-solve.
pub fn gate_pseudoranges(
    obs: &[PseudorangeObs],
    sats: &[SatelliteState],
    init: &EcefVector,
    cfg: &GateConfig,
) -> GatedPseudoranges {
    let mut kept: Vec<(PseudorangeObs, SatelliteState)> = obs
        .iter()
        .filter_map(|o| sats.iter().find(|s| s.id == o.sat_id).map(|s| (*o, *s)))
        .collect();
    let mut rejected = Vec::new();
    loop {
        let (o, s): (Vec<_>, Vec<_>) = kept.iter().copied().unzip();
        let Ok(fix) = spp_solve(&o, &s, init) else {
            return GatedPseudoranges { kept, rejected, spp: None };
        };
        let worst = kept
            .iter()
            .enumerate()
            .map(|(i, (o, s))| (i, pseudorange_error(&fix, s, o).abs()))
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((i, r)) if r > cfg.pseudorange_threshold && kept.len() > 4 => {
                rejected.push(kept.remove(i).0.sat_id);
            }
            _ => {
                return GatedPseudoranges {
                    kept,
                    rejected,
                    spp: Some(fix),
                }
            }
        }
    }
}

/// Drops ranges that disagree with the SPP baseline by more than the
/// threshold. Ranges touching a vehicle without an SPP fix are kept.
pub fn gate_ranges(ranges: &[RangeObs], spp: &[Option<EcefVector>], cfg: &GateConfig) -> Vec<RangeObs> {
    ranges
        .iter()
        .filter(|r| {
            match (
                spp.get(r.vehicle_a).copied().flatten(),
                spp.get(r.vehicle_b).copied().flatten(),
            ) {
                (Some(a), Some(b)) => (r.value - (a - b).norm()).abs() <= cfg.range_threshold,
                _ => true,
            }
        })
        .copied()
        .collect()
}
