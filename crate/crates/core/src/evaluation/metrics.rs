use std::collections::BTreeMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::EvaluationError;
use crate::factor_graph::StateKey;
use crate::geodesy::{ecef_to_geodetic, enu_rotation, EcefVector};

/// Position error of one vehicle-epoch in the local frame at the truth point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub key: StateKey,
    /// East, north, up (m).
    pub enu: Vector3<f64>,
    pub hpe: f64,
    pub vpe: f64,
}

/// Errors for every key of `estimates`; both maps must hold the same keys.
pub fn compute_errors(
    estimates: &BTreeMap<StateKey, EcefVector>,
    truth: &BTreeMap<StateKey, EcefVector>,
) -> Result<Vec<ErrorRecord>, EvaluationError> {
    if estimates.len() != truth.len() {
        let missing = estimates
            .keys()
            .find(|k| !truth.contains_key(k))
            .or_else(|| truth.keys().find(|k| !estimates.contains_key(k)));
        return Err(EvaluationError::KeyMismatch(missing.copied()));
    }
    estimates
        .iter()
        .map(|(key, est)| {
            let t = truth.get(key).ok_or(EvaluationError::KeyMismatch(Some(*key)))?;
            Ok(error_record(*key, est, t))
        })
        .collect()
}

pub(crate) fn error_record(key: StateKey, estimate: &EcefVector, truth: &EcefVector) -> ErrorRecord {
    let frame = enu_rotation(&ecef_to_geodetic(truth).expect("truth position is finite"));
    let enu = frame.ecef_to_enu(&(estimate - truth));
    ErrorRecord {
        key,
        enu,
        hpe: enu.x.hypot(enu.y),
        vpe: enu.z.abs(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub h_rmse: f64,
    pub v_rmse: f64,
    /// Nearest-rank 95th percentile of the horizontal error.
    pub cep95: f64,
    pub max_hpe: f64,
    pub max_vpe: f64,
    pub samples: usize,
}

/// Nearest-rank percentile of `values`; `p` in (0, 100].
pub fn nearest_rank(values: &[f64], p: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    Some(sorted[rank.min(sorted.len()) - 1])
}

/// Median with the mean of the two middle values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (sum / n as f64).sqrt()
}

pub fn summarize(records: &[ErrorRecord]) -> Result<Summary, EvaluationError> {
    if records.is_empty() {
        return Err(EvaluationError::Empty);
    }
    // sorted copies keep the sums independent of input order
    let mut hpe: Vec<f64> = records.iter().map(|r| r.hpe).collect();
    let mut vpe: Vec<f64> = records.iter().map(|r| r.vpe).collect();
    hpe.sort_by(f64::total_cmp);
    vpe.sort_by(f64::total_cmp);
    Ok(Summary {
        h_rmse: rms(hpe.iter().copied()),
        v_rmse: rms(vpe.iter().copied()),
        cep95: nearest_rank(&hpe, 95.0).expect("non-empty"),
        max_hpe: *hpe.last().expect("non-empty"),
        max_vpe: *vpe.last().expect("non-empty"),
        samples: records.len(),
    })
}
