use nalgebra::{Matrix4, Vector3, Vector4};
use thiserror::Error;

use crate::factor_graph::{pseudorange_error, NodeState, PseudorangeObs, SatelliteState};
use crate::geodesy::EcefVector;

const MAX_ITERATIONS: usize = 20;
const STEP_TOLERANCE: f64 = 1e-4;
const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SppError {
    #[error("need at least 4 pseudoranges, got {0}")]
    InsufficientSatellites(usize),
    #[error("satellite geometry is singular (condition number {0:.3e})")]
    SingularGeometry(f64),
    #[error("no convergence after {0} iterations")]
    NotConverged(usize),
}

/// Weighted least-squares single point position and clock bias.
///
/// `obs[i]` pairs with `sats[i]`. Iterates Gauss-Newton until the update is
/// shorter than 0.1 mm.
pub fn spp_solve(obs: &[PseudorangeObs], sats: &[SatelliteState], init: &EcefVector) -> Result<NodeState, SppError> {
    spp_iterate(obs, sats, init).map(|(state, _)| state)
}

/// As [`spp_solve`], also returning the number of iterations taken.
pub fn spp_iterate(
    obs: &[PseudorangeObs],
    sats: &[SatelliteState],
    init: &EcefVector,
) -> Result<(NodeState, usize), SppError> {
    let n = obs.len().min(sats.len());
    if n < 4 {
        return Err(SppError::InsufficientSatellites(n));
    }
    let mut state = NodeState::new(*init, 0.0);
    for iteration in 1..=MAX_ITERATIONS {
        let mut h = Matrix4::zeros();
        let mut g = Vector4::zeros();
        for (o, s) in obs.iter().zip(sats) {
            let los = s.position - state.position;
            let e: Vector3<f64> = los / los.norm();
            // Jacobian of the error (measurement minus model) w.r.t. [p, b]
            let j = Vector4::new(e.x, e.y, e.z, -1.0);
            let w = 1.0 / (o.sigma * o.sigma);
            let r = pseudorange_error(&state, s, o);
            h += j * j.transpose() * w;
            g += j * (w * r);
        }
        let cond = condition_number(&h);
        if !(cond <= MAX_CONDITION) {
            return Err(SppError::SingularGeometry(cond));
        }
        let Some(chol) = h.cholesky() else {
            return Err(SppError::SingularGeometry(cond));
        };
        let dx = -chol.solve(&g);
        state.position += dx.fixed_rows::<3>(0);
        state.clock_bias += dx[3];
        if dx.norm() < STEP_TOLERANCE {
            return Ok((state, iteration));
        }
    }
    Err(SppError::NotConverged(MAX_ITERATIONS))
}

fn condition_number(h: &Matrix4<f64>) -> f64 {
    let eig = h.symmetric_eigen().eigenvalues;
    let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lo > 0.0 {
        hi / lo
    } else {
        f64::INFINITY
    }
}
