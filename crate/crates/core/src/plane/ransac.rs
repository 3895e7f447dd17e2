use rand::Rng;

use super::{FitPointSet, PlaneConfig, PlaneError};
use crate::geodesy::EcefVector;
use crate::rng;

/// Resampling budget per iteration when drawn triples are collinear.
const MAX_DRAWS_PER_ITERATION: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct RansacTrace {
    /// Indices (into the input) of the best consensus set, ascending.
    pub best: Vec<usize>,
    /// Triple sampled at each completed iteration.
    pub triples: Vec<[usize; 3]>,
    /// Inlier count of each sampled candidate plane.
    pub candidate_counts: Vec<usize>,
    pub early_exit: bool,
}

/// Unit normal of the plane through three points, or `None` when the points
/// are collinear relative to their spread.
fn plane_normal(p: &[EcefVector; 3]) -> Option<EcefVector> {
    let u = p[1] - p[0];
    let v = p[2] - p[0];
    let cross = u.cross(&v);
    let scale = u.norm() * v.norm();
    if !(scale > 0.0) || cross.norm() < 1e-6 * scale {
        return None;
    }
    Some(cross.normalize())
}

pub(crate) fn ransac_run(set: &FitPointSet, cfg: &PlaneConfig, rng_seed: u64) -> Result<RansacTrace, PlaneError> {
    let n = set.points.len();
    if n < 3 {
        return Err(PlaneError::TooFewPoints(n));
    }
    let mut rng = rng::substream(rng_seed, &[0x7a5ac]);
    let mut trace = RansacTrace {
        best: Vec::new(),
        triples: Vec::new(),
        candidate_counts: Vec::new(),
        early_exit: false,
    };

    'iterations: for _ in 0..cfg.ransac_max_iterations {
        let mut draws = 0;
        let (triple, normal) = loop {
            if draws == MAX_DRAWS_PER_ITERATION {
                break 'iterations;
            }
            draws += 1;
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            let k = rng.random_range(0..n);
            if i == j || j == k || i == k {
                continue;
            }
            let pts = [set.points[i], set.points[j], set.points[k]];
            if let Some(normal) = plane_normal(&pts) {
                break ([i, j, k], normal);
            }
        };

        // distances measured from a point on the candidate plane keep ECEF
        // magnitudes out of the subtraction
        let anchor = set.points[triple[0]];
        let inliers: Vec<usize> = (0..n)
            .filter(|&m| normal.dot(&(set.points[m] - anchor)).abs() < cfg.residual_threshold)
            .collect();
        trace.triples.push(triple);
        trace.candidate_counts.push(inliers.len());
        if inliers.len() > trace.best.len() {
            trace.best = inliers;
        }
        if trace.best.len() == n {
            trace.early_exit = true;
            break;
        }
    }

    if trace.triples.is_empty() {
        return Err(PlaneError::DegenerateGeometry(0.0));
    }
    Ok(trace)
}

/// RANSAC fault exclusion: returns the largest consensus set found over at
/// most `ransac_max_iterations` random three-point planes.
pub fn ransac_exclude(set: &FitPointSet, cfg: &PlaneConfig, rng_seed: u64) -> Result<FitPointSet, PlaneError> {
    let trace = ransac_run(set, cfg, rng_seed)?;
    Ok(set.with_points(trace.best.iter().map(|&i| set.points[i]).collect()))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::{road_points, site};
    use super::super::{detect_availability, fit_plane_svd, PlaneStatus};
    use super::*;
    use nalgebra::Vector3;
    use proptest::prelude::*;

    #[test]
    fn coplanar_set_exits_early_with_everything() {
        let (origin, _) = site();
        let set = FitPointSet::new(origin, road_points(20, 1));
        let trace = ransac_run(&set, &PlaneConfig::default(), 3).unwrap();
        assert!(trace.early_exit);
        assert_eq!(trace.triples.len(), 1);
        assert_eq!(ransac_exclude(&set, &PlaneConfig::default(), 3).unwrap(), set);
    }

    #[test]
    fn too_few_points() {
        let (origin, _) = site();
        let set = FitPointSet::new(origin, road_points(2, 1));
        assert_eq!(ransac_exclude(&set, &PlaneConfig::default(), 1), Err(PlaneError::TooFewPoints(2)));
    }

    #[test]
    fn all_collinear_is_degenerate() {
        let pts = (0..6).map(|i| Vector3::new(i as f64, 0.0, 0.0)).collect();
        let set = FitPointSet::new(Vector3::zeros(), pts);
        assert!(matches!(
            ransac_exclude(&set, &PlaneConfig::default(), 1),
            Err(PlaneError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn two_parallel_layers() {
        let (origin, s) = site();
        let mut pts = road_points(10, 2);
        pts.extend(road_points(10, 3).into_iter().map(|p| p + s.up() * 100.0));
        let set = FitPointSet::new(origin, pts.clone());
        let trace = ransac_run(&set, &PlaneConfig::default(), 5).unwrap();
        // a candidate through three points of one layer holds exactly that layer
        for (triple, &count) in trace.triples.iter().zip(&trace.candidate_counts) {
            let same_layer = triple.iter().all(|&i| i < 10) || triple.iter().all(|&i| i >= 10);
            if same_layer {
                assert_eq!(count, 10);
            }
        }
        assert!(!trace.early_exit);
        assert_eq!(trace.triples.len(), 7);
        assert_eq!(trace.best.len(), *trace.candidate_counts.iter().max().unwrap());
        let lower = FitPointSet::new(origin, pts[..10].to_vec());
        let (_, diag) = fit_plane_svd(&lower, &PlaneConfig::default()).unwrap();
        assert_eq!(detect_availability(&diag, &PlaneConfig::default()), PlaneStatus::Unavailable);
    }

    proptest! {
        #[test]
        fn output_is_subset_with_best_count(seed in 0u64..10_000, n_out in 0usize..6) {
            let (origin, s) = site();
            let mut pts = road_points(14, seed);
            for k in 0..n_out {
                pts.push(origin + s.enu_to_ecef(&Vector3::new(k as f64 * 3.0, 1.0, 8.0 + k as f64)));
            }
            let set = FitPointSet::new(origin, pts.clone());
            let trace = ransac_run(&set, &PlaneConfig::default(), seed).unwrap();
            prop_assert!(trace.candidate_counts.iter().all(|&c| c <= trace.best.len()));
            let out = ransac_exclude(&set, &PlaneConfig::default(), seed).unwrap();
            prop_assert!(out.points.iter().all(|p| pts.contains(p)));
            prop_assert_eq!(out.len(), trace.best.len());
        }
    }
}
