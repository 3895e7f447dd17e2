//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness. A FAIL line is a measured outcome, not a
//! crash, so the process exits 0 unless `ACCEPTANCE_STRICT` is set.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use coopnav::config::{ScenarioConfig, SweepConfig};
use coopnav::evaluation::{interruption_sweep, median, run_scenario, MethodMode, SweepReport};
use coopnav::factor_graph::{
    estimate_velocity, factor_jacobian, Factor, NodeState, PseudorangeObs, RangeObs, SatelliteState, StateKey,
    VelocityEstimate,
};
use coopnav::plane::{
    build_plane, fit_plane_svd, ransac_exclude, FitPointSet, Plane, PlaneConfig, PlaneStatus, PositionRecord,
};
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use common::{site, GPS_L1_WAVELENGTH};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> ScenarioConfig {
    ScenarioConfig::load(&scenarios_dir().join(name)).expect("shipped scenario loads")
}

fn paired(cfg: &ScenarioConfig, rates: Vec<f64>, modes: Vec<MethodMode>, seeds: usize) -> SweepReport {
    interruption_sweep(cfg, &SweepConfig { rates, modes, seeds }).expect("sweep runs")
}

fn angle_between_lines(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b).abs())
}

/// Cyclic Jacobi eigen-decomposition; returns the eigenvector of the smallest eigenvalue.
fn jacobi_min_eigenvector(m: Matrix3<f64>) -> Vector3<f64> {
    let mut a = m;
    let mut v = Matrix3::identity();
    for _ in 0..100 {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off < 1e-30 * a.norm_squared() {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            if a[(p, q)] == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut r = Matrix3::identity();
            r[(p, p)] = c;
            r[(q, q)] = c;
            r[(p, q)] = s;
            r[(q, p)] = -s;
            a = r.transpose() * a * r;
            v *= r;
        }
    }
    let i = (0..3).min_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)])).expect("three eigenvalues");
    v.column(i).into_owned()
}

fn random_unit(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    loop {
        let v = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Points on a plane through `center` with normal `n`, spread over ±`half` m.
fn plane_points(
    rng: &mut ChaCha8Rng,
    center: &Vector3<f64>,
    n: &Vector3<f64>,
    count: usize,
    half: f64,
    sigma: f64,
) -> Vec<Vector3<f64>> {
    let u = n.cross(&random_unit(rng)).normalize();
    let w = n.cross(&u);
    let noise = Normal::new(0.0, sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    (0..count)
        .map(|_| {
            let along = rng.random_range(-half..half);
            let across = rng.random_range(-half..half);
            let off = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
            center + u * along + w * across + n * off
        })
        .collect()
}

fn criterion_1() -> Outcome {
    let (_, rx, _) = site();
    let cfg = PlaneConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut oracle_gap, mut truth_gap, mut exact_gap) = (0.0f64, 0.0f64, 0.0f64);
    let mut noisy_angles = Vec::new();
    for trial in 0..1000 {
        let n = random_unit(&mut rng);
        let noisy = trial % 2 == 0;
        let points = plane_points(&mut rng, &rx, &n, 20, 50.0, if noisy { 0.1 } else { 0.0 });
        let set = FitPointSet::new(rx, points.clone());
        let (plane, _) = fit_plane_svd(&set, &cfg).expect("well-spread points fit");
        let fitted = plane.normal();
        let centroid = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
        let scatter = points
            .iter()
            .map(|p| (p - centroid) * (p - centroid).transpose())
            .sum::<Matrix3<f64>>();
        oracle_gap = oracle_gap.max(angle_between_lines(&fitted, &jacobi_min_eigenvector(scatter)));
        if noisy {
            noisy_angles.push(angle_between_lines(&fitted, &n));
            truth_gap = truth_gap.max(angle_between_lines(&fitted, &n));
        } else {
            exact_gap = exact_gap.max(angle_between_lines(&fitted, &n));
        }
    }
    outcome(
        oracle_gap < 1e-9 && truth_gap < 1e-3 && exact_gap < 1e-10,
        format!(
            "max angle to oracle {oracle_gap:.2e} rad, to truth {truth_gap:.2e} rad (median {:.2e}), noise-free {exact_gap:.2e} rad",
            median(&noisy_angles).expect("noisy trials")
        ),
    )
}

fn records(points: &[Vector3<f64>]) -> Vec<PositionRecord> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| PositionRecord {
            vehicle_id: 1 + i % 3,
            epoch: i as u64,
            road_point: *p,
        })
        .collect()
}

fn criterion_2() -> Outcome {
    let (_, rx, s) = site();
    let cfg = PlaneConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let up = s.up();
    let (mut exact, mut after_exclusion) = (0, 0);
    for trial in 0..1000u64 {
        let mut points = plane_points(&mut rng, &rx, &up, 17, 30.0, 0.05);
        let outliers: Vec<Vector3<f64>> = plane_points(&mut rng, &rx, &up, 3, 20.0, 0.0)
            .into_iter()
            .map(|p| p + up * rng.random_range(20.0..30.0))
            .collect();
        points.extend(&outliers);
        let set = FitPointSet::new(rx, points.clone());
        if let Ok(kept) = ransac_exclude(&set, &cfg, trial) {
            let kept: BTreeSet<[u64; 3]> = kept.points.iter().map(|p| p.map(f64::to_bits).into()).collect();
            let removed: BTreeSet<[u64; 3]> = points
                .iter()
                .map(|p| p.map(f64::to_bits).into())
                .filter(|k| !kept.contains(k))
                .collect();
            let injected: BTreeSet<[u64; 3]> = outliers.iter().map(|p| p.map(f64::to_bits).into()).collect();
            exact += usize::from(removed == injected);
        }
        let built = build_plane(&records(&points), rx, 1.5, 0, 100, &cfg, trial);
        after_exclusion += usize::from(built.status == PlaneStatus::AvailableAfterExclusion);
    }
    let small = plane_points(&mut rng, &rx, &up, 8, 30.0, 0.05);
    let small_status = build_plane(&records(&small), rx, 1.5, 0, 100, &cfg, 0).status;
    outcome(
        exact >= 990 && after_exclusion >= 990 && small_status == PlaneStatus::Unavailable,
        format!(
            "exact exclusion {exact}/1000, AvailableAfterExclusion {after_exclusion}/1000, 8 points -> {}",
            small_status.as_str()
        ),
    )
}

fn rand_vec(rng: &mut ChaCha8Rng, scale: f64) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}

fn random_factor(rng: &mut ChaCha8Rng, kind: usize, a: StateKey, b: StateKey) -> Factor {
    match kind {
        0 => {
            let position = random_unit(rng) * 2.6e7;
            let sat = SatelliteState {
                id: 1,
                position,
                velocity: rand_vec(rng, 3000.0),
                clock_drift: 0.0,
                elevation: 0.5,
            };
            Factor::Pseudorange {
                key: a,
                sat,
                obs: PseudorangeObs {
                    sat_id: 1,
                    value: rng.random_range(2.0e7..2.6e7),
                    dgnss_correction: rng.random_range(-5.0..5.0),
                    sigma: 1.0,
                },
            }
        }
        1 => {
            let n = random_unit(rng);
            Factor::Plane {
                key: a,
                plane: Plane {
                    a: n.x,
                    b: n.y,
                    c: n.z,
                    d: rng.random_range(-1e6..1e6),
                    translated_d: rng.random_range(-1e6..1e6),
                    status: PlaneStatus::Available,
                    sigma_pc: 0.3,
                },
            }
        }
        2 => Factor::Range {
            a,
            b,
            obs: RangeObs {
                vehicle_a: a.vehicle,
                vehicle_b: b.vehicle,
                value: rng.random_range(1.0..60.0),
                sigma: 0.3,
            },
        },
        _ => Factor::Velocity {
            prev: a,
            curr: b,
            velocity: VelocityEstimate {
                velocity: rand_vec(rng, 20.0),
                clock_drift: 0.0,
                sigma_v: 0.6,
            },
            dt: rng.random_range(0.5..2.0),
        },
    }
}

/// Worst relative deviation of the analytic Jacobian from central differences.
///
/// Differences are taken with [`Factor::error_change`] so ECEF-scale states do
/// not lose the perturbation to rounding.
fn fd_deviation(f: &Factor, states: &BTreeMap<StateKey, NodeState>) -> f64 {
    const H: f64 = 1e-5;
    let analytic = factor_jacobian(f, states).expect("states present");
    let mut worst = 0.0f64;
    for (key, block) in &analytic {
        for col in 0..4 {
            let shift = |delta: f64| {
                let mut d = NodeState::new(Vector3::zeros(), 0.0);
                if col < 3 {
                    d.position[col] = delta;
                } else {
                    d.clock_bias = delta;
                }
                f.error_change(states, &BTreeMap::from([(*key, d)])).expect("states present")
            };
            let fd = (shift(H) - shift(-H)) / (2.0 * H);
            for r in 0..f.dim() {
                let scale = block.row(r).norm().max(1e-12);
                worst = worst.max((fd[r] - block[(r, col)]).abs() / scale);
            }
        }
    }
    worst
}

fn criterion_3() -> Outcome {
    let (_, rx, _) = site();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (a, b) = (StateKey::new(0, 7), StateKey::new(1, 8));
    let mut worst = [0.0f64; 4];
    for (kind, w) in worst.iter_mut().enumerate() {
        for _ in 0..100 {
            let base = rx + rand_vec(&mut rng, 5000.0);
            let states = BTreeMap::from([
                (a, NodeState::new(base + rand_vec(&mut rng, 30.0), rng.random_range(-300.0..300.0))),
                (b, NodeState::new(base + rand_vec(&mut rng, 30.0), rng.random_range(-300.0..300.0))),
            ]);
            let f = random_factor(&mut rng, kind, a, b);
            *w = w.max(fd_deviation(&f, &states));
        }
    }
    outcome(
        worst.iter().all(|w| *w < 1e-6),
        format!(
            "max relative error pseudorange {:.1e}, plane {:.1e}, range {:.1e}, velocity {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    )
}

fn criterion_4() -> Outcome {
    let cfg = scenario("plane-exact.toml");
    let mut worst = 0.0f64;
    for mode in MethodMode::ALL {
        let report = run_scenario(&cfg, mode).expect("exact scenario runs");
        for r in &report.records {
            worst = worst.max((r.err_e.powi(2) + r.err_n.powi(2) + r.err_u.powi(2)).sqrt());
        }
    }
    let mut cut = cfg.clone();
    cut.interruption_rate = 1.0;
    let mci = run_scenario(&cut, MethodMode::Mci).expect("runs");
    let non_cp = run_scenario(&cut, MethodMode::NonCp).expect("runs");
    let identical = mci.records.len() == non_cp.records.len()
        && mci.records.iter().zip(&non_cp.records).all(|(a, b)| {
            [a.err_e, a.err_n, a.err_u].map(f64::to_bits) == [b.err_e, b.err_n, b.err_u].map(f64::to_bits)
                && a.solver_iters == b.solver_iters
        });
    outcome(
        worst < 1e-3 && identical,
        format!("max 3D error over all modes {worst:.2e} m, MCI@1.0 bit-identical to NonCP: {identical}"),
    )
}

fn cell(report: &SweepReport, rate: f64, mode: MethodMode) -> &coopnav::evaluation::AggregateRow {
    report
        .aggregate
        .iter()
        .find(|r| r.rate == rate && r.mode == mode)
        .expect("cell present")
}

fn criterion_5() -> Outcome {
    let cfg = scenario("urban.toml");
    let report = paired(&cfg, vec![1.0], vec![MethodMode::NonCp, MethodMode::PcAidedNoIr], 20);
    let base = cell(&report, 1.0, MethodMode::NonCp).v_rmse;
    let aided = cell(&report, 1.0, MethodMode::PcAidedNoIr).v_rmse;
    outcome(
        aided <= 0.67 * base,
        format!(
            "median vertical RMSE NonCP {base:.3} m, PCAidedNoIR {aided:.3} m, ratio {:.3} (need <= 0.67)",
            aided / base
        ),
    )
}

fn criterion_6() -> Outcome {
    let cfg = scenario("urban.toml");
    let rates = vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let report = paired(&cfg, rates.clone(), vec![MethodMode::Mci, MethodMode::PcAided], 20);
    let mci: Vec<f64> = rates.iter().map(|&r| cell(&report, r, MethodMode::Mci).h_rmse).collect();
    let monotone = mci.windows(2).all(|w| w[1] >= 0.95 * w[0]);
    let gap = |r: f64| cell(&report, r, MethodMode::Mci).h_rmse - cell(&report, r, MethodMode::PcAided).h_rmse;
    let (g0, g1) = (gap(0.0), gap(1.0));
    let trend: Vec<String> = mci.iter().map(|m| format!("{m:.3}")).collect();
    outcome(
        monotone && g1 > g0,
        format!(
            "MCI median horizontal RMSE by rate [{}], gap at 0 {g0:.3} m, at 1.0 {g1:.3} m",
            trend.join(", ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = scenario("multipath-bursts.toml");
    let report = paired(&cfg, vec![1.0], vec![MethodMode::PcAided, MethodMode::PcAidedNoFe], 20);
    let fe = cell(&report, 1.0, MethodMode::PcAided);
    let no_fe = cell(&report, 1.0, MethodMode::PcAidedNoFe);
    let improvement = 1.0 - fe.v_rmse / no_fe.v_rmse;
    outcome(
        fe.h_rmse <= no_fe.h_rmse && fe.v_rmse <= no_fe.v_rmse && improvement >= 0.2,
        format!(
            "median RMSE h/v with FE {:.3}/{:.3} m, without {:.3}/{:.3} m, vertical improvement {:.1}% (need >= 20%)",
            fe.h_rmse,
            fe.v_rmse,
            no_fe.h_rmse,
            no_fe.v_rmse,
            100.0 * improvement
        ),
    )
}

fn available_fraction(report: &SweepReport) -> f64 {
    let (available, total) = report
        .rows
        .iter()
        .filter(|r| r.mode == MethodMode::PcAided)
        .fold((0, 0), |(a, t), r| (a + r.planes.available, t + r.planes.total()));
    available as f64 / total as f64
}

fn criterion_8() -> Outcome {
    let modes = vec![MethodMode::NonCp, MethodMode::PcAided];
    let flat = paired(&scenario("open-sky-plane.toml"), vec![1.0], modes.clone(), 20);
    let curved = paired(&scenario("open-sky-curved.toml"), vec![1.0], modes, 20);
    let (f_flat, f_curved) = (available_fraction(&flat), available_fraction(&curved));
    let base = cell(&curved, 1.0, MethodMode::NonCp).h_rmse;
    let aided = cell(&curved, 1.0, MethodMode::PcAided).h_rmse;
    outcome(
        f_curved < 0.2 * f_flat && aided <= 1.05 * base,
        format!(
            "Available fraction plane {f_flat:.3}, curved {f_curved:.3}; curved median horizontal RMSE NonCP {base:.3} m, PCAided {aided:.3} m"
        ),
    )
}

fn criterion_9() -> Outcome {
    let (_, rx, s) = site();
    let noise = Normal::new(0.0, 0.1).expect("finite sigma");
    let mut errors = Vec::with_capacity(500);
    let mut predicted = Vec::with_capacity(500);
    for seed in 0..500u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(9_000 + seed);
        let sats = common::sky(&rx, &s, 8, seed);
        let v = s.enu_to_ecef(&Vector3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), 0.0));
        let drift = rng.random_range(-2.0..2.0);
        let mut obs = common::dopplers(&rx, &v, drift, &sats);
        for o in &mut obs {
            o.value += noise.sample(&mut rng) / GPS_L1_WAVELENGTH;
        }
        let est = estimate_velocity(&obs, &sats, &rx).expect("eight satellites");
        errors.push((est.velocity - v).norm());
        // noise-propagation bound: sigma * sqrt(trace of the velocity block of (G^T G)^-1)
        let gram = sats.iter().fold(nalgebra::Matrix4::zeros(), |acc, sat| {
            let e = (sat.position - rx).normalize();
            let row = nalgebra::Vector4::new(e.x, e.y, e.z, 1.0);
            acc + row * row.transpose()
        });
        let cov = gram.try_inverse().expect("full-rank geometry");
        predicted.push(0.1 * (cov[(0, 0)] + cov[(1, 1)] + cov[(2, 2)]).sqrt());
    }
    let m = median(&errors).expect("non-empty");
    let p = median(&predicted).expect("non-empty");
    outcome(
        m < 0.05,
        format!("median velocity error {m:.4} m/s over 500 seeds, noise-propagation prediction {p:.4} m/s"),
    )
}

fn file_hashes(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_dir(dir)
        .expect("output dir exists")
        .map(|e| {
            let e = e.expect("readable entry");
            let bytes = std::fs::read(e.path()).expect("readable file");
            (e.file_name().to_string_lossy().into_owned(), Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect::<String>())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_coopnav");
    let scenarios = scenarios_dir();
    let invocations: Vec<(&str, Vec<String>)> = vec![
        ("run", vec!["--config".into(), scenarios.join("urban.toml").display().to_string()]),
        (
            "sweep",
            vec![
                "--config".into(),
                scenarios.join("urban.toml").display().to_string(),
                "--seed".into(),
                "5".into(),
                "--jobs".into(),
                "2".into(),
            ],
        ),
        ("dump-measurements", vec!["--config".into(), scenarios.join("slope-canyon.toml").display().to_string()]),
    ];
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut details = Vec::new();
    let mut pass = true;
    for (sub, args) in &invocations {
        let mut hashes = Vec::new();
        for attempt in 0..2 {
            let out = tmp.path().join(format!("{sub}-{attempt}"));
            let mut cmd = Command::new(bin);
            cmd.arg(sub).args(args).arg("--output").arg(&out);
            if *sub == "sweep" {
                // a reduced sweep keeps the suite inside its time budget
                cmd.args(["--interruption-rate", "0.5"]);
            }
            let status = cmd.output().expect("binary runs").status;
            pass &= status.success();
            hashes.push(file_hashes(&out));
        }
        let same = !hashes[0].is_empty() && hashes[0] == hashes[1];
        pass &= same;
        details.push(format!("{sub}: {} files identical={same}", hashes[0].len()));
    }
    outcome(pass, details.join(", "))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome, Duration); 10] = [
        (1, criterion_1, Duration::from_secs(5)),
        (2, criterion_2, Duration::from_secs(10)),
        (3, criterion_3, Duration::MAX),
        (4, criterion_4, Duration::MAX),
        (5, criterion_5, Duration::from_secs(180)),
        (6, criterion_6, Duration::from_secs(900)),
        (7, criterion_7, Duration::MAX),
        (8, criterion_8, Duration::MAX),
        (9, criterion_9, Duration::MAX),
        (10, criterion_10, Duration::MAX),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (id, check, budget) in criteria {
        if only.is_some_and(|o| o != id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let on_time = elapsed <= budget;
        let pass = result.pass && on_time;
        failed += usize::from(!pass);
        let budget_note = if budget == Duration::MAX {
            String::new()
        } else {
            format!(" / budget {:.0} s", budget.as_secs_f64())
        };
        println!(
            "criterion {id:2}: {} - {} ({:.1} s{budget_note})",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("acceptance: {failed} of 10 criteria failed");
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
