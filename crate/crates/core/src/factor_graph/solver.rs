use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use super::{Factor, FactorGraphError, GraphState, NodeState, StateKey};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub initial_damping: f64,
    /// Damping multiplier after a rejected step.
    pub damping_increase: f64,
    /// Damping divisor after an accepted step.
    pub damping_decrease: f64,
    /// An accepted step converges once it lowers the cost by less than this
    /// fraction and is also shorter than `step_tolerance`.
    pub relative_tolerance: f64,
    /// m
    pub step_tolerance: f64,
    pub max_iterations: usize,
    /// Steps shorter than this (m) count as converged.
    pub min_step: f64,
    /// Floor on the diagonal entries used to scale the damping term.
    pub min_diagonal: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 10.0,
            relative_tolerance: 1e-6,
            step_tolerance: 1e-6,
            max_iterations: 50,
            min_step: 1e-12,
            min_diagonal: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub states: BTreeMap<StateKey, NodeState>,
    pub initial_cost: f64,
    /// Initial cost plus the accumulated change of each accepted step.
    pub cost: f64,
    /// Trial steps taken, accepted or not.
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Sum over factors of the squared error divided by the factor variance.
pub fn objective(graph: &GraphState, states: &BTreeMap<StateKey, NodeState>) -> Result<f64, FactorGraphError> {
    let mut cost = 0.0;
    for f in &graph.factors {
        let e = f.error(states)?;
        let w = 1.0 / (f.sigma() * f.sigma());
        cost += w * e.rows(0, f.dim()).norm_squared();
    }
    Ok(cost)
}

fn offsets(index: &BTreeMap<StateKey, usize>, delta: &DVector<f64>) -> BTreeMap<StateKey, NodeState> {
    index
        .iter()
        .map(|(k, &i)| (*k, NodeState::new(delta.fixed_rows::<3>(i).into(), delta[i + 3])))
        .collect()
}

/// Factor errors at `anchor` displaced by `delta`.
fn errors_at(
    graph: &GraphState,
    anchor: &BTreeMap<StateKey, NodeState>,
    base: &[Vector3<f64>],
    index: &BTreeMap<StateKey, usize>,
    delta: &DVector<f64>,
) -> Result<Vec<Vector3<f64>>, FactorGraphError> {
    let offsets = offsets(index, delta);
    graph
        .factors
        .iter()
        .zip(base)
        .map(|(f, e)| Ok(e + f.error_change(anchor, &offsets)?))
        .collect()
}

fn weighted_sum(graph: &GraphState, errors: &[Vector3<f64>]) -> f64 {
    graph
        .factors
        .iter()
        .zip(errors)
        .map(|(f, e)| e.rows(0, f.dim()).norm_squared() / (f.sigma() * f.sigma()))
        .sum()
}

/// Objective change when the states move by `offsets`, evaluated from the
/// per-factor error changes so that it stays resolvable for tiny steps.
fn cost_change(
    graph: &GraphState,
    states: &BTreeMap<StateKey, NodeState>,
    errors: &[Vector3<f64>],
    offsets: &BTreeMap<StateKey, NodeState>,
) -> Result<f64, FactorGraphError> {
    let mut change = 0.0;
    for (f, e) in graph.factors.iter().zip(errors) {
        let dim = f.dim();
        let de = f.error_change(states, offsets)?;
        change += de.rows(0, dim).dot(&(e.rows(0, dim) * 2.0 + de.rows(0, dim))) / (f.sigma() * f.sigma());
    }
    Ok(change)
}

fn state_index(states: &BTreeMap<StateKey, NodeState>) -> BTreeMap<StateKey, usize> {
    states.keys().enumerate().map(|(i, k)| (*k, 4 * i)).collect()
}

/// Returns `(J^T W J, J^T W f)` over the stacked `[x, y, z, b]` states.
///
/// `errors` replaces the factor errors evaluated at `states` when given.
fn normal_equations(
    graph: &GraphState,
    states: &BTreeMap<StateKey, NodeState>,
    index: &BTreeMap<StateKey, usize>,
    errors: Option<&[Vector3<f64>]>,
) -> Result<(DMatrix<f64>, DVector<f64>), FactorGraphError> {
    let n = 4 * index.len();
    let mut h = DMatrix::zeros(n, n);
    let mut g = DVector::zeros(n);
    for (i, f) in graph.factors.iter().enumerate() {
        let lin = f.linearize(states)?;
        let w = 1.0 / (f.sigma() * f.sigma());
        let error = errors.map_or(lin.error, |e| e[i]);
        let e = error.rows(0, lin.dim);
        for (ka, ja) in &lin.blocks {
            let ia = index[ka];
            let ja = ja.rows(0, lin.dim);
            let mut ga = g.fixed_rows_mut::<4>(ia);
            ga += ja.transpose() * e * w;
            for (kb, jb) in &lin.blocks {
                let ib = index[kb];
                let jb = jb.rows(0, lin.dim);
                let mut block = h.fixed_view_mut::<4, 4>(ia, ib);
                block += ja.transpose() * jb * w;
            }
        }
        if let Factor::Range { a, b, .. } = f {
            add_range_curvature(&mut h, states, index, a, b, e[0] * w)?;
        }
    }
    Ok((h, g))
}

/// Adds `w r` times the Hessian of the range error to the position blocks.
///
/// Range errors bend strongly across the baseline compared to the vertical
/// information pseudoranges provide, so Gauss-Newton alone converges slowly.
fn add_range_curvature(
    h: &mut DMatrix<f64>,
    states: &BTreeMap<StateKey, NodeState>,
    index: &BTreeMap<StateKey, usize>,
    a: &StateKey,
    b: &StateKey,
    weighted_error: f64,
) -> Result<(), FactorGraphError> {
    let get = |k: &StateKey| states.get(k).ok_or(FactorGraphError::MissingState(*k));
    let baseline = get(a)?.position - get(b)?.position;
    let d = baseline.norm();
    if !(d > 1e-9) {
        return Err(FactorGraphError::DegenerateGeometry);
    }
    let u = baseline / d;
    let c = (Matrix3::identity() - u * u.transpose()) * (weighted_error / d);
    let (ia, ib) = (index[a], index[b]);
    for (i, j, sign) in [(ia, ia, -1.0), (ib, ib, -1.0), (ia, ib, 1.0), (ib, ia, 1.0)] {
        let mut block = h.fixed_view_mut::<3, 3>(i, j);
        block += c * sign;
    }
    Ok(())
}

/// Gradient of [`objective`] with respect to the stacked states, ordered by key.
pub fn objective_gradient(
    graph: &GraphState,
    states: &BTreeMap<StateKey, NodeState>,
) -> Result<DVector<f64>, FactorGraphError> {
    let index = state_index(states);
    let (_, g) = normal_equations(graph, states, &index, None)?;
    Ok(g * 2.0)
}

fn displaced(
    anchor: &BTreeMap<StateKey, NodeState>,
    index: &BTreeMap<StateKey, usize>,
    dx: &DVector<f64>,
) -> BTreeMap<StateKey, NodeState> {
    anchor
        .iter()
        .map(|(k, s)| {
            let i = index[k];
            let mut next = *s;
            next.position += dx.fixed_rows::<3>(i);
            next.clock_bias += dx[i + 3];
            (*k, next)
        })
        .collect()
}

/// Levenberg-Marquardt minimization of [`objective`], starting from the
/// graph's current states.
///
/// Iterates on offsets from the starting states, and judges each step by its
/// own error changes, so that residuals and cost changes keep their precision
/// near the optimum. Reaching the iteration cap yields
/// `NotConverged` carrying the best iterate.
pub fn solve(graph: &GraphState, cfg: &SolverConfig) -> Result<Solution, FactorGraphError> {
    if graph.factors.is_empty() {
        return Err(FactorGraphError::EmptyGraph);
    }
    let anchor = &graph.states;
    let index = state_index(anchor);
    let base = graph
        .factors
        .iter()
        .map(|f| f.error(anchor))
        .collect::<Result<Vec<_>, _>>()?;
    let mut delta = DVector::zeros(4 * index.len());
    let mut errors = base.clone();
    let mut cost = weighted_sum(graph, &errors);
    let mut solution = Solution {
        states: BTreeMap::new(),
        initial_cost: cost,
        cost,
        iterations: 0,
        converged: false,
        cost_history: vec![cost],
    };
    let mut lambda = cfg.initial_damping;
    let mut system = None;

    while solution.iterations < cfg.max_iterations {
        if cost == 0.0 {
            solution.converged = true;
            break;
        }
        let states = displaced(anchor, &index, &delta);
        if system.is_none() {
            system = Some(normal_equations(graph, &states, &index, Some(&errors))?);
        }
        let (h, g) = system.as_ref().expect("linearized above");
        solution.iterations += 1;

        let mut a = h.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += lambda * h[(i, i)].max(cfg.min_diagonal);
        }
        let Some(chol) = a.cholesky() else {
            lambda *= cfg.damping_increase;
            continue;
        };
        let dx = -chol.solve(g);
        let step = dx.norm();
        let change = cost_change(graph, &states, &errors, &offsets(&index, &dx))?;

        if change < 0.0 {
            let relative = -change / cost;
            delta += &dx;
            errors = errors_at(graph, anchor, &base, &index, &delta)?;
            cost = (cost + change).max(0.0);
            solution.cost_history.push(cost);
            system = None;
            lambda /= cfg.damping_decrease;
            if (relative < cfg.relative_tolerance && step < cfg.step_tolerance) || step < cfg.min_step {
                solution.converged = true;
                break;
            }
        } else {
            lambda *= cfg.damping_increase;
            if step < cfg.min_step {
                solution.converged = true;
                break;
            }
        }
    }

    solution.states = displaced(anchor, &index, &delta);
    solution.cost = cost;
    if solution.converged {
        Ok(solution)
    } else {
        Err(FactorGraphError::NotConverged(Box::new(solution)))
    }
}
