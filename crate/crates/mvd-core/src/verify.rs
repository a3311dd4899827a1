//! Error measurement and empirical convergence-order estimation: ladders
//! against an exact solution, self-convergence on nested grids when no
//! trusted exact solution exists, and steady-state diagnostics.
//!
//! The refinement policy is h -> h/2 together with dt -> dt/4, which
//! keeps dt/h^2 fixed, so every level satisfies the same stability
//! hypotheses as the base grid and the observed order is reported with
//! respect to h.

use thiserror::Error;

use crate::discretization::{build_weights, GridError, GridSpec, QuadratureError, RuleKind};
use crate::models::{BuiltinProblem, CandidateSolution};
use crate::par::{map_indexed, ExecMode};
use crate::scheme::{SchemeError, SolverState, Stepper, Trajectory};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("problem has no exact solution; use self-convergence instead")]
    NoExactSolution,
    #[error("self-convergence needs at least 3 levels, got {0}")]
    TooFewLevels(usize),
    #[error("no snapshot recorded at t = {0}")]
    MissingSnapshot(f64),
    #[error("refinement level {level} failed: {source}")]
    Level { level: usize, source: SchemeError },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
}

/// Where along the run the error is sampled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorSampling {
    /// Error of the final profile at t = T.
    #[default]
    FinalTime,
    /// Running max of the error over every time level, matching the
    /// space-time max norm of the convergence statement.
    MaxOverRun,
}

#[derive(Debug, Clone, Copy)]
pub struct LadderOptions {
    pub sampling: ErrorSampling,
    pub mode: ExecMode,
    pub rule: RuleKind,
    pub include_left_endpoint: bool,
}

impl Default for LadderOptions {
    fn default() -> Self {
        LadderOptions {
            sampling: ErrorSampling::FinalTime,
            mode: ExecMode::default(),
            rule: RuleKind::Simpson,
            include_left_endpoint: true,
        }
    }
}

/// One refinement level of a convergence study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelRecord {
    pub m: usize,
    pub n_steps: usize,
    pub h: f64,
    pub dt: f64,
    pub max_error: f64,
}

/// Errors per level (sorted by decreasing h) and the observed orders
/// p_k = log2(err_k / err_{k+1}).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelRecord>,
    pub orders: Vec<f64>,
    pub refine_policy: &'static str,
}

const REFINE_POLICY: &str = "h -> h/2, dt -> dt/4 (fixed dt/h^2)";

impl ConvergenceReport {
    fn from_levels(levels: Vec<LevelRecord>) -> Self {
        let orders = levels
            .windows(2)
            .map(|w| (w[0].max_error / w[1].max_error).log2())
            .collect();
        ConvergenceReport {
            levels,
            orders,
            refine_policy: REFINE_POLICY,
        }
    }
}

/// max_j |U_j - exact(t, x_j)|.
pub fn max_node_error(u: &[f64], exact: &dyn CandidateSolution, grid: &GridSpec, t: f64) -> f64 {
    u.iter()
        .enumerate()
        .map(|(j, v)| (v - exact.value(t, j as f64 * grid.h)).abs())
        .fold(0.0, f64::max)
}

/// Runs one level to completion; returns the sampled error (against
/// `exact` when given) and the final profile.
fn run_level(
    problem: &BuiltinProblem,
    grid: &GridSpec,
    opts: &LadderOptions,
    exact: Option<&dyn CandidateSolution>,
) -> Result<(f64, Vec<f64>), SchemeError> {
    let rule = build_weights(grid.m, opts.rule, opts.include_left_endpoint)
        .expect("ladder grids have M >= 3");
    let stepper = Stepper::new(&problem.coeffs, grid, &rule)?;
    let (mut state, _) = SolverState::initial(&problem.coeffs, grid, &rule)?;
    let mut running = exact
        .map(|e| max_node_error(&state.u, e, grid, 0.0))
        .unwrap_or(0.0);
    for _ in 0..grid.n_steps {
        state = stepper.advance(&state)?;
        if let (ErrorSampling::MaxOverRun, Some(e)) = (opts.sampling, exact) {
            running = running.max(max_node_error(&state.u, e, grid, state.n as f64 * grid.dt));
        }
    }
    let err = match (opts.sampling, exact) {
        (ErrorSampling::FinalTime, Some(e)) => max_node_error(&state.u, e, grid, grid.t_final),
        (ErrorSampling::MaxOverRun, Some(_)) => running,
        (_, None) => 0.0,
    };
    Ok((err, state.u))
}

fn refined_grids(base: &GridSpec, num_levels: usize) -> Result<Vec<GridSpec>, VerifyError> {
    (0..num_levels)
        .map(|k| base.refined(k as u32).map_err(VerifyError::from))
        .collect()
}

/// Measures max-node errors against the problem's exact solution on
/// `num_levels` refinements of `base` and the observed orders between
/// consecutive levels. Levels run independently (in parallel under the
/// default mode) and are assembled in level order, so reports are
/// deterministic.
pub fn convergence_ladder(
    problem: &BuiltinProblem,
    base: &GridSpec,
    num_levels: usize,
) -> Result<ConvergenceReport, VerifyError> {
    convergence_ladder_with(problem, base, num_levels, &LadderOptions::default())
}

pub fn convergence_ladder_with(
    problem: &BuiltinProblem,
    base: &GridSpec,
    num_levels: usize,
    opts: &LadderOptions,
) -> Result<ConvergenceReport, VerifyError> {
    let exact = problem.exact.as_ref().ok_or(VerifyError::NoExactSolution)?;
    let grids = refined_grids(base, num_levels)?;
    let results = map_indexed(opts.mode, grids.len(), |k| {
        run_level(problem, &grids[k], opts, Some(exact.as_ref()))
    });
    let mut levels = Vec::with_capacity(grids.len());
    for (k, (grid, result)) in grids.iter().zip(results).enumerate() {
        let (max_error, _) = result.map_err(|source| VerifyError::Level { level: k, source })?;
        levels.push(LevelRecord {
            m: grid.m,
            n_steps: grid.n_steps,
            h: grid.h,
            dt: grid.dt,
            max_error,
        });
    }
    Ok(ConvergenceReport::from_levels(levels))
}

/// Convergence estimate without an exact solution: the finest level's
/// final profile, restricted to the coarser grids' nodes (nested by
/// construction), serves as the reference. Reports errors and orders for
/// the `num_levels - 1` coarser levels.
pub fn self_convergence(
    problem: &BuiltinProblem,
    base: &GridSpec,
    num_levels: usize,
) -> Result<ConvergenceReport, VerifyError> {
    self_convergence_with(problem, base, num_levels, &LadderOptions::default())
}

pub fn self_convergence_with(
    problem: &BuiltinProblem,
    base: &GridSpec,
    num_levels: usize,
    opts: &LadderOptions,
) -> Result<ConvergenceReport, VerifyError> {
    if num_levels < 3 {
        return Err(VerifyError::TooFewLevels(num_levels));
    }
    let grids = refined_grids(base, num_levels)?;
    let results = map_indexed(opts.mode, grids.len(), |k| {
        run_level(problem, &grids[k], opts, None)
    });
    let mut profiles = Vec::with_capacity(grids.len());
    for (k, result) in results.into_iter().enumerate() {
        let (_, profile) = result.map_err(|source| VerifyError::Level { level: k, source })?;
        profiles.push(profile);
    }
    let reference = profiles.last().expect("at least 3 levels");
    let mut levels = Vec::with_capacity(num_levels - 1);
    for (k, (grid, profile)) in grids.iter().zip(&profiles).take(num_levels - 1).enumerate() {
        let stride = 1usize << (num_levels - 1 - k);
        debug_assert_eq!(grid.m * stride, grids[num_levels - 1].m);
        let max_error = profile
            .iter()
            .enumerate()
            .map(|(j, v)| (v - reference[j * stride]).abs())
            .fold(0.0, f64::max);
        levels.push(LevelRecord {
            m: grid.m,
            n_steps: grid.n_steps,
            h: grid.h,
            dt: grid.dt,
            max_error,
        });
    }
    Ok(ConvergenceReport::from_levels(levels))
}

/// Relative profile gap max_j |U(t1)_j - U(t2)_j| / max_j |U(t1)_j|
/// between two recorded snapshots (floored to avoid dividing by an
/// identically zero profile).
pub fn steady_state_gap(traj: &Trajectory, t1: f64, t2: f64) -> Result<f64, VerifyError> {
    let u1 = traj
        .snapshot_at(t1)
        .ok_or(VerifyError::MissingSnapshot(t1))?;
    let u2 = traj
        .snapshot_at(t2)
        .ok_or(VerifyError::MissingSnapshot(t2))?;
    let diff = u1
        .iter()
        .zip(u2)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    let scale = u1.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1e-300);
    Ok(diff / scale)
}
