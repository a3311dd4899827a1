//! The implicit time-stepper: semi-Lagrangian transport along the
//! characteristics of d/dt + d/dx, explicit mortality, implicit central
//! diffusion solved by the Thomas algorithm, and the nonlinear nonlocal
//! birth boundary.
//!
//! One step from level n-1 to n, with r = eps*dt/h^2:
//!
//! ```text
//! U_0^n = g( h sum_j q_j B(x_j) U_j^{n-1} )                  (births)
//! U_M^n = 0                                                  (Dirichlet)
//! (1+2r) U_j^n - r U_{j-1}^n - r U_{j+1}^n
//!     = Ubar_j^{n-1} - dt d(x_j, S^{n-1}) U_j^{n-1},  j = 1..M-1
//! S^n  = h sum_j q_j psi(x_j) U_j^n
//! ```
//!
//! where Ubar_j is the previous profile linearly interpolated at the
//! characteristic foot x_j - dt. The boundary uses level n-1 data, so no
//! nonlinear solve is needed; mortality stays explicit by the same token.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use thiserror::Error;

use crate::discretization::{weighted_population, GridSpec, QuadratureRule};

/// Scalar rate of one variable, shareable across concurrent runs.
pub type Rate1 = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
/// Mortality-style rate of age and weighted population.
pub type Rate2 = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Debug, Error, PartialEq)]
pub enum SchemeError {
    #[error("profile length {got} does not match grid ({expected} nodes)")]
    LengthMismatch { expected: usize, got: usize },
    #[error("tridiagonal row {row} is not strictly diagonally dominant")]
    DominanceViolation { row: usize },
    #[error("non-finite value from {context}")]
    NonFiniteResult { context: &'static str },
    #[error("non-finite state at time level {level}, node {node}")]
    NonFiniteState { level: usize, node: usize },
    #[error("step requested past the final time level")]
    TimeHorizonExhausted,
    #[error("snapshot time {t} outside [0, T]")]
    SnapshotOutOfRange { t: f64 },
    #[error("diffusion coefficient must be nonnegative, got {epsilon}")]
    NegativeDiffusion { epsilon: f64 },
}

/// The problem data of the model: mortality d(x,S), fertility B(x),
/// competition weight psi(x), birth response g(s), initial density u0(x),
/// and the diffusion coefficient.
#[derive(Clone)]
pub struct CoefficientSet {
    pub mortality: Rate2,
    pub fertility: Rate1,
    pub competition: Rate1,
    pub birth: Rate1,
    pub initial: Rate1,
    pub epsilon: f64,
}

impl CoefficientSet {
    pub fn new(
        epsilon: f64,
        mortality: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
        fertility: impl Fn(f64) -> f64 + Send + Sync + 'static,
        competition: impl Fn(f64) -> f64 + Send + Sync + 'static,
        birth: impl Fn(f64) -> f64 + Send + Sync + 'static,
        initial: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, SchemeError> {
        if !epsilon.is_finite() || epsilon < 0.0 {
            return Err(SchemeError::NegativeDiffusion { epsilon });
        }
        Ok(CoefficientSet {
            mortality: Arc::new(mortality),
            fertility: Arc::new(fertility),
            competition: Arc::new(competition),
            birth: Arc::new(birth),
            initial: Arc::new(initial),
            epsilon,
        })
    }
}

impl std::fmt::Debug for CoefficientSet {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientSet")
            .field("epsilon", &self.epsilon)
            .finish_non_exhaustive()
    }
}

/// Discrete age profile at one time level plus its weighted population.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub n: usize,
    pub u: Vec<f64>,
    pub weighted_population: f64,
}

impl SolverState {
    /// Samples u0 at the nodes. The right boundary is forced to zero when
    /// u0(a_dagger) != 0 (the continuous condition only applies for t > 0);
    /// the discarded value is returned so callers can warn.
    pub fn initial(
        coeffs: &CoefficientSet,
        grid: &GridSpec,
        rule: &QuadratureRule,
    ) -> Result<(SolverState, Option<f64>), SchemeError> {
        let mut u: Vec<f64> = (0..=grid.m)
            .map(|j| (coeffs.initial)(j as f64 * grid.h))
            .collect();
        if let Some(node) = u.iter().position(|v| !v.is_finite()) {
            return Err(SchemeError::NonFiniteState { level: 0, node });
        }
        let forced = if u[grid.m] != 0.0 {
            let original = u[grid.m];
            u[grid.m] = 0.0;
            Some(original)
        } else {
            None
        };
        let state = SolverState::from_profile(0, u, coeffs, grid, rule)?;
        Ok((state, forced))
    }

    /// Wraps an explicit profile, computing its weighted population.
    pub fn from_profile(
        n: usize,
        u: Vec<f64>,
        coeffs: &CoefficientSet,
        grid: &GridSpec,
        rule: &QuadratureRule,
    ) -> Result<SolverState, SchemeError> {
        if u.len() != grid.m + 1 {
            return Err(SchemeError::LengthMismatch {
                expected: grid.m + 1,
                got: u.len(),
            });
        }
        let psi: Vec<f64> = (0..=grid.m)
            .map(|j| (coeffs.competition)(j as f64 * grid.h))
            .collect();
        let s = weighted_population(rule, &psi, &u, grid.h).map_err(|_| {
            SchemeError::LengthMismatch {
                expected: rule.weights.len(),
                got: u.len(),
            }
        })?;
        Ok(SolverState {
            n,
            u,
            weighted_population: s,
        })
    }
}

/// Previous profile interpolated at the characteristic feet x_j - dt for
/// j = 1..M: a convex combination of U_{j-1} and U_j, so affine data is
/// reproduced exactly and the map is max-norm nonexpansive.
///
/// Requires 0 <= dt <= h (grid invariant).
pub fn characteristic_foot_interpolate(
    u_prev: &[f64],
    dt: f64,
    h: f64,
) -> Result<Vec<f64>, SchemeError> {
    assert!(
        dt >= 0.0 && dt <= h * (1.0 + 1e-12),
        "characteristic foot outside the adjacent cell: dt={dt}, h={h}"
    );
    if u_prev.len() < 2 {
        return Err(SchemeError::LengthMismatch {
            expected: 2,
            got: u_prev.len(),
        });
    }
    let theta = dt / h;
    Ok(u_prev
        .windows(2)
        .map(|w| theta * w[0] + (1.0 - theta) * w[1])
        .collect())
}

/// New boundary value g(h sum_j q_j B(x_j) U_j^{n-1}).
pub fn boundary_birth(
    u_prev: &[f64],
    rule: &QuadratureRule,
    b_samples: &[f64],
    g: impl Fn(f64) -> f64,
    h: f64,
) -> Result<f64, SchemeError> {
    let weighted = weighted_population(rule, b_samples, u_prev, h).map_err(|_| {
        SchemeError::LengthMismatch {
            expected: rule.weights.len(),
            got: u_prev.len().min(b_samples.len()),
        }
    })?;
    let v = g(weighted);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(SchemeError::NonFiniteResult {
            context: "birth response g",
        })
    }
}

/// Thomas elimination for a strictly diagonally dominant tridiagonal
/// system; no pivoting needed under dominance. `sub` and `sup` have one
/// entry fewer than `diag`.
pub fn thomas_solve(
    sub: &[f64],
    diag: &[f64],
    sup: &[f64],
    rhs: &[f64],
) -> Result<Vec<f64>, SchemeError> {
    let n = diag.len();
    if n == 0 || sub.len() != n - 1 || sup.len() != n - 1 || rhs.len() != n {
        return Err(SchemeError::LengthMismatch {
            expected: n,
            got: rhs.len(),
        });
    }
    for row in 0..n {
        let off = if row > 0 { sub[row - 1].abs() } else { 0.0 }
            + if row < n - 1 { sup[row].abs() } else { 0.0 };
        let dominant = diag[row].abs() > off; // false also for NaN rows
        if !dominant {
            return Err(SchemeError::DominanceViolation { row });
        }
    }
    // Forward sweep.
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = if n > 1 { sup[0] / diag[0] } else { 0.0 };
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        if i < n - 1 {
            c[i] = sup[i] / m;
        }
        d[i] = (rhs[i] - sub[i - 1] * d[i - 1]) / m;
    }
    // Back substitution.
    let mut x = d;
    for i in (0..n - 1).rev() {
        let upper = c[i] * x[i + 1];
        x[i] -= upper;
    }
    Ok(x)
}

#[cfg(debug_assertions)]
fn assert_tridiagonal_residual(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64], x: &[f64]) {
    let n = diag.len();
    let max_rhs = rhs.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    for i in 0..n {
        let mut ax = diag[i] * x[i];
        if i > 0 {
            ax += sub[i - 1] * x[i - 1];
        }
        if i < n - 1 {
            ax += sup[i] * x[i + 1];
        }
        let res = (ax - rhs[i]).abs();
        debug_assert!(
            res <= 1e-12 * (1.0 + max_rhs),
            "tridiagonal residual {res} at row {i}"
        );
    }
}

/// Time-invariant data for repeated stepping: node positions, sampled
/// fertility/competition, and the constant tridiagonal diffusion matrix.
pub struct Stepper<'a> {
    coeffs: &'a CoefficientSet,
    grid: &'a GridSpec,
    rule: &'a QuadratureRule,
    nodes: Vec<f64>,
    b_samples: Vec<f64>,
    psi_samples: Vec<f64>,
    r: f64,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(
        coeffs: &'a CoefficientSet,
        grid: &'a GridSpec,
        rule: &'a QuadratureRule,
    ) -> Result<Self, SchemeError> {
        if rule.weights.len() != grid.m + 1 {
            return Err(SchemeError::LengthMismatch {
                expected: grid.m + 1,
                got: rule.weights.len(),
            });
        }
        let nodes: Vec<f64> = (0..=grid.m).map(|j| j as f64 * grid.h).collect();
        let b_samples: Vec<f64> = nodes.iter().map(|&x| (coeffs.fertility)(x)).collect();
        if b_samples.iter().any(|v| !v.is_finite()) {
            return Err(SchemeError::NonFiniteResult {
                context: "fertility sample",
            });
        }
        let psi_samples: Vec<f64> = nodes.iter().map(|&x| (coeffs.competition)(x)).collect();
        if psi_samples.iter().any(|v| !v.is_finite()) {
            return Err(SchemeError::NonFiniteResult {
                context: "competition weight sample",
            });
        }
        let r = coeffs.epsilon * grid.dt / (grid.h * grid.h);
        let interior = grid.m - 1;
        Ok(Stepper {
            coeffs,
            grid,
            rule,
            nodes,
            b_samples,
            psi_samples,
            r,
            sub: vec![-r; interior - 1],
            diag: vec![1.0 + 2.0 * r; interior],
            sup: vec![-r; interior - 1],
        })
    }

    pub fn advance(&self, state: &SolverState) -> Result<SolverState, SchemeError> {
        if state.n >= self.grid.n_steps {
            return Err(SchemeError::TimeHorizonExhausted);
        }
        let level = state.n + 1;
        let m = self.grid.m;
        let dt = self.grid.dt;

        // Boundary first, from level n-1 data.
        let u0_new = boundary_birth(
            &state.u,
            self.rule,
            &self.b_samples,
            |s| (self.coeffs.birth)(s),
            self.grid.h,
        )
        .map_err(|e| match e {
            SchemeError::NonFiniteResult { .. } => SchemeError::NonFiniteState { level, node: 0 },
            other => other,
        })?;

        // Transport + explicit mortality on the right-hand side.
        let ubar = characteristic_foot_interpolate(&state.u, dt, self.grid.h)?;
        let s_prev = state.weighted_population;
        let mut rhs = Vec::with_capacity(m - 1);
        for j in 1..m {
            let dval = (self.coeffs.mortality)(self.nodes[j], s_prev);
            if !dval.is_finite() {
                return Err(SchemeError::NonFiniteState { level, node: j });
            }
            rhs.push(ubar[j - 1] - dt * dval * state.u[j]);
        }
        rhs[0] += self.r * u0_new;
        // The U_M coupling adds r * 0 to the last row.

        let interior = thomas_solve(&self.sub, &self.diag, &self.sup, &rhs)?;
        #[cfg(debug_assertions)]
        assert_tridiagonal_residual(&self.sub, &self.diag, &self.sup, &rhs, &interior);

        let mut u = Vec::with_capacity(m + 1);
        u.push(u0_new);
        u.extend_from_slice(&interior);
        u.push(0.0);
        if let Some(node) = u.iter().position(|v| !v.is_finite()) {
            return Err(SchemeError::NonFiniteState { level, node });
        }

        let s = weighted_population(self.rule, &self.psi_samples, &u, self.grid.h)
            .expect("lengths checked at construction");
        Ok(SolverState {
            n: level,
            u,
            weighted_population: s,
        })
    }
}

/// Advances one time level. For many steps prefer [`Stepper`] (or
/// [`run`]), which reuses the sampled coefficients.
pub fn step(
    state: &SolverState,
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    rule: &QuadratureRule,
) -> Result<SolverState, SchemeError> {
    Stepper::new(coeffs, grid, rule)?.advance(state)
}

/// Per-step scalar record: time, weighted population, boundary density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesPoint {
    pub t: f64,
    pub weighted_population: f64,
    pub boundary_value: f64,
}

/// Output of a full run: requested profile snapshots keyed by time level,
/// plus the scalar series at every step.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub snapshots: BTreeMap<usize, Vec<f64>>,
    pub series: Vec<SeriesPoint>,
    pub grid: GridSpec,
    /// Original u0(a_dagger) when it was nonzero and forced to 0.
    pub initial_boundary_forced: Option<f64>,
}

impl Trajectory {
    /// Time level a requested snapshot time maps to: nearest level, ties
    /// rounding down.
    pub fn level_for_time(grid: &GridSpec, t: f64) -> usize {
        let frac = t / grid.dt;
        let base = frac.floor();
        let level = if frac - base > 0.5 { base + 1.0 } else { base };
        (level as usize).min(grid.n_steps)
    }

    pub fn snapshot_at(&self, t: f64) -> Option<&Vec<f64>> {
        self.snapshots.get(&Self::level_for_time(&self.grid, t))
    }
}

/// Runs the scheme from u0 to T, recording snapshots at the requested
/// times (mapped to the nearest time level, ties down).
pub fn run(
    coeffs: &CoefficientSet,
    grid: &GridSpec,
    rule: &QuadratureRule,
    snapshot_times: &[f64],
) -> Result<Trajectory, SchemeError> {
    let mut levels = BTreeSet::new();
    for &t in snapshot_times {
        if t.is_nan() || t < 0.0 || t > grid.t_final * (1.0 + 1e-12) {
            return Err(SchemeError::SnapshotOutOfRange { t });
        }
        levels.insert(Trajectory::level_for_time(grid, t));
    }

    let stepper = Stepper::new(coeffs, grid, rule)?;
    let (mut state, forced) = SolverState::initial(coeffs, grid, rule)?;

    let mut snapshots = BTreeMap::new();
    let mut series = Vec::with_capacity(grid.n_steps + 1);
    if levels.contains(&0) {
        snapshots.insert(0, state.u.clone());
    }
    series.push(SeriesPoint {
        t: 0.0,
        weighted_population: state.weighted_population,
        boundary_value: state.u[0],
    });

    for _ in 0..grid.n_steps {
        state = stepper.advance(&state)?;
        series.push(SeriesPoint {
            t: state.n as f64 * grid.dt,
            weighted_population: state.weighted_population,
            boundary_value: state.u[0],
        });
        if levels.contains(&state.n) {
            snapshots.insert(state.n, state.u.clone());
        }
    }

    Ok(Trajectory {
        snapshots,
        series,
        grid: *grid,
        initial_boundary_forced: forced,
    })
}
