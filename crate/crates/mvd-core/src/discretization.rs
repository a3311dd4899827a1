//! Uniform space-time grid and the Newton-Cotes quadrature rules used for
//! every nonlocal integral in the model.

use thiserror::Error;

/// Relative slack when testing dt/h^2 <= 1/2, so grids specified through
/// decimal inputs (0.05/16000 etc.) that sit exactly on the boundary are
/// not rejected by the last ulp.
const RATIO_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("dt/h^2 = {ratio} exceeds 1/2; pass allow_unstable to accept anyway")]
    StabilityViolation { ratio: f64 },
    #[error("dt = {dt} exceeds h = {h}; the characteristic foot leaves the adjacent cell")]
    FootOutOfCell { dt: f64, h: f64 },
    #[error("node index {j} out of range 0..={m}")]
    IndexOutOfRange { j: usize, m: usize },
    #[error("invalid grid parameter: {0}")]
    InvalidParameter(&'static str),
}

#[derive(Debug, Error, PartialEq)]
pub enum QuadratureError {
    #[error("unsupported quadrature rule {0:?}")]
    UnsupportedRule(String),
    #[error("sample length {got} does not match rule length {expected}")]
    LengthMismatch { expected: usize, got: usize },
}

/// Uniform discretization of (0,T) x (0,a_dagger): M age intervals of
/// width h, N time steps of length dt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub a_dagger: f64,
    pub m: usize,
    pub h: f64,
    pub t_final: f64,
    pub n_steps: usize,
    pub dt: f64,
    /// Whether dt/h^2 <= 1/2 holds (the convergence theorem's ratio).
    pub theorem_ratio_holds: bool,
    /// Whether the caller opted out of the ratio check.
    pub allow_unstable: bool,
}

/// Validates and builds a grid. `dt > h` is always rejected: the foot of
/// the characteristic x_j - dt must stay inside [x_{j-1}, x_j] for the
/// one-cell linear interpolation stencil. `dt/h^2 > 1/2` is rejected
/// unless `allow_unstable` is set; the implicit diffusion solve itself
/// does not need it, so the override only records the violation.
pub fn build_grid(
    a_dagger: f64,
    m: usize,
    t_final: f64,
    n_steps: usize,
    allow_unstable: bool,
) -> Result<GridSpec, GridError> {
    if !a_dagger.is_finite() || a_dagger <= 0.0 {
        return Err(GridError::InvalidParameter(
            "a_dagger must be positive and finite",
        ));
    }
    if m < 3 {
        return Err(GridError::InvalidParameter("M must be at least 3"));
    }
    if !t_final.is_finite() || t_final <= 0.0 {
        return Err(GridError::InvalidParameter("T must be positive and finite"));
    }
    if n_steps < 1 {
        return Err(GridError::InvalidParameter("N must be at least 1"));
    }
    let h = a_dagger / m as f64;
    let dt = t_final / n_steps as f64;
    if dt > h * (1.0 + RATIO_TOL) {
        return Err(GridError::FootOutOfCell { dt, h });
    }
    let ratio = dt / (h * h);
    let theorem_ratio_holds = ratio <= 0.5 * (1.0 + RATIO_TOL);
    if !theorem_ratio_holds && !allow_unstable {
        return Err(GridError::StabilityViolation { ratio });
    }
    Ok(GridSpec {
        a_dagger,
        m,
        h,
        t_final,
        n_steps,
        dt,
        theorem_ratio_holds,
        allow_unstable,
    })
}

impl GridSpec {
    /// dt/h^2, the parabolic mesh ratio.
    pub fn mesh_ratio(&self) -> f64 {
        self.dt / (self.h * self.h)
    }

    /// Same grid with h -> h/2 and dt -> dt/4 applied `level` times; the
    /// mesh ratio is invariant under this refinement.
    pub fn refined(&self, level: u32) -> Result<GridSpec, GridError> {
        build_grid(
            self.a_dagger,
            self.m << level,
            self.t_final,
            self.n_steps << (2 * level),
            self.allow_unstable,
        )
    }
}

/// Age node x_j = j*h.
pub fn node(grid: &GridSpec, j: usize) -> Result<f64, GridError> {
    if j > grid.m {
        return Err(GridError::IndexOutOfRange { j, m: grid.m });
    }
    Ok(j as f64 * grid.h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    Trapezoid,
    Simpson,
    /// Composite Simpson with a 3/8 tail on the last three panels; used
    /// for odd panel counts, plain Simpson layout for even ones.
    Simpson38Hybrid,
}

impl RuleKind {
    pub fn name(&self) -> &'static str {
        match self {
            RuleKind::Trapezoid => "trapezoid",
            RuleKind::Simpson => "simpson",
            RuleKind::Simpson38Hybrid => "simpson38-hybrid",
        }
    }

    pub fn parse(name: &str) -> Result<RuleKind, QuadratureError> {
        match name {
            "trapezoid" => Ok(RuleKind::Trapezoid),
            "simpson" => Ok(RuleKind::Simpson),
            "simpson38-hybrid" => Ok(RuleKind::Simpson38Hybrid),
            other => Err(QuadratureError::UnsupportedRule(other.to_string())),
        }
    }
}

impl std::fmt::Display for RuleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Newton-Cotes weights q_0..q_M: integrals are evaluated as
/// h * sum_j q_j f(x_j).
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub weights: Vec<f64>,
    pub rule_name: RuleKind,
    pub include_left_endpoint: bool,
}

impl QuadratureRule {
    pub fn panels(&self) -> usize {
        self.weights.len() - 1
    }
}

/// Builds the weight sequence for M panels. Simpson with an odd M
/// silently becomes the 3/8 hybrid (the returned `rule_name` records the
/// switch). With `include_left_endpoint` false, q_0 is zeroed after
/// construction, matching sums that start at j=1; this costs the rule its
/// high-order accuracy and is off by default.
pub fn build_weights(
    m: usize,
    kind: RuleKind,
    include_left_endpoint: bool,
) -> Result<QuadratureRule, QuadratureError> {
    if m < 3 {
        return Err(QuadratureError::UnsupportedRule(format!(
            "{} with M={m} (need M >= 3)",
            kind.name()
        )));
    }
    let (weights, rule_name) = match kind {
        RuleKind::Trapezoid => (trapezoid_weights(m), RuleKind::Trapezoid),
        RuleKind::Simpson | RuleKind::Simpson38Hybrid => {
            if m % 2 == 0 {
                let name = if kind == RuleKind::Simpson {
                    RuleKind::Simpson
                } else {
                    RuleKind::Simpson38Hybrid
                };
                (simpson_weights(m), name)
            } else {
                (hybrid_weights(m), RuleKind::Simpson38Hybrid)
            }
        }
    };
    let mut rule = QuadratureRule {
        weights,
        rule_name,
        include_left_endpoint,
    };
    if !include_left_endpoint {
        rule.weights[0] = 0.0;
    }
    Ok(rule)
}

fn trapezoid_weights(m: usize) -> Vec<f64> {
    let mut q = vec![1.0; m + 1];
    q[0] = 0.5;
    q[m] = 0.5;
    q
}

fn simpson_weights(m: usize) -> Vec<f64> {
    debug_assert!(m % 2 == 0);
    let mut q = vec![0.0; m + 1];
    q[0] = 1.0 / 3.0;
    q[m] = 1.0 / 3.0;
    for j in 1..m {
        q[j] = if j % 2 == 1 { 4.0 / 3.0 } else { 2.0 / 3.0 };
    }
    q
}

/// Simpson on the first M-3 panels plus the 3/8 rule on the last three.
fn hybrid_weights(m: usize) -> Vec<f64> {
    debug_assert!(m % 2 == 1 && m >= 3);
    let mut q = vec![0.0; m + 1];
    if m > 3 {
        let head = simpson_weights(m - 3);
        q[..m - 2].copy_from_slice(&head);
    }
    q[m - 3] += 3.0 / 8.0;
    q[m - 2] += 9.0 / 8.0;
    q[m - 1] += 9.0 / 8.0;
    q[m] += 3.0 / 8.0;
    q
}

/// h * sum_j q_j samples_j.
pub fn integrate(rule: &QuadratureRule, samples: &[f64], h: f64) -> Result<f64, QuadratureError> {
    if samples.len() != rule.weights.len() {
        return Err(QuadratureError::LengthMismatch {
            expected: rule.weights.len(),
            got: samples.len(),
        });
    }
    let sum: f64 = rule.weights.iter().zip(samples).map(|(q, s)| q * s).sum();
    Ok(h * sum)
}

/// Discrete weighted population S = h * sum_j q_j psi(x_j) U_j.
pub fn weighted_population(
    rule: &QuadratureRule,
    psi_samples: &[f64],
    u: &[f64],
    h: f64,
) -> Result<f64, QuadratureError> {
    if psi_samples.len() != rule.weights.len() || u.len() != rule.weights.len() {
        return Err(QuadratureError::LengthMismatch {
            expected: rule.weights.len(),
            got: psi_samples.len().max(u.len()),
        });
    }
    let sum: f64 = rule
        .weights
        .iter()
        .zip(psi_samples)
        .zip(u)
        .map(|((q, p), v)| q * p * v)
        .sum();
    Ok(h * sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    const E1: f64 = 0.36787944117144233; // e^{-1}

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1.0)
    }

    // Oracle: exact integral of x^p over [0, m*h].
    fn monomial_integral(m: usize, h: f64, p: u32) -> f64 {
        (m as f64 * h).powi(p as i32 + 1) / (p as f64 + 1.0)
    }

    fn monomial_error(rule: &QuadratureRule, h: f64, p: u32) -> f64 {
        let samples: Vec<f64> = (0..rule.weights.len())
            .map(|j| (j as f64 * h).powi(p as i32))
            .collect();
        let got = integrate(rule, &samples, h).unwrap();
        (got - monomial_integral(rule.panels(), h, p)).abs()
    }

    #[test]
    fn benchmark_grids_accepted() {
        let g = build_grid(1.0, 400, 0.05, 16000, false).unwrap();
        assert_eq!(g.h, 0.0025);
        assert!((g.dt - 3.125e-6).abs() < 1e-18);
        assert!(g.theorem_ratio_holds);
        assert!((g.mesh_ratio() - 0.5).abs() < 1e-12);

        let g = build_grid(2.0, 2000, 0.01, 20000, false).unwrap();
        assert_eq!(g.h, 0.001);
        assert!((g.dt - 5e-7).abs() < 1e-18);
        assert!(g.theorem_ratio_holds);
    }

    #[test]
    fn unstable_ratio_rejected_unless_allowed() {
        let err = build_grid(1.0, 4, 1.0, 8, false).unwrap_err();
        assert!(
            matches!(err, GridError::StabilityViolation { ratio } if (ratio - 2.0).abs() < 1e-12)
        );

        let g = build_grid(1.0, 4, 1.0, 8, true).unwrap();
        assert!(!g.theorem_ratio_holds);
        assert!(g.allow_unstable);
    }

    #[test]
    fn foot_out_of_cell_always_rejected() {
        let err = build_grid(1.0, 4, 1.0, 2, true).unwrap_err();
        assert!(matches!(err, GridError::FootOutOfCell { .. }));
    }

    #[test]
    fn degenerate_parameters_rejected() {
        assert!(build_grid(0.0, 4, 1.0, 8, false).is_err());
        assert!(build_grid(1.0, 2, 1.0, 8, false).is_err());
        assert!(build_grid(1.0, 4, 0.0, 8, false).is_err());
        assert!(build_grid(1.0, 4, 1.0, 0, false).is_err());
    }

    #[test]
    fn node_positions() {
        let g = build_grid(1.0, 4, 0.01, 100, false).unwrap();
        assert_eq!(node(&g, 0).unwrap(), 0.0);
        assert_eq!(node(&g, 4).unwrap(), 1.0);
        assert_eq!(
            node(&g, 5).unwrap_err(),
            GridError::IndexOutOfRange { j: 5, m: 4 }
        );
        let g = build_grid(2.0, 2000, 0.001, 2000, false).unwrap();
        assert_eq!(node(&g, 1000).unwrap(), 1.0);
    }

    #[test]
    fn refinement_preserves_mesh_ratio() {
        let base = build_grid(1.0, 50, 0.05, 250, false).unwrap();
        let fine = base.refined(2).unwrap();
        assert_eq!(fine.m, 200);
        assert_eq!(fine.n_steps, 4000);
        assert!((fine.mesh_ratio() - base.mesh_ratio()).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_and_simpson_weights() {
        let t = build_weights(4, RuleKind::Trapezoid, true).unwrap();
        assert_eq!(t.weights, vec![0.5, 1.0, 1.0, 1.0, 0.5]);
        let s = build_weights(4, RuleKind::Simpson, true).unwrap();
        assert_eq!(
            s.weights,
            vec![1.0 / 3.0, 4.0 / 3.0, 2.0 / 3.0, 4.0 / 3.0, 1.0 / 3.0]
        );
        assert_eq!(s.rule_name, RuleKind::Simpson);
    }

    #[test]
    fn odd_simpson_switches_to_hybrid() {
        let r = build_weights(5, RuleKind::Simpson, true).unwrap();
        assert_eq!(r.rule_name, RuleKind::Simpson38Hybrid);
        let expect = [
            1.0 / 3.0,
            4.0 / 3.0,
            1.0 / 3.0 + 3.0 / 8.0,
            9.0 / 8.0,
            9.0 / 8.0,
            3.0 / 8.0,
        ];
        for (w, e) in r.weights.iter().zip(expect) {
            assert!((w - e).abs() < 1e-15, "{:?}", r.weights);
        }
        // Cubic exactness is the real contract for the hybrid layout.
        for p in 0..=3 {
            assert!(monomial_error(&r, 0.2, p) < 1e-14);
        }
        let r3 = build_weights(3, RuleKind::Simpson, true).unwrap();
        assert_eq!(r3.weights, vec![3.0 / 8.0, 9.0 / 8.0, 9.0 / 8.0, 3.0 / 8.0]);
    }

    #[test]
    fn monomial_exactness_up_to_rule_degree() {
        for m in 4..=64usize {
            let h = 1.0 / m as f64;
            let t = build_weights(m, RuleKind::Trapezoid, true).unwrap();
            for p in 0..=1 {
                assert!(monomial_error(&t, h, p) < 1e-12, "trapezoid M={m} p={p}");
            }
            let r = build_weights(m, RuleKind::Simpson, true).unwrap();
            for p in 0..=3 {
                assert!(
                    monomial_error(&r, h, p) < 1e-12,
                    "{} M={m} p={p}",
                    r.rule_name
                );
            }
        }
    }

    #[test]
    fn weights_sum_to_panel_count() {
        for m in [4usize, 5, 16, 63, 100] {
            let r = build_weights(m, RuleKind::Simpson, true).unwrap();
            let sum: f64 = r.weights.iter().sum();
            assert!(rel_close(sum, m as f64, 1e-12));
            assert!(r.weights.iter().all(|&q| q >= 0.0));
        }
    }

    #[test]
    fn integrate_exponential() {
        let m = 100;
        let h = 1.0 / m as f64;
        let rule = build_weights(m, RuleKind::Simpson, true).unwrap();
        let ones = vec![1.0; m + 1];
        assert!((integrate(&rule, &ones, h).unwrap() - 1.0).abs() < 1e-12);

        let exp_samples: Vec<f64> = (0..=m).map(|j| (-(j as f64) * h).exp()).collect();
        let got = integrate(&rule, &exp_samples, h).unwrap();
        assert!((got - (1.0 - E1)).abs() < 1e-9);

        // Shifted integrand: S(0) of the first benchmark problem.
        let shifted: Vec<f64> = exp_samples.iter().map(|v| v - E1).collect();
        let got = integrate(&rule, &shifted, h).unwrap();
        assert!((got - (1.0 - 2.0 * E1)).abs() < 1e-9);
    }

    #[test]
    fn simpson_observed_order_at_least_three() {
        let mut errs = Vec::new();
        for m in [8usize, 16, 32, 64, 128] {
            let h = 1.0 / m as f64;
            let rule = build_weights(m, RuleKind::Simpson, true).unwrap();
            let samples: Vec<f64> = (0..=m).map(|j| (-(j as f64) * h).exp()).collect();
            errs.push((integrate(&rule, &samples, h).unwrap() - (1.0 - E1)).abs());
        }
        for k in 0..errs.len() - 1 {
            let order = (errs[k] / errs[k + 1]).log2();
            assert!(
                order >= 3.0,
                "order {order} between M={} and M={}",
                8 << k,
                16 << k
            );
        }
    }

    #[test]
    fn dropping_left_endpoint_bounded_perturbation() {
        let m = 40;
        let h = 1.0 / m as f64;
        let with = build_weights(m, RuleKind::Simpson, true).unwrap();
        let without = build_weights(m, RuleKind::Simpson, false).unwrap();
        let samples: Vec<f64> = (0..=m).map(|j| (-(j as f64) * h).exp()).collect();
        let max_abs = samples.iter().cloned().fold(0.0f64, f64::max);
        let a = integrate(&with, &samples, h).unwrap();
        let b = integrate(&without, &samples, h).unwrap();
        let bound = h * with.weights[0] * max_abs;
        assert!((a - b).abs() <= bound + 1e-15);
        assert!(without.weights[0] == 0.0);
    }

    #[test]
    fn weighted_population_cases() {
        let m = 100;
        let h = 1.0 / m as f64;
        let rule = build_weights(m, RuleKind::Simpson, true).unwrap();
        let psi = vec![1.0; m + 1];

        let zeros = vec![0.0; m + 1];
        assert_eq!(weighted_population(&rule, &psi, &zeros, h).unwrap(), 0.0);

        let u0: Vec<f64> = (0..=m).map(|j| (-(j as f64) * h).exp() - E1).collect();
        let s = weighted_population(&rule, &psi, &u0, h).unwrap();
        assert!((s - (1.0 - 2.0 * E1)).abs() < 1e-9);

        // Constant profile on [0,2].
        let m = 2000;
        let h = 2.0 / m as f64;
        let rule = build_weights(m, RuleKind::Simpson, true).unwrap();
        let ones = vec![1.0; m + 1];
        let s = weighted_population(&rule, &ones, &ones, h).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn length_mismatch_reported() {
        let rule = build_weights(4, RuleKind::Trapezoid, true).unwrap();
        assert!(matches!(
            integrate(&rule, &[1.0; 4], 0.25),
            Err(QuadratureError::LengthMismatch {
                expected: 5,
                got: 4
            })
        ));
        assert!(matches!(
            weighted_population(&rule, &[1.0; 5], &[1.0; 3], 0.25),
            Err(QuadratureError::LengthMismatch { .. })
        ));
    }

    proptest::proptest! {
        // Construction is total on valid inputs: anything with dt <= h
        // and dt/h^2 <= 1/2 is accepted and carries consistent fields.
        #[test]
        fn grid_total_on_valid_inputs(
            a_dagger in 0.1f64..50.0,
            m in 3usize..2000,
            t_final in 1e-4f64..10.0,
        ) {
            let h = a_dagger / m as f64;
            let max_dt = (h * h / 2.0).min(h);
            let n_steps = (t_final / max_dt).ceil() as usize;
            let g = build_grid(a_dagger, m, t_final, n_steps, false).unwrap();
            proptest::prop_assert_eq!(g.h, h);
            proptest::prop_assert_eq!(g.dt, t_final / n_steps as f64);
            proptest::prop_assert!(g.theorem_ratio_holds);
        }
    }

    #[test]
    fn rule_names_round_trip() {
        for kind in [
            RuleKind::Trapezoid,
            RuleKind::Simpson,
            RuleKind::Simpson38Hybrid,
        ] {
            assert_eq!(RuleKind::parse(kind.name()).unwrap(), kind);
        }
        assert!(matches!(
            RuleKind::parse("gauss"),
            Err(QuadratureError::UnsupportedRule(_))
        ));
    }
}
