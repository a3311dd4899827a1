//! JSON run configuration: either a builtin problem name or an inline
//! expression-defined problem, a grid, quadrature options, and output
//! settings. Numeric fields accept either a JSON number or a string
//! expression evaluated once at load, so `"exp(-1)"` is a valid constant.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use mvd_core::discretization::{build_grid, GridError, GridSpec, RuleKind};
use mvd_core::expr;
use mvd_core::models::{builtin, mollified_initial, BuiltinProblem};
use mvd_core::scheme::CoefficientSet;

use crate::CliError;

/// A number or an expression string over the predefined constants.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Plain(f64),
    Expression(String),
}

impl Number {
    fn resolve(&self, key: &str) -> Result<f64, CliError> {
        match self {
            Number::Plain(v) => Ok(*v),
            Number::Expression(text) => expr::parse(text, &[])
                .and_then(|ast| ast.eval_checked(&[]))
                .map_err(|e| CliError::Config(format!("{key}: {e}"))),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum ProblemSpec {
    Builtin(String),
    Inline(InlineProblem),
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineProblem {
    a_dagger: Number,
    epsilon: Number,
    /// Mortality d(x, S).
    d_expr: String,
    /// Fertility B(x).
    #[serde(rename = "B_expr")]
    b_expr: String,
    /// Competition weight psi(x); defaults to 1.
    psi_expr: Option<String>,
    /// Birth response g(s).
    g_expr: String,
    /// Initial density u0(x), or the literal "mollified-ex4".
    u0_expr: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridSection {
    #[serde(rename = "M")]
    m: usize,
    #[serde(rename = "T")]
    t: Number,
    #[serde(rename = "N")]
    n: Option<usize>,
    dt: Option<Number>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuadratureSection {
    rule: Option<String>,
    include_left_endpoint: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompatibilityMode {
    #[default]
    Warn,
    Error,
    Off,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChecksSection {
    compatibility: Option<CompatibilityMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: ProblemSpec,
    grid: Option<GridSection>,
    quadrature: Option<QuadratureSection>,
    snapshots: Option<Vec<Number>>,
    output_dir: Option<PathBuf>,
    allow_unstable: Option<bool>,
    checks: Option<ChecksSection>,
}

/// Fully resolved configuration ready to run.
#[derive(Debug)]
pub struct RunConfig {
    pub problem: BuiltinProblem,
    pub grid: GridSpec,
    pub rule_kind: RuleKind,
    pub include_left_endpoint: bool,
    pub snapshots: Vec<f64>,
    pub output_dir: PathBuf,
    pub compatibility: CompatibilityMode,
}

pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    resolve(raw)
}

pub fn load_str(text: &str) -> Result<RunConfig, CliError> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    resolve(raw)
}

fn resolve(raw: RawConfig) -> Result<RunConfig, CliError> {
    let allow_unstable = raw.allow_unstable.unwrap_or(false);
    let problem = match raw.problem {
        ProblemSpec::Builtin(name) => {
            builtin(&name).map_err(|e| CliError::Config(format!("problem: {e}")))?
        }
        ProblemSpec::Inline(inline) => assemble_inline(inline)?,
    };

    let grid = match raw.grid {
        None => {
            if allow_unstable {
                // Re-derive with the override recorded on the grid.
                rebuild_grid(&problem.default_grid, true)?
            } else {
                problem.default_grid
            }
        }
        Some(section) => {
            let t = section.t.resolve("grid.T")?;
            let n = match (section.n, section.dt) {
                (Some(n), None) => n,
                (None, Some(dt)) => {
                    let dt = dt.resolve("grid.dt")?;
                    if dt.is_nan() || dt <= 0.0 {
                        return Err(CliError::Config("grid.dt: must be positive".into()));
                    }
                    let n = (t / dt).round();
                    if !n.is_finite() || n < 1.0 {
                        return Err(CliError::Config(
                            "grid.dt: T/dt must round to at least one step".into(),
                        ));
                    }
                    n as usize
                }
                (Some(_), Some(_)) => {
                    return Err(CliError::Config(
                        "grid: exactly one of N and dt must be given, found both".into(),
                    ))
                }
                (None, None) => {
                    return Err(CliError::Config(
                        "grid: exactly one of N and dt must be given, found neither".into(),
                    ))
                }
            };
            build_grid(
                problem.default_grid.a_dagger,
                section.m,
                t,
                n,
                allow_unstable,
            )
            .map_err(grid_error)?
        }
    };

    let (rule_kind, include_left_endpoint) = match raw.quadrature {
        None => (RuleKind::Simpson, true),
        Some(q) => {
            let kind = match q.rule {
                None => RuleKind::Simpson,
                Some(name) => RuleKind::parse(&name)
                    .map_err(|e| CliError::Config(format!("quadrature.rule: {e}")))?,
            };
            (kind, q.include_left_endpoint.unwrap_or(true))
        }
    };

    let snapshots = match raw.snapshots {
        None => vec![grid.t_final],
        Some(times) => {
            let mut out = Vec::with_capacity(times.len());
            for (i, t) in times.iter().enumerate() {
                let v = t.resolve(&format!("snapshots[{i}]"))?;
                if !(0.0..=grid.t_final * (1.0 + 1e-12)).contains(&v) {
                    return Err(CliError::Config(format!(
                        "snapshots[{i}]: {v} outside [0, T = {}]",
                        grid.t_final
                    )));
                }
                out.push(v);
            }
            out
        }
    };

    Ok(RunConfig {
        problem,
        grid,
        rule_kind,
        include_left_endpoint,
        snapshots,
        output_dir: raw.output_dir.unwrap_or_else(|| PathBuf::from("out")),
        compatibility: raw.checks.and_then(|c| c.compatibility).unwrap_or_default(),
    })
}

fn rebuild_grid(grid: &GridSpec, allow_unstable: bool) -> Result<GridSpec, CliError> {
    build_grid(
        grid.a_dagger,
        grid.m,
        grid.t_final,
        grid.n_steps,
        allow_unstable,
    )
    .map_err(grid_error)
}

/// Stability violations get their own exit code; malformed parameters are
/// config errors.
pub fn grid_error(e: GridError) -> CliError {
    match e {
        GridError::StabilityViolation { .. } | GridError::FootOutOfCell { .. } => {
            CliError::Stability(format!("grid: {e}"))
        }
        other => CliError::Config(format!("grid: {other}")),
    }
}

fn parse_expr(key: &str, text: &str, vars: &[&str]) -> Result<expr::ExprAst, CliError> {
    expr::parse(text, vars).map_err(|e| CliError::Config(format!("problem.{key}: {e}")))
}

fn assemble_inline(inline: InlineProblem) -> Result<BuiltinProblem, CliError> {
    let a_dagger = inline.a_dagger.resolve("problem.a_dagger")?;
    if a_dagger.is_nan() || a_dagger <= 0.0 {
        return Err(CliError::Config(
            "problem.a_dagger: must be positive".into(),
        ));
    }
    let epsilon = inline.epsilon.resolve("problem.epsilon")?;

    let d_ast = parse_expr("d_expr", &inline.d_expr, &["x", "S"])?;
    let b_ast = parse_expr("B_expr", &inline.b_expr, &["x"])?;
    let psi_ast = parse_expr(
        "psi_expr",
        inline.psi_expr.as_deref().unwrap_or("1"),
        &["x"],
    )?;
    let g_ast = parse_expr("g_expr", &inline.g_expr, &["s"])?;

    // Expression evaluation cannot fail on bindings we control; a
    // non-finite value surfaces through the scheme's state checks.
    let d = move |x: f64, s: f64| d_ast.eval(&[("x", x), ("S", s)]).unwrap_or(f64::NAN);
    let b = move |x: f64| b_ast.eval(&[("x", x)]).unwrap_or(f64::NAN);
    let psi = move |x: f64| psi_ast.eval(&[("x", x)]).unwrap_or(f64::NAN);
    let g = move |s: f64| g_ast.eval(&[("s", s)]).unwrap_or(f64::NAN);

    let coeffs = if inline.u0_expr == "mollified-ex4" {
        let u0 = mollified_initial(a_dagger, 0.1);
        CoefficientSet::new(epsilon, d, b, psi, g, u0)
    } else {
        let u0_ast = parse_expr("u0_expr", &inline.u0_expr, &["x"])?;
        let u0 = move |x: f64| u0_ast.eval(&[("x", x)]).unwrap_or(f64::NAN);
        CoefficientSet::new(epsilon, d, b, psi, g, u0)
    }
    .map_err(|e| CliError::Config(format!("problem.epsilon: {e}")))?;

    // An inline problem needs a grid section; signal it with a degenerate
    // default that resolve() replaces or rejects.
    let default_grid = build_grid(a_dagger, 3, a_dagger / 3.0, 1, true)
        .map_err(|e| CliError::Config(format!("problem: {e}")))?;
    Ok(BuiltinProblem {
        name: "inline",
        coeffs,
        exact: None,
        exact_is_verified: false,
        default_grid,
        notes: "expression-defined problem from config".to_string(),
    })
}

impl RunConfig {
    /// Inline problems carry a placeholder default grid; require an
    /// explicit one.
    pub fn ensure_explicit_grid_for_inline(&self) -> Result<(), CliError> {
        if self.problem.name == "inline" && self.grid.m == 3 && self.grid.n_steps == 1 {
            return Err(CliError::Config(
                "grid: an inline problem requires an explicit grid section".into(),
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_with_default_grid() {
        let cfg = load_str(r#"{"problem": "ex1"}"#).unwrap();
        assert_eq!(cfg.problem.name, "ex1");
        assert_eq!(cfg.grid.m, 400);
        assert_eq!(cfg.snapshots, vec![0.05]);
        assert_eq!(cfg.rule_kind, RuleKind::Simpson);
        assert!(cfg.include_left_endpoint);
    }

    #[test]
    fn both_n_and_dt_rejected() {
        let err =
            load_str(r#"{"problem": "ex1", "grid": {"M": 10, "T": 0.01, "N": 100, "dt": 1e-4}}"#)
                .unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("exactly one of N and dt"));
    }

    #[test]
    fn dt_form_resolves_step_count() {
        let cfg =
            load_str(r#"{"problem": "ex1", "grid": {"M": 100, "T": 0.01, "dt": 5e-5}}"#).unwrap();
        assert_eq!(cfg.grid.n_steps, 200);
        assert!((cfg.grid.dt - 5e-5).abs() < 1e-18);
    }

    #[test]
    fn expression_constants_accepted() {
        let cfg = load_str(
            r#"{
                "problem": {
                    "a_dagger": 1.0,
                    "epsilon": "exp(-1)",
                    "d_expr": "1 + S",
                    "B_expr": "e^(-x)",
                    "g_expr": "sqrt(1+s)",
                    "u0_expr": "1 - x"
                },
                "grid": {"M": 10, "T": 0.005, "N": 100}
            }"#,
        )
        .unwrap();
        assert!((cfg.problem.coeffs.epsilon - (-1.0f64).exp()).abs() < 1e-15);
        assert_eq!((cfg.problem.coeffs.birth)(0.0), 1.0);
        assert_eq!((cfg.problem.coeffs.mortality)(0.3, 2.0), 3.0);
    }

    #[test]
    fn bad_expression_names_the_key() {
        let err = load_str(
            r#"{
                "problem": {
                    "a_dagger": 1.0, "epsilon": 0.5,
                    "d_expr": "2*+x", "B_expr": "1", "g_expr": "s", "u0_expr": "0"
                },
                "grid": {"M": 10, "T": 0.005, "N": 100}
            }"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("d_expr"), "{err}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unstable_grid_maps_to_stability_error() {
        let err =
            load_str(r#"{"problem": "ex1", "grid": {"M": 4, "T": 1.0, "N": 8}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        let cfg = load_str(
            r#"{"problem": "ex1", "grid": {"M": 4, "T": 1.0, "N": 8}, "allow_unstable": true}"#,
        )
        .unwrap();
        assert!(!cfg.grid.theorem_ratio_holds);
    }

    #[test]
    fn snapshot_outside_horizon_rejected() {
        let err = load_str(r#"{"problem": "ex1", "snapshots": [0.2]}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("snapshots[0]"));
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = load_str(r#"{"problem": "ex1", "gridd": {}}"#).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn mollified_initial_datum_by_name() {
        let cfg = load_str(
            r#"{
                "problem": {
                    "a_dagger": 7.0, "epsilon": 0.5,
                    "d_expr": "1 + S", "B_expr": "exp(-5*x)/10",
                    "g_expr": "sqrt(1+s)", "u0_expr": "mollified-ex4"
                },
                "grid": {"M": 350, "T": 0.01, "N": 50}
            }"#,
        )
        .unwrap();
        assert!(((cfg.problem.coeffs.initial)(3.0) - 1.0).abs() < 1e-10);
    }
}
