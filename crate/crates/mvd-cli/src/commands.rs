//! Implementations of the four subcommands.

use std::path::Path;

use mvd_core::discretization::{build_weights, RuleKind};
use mvd_core::models::{
    builtin, compatibility_check, interior_probe_grid, residual_oracle, BUILTIN_NAMES,
};
use mvd_core::scheme::{run, SchemeError, Trajectory};
use mvd_core::verify::{
    convergence_ladder_with, self_convergence_with, ConvergenceReport, LadderOptions, VerifyError,
};
use mvd_core::ExecMode;

use crate::config::{self, CompatibilityMode, RunConfig};
use crate::output::{self, Meta, MetaSnapshot, MetaWarnings};
use crate::CliError;

/// Residual above which the corner compatibility check counts as a
/// warning; comfortably above quadrature error on any reasonable grid,
/// far below a genuine mismatch like ex4's ~1e-2.
pub const COMPATIBILITY_TOL: f64 = 1e-6;

/// Residual-oracle acceptance threshold for the verified builtin
/// solutions at fd_step = 1e-4.
pub const ORACLE_TOL: f64 = 1e-6;
const ORACLE_FD_STEP: f64 = 1e-4;

/// Worker configuration from the environment: MVD_THREADS=1 forces the
/// sequential path, larger values cap the worker pool.
pub fn exec_mode_from_env() -> ExecMode {
    let Ok(raw) = std::env::var("MVD_THREADS") else {
        return ExecMode::default();
    };
    match raw.parse::<usize>() {
        Ok(1) => ExecMode::Sequential,
        Ok(n) if n >= 2 => {
            #[cfg(feature = "parallel")]
            {
                // Ignore the error if a global pool already exists.
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
                ExecMode::Parallel
            }
            #[cfg(not(feature = "parallel"))]
            {
                ExecMode::Sequential
            }
        }
        _ => {
            eprintln!("warning: ignoring invalid MVD_THREADS={raw:?}");
            ExecMode::default()
        }
    }
}

fn scheme_error(e: SchemeError) -> CliError {
    match e {
        SchemeError::NonFiniteState { .. } | SchemeError::NonFiniteResult { .. } => {
            CliError::NonFinite(e.to_string())
        }
        other => CliError::Config(other.to_string()),
    }
}

fn check_compatibility(cfg: &RunConfig, warnings: &mut MetaWarnings) -> Result<(), CliError> {
    if cfg.compatibility == CompatibilityMode::Off {
        return Ok(());
    }
    let rule = build_weights(cfg.grid.m, cfg.rule_kind, cfg.include_left_endpoint)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let residual = compatibility_check(&cfg.problem.coeffs, &rule, &cfg.grid);
    if residual > COMPATIBILITY_TOL {
        if cfg.compatibility == CompatibilityMode::Error {
            return Err(CliError::Config(format!(
                "checks.compatibility: u0(0) and g(int B u0) differ by {residual:e}"
            )));
        }
        eprintln!(
            "warning: compatibility residual |u0(0) - g(int B u0)| = {residual:e} exceeds {COMPATIBILITY_TOL:e}"
        );
        warnings.compatibility_residual = Some(residual);
    }
    Ok(())
}

pub fn cmd_solve(config_path: &Path) -> Result<(), CliError> {
    let cfg = config::load(config_path)?;
    cfg.ensure_explicit_grid_for_inline()?;
    let rule = build_weights(cfg.grid.m, cfg.rule_kind, cfg.include_left_endpoint)
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut warnings = MetaWarnings::default();
    check_compatibility(&cfg, &mut warnings)?;
    if !cfg.grid.theorem_ratio_holds {
        let ratio = cfg.grid.mesh_ratio();
        eprintln!("warning: dt/h^2 = {ratio} exceeds 1/2 (allow_unstable is set)");
        warnings.mesh_ratio_exceeds_half = Some(ratio);
    }

    let traj = run(&cfg.problem.coeffs, &cfg.grid, &rule, &cfg.snapshots).map_err(scheme_error)?;
    if let Some(original) = traj.initial_boundary_forced {
        eprintln!(
            "warning: u0(a_dagger) = {original:e} is nonzero; the initial right boundary was forced to 0"
        );
        warnings.initial_boundary_forced = Some(original);
    }

    let dir = cfg.output_dir.as_path();
    let mut meta_snapshots = Vec::with_capacity(cfg.snapshots.len());
    for &requested in &cfg.snapshots {
        let level = Trajectory::level_for_time(&cfg.grid, requested);
        let profile = traj
            .snapshots
            .get(&level)
            .expect("every requested level was recorded");
        let file = output::snapshot_filename(requested);
        let path = output::write_text(dir, &file, &output::solution_csv(&cfg.grid, profile))?;
        println!("wrote {}", path.display());
        meta_snapshots.push(MetaSnapshot {
            requested,
            level,
            time: level as f64 * cfg.grid.dt,
            file,
        });
    }
    let path = output::write_text(dir, "series.csv", &output::series_csv(&traj))?;
    println!("wrote {}", path.display());
    let meta = Meta::new(cfg.problem.name, &cfg.grid, &rule, meta_snapshots, warnings);
    let path = output::write_json(dir, "meta.json", &meta)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn verify_error(e: VerifyError) -> CliError {
    match e {
        VerifyError::Level { .. } => CliError::LevelFailed(e.to_string()),
        VerifyError::Grid(g) => config::grid_error(g),
        other => CliError::Config(other.to_string()),
    }
}

pub fn cmd_converge(
    config_path: &Path,
    levels: usize,
    self_convergence: bool,
    mode: ExecMode,
) -> Result<ConvergenceReport, CliError> {
    let cfg = config::load(config_path)?;
    cfg.ensure_explicit_grid_for_inline()?;
    if levels < 2 {
        return Err(CliError::Config("levels: need at least 2".into()));
    }
    let opts = LadderOptions {
        mode,
        rule: cfg.rule_kind,
        include_left_endpoint: cfg.include_left_endpoint,
        ..LadderOptions::default()
    };
    let report = if self_convergence {
        self_convergence_with(&cfg.problem, &cfg.grid, levels, &opts).map_err(verify_error)?
    } else {
        if cfg.problem.exact.is_none() {
            return Err(CliError::Config(format!(
                "problem {:?} has no exact solution; rerun with --self",
                cfg.problem.name
            )));
        }
        if !cfg.problem.exact_is_verified {
            return Err(CliError::Config(format!(
                "problem {:?}: the claimed exact solution does not satisfy the equation \
                 (see `mvd verify-builtin`); rerun with --self",
                cfg.problem.name
            )));
        }
        convergence_ladder_with(&cfg.problem, &cfg.grid, levels, &opts).map_err(verify_error)?
    };

    let path = output::write_text(
        cfg.output_dir.as_path(),
        "convergence.csv",
        &output::convergence_csv(&report),
    )?;
    let orders: Vec<String> = report.orders.iter().map(|o| o.to_string()).collect();
    println!("orders: {}", orders.join(" "));
    println!("wrote {}", path.display());
    Ok(report)
}

pub fn cmd_verify_builtin() -> Result<(), CliError> {
    println!("problem  residual@1e-4  compatibility  notes");
    let mut failure = None;
    for name in BUILTIN_NAMES {
        let p = builtin(name).expect("shipped problem");
        let rule = build_weights(p.default_grid.m, RuleKind::Simpson, true)
            .expect("default grids have M >= 3");
        let compat = compatibility_check(&p.coeffs, &rule, &p.default_grid);
        let residual = p.exact.as_ref().map(|exact| {
            residual_oracle(
                &p.coeffs,
                p.default_grid.a_dagger,
                exact.as_ref(),
                &interior_probe_grid(p.default_grid.t_final, p.default_grid.a_dagger),
                ORACLE_FD_STEP,
            )
        });
        let (residual_text, note) = match (&residual, p.exact_is_verified) {
            (Some(Ok(r)), true) => {
                if *r > ORACLE_TOL {
                    failure = Some(format!(
                        "{name}: exact-solution residual {r:e} exceeds {ORACLE_TOL:e}"
                    ));
                }
                (format!("{r:9.2e}"), "exact solution verified".to_string())
            }
            (Some(Ok(r)), false) => (
                format!("{r:9.2e}"),
                "residual nonzero -- claimed form fails the equation, see notes".to_string(),
            ),
            (Some(Err(e)), _) => (format!("error: {e}"), String::new()),
            (None, _) => ("-".to_string(), "no exact solution".to_string()),
        };
        let compat_text = if compat > COMPATIBILITY_TOL {
            format!("{compat:9.2e} (warning)")
        } else {
            format!("{compat:9.2e}")
        };
        println!("{name:7}  {residual_text:13}  {compat_text:13}  {note}");
    }
    match failure {
        Some(msg) => Err(CliError::OracleFailed(msg)),
        None => Ok(()),
    }
}

pub fn cmd_weights(m: usize, rule_name: &str) -> Result<(), CliError> {
    let kind = RuleKind::parse(rule_name).map_err(|e| CliError::Config(e.to_string()))?;
    let rule = build_weights(m, kind, true).map_err(|e| CliError::Config(e.to_string()))?;
    if rule.rule_name != kind {
        eprintln!(
            "note: {} needs an even panel count; selected {} for M = {m}",
            kind.name(),
            rule.rule_name.name()
        );
    }
    let rendered: Vec<String> = rule.weights.iter().map(|w| w.to_string()).collect();
    println!("{}", rendered.join(" "));
    Ok(())
}
