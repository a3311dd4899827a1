//! Plot-ready CSV and machine-readable JSON emission. Numbers are written
//! in Rust's shortest round-trip decimal form, so re-reading a file and
//! re-emitting it is byte-identical.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use mvd_core::discretization::{GridSpec, QuadratureRule};
use mvd_core::scheme::Trajectory;
use mvd_core::verify::ConvergenceReport;

use crate::CliError;

fn push_row(out: &mut String, fields: &[Option<f64>]) {
    for (i, field) in fields.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        if let Some(v) = field {
            let _ = write!(out, "{v}");
        }
    }
    out.push('\n');
}

/// One profile snapshot, columns `x,u`.
pub fn solution_csv(grid: &GridSpec, u: &[f64]) -> String {
    let mut out = String::from("x,u\n");
    for (j, v) in u.iter().enumerate() {
        push_row(&mut out, &[Some(j as f64 * grid.h), Some(*v)]);
    }
    out
}

/// The per-step scalar series, columns `t,S,u_boundary`.
pub fn series_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,S,u_boundary\n");
    for p in &traj.series {
        push_row(
            &mut out,
            &[
                Some(p.t),
                Some(p.weighted_population),
                Some(p.boundary_value),
            ],
        );
    }
    out
}

/// Convergence table, columns `level,M,N,h,dt,max_error,order`; the order
/// field is empty on the coarsest row.
pub fn convergence_csv(report: &ConvergenceReport) -> String {
    let mut out = String::from("level,M,N,h,dt,max_error,order\n");
    for (k, level) in report.levels.iter().enumerate() {
        let order = if k > 0 {
            Some(report.orders[k - 1])
        } else {
            None
        };
        push_row(
            &mut out,
            &[
                Some(k as f64),
                Some(level.m as f64),
                Some(level.n_steps as f64),
                Some(level.h),
                Some(level.dt),
                Some(level.max_error),
                order,
            ],
        );
    }
    out
}

/// Parses a CSV produced by this module and re-emits it; used to check
/// byte round-trips.
pub fn reemit_csv(text: &str) -> Result<String, CliError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| CliError::Config("empty csv".into()))?;
    let mut out = String::from(header);
    out.push('\n');
    for line in lines {
        let fields: Result<Vec<Option<f64>>, CliError> = line
            .split(',')
            .map(|f| {
                if f.is_empty() {
                    Ok(None)
                } else {
                    f.parse::<f64>()
                        .map(Some)
                        .map_err(|e| CliError::Config(format!("bad csv field {f:?}: {e}")))
                }
            })
            .collect();
        push_row(&mut out, &fields?);
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct MetaGrid {
    pub a_dagger: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub h: f64,
    #[serde(rename = "T")]
    pub t_final: f64,
    #[serde(rename = "N")]
    pub n_steps: usize,
    pub dt: f64,
    pub dt_over_h2: f64,
}

#[derive(Debug, Serialize)]
pub struct MetaQuadrature {
    pub rule: String,
    pub include_left_endpoint: bool,
}

#[derive(Debug, Serialize)]
pub struct MetaSnapshot {
    pub requested: f64,
    pub level: usize,
    pub time: f64,
    pub file: String,
}

/// Warning keys are present only when the warning fired.
#[derive(Debug, Default, Serialize)]
pub struct MetaWarnings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compatibility_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub initial_boundary_forced: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mesh_ratio_exceeds_half: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct Meta {
    pub problem: String,
    pub grid: MetaGrid,
    pub quadrature: MetaQuadrature,
    pub snapshots: Vec<MetaSnapshot>,
    pub warnings: MetaWarnings,
}

impl Meta {
    pub fn new(
        problem: &str,
        grid: &GridSpec,
        rule: &QuadratureRule,
        snapshots: Vec<MetaSnapshot>,
        warnings: MetaWarnings,
    ) -> Meta {
        Meta {
            problem: problem.to_string(),
            grid: MetaGrid {
                a_dagger: grid.a_dagger,
                m: grid.m,
                h: grid.h,
                t_final: grid.t_final,
                n_steps: grid.n_steps,
                dt: grid.dt,
                dt_over_h2: grid.mesh_ratio(),
            },
            quadrature: MetaQuadrature {
                rule: rule.rule_name.name().to_string(),
                include_left_endpoint: rule.include_left_endpoint,
            },
            snapshots,
            warnings,
        }
    }
}

pub fn snapshot_filename(requested: f64) -> String {
    format!("solution_t{requested:.6}.csv")
}

pub fn write_text(dir: &Path, name: &str, text: &str) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

pub fn write_json(dir: &Path, name: &str, meta: &Meta) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(meta)
        .map_err(|e| CliError::Config(format!("meta serialization: {e}")))?;
    fs::write(&path, text)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mvd_core::discretization::build_grid;

    #[test]
    fn csv_round_trips_byte_identically() {
        let grid = build_grid(1.0, 4, 0.05, 100, false).unwrap();
        let u = vec![0.6321205588285577, 0.25, 3.125e-6, 1.0 / 3.0, 0.0];
        let text = solution_csv(&grid, &u);
        assert_eq!(reemit_csv(&text).unwrap(), text);
        assert!(text.starts_with("x,u\n0,0.6321205588285577\n"));
    }

    #[test]
    fn convergence_csv_first_order_field_empty() {
        use mvd_core::verify::{ConvergenceReport, LevelRecord};
        let levels = vec![
            LevelRecord {
                m: 50,
                n_steps: 250,
                h: 0.02,
                dt: 2e-4,
                max_error: 1e-3,
            },
            LevelRecord {
                m: 100,
                n_steps: 1000,
                h: 0.01,
                dt: 5e-5,
                max_error: 4.4e-4,
            },
        ];
        let report = ConvergenceReport {
            orders: vec![(1e-3f64 / 4.4e-4).log2()],
            levels,
            refine_policy: "",
        };
        let text = convergence_csv(&report);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "level,M,N,h,dt,max_error,order");
        assert!(lines.next().unwrap().ends_with(','));
        assert_eq!(reemit_csv(&text).unwrap(), text);
    }

    #[test]
    fn snapshot_filenames_embed_six_decimals() {
        assert_eq!(snapshot_filename(0.05), "solution_t0.050000.csv");
        assert_eq!(snapshot_filename(5.0), "solution_t5.000000.csv");
    }
}
