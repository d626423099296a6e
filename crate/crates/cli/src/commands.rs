//! The `flow`, `heat` and `oracle` commands. Each fills its section of the
//! summary and reports whether its checks passed.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use donaldson_core::diagnostics::{
    decay_fit, format_float, theta_series, trace_identity_error, unit_time_ratios, write_csv, FitWindow,
};
use donaldson_core::flow::{normalize, run_flow_with, StopReason};
use donaldson_core::heat::{harnack_ratio, run_heat, CoefficientSource, Coefficients, HeatSample};
use donaldson_core::oracles::{hessian_study, li_sweep, wedge_sweep, HessianStudy, LiSweep, WedgeSweep};
use donaldson_core::oracles::{MIN_HESSIAN_ORDER, WEDGE_TOLERANCE};
use donaldson_core::torus::{read_snapshot, write_snapshot, Grid};
use donaldson_core::{BackgroundGeometry, DecayOutcome, FlowState, ScalarField};
use serde::Serialize;

use crate::config::{CoefficientMode, RunConfig};
use crate::CliError;

/// Slack on `sup|∂φ/∂t|` growth, relative and absolute.
const MAX_PRINCIPLE_REL: f64 = 1e-6;
const MAX_PRINCIPLE_ABS: f64 = 1e-8;
const IDENTITY_TOLERANCE: f64 = 1e-10;
/// Largest accepted `θ(m+1)/θ(m)`.
const UNIT_RATIO_LIMIT: f64 = 0.99;
const MIN_R_SQUARED: f64 = 0.95;
/// Unit-time ratios are only taken where `θ` is above roundoff.
const RATIO_FLOOR: f64 = 1e-12;
/// Relative slack of the discrete maximum principle for the heat equation.
const HEAT_MAX_PRINCIPLE: f64 = 1e-8;

pub const SNAPSHOT_DIR: &str = "snapshots";
const FINAL_PHI: &str = "phi_final.snap";

#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn at_most(name: &'static str, value: f64, tolerance: f64) -> Self {
        Self {
            name,
            passed: value <= tolerance,
            value,
            tolerance,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GeometrySummary {
    pub kind: &'static str,
    pub seed: Option<u64>,
    pub cone_margin: f64,
    pub cone_worst_point: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct AbortSummary {
    pub error: String,
    pub t: Option<f64>,
    pub dump: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FlowSummary {
    pub n: usize,
    #[serde(rename = "N")]
    pub points_per_axis: usize,
    pub geometry: GeometrySummary,
    pub stop: Option<StopReason>,
    pub steps: usize,
    pub snapshots: usize,
    pub t_final: f64,
    pub theta_initial: f64,
    pub theta_max: f64,
    pub theta_final: f64,
    pub residual_final: f64,
    pub b_final: f64,
    pub min_eig: f64,
    pub decay: Option<DecayOutcome>,
    pub decay_note: Option<String>,
    pub checks: Vec<Check>,
    pub abort: Option<AbortSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatSummary {
    pub coefficients: CoefficientMode,
    pub samples: usize,
    pub t_end: f64,
    pub s1: f64,
    pub s2: f64,
    pub harnack_ratio: f64,
    pub alpha: f64,
    pub sup_g_over_t: f64,
    pub checks: Vec<Check>,
    pub abort: Option<AbortSummary>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub eigenvalue_bound: LiSweep,
    pub identity: WedgeSweep,
    pub identity_tolerance: f64,
    pub hessian: HessianStudy,
    pub hessian_min_order: f64,
    pub hessian_required_order: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSummary {
    pub report: &'static str,
    pub eigenvalue_bound_passed: usize,
    pub eigenvalue_bound_cases: usize,
    pub identity_passed: usize,
    pub identity_cases: usize,
    pub hessian_min_order: f64,
    pub passed: bool,
}

/// What a command produced: its summary section, whether the checks passed,
/// and the error that ended it early, if any.
pub struct Outcome<S> {
    pub summary: Option<S>,
    pub passed: bool,
    pub error: Option<CliError>,
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| io_err(path, e))
}

fn snapshot(path: &Path, field: &ScalarField, name: &str, t: f64) -> Result<(), CliError> {
    write_snapshot(path, field, name, t).map_err(|e| io_err(path, e))
}

fn setup(cfg: &RunConfig) -> Result<(Grid, BackgroundGeometry), CliError> {
    let grid = cfg.grid.expect("validated").build()?;
    let geom = cfg.geometry.as_ref().expect("validated").build(&grid)?;
    Ok((grid, geom))
}

fn dump_state(dir: &Path, state: &FlowState) -> Result<Vec<String>, CliError> {
    let mut files = Vec::new();
    for (field, name) in [(&state.phi, "phi"), (&state.phi_dot, "phi_dot")] {
        let file = format!("abort_{name}.snap");
        snapshot(&dir.join(&file), field, name, state.t)?;
        files.push(format!("{SNAPSHOT_DIR}/{file}"));
    }
    Ok(files)
}

pub fn cmd_flow(cfg: &RunConfig, out: &Path) -> Result<Outcome<FlowSummary>, CliError> {
    let (grid, geom) = setup(cfg)?;
    let flow_cfg = cfg.flow.as_ref().expect("validated");
    let section = cfg.geometry.as_ref().expect("validated");
    let snap_dir = out.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir).map_err(|e| io_err(&snap_dir, e))?;

    let mut identity_error = 0.0f64;
    let mut snapshots = 0usize;
    let mut write_error = None;
    let result = run_flow_with(&geom, flow_cfg, |s| {
        identity_error = identity_error.max(trace_identity_error(s, &geom));
        let path = snap_dir.join(format!("phi_{snapshots:05}.snap"));
        if let Err(e) = snapshot(&path, &s.phi, "phi", s.t) {
            write_error.get_or_insert(e);
        }
        snapshots += 1;
    });
    if let Some(e) = write_error {
        return Err(e);
    }

    let (rows, final_state, stop, steps, min_eig, abort) = match result {
        Ok(run) => (run.rows, Some(run.final_state), Some(run.stop), run.steps, run.min_eig_accepted, None),
        Err(abort) => {
            let dump = match &abort.last_state {
                Some(s) => dump_state(&snap_dir, s)?,
                None => Vec::new(),
            };
            let a = AbortSummary {
                error: abort.error.to_string(),
                t: abort.last_state.as_ref().map(|s| s.t),
                dump,
            };
            let min_eig = abort.last_state.as_ref().map_or(f64::NAN, |s| s.min_eig);
            (abort.rows, None, None, 0, min_eig, Some(a))
        }
    };

    let csv = out.join("diagnostics.csv");
    let mut w = create(&csv)?;
    write_csv(&mut w, &rows).map_err(|e| io_err(&csv, e))?;
    w.flush().map_err(|e| io_err(&csv, e))?;

    if let Some(s) = &final_state {
        snapshot(&snap_dir.join(FINAL_PHI), &s.phi, "phi", s.t)?;
        snapshot(&snap_dir.join("phi_dot_final.snap"), &s.phi_dot, "phi_dot", s.t)?;
        snapshot(&snap_dir.join("phi_tilde_final.snap"), &normalize(&s.phi), "phi_tilde", s.t)?;
    }

    let first = rows.first();
    let last = rows.last();
    let theta_max = rows.iter().map(|r| r.theta).fold(0.0, f64::max);
    let sup0 = first.map_or(0.0, |r| r.sup_abs_phidot);
    let sup_all = rows.iter().map(|r| r.sup_abs_phidot).fold(0.0, f64::max);
    let mut checks = vec![
        Check::at_most(
            "maximum_principle",
            sup_all,
            sup0 * (1.0 + MAX_PRINCIPLE_REL) + MAX_PRINCIPLE_ABS,
        ),
        Check::at_most("trace_identity", identity_error, IDENTITY_TOLERANCE),
        Check {
            name: "positivity",
            passed: abort.is_none() && min_eig > 0.0,
            value: min_eig,
            tolerance: 0.0,
        },
    ];

    let series = theta_series(&rows);
    let (decay, decay_note) = match FitWindow::last_half(&series).map(|w| decay_fit(&series, w)) {
        Some(Ok(d)) => (Some(d), None),
        Some(Err(e)) => (None, Some(e.to_string())),
        None => (None, Some("no samples".into())),
    };
    match &decay {
        Some(DecayOutcome::Fitted(fit)) => {
            checks.push(Check {
                name: "decay_rate",
                passed: fit.C2_hat > 0.0,
                value: fit.C2_hat,
                tolerance: 0.0,
            });
            checks.push(Check {
                name: "decay_fit_quality",
                passed: fit.r_squared >= MIN_R_SQUARED,
                value: fit.r_squared,
                tolerance: MIN_R_SQUARED,
            });
        }
        Some(DecayOutcome::Converged { .. }) | None => {}
    }
    let resolved: Vec<(f64, f64)> = series.iter().copied().filter(|&(_, th)| th >= RATIO_FLOOR).collect();
    if let Some(worst) = unit_time_ratios(&resolved, 1.0, f64::INFINITY)
        .into_iter()
        .map(|(_, q)| q)
        .reduce(f64::max)
    {
        checks.push(Check::at_most("unit_time_decay", worst, UNIT_RATIO_LIMIT));
    }

    let passed = checks.iter().all(|c| c.passed);
    let error = abort.as_ref().map(|a| CliError::Numerical(a.error.clone()));
    let summary = FlowSummary {
        n: grid.n_complex(),
        points_per_axis: grid.points_per_axis(),
        geometry: GeometrySummary {
            kind: section.kind(),
            seed: section.seed(),
            cone_margin: geom.cone().margin,
            cone_worst_point: geom.cone().worst_point,
        },
        stop,
        steps,
        snapshots,
        t_final: last.map_or(0.0, |r| r.t),
        theta_initial: first.map_or(f64::NAN, |r| r.theta),
        theta_max,
        theta_final: last.map_or(f64::NAN, |r| r.theta),
        residual_final: last.map_or(f64::NAN, |r| r.residual_sup),
        b_final: last.map_or(f64::NAN, |r| r.b_current),
        min_eig,
        decay,
        decay_note,
        checks,
        abort,
    };
    Ok(Outcome {
        summary: Some(summary),
        passed,
        error,
    })
}

fn flow_snapshots(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| {
        CliError::Config(format!(
            "heat needs flow snapshots in {} (run `flow` first): {e}",
            dir.display()
        ))
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("phi_") && n[4..].starts_with(|c: char| c.is_ascii_digit()))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Config(format!("no flow snapshots in {}", dir.display())));
    }
    Ok(paths)
}

fn load_coefficients(path: &Path, grid: &Grid, geom: &BackgroundGeometry) -> Result<(f64, Coefficients), CliError> {
    let (header, phi) = read_snapshot(path, grid).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let c = Coefficients::from_potential(&phi, geom).map_err(|e| CliError::Numerical(e.to_string()))?;
    Ok((header.time, c))
}

fn coefficient_source(
    mode: CoefficientMode,
    snap_dir: &Path,
    grid: &Grid,
    geom: &BackgroundGeometry,
) -> Result<CoefficientSource, CliError> {
    Ok(match mode {
        CoefficientMode::Identity => CoefficientSource::Frozen(Coefficients::identity(grid)),
        CoefficientMode::FrozenFinal => {
            let path = snap_dir.join(FINAL_PHI);
            if !path.exists() {
                return Err(CliError::Config(format!(
                    "heat needs {} (run `flow` first)",
                    path.display()
                )));
            }
            CoefficientSource::Frozen(load_coefficients(&path, grid, geom)?.1)
        }
        CoefficientMode::Interpolated => {
            let knots = flow_snapshots(snap_dir)?
                .iter()
                .map(|p| load_coefficients(p, grid, geom))
                .collect::<Result<Vec<_>, _>>()?;
            CoefficientSource::interpolated(knots).map_err(|e| CliError::Config(e.to_string()))?
        }
    })
}

/// `R(s1, t)` for each sample with `t > s1`, `NaN` before.
fn running_harnack(samples: &[HeatSample], s1: f64) -> Vec<f64> {
    samples
        .iter()
        .map(|s| {
            if s.t > s1 {
                harnack_ratio(samples, s1, s.t).unwrap_or(f64::NAN)
            } else {
                f64::NAN
            }
        })
        .collect()
}

pub const HEAT_COLUMNS: [&str; 5] = ["t", "sup_u", "inf_u", "sup_G_over_t", "R"];

fn write_heat_csv(path: &Path, samples: &[HeatSample], r: &[f64]) -> Result<(), CliError> {
    let mut w = create(path)?;
    let mut body = HEAT_COLUMNS.join(",");
    body.push('\n');
    for (s, r) in samples.iter().zip(r) {
        let line = [s.t, s.sup_u, s.inf_u, s.sup_G_over_t, *r].map(format_float).join(",");
        body.push_str(&line);
        body.push('\n');
    }
    w.write_all(body.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_err(path, e))
}

pub fn cmd_heat(cfg: &RunConfig, out: &Path) -> Result<Outcome<HeatSummary>, CliError> {
    let (grid, geom) = setup(cfg)?;
    let heat = cfg.heat.as_ref().expect("validated");
    let u0 = heat.u0.sample(&grid).map_err(|e| CliError::Config(e.to_string()))?;
    let source = coefficient_source(heat.coefficients, &out.join(SNAPSHOT_DIR), &grid, &geom)?;
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;

    let mut summary = HeatSummary {
        coefficients: heat.coefficients,
        samples: 0,
        t_end: heat.t_end,
        s1: heat.s1,
        s2: heat.s2,
        harnack_ratio: f64::NAN,
        alpha: heat.alpha,
        sup_g_over_t: f64::NAN,
        checks: Vec::new(),
        abort: None,
    };
    let run = match run_heat(&u0, &source, &heat.heat_config()) {
        Ok(r) => r,
        Err(e) => {
            summary.abort = Some(AbortSummary {
                error: e.to_string(),
                t: None,
                dump: Vec::new(),
            });
            return Ok(Outcome {
                summary: Some(summary),
                passed: false,
                error: Some(CliError::Numerical(e.to_string())),
            });
        }
    };
    let r = running_harnack(&run.samples, heat.s1);
    write_heat_csv(&out.join("heat.csv"), &run.samples, &r)?;

    let mut worst = 0.0f64;
    for w in run.samples.windows(2) {
        let scale = w[0].sup_u.abs().max(w[0].inf_u.abs());
        let excess = (w[1].sup_u - w[0].sup_u).max(w[0].inf_u - w[1].inf_u) / scale;
        worst = worst.max(excess);
    }
    summary.checks.push(Check::at_most("maximum_principle", worst, HEAT_MAX_PRINCIPLE));
    summary.samples = run.samples.len();
    summary.harnack_ratio = harnack_ratio(&run.samples, heat.s1, heat.s2).unwrap_or(f64::NAN);
    summary.sup_g_over_t = run.li_yau.sup_g_over_t;
    let passed = summary.checks.iter().all(|c| c.passed);
    Ok(Outcome {
        summary: Some(summary),
        passed,
        error: None,
    })
}

pub fn cmd_oracle(cfg: &RunConfig, out: &Path) -> Result<Outcome<OracleSummary>, CliError> {
    let o = cfg.oracle.as_ref().expect("validated");
    let config = |e: donaldson_core::Error| CliError::Config(e.to_string());
    let li = li_sweep(o.seed, o.eigenvalue_cases).map_err(config)?;
    let wedge = wedge_sweep(o.seed, o.identity_cases, &o.identity_dims).map_err(config)?;
    let hessian = hessian_study(2, &o.hessian_sizes, o.seed).map_err(config)?;
    let min_order = hessian.min_order();
    let passed = li.all_passed() && wedge.passed == wedge.cases && min_order >= MIN_HESSIAN_ORDER;
    let summary = OracleSummary {
        report: "oracle_report.json",
        eigenvalue_bound_passed: li.passed,
        eigenvalue_bound_cases: li.cases,
        identity_passed: wedge.passed,
        identity_cases: wedge.cases,
        hessian_min_order: min_order,
        passed,
    };
    let report = OracleReport {
        seed: o.seed,
        eigenvalue_bound: li,
        identity: wedge,
        identity_tolerance: WEDGE_TOLERANCE,
        hessian,
        hessian_min_order: min_order,
        hessian_required_order: MIN_HESSIAN_ORDER,
        passed,
    };
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    write_json(&out.join("oracle_report.json"), &report)?;
    Ok(Outcome {
        summary: Some(summary),
        passed,
        error: None,
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}
