use std::f64::consts::PI;

use rayon::prelude::*;

use super::{BackgroundGeometry, FlowConfig, FlowState};
use crate::diagnostics::{assemble_row, DiagnosticsRow};
use crate::error::{Error, Result};
use crate::hermitian::{PointTrace, C64};
use crate::torus::{dbar_hessian, integrate_mu, HermitianField, ScalarField, TAIL_WARN_THRESHOLD};

/// Accepted states keep every generalized eigenvalue of `(χ_φ, ω)` above this.
pub const POSITIVITY_FLOOR: f64 = 1e-8;

pub const MAX_HALVINGS: u32 = 40;

/// Extent of the classical RK4 stability region along the negative real axis.
pub const RK4_STABILITY_LIMIT: f64 = 2.785;

/// `χ_φ = χ + √−1∂∂̄φ`; positivity is not checked here.
pub fn chi_phi(phi: &ScalarField, geom: &BackgroundGeometry) -> Result<HermitianField> {
    geom.chi().add(&dbar_hessian(phi)?)
}

struct Evaluation {
    chi_phi: Vec<C64>,
    tr: Vec<f64>,
    rhs: Vec<f64>,
    min_eig: f64,
}

fn invalid_state(chi_phi: &HermitianField, geom: &BackgroundGeometry) -> Error {
    let w = geom.whitening();
    let (point, min_eig) = (0..chi_phi.grid().point_count())
        .map(|p| (p, w.min_eigenvalue(&chi_phi.at(p))))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best });
    Error::StateInvalid { point, min_eig }
}

fn evaluate(phi: &ScalarField, geom: &BackgroundGeometry, floor: f64) -> Result<Evaluation> {
    let mut cp = dbar_hessian(phi)?.into_raw();
    cp.par_iter_mut().zip(geom.chi().raw().par_iter()).for_each(|(h, c)| *h += c);
    let nn = geom.n() * geom.n();
    let kernel = geom.kernel();
    let pointwise: Vec<Option<PointTrace>> = cp.par_chunks(nn).map(|m| kernel.trace(m, floor)).collect();
    if pointwise.iter().any(Option::is_none) {
        return Err(invalid_state(&HermitianField::from_raw(geom.grid(), cp), geom));
    }
    let ln_n = (geom.n() as f64).ln();
    let mut tr = Vec::with_capacity(pointwise.len());
    let mut rhs = Vec::with_capacity(pointwise.len());
    let mut min_eig = f64::INFINITY;
    for (pt, f) in pointwise.into_iter().map(|v| v.expect("checked")).zip(geom.f().values()) {
        tr.push(pt.tr);
        rhs.push(-pt.tr.ln() + ln_n + f);
        min_eig = min_eig.min(pt.min_eig);
    }
    Ok(Evaluation {
        chi_phi: cp,
        tr,
        rhs,
        min_eig,
    })
}

/// Right-hand side `−log(tr_{χ_φ} ω) + log n + F`.
pub fn flow_rhs(phi: &ScalarField, geom: &BackgroundGeometry) -> Result<ScalarField> {
    let e = evaluate(phi, geom, 0.0)?;
    Ok(ScalarField::from_vec_unchecked(geom.grid(), e.rhs))
}

fn make_state(t: f64, phi: ScalarField, eval: Evaluation, geom: &BackgroundGeometry, dt_last: f64) -> FlowState {
    let nn = geom.n() * geom.n();
    let kernel = geom.kernel();
    let stiffness = eval
        .chi_phi
        .par_chunks(nn)
        .map(|m| kernel.stiffness(m))
        .reduce(|| 0.0, f64::max);
    let grid = geom.grid();
    FlowState {
        t,
        phi,
        chi_phi: HermitianField::from_raw(grid, eval.chi_phi),
        phi_dot: ScalarField::from_vec_unchecked(grid, eval.rhs),
        tr_chiphi_omega: ScalarField::from_vec_unchecked(grid, eval.tr),
        min_eig: eval.min_eig,
        stiffness,
        dt_last,
    }
}

/// State at `t = 0` with `φ ≡ 0`.
pub fn initial_state(geom: &BackgroundGeometry) -> Result<FlowState> {
    let phi = ScalarField::zeros(geom.grid());
    let eval = evaluate(&phi, geom, POSITIVITY_FLOOR)?;
    Ok(make_state(0.0, phi, eval, geom, 0.0))
}

/// Step size allowed by the explicit stability bound of the linearized
/// operator `L = (tr_{χ_φ}ω)⁻¹ h^{ij̄}∂_i∂_j̄`, whose Fourier symbol is at most
/// `π² λ_max(h) |w|² / tr_{χ_φ}ω` with `|w|² ≤ n N² / 2`.
pub fn stable_dt(state: &FlowState, safety: f64) -> f64 {
    let grid = state.phi.grid();
    let n = grid.n_complex() as f64;
    let big_n = grid.points_per_axis() as f64;
    let radius = state.stiffness * PI * PI * n * big_n * big_n / 2.0;
    safety * RK4_STABILITY_LIMIT / radius
}

fn rk4_attempt(state: &FlowState, dt: f64, geom: &BackgroundGeometry) -> Result<FlowState> {
    let phi = &state.phi;
    let k1 = &state.phi_dot;
    let k2 = ScalarField::from_vec_unchecked(geom.grid(), evaluate(&phi.axpy(0.5 * dt, k1)?, geom, POSITIVITY_FLOOR)?.rhs);
    let k3 = ScalarField::from_vec_unchecked(geom.grid(), evaluate(&phi.axpy(0.5 * dt, &k2)?, geom, POSITIVITY_FLOOR)?.rhs);
    let k4 = ScalarField::from_vec_unchecked(geom.grid(), evaluate(&phi.axpy(dt, &k3)?, geom, POSITIVITY_FLOOR)?.rhs);
    let next: Vec<f64> = phi
        .values()
        .iter()
        .zip(k1.values())
        .zip(k2.values())
        .zip(k3.values())
        .zip(k4.values())
        .map(|((((p, a), b), c), d)| p + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d))
        .collect();
    let next = ScalarField::from_vec_unchecked(geom.grid(), next);
    let eval = evaluate(&next, geom, POSITIVITY_FLOOR)?;
    Ok(make_state(state.t + dt, next, eval, geom, dt))
}

/// One classical RK4 step. A step whose stages leave the positive cone is
/// retried with half the step, at most [`MAX_HALVINGS`] times.
pub fn flow_step(state: &FlowState, dt: f64, geom: &BackgroundGeometry) -> Result<FlowState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidInput(format!("step size must be positive, got {dt}")));
    }
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        match rk4_attempt(state, h, geom) {
            Ok(next) => return Ok(next),
            Err(Error::StateInvalid { point, min_eig }) => {
                log::debug!("step {h:e} at t = {} rejected: min eigenvalue {min_eig:e} at {point}", state.t);
                h *= 0.5;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepFailure {
        t: state.t,
        halvings: MAX_HALVINGS,
    })
}

/// `φ̃ = φ − ∫φ dμ`.
pub fn normalize(phi: &ScalarField) -> ScalarField {
    phi.shift(-integrate_mu(phi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// `θ(t)` fell below `theta_stop`.
    Converged,
    TimeLimit,
}

#[derive(Debug)]
pub struct FlowRun {
    pub rows: Vec<DiagnosticsRow>,
    pub final_state: FlowState,
    pub stop: StopReason,
    /// Accepted steps.
    pub steps: usize,
    /// Smallest generalized eigenvalue of `(χ_φ, ω)` over every accepted state.
    pub min_eig_accepted: f64,
}

/// A run that could not continue, with everything recorded up to the failure.
#[derive(Debug, thiserror::Error)]
#[error("flow aborted: {error}")]
pub struct FlowAbort {
    #[source]
    pub error: Error,
    pub last_state: Option<FlowState>,
    pub rows: Vec<DiagnosticsRow>,
}

pub fn run_flow(geom: &BackgroundGeometry, config: &FlowConfig) -> std::result::Result<FlowRun, Box<FlowAbort>> {
    run_flow_with(geom, config, |_| {})
}

/// Integrates from `φ ≡ 0` until `t_max` or `θ < theta_stop`, calling
/// `observer` on the initial state and on every snapshot.
pub fn run_flow_with(
    geom: &BackgroundGeometry,
    config: &FlowConfig,
    mut observer: impl FnMut(&FlowState),
) -> std::result::Result<FlowRun, Box<FlowAbort>> {
    let abort = |error, last_state, rows| Box::new(FlowAbort { error, last_state, rows });
    if let Err(e) = config.validate() {
        return Err(abort(e, None, Vec::new()));
    }
    let mut state = match initial_state(geom) {
        Ok(s) => s,
        Err(e) => return Err(abort(e, None, Vec::new())),
    };
    let mut rows = Vec::new();
    let mut warned = false;
    let mut record = |state: &FlowState, rows: &mut Vec<DiagnosticsRow>| -> Result<()> {
        let row = assemble_row(state, geom)?;
        if row.spectral_tail > TAIL_WARN_THRESHOLD && !warned {
            log::warn!(
                "spectral tail energy {:.3e} at t = {} exceeds {TAIL_WARN_THRESHOLD:e}; the grid may be under-resolved",
                row.spectral_tail,
                state.t
            );
            warned = true;
        }
        rows.push(row);
        Ok(())
    };
    if let Err(e) = record(&state, &mut rows) {
        return Err(abort(e, Some(state), rows));
    }
    observer(&state);
    let mut steps = 0;
    let mut min_eig_accepted = state.min_eig;
    let finish = |rows, final_state, stop, steps, min_eig_accepted| FlowRun {
        rows,
        final_state,
        stop,
        steps,
        min_eig_accepted,
    };
    if state.theta() < config.theta_stop {
        return Ok(finish(rows, state, StopReason::Converged, steps, min_eig_accepted));
    }
    let mut snapshot = 0u64;
    loop {
        if state.t >= config.t_max {
            return Ok(finish(rows, state, StopReason::TimeLimit, steps, min_eig_accepted));
        }
        snapshot += 1;
        let target = (snapshot as f64 * config.snapshot_every).min(config.t_max);
        while state.t < target {
            let dt = config.dt_initial.min(stable_dt(&state, config.dt_safety)).min(target - state.t);
            state = match flow_step(&state, dt, geom) {
                Ok(s) => s,
                Err(e) => return Err(abort(e, Some(state), rows)),
            };
            steps += 1;
            min_eig_accepted = min_eig_accepted.min(state.min_eig);
            if (target - state.t).abs() <= 1e-12 * target.max(1.0) {
                state.t = target;
            }
        }
        if let Err(e) = record(&state, &mut rows) {
            return Err(abort(e, Some(state), rows));
        }
        observer(&state);
        if state.theta() < config.theta_stop {
            return Ok(finish(rows, state, StopReason::Converged, steps, min_eig_accepted));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::{constant_geometry, generated_geometry, stationary_geometry, GeometryParams};
    use crate::hermitian::{wedge_trace_ratio_oracle, HermitianMatrix};
    use crate::torus::Grid;

    #[test]
    fn chi_phi_of_constants_is_chi() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = generated_geometry(&grid, &GeometryParams::default()).unwrap();
        assert_eq!(chi_phi(&ScalarField::zeros(&grid), &geom).unwrap().max_abs_diff(geom.chi()).unwrap(), 0.0);
        assert!(chi_phi(&ScalarField::constant(&grid, 4.2), &geom).unwrap().max_abs_diff(geom.chi()).unwrap() < 1e-13);
    }

    #[test]
    fn chi_phi_of_small_cosine() {
        let grid = Grid::new(2, 16).unwrap();
        let geom = constant_geometry(&grid, 1.0, 0.0).unwrap();
        let eps = 0.01;
        let phi = ScalarField::from_fn(&grid, |x| eps * (2.0 * PI * x[0]).cos());
        let cp = chi_phi(&phi, &geom).unwrap();
        for p in (0..grid.point_count()).step_by(97) {
            let x0 = grid.coordinates(p)[0];
            let m = cp.at(p);
            assert!((m.get(0, 0).re - (1.0 - eps * PI * PI * (2.0 * PI * x0).cos())).abs() < 1e-12);
            assert!((m.get(1, 1).re - 1.0).abs() < 1e-12 && m.get(0, 1).norm() < 1e-12);
        }
    }

    #[test]
    fn rhs_constant_datum() {
        let grid = Grid::new(2, 8).unwrap();
        let (c, f0) = (1.7, 0.3);
        let geom = constant_geometry(&grid, c, f0).unwrap();
        let rhs = flow_rhs(&ScalarField::zeros(&grid), &geom).unwrap();
        let expect = c.ln() + f0;
        assert!(rhs.values().iter().all(|v| (v - expect).abs() < 1e-14));
    }

    #[test]
    fn rhs_stationary_datum_vanishes() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = stationary_geometry(&grid, &GeometryParams::default()).unwrap();
        assert!(flow_rhs(&ScalarField::zeros(&grid), &geom).unwrap().sup_abs() < 1e-14);
    }

    #[test]
    fn rhs_matches_wedge_oracle() {
        let grid = Grid::new(2, 8).unwrap();
        let omega = HermitianMatrix::from_real(2, &[1.3, 0.2, 0.2, 0.9]).unwrap();
        let geom = crate::flow::geometry::generated_geometry_with_omega(&grid, &GeometryParams::default(), omega.clone())
            .unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.01 * (2.0 * PI * (x[0] + x[3])).sin());
        let rhs = flow_rhs(&phi, &geom).unwrap();
        let cp = chi_phi(&phi, &geom).unwrap();
        for p in (0..grid.point_count()).step_by(13) {
            // log(χ_φⁿ / (ω ∧ χ_φ^{n−1})) + F = log(n / (n·ω∧χ^{n−1}/χⁿ)) + F
            let ratio = wedge_trace_ratio_oracle(&omega, &cp.at(p)).unwrap();
            let expect = (2.0 / ratio).ln() + geom.f().values()[p];
            assert!((rhs.values()[p] - expect).abs() < 1e-11);
        }
    }

    #[test]
    fn rhs_rejects_non_positive_state() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = constant_geometry(&grid, 1.0, 0.0).unwrap();
        let phi = ScalarField::from_fn(&grid, |x| 0.5 * (2.0 * PI * x[0]).cos());
        match flow_rhs(&phi, &geom) {
            Err(Error::StateInvalid { point, min_eig }) => {
                assert!(min_eig < 0.0);
                assert_eq!(grid.spec().unflatten(point)[0], 0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn stationary_step_is_identity() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = stationary_geometry(&grid, &GeometryParams::default()).unwrap();
        let s0 = initial_state(&geom).unwrap();
        let s1 = flow_step(&s0, 0.01, &geom).unwrap();
        assert!(s1.phi.sup_abs() < 1e-14);
        assert!((s1.t - 0.01).abs() < 1e-16);
    }

    #[test]
    fn constant_datum_moves_linearly() {
        let grid = Grid::new(2, 8).unwrap();
        let (c, f0) = (1.3, -0.2);
        let geom = constant_geometry(&grid, c, f0).unwrap();
        let mut s = initial_state(&geom).unwrap();
        for _ in 0..5 {
            s = flow_step(&s, 0.02, &geom).unwrap();
        }
        let expect = s.t * (c.ln() + f0);
        assert!(s.phi.values().iter().all(|v| (v - expect).abs() < 1e-14));
        assert!(normalize(&s.phi).sup_abs() < 1e-14);
    }

    #[test]
    fn step_halves_until_positive() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = generated_geometry(&grid, &GeometryParams::default()).unwrap();
        let s0 = initial_state(&geom).unwrap();
        // far beyond the stability bound; the guard must shrink the step
        let s1 = flow_step(&s0, 10.0, &geom).unwrap();
        assert!(s1.dt_last < 10.0);
        assert!(s1.min_eig > POSITIVITY_FLOOR);
        assert!(flow_step(&s0, 0.0, &geom).is_err());
    }

    #[test]
    fn normalize_properties() {
        let grid = Grid::new(2, 8).unwrap();
        assert!(normalize(&ScalarField::constant(&grid, 5.0)).sup_abs() < 1e-15);
        let phi = ScalarField::from_fn(&grid, |x| (2.0 * PI * x[1]).sin() + 0.3 * x[2]);
        let a = normalize(&phi);
        assert!(integrate_mu(&a).abs() < 1e-13);
        assert!(normalize(&a).max_abs_diff(&a).unwrap() < 1e-15);
        assert!(normalize(&phi.shift(7.5)).max_abs_diff(&a).unwrap() < 1e-13);
    }

    #[test]
    fn run_stationary_terminates_immediately() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = stationary_geometry(&grid, &GeometryParams::default()).unwrap();
        let run = run_flow(&geom, &FlowConfig::default()).unwrap();
        assert_eq!(run.stop, StopReason::Converged);
        assert_eq!(run.rows.len(), 1);
        assert_eq!(run.steps, 0);
        assert_eq!(run.final_state.t, 0.0);
        assert!(run.final_state.phi.sup_abs() == 0.0);
    }

    #[test]
    fn run_constant_datum_normalizes_to_zero() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = constant_geometry(&grid, 1.2, 0.1).unwrap();
        let cfg = FlowConfig {
            t_max: 1.0,
            ..FlowConfig::default()
        };
        let run = run_flow(&geom, &cfg).unwrap();
        // θ ≡ 0 for a constant datum, so the run stops at once
        assert_eq!(run.stop, StopReason::Converged);
        assert!(normalize(&run.final_state.phi).sup_abs() < 1e-15);
    }

    #[test]
    fn run_generic_obeys_maximum_principle() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = generated_geometry(&grid, &GeometryParams::default()).unwrap();
        let cfg = FlowConfig {
            t_max: 3.0,
            ..FlowConfig::default()
        };
        let run = run_flow(&geom, &cfg).unwrap();
        let sup0 = run.rows[0].sup_abs_phidot;
        assert!(run.rows.iter().all(|r| r.sup_abs_phidot <= sup0 + 1e-6 * (1.0 + sup0)));
        let last = run.rows.last().unwrap();
        assert!(last.theta < run.rows[4].theta);
        assert!(run.min_eig_accepted > POSITIVITY_FLOOR && run.steps > 0);
    }

    #[test]
    fn invalid_config_aborts_without_state() {
        let grid = Grid::new(2, 8).unwrap();
        let geom = constant_geometry(&grid, 1.0, 0.0).unwrap();
        let cfg = FlowConfig {
            alpha_liyau: 1.0,
            ..FlowConfig::default()
        };
        let err = run_flow(&geom, &cfg).unwrap_err();
        assert!(err.last_state.is_none());
    }
}
