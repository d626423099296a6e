//! Monitored quantities along a run, the exponential fit of `θ(t)`, and the
//! residual of `ω ∧ χ_φ^{n−1} = e^{F+b} χ_φⁿ`.

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::flow::{chi_phi, BackgroundGeometry, FlowState};
use crate::hermitian::{contract, trace_pair};
use crate::torus::{integrate_mu, spectral_tail_energy, ScalarField};

/// Samples with `θ` below this are left out of the default fit window.
pub const FIT_FLOOR: f64 = 100.0 * f64::EPSILON;

/// Fitted rates at or below this mark the series as non-decaying.
pub const NON_DECAY_RATE: f64 = 1e-6;

pub const MIN_FIT_SAMPLES: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub theta: f64,
    pub sup_abs_phidot: f64,
    pub osc_phi: f64,
    pub min_tr_omega_chiphi: f64,
    pub max_tr_omega_chiphi: f64,
    pub min_tr_chiphi_omega: f64,
    pub max_tr_chiphi_omega: f64,
    pub min_eig: f64,
    pub residual_sup: f64,
    pub b_current: f64,
    pub spectral_tail: f64,
    pub dt_used: f64,
}

pub const CSV_COLUMNS: [&str; 13] = [
    "t",
    "theta",
    "sup_abs_phidot",
    "osc_phi",
    "min_tr_omega_chiphi",
    "max_tr_omega_chiphi",
    "min_tr_chiphi_omega",
    "max_tr_chiphi_omega",
    "min_eig",
    "residual_sup",
    "b_current",
    "spectral_tail",
    "dt_used",
];

impl DiagnosticsRow {
    pub fn values(&self) -> [f64; 13] {
        [
            self.t,
            self.theta,
            self.sup_abs_phidot,
            self.osc_phi,
            self.min_tr_omega_chiphi,
            self.max_tr_omega_chiphi,
            self.min_tr_chiphi_omega,
            self.max_tr_chiphi_omega,
            self.min_eig,
            self.residual_sup,
            self.b_current,
            self.spectral_tail,
            self.dt_used,
        ]
    }

    pub fn is_consistent(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
            && self.theta >= 0.0
            && self.min_tr_omega_chiphi <= self.max_tr_omega_chiphi
            && self.min_tr_chiphi_omega <= self.max_tr_chiphi_omega
    }
}

/// Formats a float with 17 significant digits.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_csv<W: Write>(mut w: W, rows: &[DiagnosticsRow]) -> Result<()> {
    writeln!(w, "{}", CSV_COLUMNS.join(","))?;
    for row in rows {
        let line: Vec<String> = row.values().iter().map(|&v| format_float(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// `max f − min f` over the grid.
pub fn oscillation(f: &ScalarField) -> f64 {
    f.max() - f.min()
}

#[derive(Clone, Debug)]
pub struct Residual {
    pub b: f64,
    pub field: ScalarField,
    pub sup: f64,
}

fn residual_from_trace(tr: &ScalarField, f: &ScalarField, n: usize) -> Result<Residual> {
    let ln_n = (n as f64).ln();
    let raw = tr.zip_map(f, |tr, f| tr.ln() - ln_n - f)?;
    let b = integrate_mu(&raw);
    let field = raw.shift(-b);
    let sup = field.sup_abs();
    Ok(Residual { b, field, sup })
}

/// `b = ∫ (log(tr_{χ_φ}ω / n) − F) dμ` and the residual
/// `r = log(tr_{χ_φ}ω / n) − F − b`, which has zero mean.
pub fn donaldson_residual(phi: &ScalarField, geom: &BackgroundGeometry) -> Result<Residual> {
    let cp = chi_phi(phi, geom)?;
    let values = (0..cp.grid().point_count())
        .map(|p| trace_pair(&cp.at(p), geom.omega()))
        .collect::<Result<Vec<f64>>>()?;
    residual_from_trace(&ScalarField::new(geom.grid(), values)?, geom.f(), geom.n())
}

fn min_max(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

pub fn assemble_row(state: &FlowState, geom: &BackgroundGeometry) -> Result<DiagnosticsRow> {
    let residual = residual_from_trace(&state.tr_chiphi_omega, geom.f(), geom.n())?;
    let omega_upper = geom.omega_upper();
    let (min_tr_omega_chiphi, max_tr_omega_chiphi) =
        min_max((0..geom.grid().point_count()).map(|p| contract(omega_upper, &state.chi_phi.at(p))));
    let (min_tr_chiphi_omega, max_tr_chiphi_omega) = min_max(state.tr_chiphi_omega.values().iter().copied());
    Ok(DiagnosticsRow {
        t: state.t,
        theta: oscillation(&state.phi_dot),
        sup_abs_phidot: state.phi_dot.sup_abs(),
        osc_phi: oscillation(&state.phi),
        min_tr_omega_chiphi,
        max_tr_omega_chiphi,
        min_tr_chiphi_omega,
        max_tr_chiphi_omega,
        min_eig: state.min_eig,
        residual_sup: residual.sup,
        b_current: residual.b,
        spectral_tail: spectral_tail_energy(&state.phi).max(spectral_tail_energy(&state.phi_dot)),
        dt_used: state.dt_last,
    })
}

/// Largest relative deviation from `tr_{χ_φ}ω · e^{φ_dot − F} = n`.
pub fn trace_identity_error(state: &FlowState, geom: &BackgroundGeometry) -> f64 {
    let n = geom.n() as f64;
    state
        .tr_chiphi_omega
        .values()
        .iter()
        .zip(state.phi_dot.values())
        .zip(geom.f().values())
        .map(|((tr, pd), f)| (tr * (pd - f).exp() / n - 1.0).abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitWindow {
    pub t_lo: f64,
    pub t_hi: f64,
}

impl FitWindow {
    /// Last half of the sampled time span.
    pub fn last_half(series: &[(f64, f64)]) -> Option<Self> {
        let (t0, t1) = (series.first()?.0, series.last()?.0);
        Some(Self {
            t_lo: 0.5 * (t0 + t1),
            t_hi: t1,
        })
    }

    fn contains(&self, t: f64) -> bool {
        t >= self.t_lo && t <= self.t_hi
    }
}

#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    pub C1_hat: f64,
    pub C2_hat: f64,
    pub window: FitWindow,
    pub r_squared: f64,
    pub samples: usize,
    /// Largest `θ(m+1)/θ(m)` over integer-spaced times in the window.
    pub worst_unit_ratio: Option<f64>,
    pub non_decaying: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DecayOutcome {
    Fitted(DecayFit),
    /// `θ` reached zero (or the fit floor) inside the window.
    Converged { t: f64 },
}

/// Least-squares line through `(t, log θ)` on the window.
pub fn decay_fit(series: &[(f64, f64)], window: FitWindow) -> Result<DecayOutcome> {
    let inside: Vec<(f64, f64)> = series.iter().copied().filter(|&(t, _)| window.contains(t)).collect();
    if let Some(&(t, _)) = inside.iter().find(|&&(_, th)| th <= 0.0) {
        return Ok(DecayOutcome::Converged { t });
    }
    let used: Vec<(f64, f64)> = inside.iter().copied().filter(|&(_, th)| th >= FIT_FLOOR).collect();
    if used.is_empty() && !inside.is_empty() {
        return Ok(DecayOutcome::Converged { t: inside[0].0 });
    }
    if used.len() < MIN_FIT_SAMPLES {
        return Err(Error::InvalidInput(format!(
            "decay fit needs at least {MIN_FIT_SAMPLES} samples with theta > 0, found {}",
            used.len()
        )));
    }
    let m = used.len() as f64;
    let t_mean = used.iter().map(|s| s.0).sum::<f64>() / m;
    let y_mean = used.iter().map(|s| s.1.ln()).sum::<f64>() / m;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(t, th) in &used {
        let (dx, dy) = (t - t_mean, th.ln() - y_mean);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(Error::InvalidInput("decay fit window spans a single time".into()));
    }
    let slope = sxy / sxx;
    let intercept = y_mean - slope * t_mean;
    let ss_res: f64 = used.iter().map(|&(t, th)| (th.ln() - intercept - slope * t).powi(2)).sum();
    let r_squared = if syy > 0.0 { (1.0 - ss_res / syy).clamp(0.0, 1.0) } else { 1.0 };
    let worst_unit_ratio = unit_time_ratios(&used, window.t_lo, window.t_hi)
        .into_iter()
        .map(|(_, r)| r)
        .reduce(f64::max);
    Ok(DecayOutcome::Fitted(DecayFit {
        C1_hat: intercept.exp(),
        C2_hat: -slope,
        window,
        r_squared,
        samples: used.len(),
        worst_unit_ratio,
        non_decaying: -slope <= NON_DECAY_RATE,
    }))
}

/// `θ` at time `t` by linear interpolation of `log θ` between samples.
fn interpolate_log(series: &[(f64, f64)], t: f64) -> Option<f64> {
    let k = series.iter().position(|&(s, _)| s >= t)?;
    let (t1, y1) = series[k];
    if t1 == t {
        return Some(y1);
    }
    let (t0, y0) = *series.get(k.checked_sub(1)?)?;
    if y0 <= 0.0 || y1 <= 0.0 {
        return Some(y0 + (y1 - y0) * (t - t0) / (t1 - t0));
    }
    let w = (t - t0) / (t1 - t0);
    Some((y0.ln() * (1.0 - w) + y1.ln() * w).exp())
}

/// Ratios `θ(m+1)/θ(m)` for integers `m` with `t_from ≤ m < m+1 ≤ t_to`,
/// using interpolated samples.
pub fn unit_time_ratios(series: &[(f64, f64)], t_from: f64, t_to: f64) -> Vec<(f64, f64)> {
    let Some(&(first, _)) = series.first() else {
        return Vec::new();
    };
    let last = series[series.len() - 1].0;
    let lo = t_from.max(first).ceil();
    let hi = t_to.min(last);
    let mut out = Vec::new();
    let mut m = lo;
    while m + 1.0 <= hi {
        if let (Some(a), Some(b)) = (interpolate_log(series, m), interpolate_log(series, m + 1.0)) {
            out.push((m, b / a));
        }
        m += 1.0;
    }
    out
}

/// `‖φ̃(t₂) − φ̃(t₁)‖_∞` for two normalized potentials.
pub fn cauchy_distance(a: &ScalarField, b: &ScalarField) -> Result<f64> {
    a.max_abs_diff(b)
}

/// Bound `C1/C2 · (e^{−C2 t₁} − e^{−C2 t₂})` on the Cauchy distance implied by
/// `|∂φ̃/∂t| ≤ C1 e^{−C2 t}`.
pub fn cauchy_bound(fit: &DecayFit, t1: f64, t2: f64) -> f64 {
    fit.C1_hat / fit.C2_hat * ((-fit.C2_hat * t1).exp() - (-fit.C2_hat * t2).exp())
}

pub fn theta_series(rows: &[DiagnosticsRow]) -> Vec<(f64, f64)> {
    rows.iter().map(|r| (r.t, r.theta)).collect()
}
