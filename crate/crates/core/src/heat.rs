//! The linear equation `∂u/∂t = Lu`, `L = (tr_{χ_φ}ω)⁻¹ h^{ij̄}∂_i∂_j̄`, along
//! flow coefficients, with the Li–Yau quantity and the Harnack ratio.

use std::borrow::Cow;
use std::f64::consts::{PI, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{chi_phi, BackgroundGeometry, FlowState, MAX_HALVINGS, RK4_STABILITY_LIMIT};
use crate::hermitian::{h_inverse_metric, max_eigenvalue, trace_pair, HermitianMatrix, C64};
use crate::torus::{dbar_hessian, holomorphic_gradient, Grid, HermitianField, ScalarField};

/// `A^{ij̄} = h^{ij̄} / tr_{χ_φ}ω` at every point, so that `Lu = A^{ij̄}∂_i∂_j̄u`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coefficients {
    grid: Grid,
    values: Vec<C64>,
    /// Largest eigenvalue of `A` over the grid.
    stiffness: f64,
}

impl Coefficients {
    /// Coefficients of `χ_φ = ω = I`: `A = I/n`.
    pub fn identity(grid: &Grid) -> Self {
        let n = grid.n_complex();
        let a = HermitianMatrix::scaled_identity(n, 1.0 / n as f64);
        let values = (0..grid.point_count()).flat_map(|_| a.as_slice().to_vec()).collect();
        Self {
            grid: grid.clone(),
            values,
            stiffness: 1.0 / n as f64,
        }
    }

    pub fn from_chi_phi(chi_phi: &HermitianField, omega: &HermitianMatrix) -> Result<Self> {
        let grid = chi_phi.grid();
        let per_point = (0..grid.point_count())
            .into_par_iter()
            .map(|p| {
                let m = chi_phi.at(p);
                let tr = trace_pair(&m, omega)?;
                let a = h_inverse_metric(&m, omega)?.scale(1.0 / tr);
                Ok((max_eigenvalue(&a), a))
            })
            .collect::<Result<Vec<(f64, HermitianMatrix)>>>()
            .map_err(|e| match e {
                Error::NotPositiveDefinite => Error::InvalidInput("flow state is not positive definite".into()),
                e => e,
            })?;
        let stiffness = per_point.iter().map(|(l, _)| *l).fold(0.0, f64::max);
        let values = per_point.iter().flat_map(|(_, a)| a.as_slice().to_vec()).collect();
        Ok(Self {
            grid: grid.clone(),
            values,
            stiffness,
        })
    }

    pub fn from_state(state: &FlowState, geom: &BackgroundGeometry) -> Result<Self> {
        Self::from_chi_phi(&state.chi_phi, geom.omega())
    }

    /// Coefficients of the flow potential `phi`.
    pub fn from_potential(phi: &ScalarField, geom: &BackgroundGeometry) -> Result<Self> {
        Self::from_chi_phi(&chi_phi(phi, geom)?, geom.omega())
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn at(&self, p: usize) -> &[C64] {
        let nn = self.grid.n_complex().pow(2);
        &self.values[p * nn..(p + 1) * nn]
    }

    pub fn stiffness(&self) -> f64 {
        self.stiffness
    }

    /// `(1 − w)·self + w·other`.
    fn lerp(&self, other: &Self, w: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a * (1.0 - w) + b * w)
                .collect(),
            stiffness: self.stiffness.max(other.stiffness),
        }
    }
}

/// `Lu` for given coefficients.
pub fn apply_coefficients(u: &ScalarField, coeffs: &Coefficients) -> Result<ScalarField> {
    if u.grid() != coeffs.grid() {
        return Err(Error::Grid("u and the coefficients live on different grids".into()));
    }
    let n = coeffs.grid.n_complex();
    let d = dbar_hessian(u)?;
    let values = (0..u.grid().point_count())
        .into_par_iter()
        .map(|p| {
            let a = coeffs.at(p);
            let h = &d.raw()[p * n * n..(p + 1) * n * n];
            a.iter().zip(h).map(|(x, y)| (x * y).re).sum()
        })
        .collect();
    ScalarField::new(u.grid(), values)
}

/// `Lu` with the coefficients of a flow state.
pub fn apply_l(u: &ScalarField, state: &FlowState, geom: &BackgroundGeometry) -> Result<ScalarField> {
    apply_coefficients(u, &Coefficients::from_state(state, geom)?)
}

/// Coefficients of `L` as a function of time.
#[derive(Clone, Debug)]
pub enum CoefficientSource {
    Frozen(Coefficients),
    /// Piecewise-linear in time between `(t, coefficients)` knots, held
    /// constant outside them.
    Interpolated(Vec<(f64, Coefficients)>),
}

impl CoefficientSource {
    pub fn interpolated(mut knots: Vec<(f64, Coefficients)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidInput("no coefficient snapshots".into()));
        }
        knots.sort_by(|a, b| a.0.total_cmp(&b.0));
        if knots.windows(2).any(|w| w[0].1.grid != w[1].1.grid) {
            return Err(Error::Grid("coefficient snapshots live on different grids".into()));
        }
        Ok(Self::Interpolated(knots))
    }

    fn grid(&self) -> &Grid {
        match self {
            Self::Frozen(c) => &c.grid,
            Self::Interpolated(k) => &k[0].1.grid,
        }
    }

    fn stiffness(&self) -> f64 {
        match self {
            Self::Frozen(c) => c.stiffness,
            Self::Interpolated(k) => k.iter().map(|(_, c)| c.stiffness).fold(0.0, f64::max),
        }
    }

    pub fn at(&self, t: f64) -> Cow<'_, Coefficients> {
        match self {
            Self::Frozen(c) => Cow::Borrowed(c),
            Self::Interpolated(knots) => {
                let k = knots.partition_point(|(s, _)| *s <= t);
                if k == 0 {
                    Cow::Borrowed(&knots[0].1)
                } else if k == knots.len() {
                    Cow::Borrowed(&knots[k - 1].1)
                } else {
                    let (t0, c0) = &knots[k - 1];
                    let (t1, c1) = &knots[k];
                    Cow::Owned(c0.lerp(c1, (t - t0) / (t1 - t0)))
                }
            }
        }
    }
}

/// Initial data `u₀ > 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialProfile {
    Constant { value: f64 },
    /// `1 + amplitude·cos(2πx^axis)` on real axis `axis`.
    Cosine { amplitude: f64, axis: usize },
    /// `exp` of a seeded band-limited field with sup norm `amplitude`.
    Random { seed: u64, amplitude: f64 },
}

impl Default for InitialProfile {
    fn default() -> Self {
        Self::Random {
            seed: 0,
            amplitude: 0.5,
        }
    }
}

impl InitialProfile {
    pub fn sample(&self, grid: &Grid) -> Result<ScalarField> {
        let u = match *self {
            Self::Constant { value } => ScalarField::constant(grid, value),
            Self::Cosine { amplitude, axis } => {
                if axis >= grid.spec().real_axes() {
                    return Err(Error::InvalidInput(format!("axis {axis} out of range")));
                }
                ScalarField::from_fn(grid, |x| 1.0 + amplitude * (TAU * x[axis]).cos())
            }
            Self::Random { seed, amplitude } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let axes = grid.spec().real_axes();
                let terms: Vec<(Vec<f64>, f64, f64)> = (0..6)
                    .map(|_| {
                        let k = (0..axes).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
                        (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0))
                    })
                    .collect();
                let norm: f64 = terms.iter().map(|t| t.1.abs()).sum();
                ScalarField::from_fn(grid, |x| {
                    let s: f64 = terms
                        .iter()
                        .map(|(k, a, ph)| {
                            let arg: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                            a * (TAU * (arg + ph)).cos()
                        })
                        .sum();
                    (amplitude * s / norm).exp()
                })
            }
        };
        if !(u.min() > 0.0) || !u.is_finite() {
            return Err(Error::InvalidInput("initial data must be positive and finite".into()));
        }
        Ok(u)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatConfig {
    pub t_end: f64,
    pub dt_max: f64,
    pub dt_safety: f64,
    pub sample_every: f64,
    /// Exponent `α > 1` of the Li–Yau quantity.
    pub alpha: f64,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            t_end: 1.0,
            dt_max: 0.05,
            dt_safety: 0.8,
            sample_every: 0.05,
            alpha: 2.0,
        }
    }
}

impl HeatConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return bad("t_end must be positive and finite");
        }
        if !(self.dt_max > 0.0) {
            return bad("dt_max must be > 0");
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad("dt_safety must lie in (0, 1]");
        }
        if !(self.sample_every > 0.0) {
            return bad("sample_every must be > 0");
        }
        if !(self.alpha > 1.0) {
            return bad("alpha must be > 1");
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct HeatState {
    pub t: f64,
    pub u: ScalarField,
}

/// Per-sample record of a heat run.
#[allow(non_snake_case)]
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HeatSample {
    pub t: f64,
    pub sup_u: f64,
    pub inf_u: f64,
    /// `sup_M G/t`; `NaN` at `t = 0`.
    pub sup_G_over_t: f64,
}

#[derive(Clone, Debug)]
pub struct HeatRun {
    pub samples: Vec<HeatSample>,
    pub states: Vec<HeatState>,
    pub li_yau: LiYauReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiYauReport {
    pub alpha: f64,
    /// Largest `sup_M G/t` over the positive sample times.
    pub sup_g_over_t: f64,
    pub series: Vec<(f64, f64)>,
}

/// `G/t = |∂f|²_h / tr_{χ_φ}ω − α ∂f/∂t` with `f = log u` and
/// `∂f/∂t = Lu/u`.
pub fn li_yau_g_over_t(u: &ScalarField, coeffs: &Coefficients, alpha: f64) -> Result<ScalarField> {
    if !(alpha > 1.0) {
        return Err(Error::InvalidInput("alpha must be > 1".into()));
    }
    if !(u.min() > 0.0) {
        return Err(Error::InvalidInput("u must be positive".into()));
    }
    let f = u.map(f64::ln);
    let grad = holomorphic_gradient(&f)?;
    let lu = apply_coefficients(u, coeffs)?;
    let n = u.grid().n_complex();
    let values = (0..u.grid().point_count())
        .map(|p| {
            let a = coeffs.at(p);
            let v = grad.at(p);
            let mut norm = 0.0;
            for i in 0..n {
                for j in 0..n {
                    norm += (a[i * n + j] * v[i] * v[j].conj()).re;
                }
            }
            norm - alpha * lu.values()[p] / u.values()[p]
        })
        .collect();
    ScalarField::new(u.grid(), values)
}

/// `G = t·(|∂f|²_h / tr_{χ_φ}ω − α ∂f/∂t)`; the zero field at `t = 0`.
pub fn li_yau_g(state: &HeatState, coeffs: &Coefficients, alpha: f64) -> Result<ScalarField> {
    if state.t == 0.0 {
        return Ok(ScalarField::zeros(state.u.grid()));
    }
    Ok(li_yau_g_over_t(&state.u, coeffs, alpha)?.map(|g| g * state.t))
}

fn heat_stage(u: &ScalarField, source: &CoefficientSource, t: f64) -> Result<ScalarField> {
    apply_coefficients(u, &source.at(t))
}

fn heat_attempt(state: &HeatState, dt: f64, source: &CoefficientSource) -> Result<Option<HeatState>> {
    let (t, u) = (state.t, &state.u);
    let positive = |v: &ScalarField| v.min() > 0.0;
    let k1 = heat_stage(u, source, t)?;
    let u2 = u.axpy(0.5 * dt, &k1)?;
    if !positive(&u2) {
        return Ok(None);
    }
    let k2 = heat_stage(&u2, source, t + 0.5 * dt)?;
    let u3 = u.axpy(0.5 * dt, &k2)?;
    if !positive(&u3) {
        return Ok(None);
    }
    let k3 = heat_stage(&u3, source, t + 0.5 * dt)?;
    let u4 = u.axpy(dt, &k3)?;
    if !positive(&u4) {
        return Ok(None);
    }
    let k4 = heat_stage(&u4, source, t + dt)?;
    let next: Vec<f64> = (0..u.values().len())
        .map(|p| {
            u.values()[p]
                + dt / 6.0 * (k1.values()[p] + 2.0 * k2.values()[p] + 2.0 * k3.values()[p] + k4.values()[p])
        })
        .collect();
    let next = ScalarField::new(u.grid(), next)?;
    Ok(positive(&next).then_some(HeatState { t: t + dt, u: next }))
}

/// One RK4 step, halving on loss of positivity at most [`MAX_HALVINGS`] times.
pub fn heat_step(state: &HeatState, dt: f64, source: &CoefficientSource) -> Result<HeatState> {
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        if let Some(next) = heat_attempt(state, h, source)? {
            return Ok(next);
        }
        h *= 0.5;
    }
    Err(Error::StepFailure {
        t: state.t,
        halvings: MAX_HALVINGS,
    })
}

/// Explicit stability bound for `L` with largest coefficient eigenvalue
/// `stiffness`.
pub fn heat_stable_dt(grid: &Grid, stiffness: f64, safety: f64) -> f64 {
    let n = grid.n_complex() as f64;
    let big_n = grid.points_per_axis() as f64;
    safety * RK4_STABILITY_LIMIT / (stiffness * PI * PI * n * big_n * big_n / 2.0)
}

fn sample(state: &HeatState, source: &CoefficientSource, alpha: f64) -> Result<HeatSample> {
    let sup_g_over_t = if state.t > 0.0 {
        li_yau_g_over_t(&state.u, &source.at(state.t), alpha)?.max()
    } else {
        f64::NAN
    };
    Ok(HeatSample {
        t: state.t,
        sup_u: state.u.max(),
        inf_u: state.u.min(),
        sup_G_over_t: sup_g_over_t,
    })
}

/// Integrates from `u0` at `t = 0` to `t_end`, sampling every `sample_every`.
pub fn run_heat(u0: &ScalarField, source: &CoefficientSource, config: &HeatConfig) -> Result<HeatRun> {
    config.validate()?;
    if u0.grid() != source.grid() {
        return Err(Error::Grid("u0 and the coefficients live on different grids".into()));
    }
    if !(u0.min() > 0.0) {
        return Err(Error::InvalidInput("u0 must be positive".into()));
    }
    let dt_stable = heat_stable_dt(u0.grid(), source.stiffness(), config.dt_safety);
    let mut state = HeatState { t: 0.0, u: u0.clone() };
    let mut samples = vec![sample(&state, source, config.alpha)?];
    let mut states = vec![state.clone()];
    let mut k = 0u64;
    while state.t < config.t_end {
        k += 1;
        let target = (k as f64 * config.sample_every).min(config.t_end);
        while state.t < target {
            let dt = config.dt_max.min(dt_stable).min(target - state.t);
            state = heat_step(&state, dt, source)?;
            if (target - state.t).abs() <= 1e-12 * target.max(1.0) {
                state.t = target;
            }
        }
        samples.push(sample(&state, source, config.alpha)?);
        states.push(state.clone());
    }
    let series: Vec<(f64, f64)> = samples
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| (s.t, s.sup_G_over_t))
        .collect();
    let li_yau = LiYauReport {
        alpha: config.alpha,
        sup_g_over_t: series.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max),
        series,
    };
    Ok(HeatRun {
        samples,
        states,
        li_yau,
    })
}

fn interpolate(samples: &[HeatSample], s: f64, pick: impl Fn(&HeatSample) -> f64) -> Result<f64> {
    let (start, end) = match (samples.first(), samples.last()) {
        (Some(a), Some(b)) => (a.t, b.t),
        _ => return Err(Error::InvalidInput("empty trajectory".into())),
    };
    if !(s >= start && s <= end) {
        return Err(Error::OutsideTrajectory { time: s, start, end });
    }
    let k = samples.partition_point(|x| x.t < s);
    let hi = &samples[k];
    if hi.t == s || k == 0 {
        return Ok(pick(hi));
    }
    let lo = &samples[k - 1];
    let w = (s - lo.t) / (hi.t - lo.t);
    Ok(pick(lo) * (1.0 - w) + pick(hi) * w)
}

/// `R = sup_M u(·,s₁) / (inf_M u(·,s₂)·e^{s₂−s₁})`, linearly interpolating
/// the recorded sup and inf between samples.
pub fn harnack_ratio(samples: &[HeatSample], s1: f64, s2: f64) -> Result<f64> {
    if !(0.0 < s1 && s1 < s2) {
        return Err(Error::InvalidInput(format!("need 0 < s1 < s2, got s1 = {s1}, s2 = {s2}")));
    }
    let sup1 = interpolate(samples, s1, |x| x.sup_u)?;
    let inf2 = interpolate(samples, s2, |x| x.inf_u)?;
    Ok(sup1 / (inf2 * (s2 - s1).exp()))
}
