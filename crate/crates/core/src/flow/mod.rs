//! Time integration of `∂φ/∂t = −log(tr_{χ_φ} ω) + log n + F` from `φ = 0`.

mod geometry;
mod stepper;

pub use geometry::{
    constant_geometry, generated_geometry, generated_geometry_with_omega, stationary_geometry,
    stationary_geometry_with_omega, GeometryParams, TARGET_MARGIN,
};
pub use stepper::{
    chi_phi, flow_rhs, flow_step, initial_state, normalize, run_flow, run_flow_with, stable_dt, FlowAbort, FlowRun,
    StopReason, MAX_HALVINGS, POSITIVITY_FLOOR, RK4_STABILITY_LIMIT,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermitian::{cone_margin, inverse_components, ConeReport, HermitianMatrix, PointKernel, Whitening};
use crate::torus::{Grid, HermitianField, ScalarField};

/// Fixed data of the flow: a constant Kähler form `ω`, a Hermitian metric
/// `χ` and the function `F`, validated against the cone condition.
#[derive(Clone, Debug)]
pub struct BackgroundGeometry {
    grid: Grid,
    omega: HermitianMatrix,
    omega_upper: HermitianMatrix,
    whitening: Whitening,
    kernel: PointKernel,
    chi: HermitianField,
    f: ScalarField,
    cone: ConeReport,
}

impl BackgroundGeometry {
    pub fn new(omega: HermitianMatrix, chi: HermitianField, f: ScalarField) -> Result<Self> {
        let grid = chi.grid().clone();
        if &grid != f.grid() {
            return Err(Error::Grid("chi and F live on different grids".into()));
        }
        let whitening = Whitening::new(&omega)?;
        for p in 0..grid.point_count() {
            if chi.at(p).cholesky().is_none() {
                return Err(Error::InvalidInput(format!(
                    "chi is not positive definite at grid point {p} {:?}",
                    grid.spec().unflatten(p).as_slice()
                )));
            }
        }
        let cone = cone_margin(&chi, &omega, &f)?;
        if !cone.satisfied {
            return Err(Error::ConeViolated {
                margin: cone.margin,
                point: cone.worst_point,
                coords: grid.spec().unflatten(cone.worst_point).to_vec(),
            });
        }
        let omega_upper = inverse_components(&omega)?;
        let kernel = PointKernel::new(&omega)?;
        Ok(Self {
            grid,
            omega,
            omega_upper,
            whitening,
            kernel,
            chi,
            f,
            cone,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n(&self) -> usize {
        self.grid.n_complex()
    }

    pub fn omega(&self) -> &HermitianMatrix {
        &self.omega
    }

    /// Inverse components `g^{ij̄}` of `ω`.
    pub fn omega_upper(&self) -> &HermitianMatrix {
        &self.omega_upper
    }

    pub fn whitening(&self) -> &Whitening {
        &self.whitening
    }

    pub fn kernel(&self) -> &PointKernel {
        &self.kernel
    }

    pub fn chi(&self) -> &HermitianField {
        &self.chi
    }

    pub fn f(&self) -> &ScalarField {
        &self.f
    }

    pub fn cone(&self) -> &ConeReport {
        &self.cone
    }
}

/// An accepted point of the flow with its derived caches.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub t: f64,
    pub phi: ScalarField,
    pub chi_phi: HermitianField,
    /// Right-hand side of the flow evaluated at `phi`.
    pub phi_dot: ScalarField,
    /// `tr_{χ_φ} ω` at every point.
    pub tr_chiphi_omega: ScalarField,
    /// Smallest generalized eigenvalue of `(χ_φ, ω)` over the grid.
    pub min_eig: f64,
    /// Largest `λ_max(h^{ij̄}) / tr_{χ_φ}ω` over the grid; sets the stiffness
    /// of the linearized operator.
    pub stiffness: f64,
    /// Step that produced this state (0 for the initial state).
    pub dt_last: f64,
}

impl FlowState {
    /// `θ(t) = sup φ_dot − inf φ_dot`.
    pub fn theta(&self) -> f64 {
        self.phi_dot.max() - self.phi_dot.min()
    }
}

/// Integration controls.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlowConfig {
    /// Upper bound on the step size.
    pub dt_initial: f64,
    /// Fraction of the explicit stability bound actually used.
    pub dt_safety: f64,
    pub t_max: f64,
    /// Integration stops once `θ(t)` drops below this value.
    pub theta_stop: f64,
    pub snapshot_every: f64,
    /// Exponent `α > 1` of the Li–Yau quantity.
    pub alpha_liyau: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            dt_initial: 0.05,
            dt_safety: 0.8,
            t_max: 50.0,
            theta_stop: 1e-9,
            snapshot_every: 0.25,
            alpha_liyau: 2.0,
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(msg.to_string()));
        if !(self.dt_initial > 0.0) {
            return bad("dt_initial must be > 0");
        }
        if !(self.dt_safety > 0.0 && self.dt_safety <= 1.0) {
            return bad("dt_safety must lie in (0, 1]");
        }
        if !(self.t_max > 0.0 && self.t_max.is_finite()) {
            return bad("t_max must be positive and finite");
        }
        if !(self.theta_stop >= 0.0) {
            return bad("theta_stop must be >= 0");
        }
        if !(self.snapshot_every > 0.0) {
            return bad("snapshot_every must be > 0");
        }
        if !(self.alpha_liyau > 1.0) {
            return bad("alpha_liyau must be > 1");
        }
        Ok(())
    }
}
