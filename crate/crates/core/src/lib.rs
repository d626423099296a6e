//! Spectral simulator for the parabolic Donaldson flow
//! `∂φ/∂t = −log(tr_{χ_φ} ω) + log n + F` on flat complex tori, with
//! runtime checks of the flow's a priori estimates.

// negated comparisons are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod flow;
pub mod heat;
pub mod hermitian;
pub mod oracles;
pub mod torus;

pub use diagnostics::{DecayFit, DecayOutcome, DiagnosticsRow};
pub use error::{Error, Result};
pub use flow::{BackgroundGeometry, FlowConfig, FlowState, GeometryParams};
pub use hermitian::{HermitianMatrix, C64};
pub use torus::{Grid, GridSpec, HermitianField, ScalarField};
