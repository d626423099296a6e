use super::{HermitianMatrix, Whitening};
use crate::error::{Error, Result};
use crate::torus::{HermitianField, ScalarField};

/// Pointwise margin in the cone condition `χ − (n−1)/(n e^F) ω > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ConeReport {
    /// Largest `ε` with `χ ≥ (n−1)(1+ε)/(n e^F) ω` at every point; not clamped.
    pub margin: f64,
    /// Flat index of the point attaining the margin.
    pub worst_point: usize,
    pub satisfied: bool,
    /// Set for `n = 1`, where the condition is empty and the margin is `+∞`.
    pub vacuous: bool,
}

/// With `μ(x)` the smallest generalized eigenvalue of `(χ(x), ω)`, the
/// pointwise margin is `ε(x) = n e^{F(x)} μ(x) / (n−1) − 1`.
pub fn cone_margin(chi: &HermitianField, omega: &HermitianMatrix, f: &ScalarField) -> Result<ConeReport> {
    let grid = chi.grid();
    if grid != f.grid() {
        return Err(Error::Grid("chi and F live on different grids".into()));
    }
    let n = chi.dim();
    if omega.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: omega.dim(),
        });
    }
    let whitening = Whitening::new(omega)?;
    if n == 1 {
        return Ok(ConeReport {
            margin: f64::INFINITY,
            worst_point: 0,
            satisfied: true,
            vacuous: true,
        });
    }
    let nf = n as f64;
    let mut margin = f64::INFINITY;
    let mut worst_point = 0;
    for (p, &fp) in f.values().iter().enumerate() {
        let mu = whitening.min_eigenvalue(&chi.at(p));
        let eps = nf * fp.exp() * mu / (nf - 1.0) - 1.0;
        if eps < margin {
            margin = eps;
            worst_point = p;
        }
    }
    Ok(ConeReport {
        margin,
        worst_point,
        satisfied: margin > 0.0,
        vacuous: false,
    })
}
