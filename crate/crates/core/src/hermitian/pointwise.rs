//! Per-point kernels of the flow on raw row-major entries, with closed forms
//! for `n ≤ 2` and the general matrix routines otherwise.

use super::{contract, h_inverse_metric, inverse_components, max_eigenvalue, HermitianMatrix, Whitening, C64};

/// Pointwise quantities of a positive form `A` relative to a fixed `ω`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointTrace {
    /// `tr_A ω = A^{ij̄} ω_{ij̄}`.
    pub tr: f64,
    /// Smallest generalized eigenvalue of `(A, ω)`.
    pub min_eig: f64,
}

/// Evaluates `A ↦ (tr_A ω, μ_min(A, ω))` for a fixed `ω`.
#[derive(Clone, Debug)]
pub struct PointKernel {
    omega: HermitianMatrix,
    whitening: Whitening,
    det_omega: f64,
}

impl PointKernel {
    pub fn new(omega: &HermitianMatrix) -> crate::Result<Self> {
        let whitening = Whitening::new(omega)?;
        let det_omega = match omega.dim() {
            1 => omega.get(0, 0).re,
            2 => omega.get(0, 0).re * omega.get(1, 1).re - omega.get(0, 1).norm_sqr(),
            _ => f64::NAN,
        };
        Ok(Self {
            omega: omega.clone(),
            whitening,
            det_omega,
        })
    }

    /// `None` unless every generalized eigenvalue exceeds `floor ≥ 0`.
    #[inline]
    pub fn trace(&self, a: &[C64], floor: f64) -> Option<PointTrace> {
        let w = self.omega.as_slice();
        match self.omega.dim() {
            1 => {
                let a0 = a[0].re;
                let mu = a0 / w[0].re;
                (mu > floor).then(|| PointTrace {
                    tr: 1.0 / mu,
                    min_eig: mu,
                })
            }
            2 => {
                // det(A − μω) = det ω · μ² − s μ + det A
                let (p, q, b) = (a[0].re, a[3].re, a[1]);
                let det_a = p * q - b.norm_sqr();
                if !(p > 0.0 && det_a > 0.0) {
                    return None;
                }
                let s = q * w[0].re + p * w[3].re - 2.0 * (b.conj() * w[1]).re;
                let disc = (s * s - 4.0 * self.det_omega * det_a).max(0.0);
                let mu = 2.0 * det_a / (s + disc.sqrt());
                (mu > floor).then(|| PointTrace {
                    tr: s / det_a,
                    min_eig: mu,
                })
            }
            n => {
                let m = HermitianMatrix::from_entries_unchecked(n, a.iter().copied().collect());
                if !self.whitening.exceeds(&m, floor) {
                    return None;
                }
                let tr = contract(&inverse_components(&m).ok()?, &self.omega);
                Some(PointTrace {
                    tr,
                    min_eig: self.whitening.min_eigenvalue(&m),
                })
            }
        }
    }

    /// `λ_max(h^{ij̄}) / tr_A ω` with `h^{ij̄} = A^{il̄} A^{kj̄} ω_{kl̄}`.
    pub fn stiffness(&self, a: &[C64]) -> f64 {
        let n = self.omega.dim();
        if n == 2 {
            let Some(t) = self.trace(a, 0.0) else {
                return f64::INFINITY;
            };
            let (p, q, b) = (a[0].re, a[3].re, a[1]);
            let inv_det = 1.0 / (p * q - b.norm_sqr());
            let x = [
                C64::new(q * inv_det, 0.0),
                -b.conj() * inv_det,
                -b * inv_det,
                C64::new(p * inv_det, 0.0),
            ];
            let g = self.omega.as_slice();
            let mut xg = [C64::new(0.0, 0.0); 4];
            for i in 0..2 {
                for k in 0..2 {
                    xg[2 * i + k] = x[2 * i] * g[2 * k] + x[2 * i + 1] * g[2 * k + 1];
                }
            }
            let h00 = (xg[0] * x[0] + xg[1] * x[2]).re;
            let h11 = (xg[2] * x[1] + xg[3] * x[3]).re;
            let h01 = xg[0] * x[1] + xg[1] * x[3];
            let lmax = 0.5 * (h00 + h11) + (0.25 * (h00 - h11) * (h00 - h11) + h01.norm_sqr()).sqrt();
            return lmax / t.tr;
        }
        let m = HermitianMatrix::from_entries_unchecked(n, a.iter().copied().collect());
        let tr = match self.trace(a, 0.0) {
            Some(t) => t.tr,
            None => return f64::INFINITY,
        };
        match h_inverse_metric(&m, &self.omega) {
            Ok(h) => max_eigenvalue(&h) / tr,
            Err(_) => f64::INFINITY,
        }
    }
}
