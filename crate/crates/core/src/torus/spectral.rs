//! Fourier-multiplier derivatives on the periodic grid.
//!
//! With `∂_j = ½(∂_{x^j} − i∂_{y^j})` and `∂_j̄ = ½(∂_{x^j} + i∂_{y^j})`, the
//! mixed Hessian `∂_i∂_j̄` has a diagonal that reduces to a quarter of the
//! flat Laplacian in `(x^j, y^j)`, so diagonal entries use exact second
//! derivative multipliers (Nyquist kept) while every first-derivative
//! multiplier has its Nyquist mode zeroed.

use std::f64::consts::PI;

use super::{ComplexVectorField, Grid, HermitianField, ScalarField};
use crate::error::{Error, Result};
use crate::hermitian::C64;

/// Tail-energy fraction above which the flow is considered under-resolved.
pub const TAIL_WARN_THRESHOLD: f64 = 1e-6;

struct Symbols {
    /// `2πk` with the Nyquist mode zeroed (first derivative, times `i`).
    first: Vec<f64>,
    /// `−(2πk)²` (second derivative along one axis).
    second: Vec<f64>,
}

impl Symbols {
    fn new(grid: &Grid) -> Self {
        let n = grid.points_per_axis() as i64;
        let ks: Vec<i64> = (0..n).map(|k| if k <= n / 2 { k } else { k - n }).collect();
        Self {
            first: ks
                .iter()
                .map(|&k| if k == n / 2 { 0.0 } else { 2.0 * PI * k as f64 })
                .collect(),
            second: ks.iter().map(|&k| -(2.0 * PI * k as f64).powi(2)).collect(),
        }
    }

    /// Multiplier of `∂_j`.
    #[inline]
    fn holo(&self, axes: &[u16], j: usize) -> C64 {
        let ax = self.first[axes[2 * j] as usize];
        let ay = self.first[axes[2 * j + 1] as usize];
        C64::new(0.5 * ay, 0.5 * ax)
    }

    /// Multiplier of `∂_j̄`.
    #[inline]
    fn antiholo(&self, axes: &[u16], j: usize) -> C64 {
        let ax = self.first[axes[2 * j] as usize];
        let ay = self.first[axes[2 * j + 1] as usize];
        C64::new(-0.5 * ay, 0.5 * ax)
    }

    /// Multiplier of `∂_j∂_j̄ = ¼(∂²_{x^j} + ∂²_{y^j})`.
    #[inline]
    fn diag(&self, axes: &[u16], j: usize) -> f64 {
        0.25 * (self.second[axes[2 * j] as usize] + self.second[axes[2 * j + 1] as usize])
    }

    fn mixed(&self, axes: &[u16], i: usize, j: usize) -> C64 {
        if i == j {
            C64::new(self.diag(axes, i), 0.0)
        } else {
            self.holo(axes, i) * self.antiholo(axes, j)
        }
    }
}

fn check_finite(f: &ScalarField) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::InvalidInput("non-finite field value".into()));
    }
    Ok(())
}

fn spectrum(f: &ScalarField) -> Vec<C64> {
    let mut hat: Vec<C64> = f.values().iter().map(|&v| C64::new(v, 0.0)).collect();
    f.grid().forward(&mut hat);
    hat
}

fn mode_axes(grid: &Grid, p: usize) -> &[u16] {
    let axes = grid.spec().real_axes();
    &grid.inner.mode_axes[p * axes..(p + 1) * axes]
}

/// Applies a multiplier to a spectrum and returns the inverse transform.
fn apply(grid: &Grid, hat: &[C64], symbol: impl Fn(&[u16]) -> C64) -> Vec<C64> {
    let mut buf: Vec<C64> = hat
        .iter()
        .enumerate()
        .map(|(p, h)| symbol(mode_axes(grid, p)) * h)
        .collect();
    grid.inverse(&mut buf);
    buf
}

/// The mixed Hessian `∂_i∂_j̄φ` at every point.
pub fn dbar_hessian(phi: &ScalarField) -> Result<HermitianField> {
    check_finite(phi)?;
    let grid = phi.grid();
    let n = grid.n_complex();
    let sym = Symbols::new(grid);
    let hat = spectrum(phi);
    let mut out = vec![C64::new(0.0, 0.0); grid.point_count() * n * n];

    // Diagonal entries are real fields; two share one complex transform.
    let mut j = 0;
    while j < n {
        let pair = (j + 1 < n).then_some(j + 1);
        let buf = apply(grid, &hat, |ax| match pair {
            Some(k) => C64::new(sym.diag(ax, j), sym.diag(ax, k)),
            None => C64::new(sym.diag(ax, j), 0.0),
        });
        for (m, z) in out.chunks_mut(n * n).zip(&buf) {
            m[j * n + j] = C64::new(z.re, 0.0);
            if let Some(k) = pair {
                m[k * n + k] = C64::new(z.im, 0.0);
            }
        }
        j += 2;
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let buf = apply(grid, &hat, |ax| sym.holo(ax, i) * sym.antiholo(ax, j));
            for (m, z) in out.chunks_mut(n * n).zip(&buf) {
                m[i * n + j] = *z;
                m[j * n + i] = z.conj();
            }
        }
    }
    Ok(HermitianField::from_raw(grid, out))
}

/// A single entry `∂_i∂_j̄φ` from its own multiplier, without symmetrization.
pub fn dbar_hessian_entry(phi: &ScalarField, i: usize, j: usize) -> Result<Vec<C64>> {
    check_finite(phi)?;
    let grid = phi.grid();
    let n = grid.n_complex();
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!("entry ({i},{j}) out of range for n = {n}")));
    }
    let sym = Symbols::new(grid);
    Ok(apply(grid, &spectrum(phi), |ax| sym.mixed(ax, i, j)))
}

/// Components `∂_jφ = ½(∂_{x^j}φ − i∂_{y^j}φ)`.
pub fn holomorphic_gradient(phi: &ScalarField) -> Result<ComplexVectorField> {
    gradient(phi, false)
}

/// Components `∂_j̄φ = ½(∂_{x^j}φ + i∂_{y^j}φ)`.
pub fn antiholomorphic_gradient(phi: &ScalarField) -> Result<ComplexVectorField> {
    gradient(phi, true)
}

fn gradient(phi: &ScalarField, anti: bool) -> Result<ComplexVectorField> {
    check_finite(phi)?;
    let grid = phi.grid();
    let n = grid.n_complex();
    let sym = Symbols::new(grid);
    let hat = spectrum(phi);
    let mut out = vec![C64::new(0.0, 0.0); grid.point_count() * n];
    for j in 0..n {
        let buf = apply(grid, &hat, |ax| if anti { sym.antiholo(ax, j) } else { sym.holo(ax, j) });
        for (v, z) in out.chunks_mut(n).zip(&buf) {
            v[j] = *z;
        }
    }
    Ok(ComplexVectorField::from_raw(grid, out))
}

/// Flat Laplacian `Σ_a ∂²_a φ` over all real axes.
pub fn flat_laplacian(phi: &ScalarField) -> Result<ScalarField> {
    check_finite(phi)?;
    let grid = phi.grid();
    let sym = Symbols::new(grid);
    let buf = apply(grid, &spectrum(phi), |ax| {
        C64::new(ax.iter().map(|&k| sym.second[k as usize]).sum(), 0.0)
    });
    Ok(ScalarField::from_vec_unchecked(grid, buf.iter().map(|z| z.re).collect()))
}

/// Fraction of non-constant Fourier energy carried by modes whose wavenumber
/// exceeds `N/3` in magnitude along some axis.
pub fn spectral_tail_energy(f: &ScalarField) -> f64 {
    let grid = f.grid();
    let cutoff = grid.points_per_axis() as f64 / 3.0;
    let hat = spectrum(f);
    let mut total = 0.0;
    let mut tail = 0.0;
    for (p, h) in hat.iter().enumerate().skip(1) {
        let e = h.norm_sqr();
        total += e;
        if grid.mode_wavenumbers(p).any(|k| k.abs() as f64 > cutoff) {
            tail += e;
        }
    }
    if total > 0.0 {
        tail / total
    } else {
        0.0
    }
}
