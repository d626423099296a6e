//! Pointwise complex-Hermitian linear algebra.
//!
//! A Hermitian form `A = √−1 A_{ij̄} dz^i ∧ dz̄^j` is stored as a dense `n × n`
//! matrix whose entry `(i, j)` holds the component `A_{ij̄}`. Inverse
//! components `A^{ij̄}` are the entries of `conj(A⁻¹)`, which is the unique
//! choice satisfying `A^{ij̄} A_{kj̄} = δ_{ik}`. Every index formula in the
//! crate (trace pairings, the `h` metric, the operator `L`) is written
//! against this one convention.

mod cone;
mod oracle;
mod pointwise;

pub use cone::{cone_margin, ConeReport};
pub use pointwise::{PointKernel, PointTrace};
pub use oracle::{determinant_leibniz, mixed_discriminant, wedge_trace_ratio_oracle};

use nalgebra::DMatrix;
use num_complex::Complex64;
use smallvec::SmallVec;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Inline storage for matrices up to 4 × 4.
pub(crate) type Entries = SmallVec<[C64; 16]>;

/// Largest deviation from Hermitian symmetry tolerated at construction.
pub const SYMMETRY_GUARD: f64 = 1e-12;

/// Dense Hermitian matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianMatrix {
    dim: usize,
    data: Entries,
}

impl HermitianMatrix {
    /// Builds a matrix from row-major entries and symmetrizes it as
    /// `(M + M*) / 2`.
    pub fn new(dim: usize, entries: &[C64]) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("matrix dimension must be >= 1".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch {
                expected: dim * dim,
                found: entries.len(),
            });
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        Ok(Self::symmetrized(dim, entries))
    }

    /// Like [`HermitianMatrix::new`] but rejects inputs whose asymmetry
    /// exceeds [`SYMMETRY_GUARD`] relative to the largest entry.
    pub fn new_checked(dim: usize, entries: &[C64]) -> Result<Self> {
        let m = Self::new(dim, entries)?;
        let scale = entries.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for i in 0..dim {
            for j in 0..dim {
                let drift = (entries[i * dim + j] - entries[j * dim + i].conj()).norm();
                if drift > SYMMETRY_GUARD * scale {
                    return Err(Error::InvalidInput(format!(
                        "entry ({i},{j}) deviates from Hermitian symmetry by {drift:.3e}"
                    )));
                }
            }
        }
        Ok(m)
    }

    /// Symmetrizing constructor without validation, for hot loops whose
    /// inputs are finite by construction.
    pub(crate) fn symmetrized(dim: usize, entries: &[C64]) -> Self {
        let mut data: Entries = SmallVec::from_slice(entries);
        for i in 0..dim {
            data[i * dim + i] = C64::new(data[i * dim + i].re, 0.0);
            for j in (i + 1)..dim {
                let avg = 0.5 * (entries[i * dim + j] + entries[j * dim + i].conj());
                data[i * dim + j] = avg;
                data[j * dim + i] = avg.conj();
            }
        }
        Self { dim, data }
    }

    pub(crate) fn from_entries_unchecked(dim: usize, data: Entries) -> Self {
        Self { dim, data }
    }

    pub fn identity(dim: usize) -> Self {
        Self::scaled_identity(dim, 1.0)
    }

    pub fn scaled_identity(dim: usize, c: f64) -> Self {
        let mut data: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), dim * dim);
        for i in 0..dim {
            data[i * dim + i] = C64::new(c, 0.0);
        }
        Self { dim, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let dim = values.len();
        let mut m = Self::scaled_identity(dim, 0.0);
        for (i, &v) in values.iter().enumerate() {
            m.data[i * dim + i] = C64::new(v, 0.0);
        }
        m
    }

    /// Builds a real symmetric matrix from row-major real entries.
    pub fn from_real(dim: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Self::new(dim, &c)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> C64 {
        self.data[i * self.dim + j]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i).re).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_dim(other)?;
        Ok(Self {
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    /// Complex-conjugated entries (the transpose, for a Hermitian matrix).
    pub fn conj(&self) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub(crate) fn check_dim(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub(crate) fn to_nalgebra(&self) -> DMatrix<C64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Lower Cholesky factor `L` with `A = L L*`, or `None` when a pivot is
    /// not strictly positive.
    pub(crate) fn cholesky(&self) -> Option<Entries> {
        let n = self.dim;
        let mut l: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
        for j in 0..n {
            let mut d = self.get(j, j).re;
            for k in 0..j {
                d -= l[j * n + k].norm_sqr();
            }
            if !(d > 0.0) {
                return None;
            }
            let djj = d.sqrt();
            l[j * n + j] = C64::new(djj, 0.0);
            for i in (j + 1)..n {
                let mut s = self.get(i, j);
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k].conj();
                }
                l[i * n + j] = s / djj;
            }
        }
        Some(l)
    }
}

/// Inverse of a lower-triangular matrix with positive real diagonal.
pub(crate) fn invert_lower(l: &[C64], n: usize) -> Entries {
    let mut inv: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for j in 0..n {
        inv[j * n + j] = C64::new(1.0 / l[j * n + j].re, 0.0);
        for i in (j + 1)..n {
            let mut s = C64::new(0.0, 0.0);
            for k in j..i {
                s -= l[i * n + k] * inv[k * n + j];
            }
            inv[i * n + j] = s / l[i * n + i].re;
        }
    }
    inv
}

/// Computes `T A T*` for a general square `T` (row-major).
pub(crate) fn congruence(t: &[C64], a: &HermitianMatrix) -> HermitianMatrix {
    let n = a.dim();
    let mut ta: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += t[i * n + k] * a.get(k, j);
            }
            ta[i * n + j] = s;
        }
    }
    let mut out: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += ta[i * n + k] * t[j * n + k].conj();
            }
            out[i * n + j] = s;
        }
    }
    HermitianMatrix::symmetrized(n, &out)
}

/// Real eigenvalues in ascending order.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenSpectrum {
    pub values: Vec<f64>,
}

impl EigenSpectrum {
    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

fn check_finite(h: &HermitianMatrix) -> Result<()> {
    if h.as_slice().iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidInput("non-finite matrix entry".into()));
    }
    Ok(())
}

pub fn eigenvalues_hermitian(h: &HermitianMatrix) -> Result<EigenSpectrum> {
    check_finite(h)?;
    let eig = nalgebra::SymmetricEigen::new(h.to_nalgebra());
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(|a, b| a.total_cmp(b));
    Ok(EigenSpectrum { values })
}

/// Largest eigenvalue; closed form for `n ≤ 2`.
pub(crate) fn max_eigenvalue(h: &HermitianMatrix) -> f64 {
    match h.dim() {
        1 => h.get(0, 0).re,
        2 => {
            let p = h.get(0, 0).re;
            let q = h.get(1, 1).re;
            let half_gap = (0.25 * (p - q) * (p - q) + h.get(0, 1).norm_sqr()).sqrt();
            0.5 * (p + q) + half_gap
        }
        _ => eigenvalues_hermitian(h).map(|s| s.max()).unwrap_or(f64::NAN),
    }
}

/// Whitening transform for a fixed positive-definite reference form `ω`.
///
/// Stores `W = L⁻¹` where `ω = L L*`, so that the generalized eigenvalues of
/// `(A, ω)` are the ordinary eigenvalues of `W A W*`.
#[derive(Clone, Debug)]
pub struct Whitening {
    reference: HermitianMatrix,
    inv_factor: Entries,
}

impl Whitening {
    pub fn new(reference: &HermitianMatrix) -> Result<Self> {
        let l = reference.cholesky().ok_or(Error::NotPositiveDefinite)?;
        Ok(Self {
            reference: reference.clone(),
            inv_factor: invert_lower(&l, reference.dim()),
        })
    }

    pub fn reference(&self) -> &HermitianMatrix {
        &self.reference
    }

    pub fn whiten(&self, a: &HermitianMatrix) -> HermitianMatrix {
        congruence(&self.inv_factor, a)
    }

    pub fn eigenvalues(&self, a: &HermitianMatrix) -> Result<EigenSpectrum> {
        self.reference.check_dim(a)?;
        eigenvalues_hermitian(&self.whiten(a))
    }

    /// Smallest generalized eigenvalue; closed form for `n ≤ 2`.
    pub fn min_eigenvalue(&self, a: &HermitianMatrix) -> f64 {
        let w = self.whiten(a);
        match w.dim() {
            1 => w.get(0, 0).re,
            2 => {
                let p = w.get(0, 0).re;
                let q = w.get(1, 1).re;
                let half_gap = (0.25 * (p - q) * (p - q) + w.get(0, 1).norm_sqr()).sqrt();
                0.5 * (p + q) - half_gap
            }
            _ => eigenvalues_hermitian(&w).map(|s| s.min()).unwrap_or(f64::NAN),
        }
    }

    /// True when `A − floor·ω` is positive definite, i.e. every generalized
    /// eigenvalue of `(A, ω)` exceeds `floor`.
    pub fn exceeds(&self, a: &HermitianMatrix, floor: f64) -> bool {
        let shifted = HermitianMatrix::from_entries_unchecked(
            a.dim(),
            a.as_slice()
                .iter()
                .zip(self.reference.as_slice())
                .map(|(x, g)| x - g * floor)
                .collect(),
        );
        shifted.cholesky().is_some()
    }
}

/// Generalized eigenvalues of the pair `(a, b)`, ascending; `b` must be
/// positive definite.
pub fn generalized_eigenvalues(a: &HermitianMatrix, b: &HermitianMatrix) -> Result<EigenSpectrum> {
    check_finite(a)?;
    Whitening::new(b)?.eigenvalues(a)
}

/// True iff the smallest eigenvalue of `h` exceeds `tol`.
pub fn is_positive_definite(h: &HermitianMatrix, tol: f64) -> Result<bool> {
    check_finite(h)?;
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput("tolerance must be non-negative".into()));
    }
    let shifted = h.sub(&HermitianMatrix::scaled_identity(h.dim(), tol))?;
    Ok(shifted.cholesky().is_some())
}

pub fn inverse_hermitian(h: &HermitianMatrix) -> Result<HermitianMatrix> {
    check_finite(h)?;
    let n = h.dim();
    let l = h.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let li = invert_lower(&l, n);
    // H⁻¹ = L⁻* L⁻¹
    let mut out: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in i.max(j)..n {
                s += li[k * n + i].conj() * li[k * n + j];
            }
            out[i * n + j] = s;
        }
    }
    Ok(HermitianMatrix::symmetrized(n, &out))
}

/// Inverse components `A^{ij̄}`, i.e. `conj(A⁻¹)`.
pub fn inverse_components(a: &HermitianMatrix) -> Result<HermitianMatrix> {
    Ok(inverse_hermitian(a)?.conj())
}

/// `tr_χ g = χ^{ij̄} g_{ij̄}`.
pub fn trace_pair(chi: &HermitianMatrix, g: &HermitianMatrix) -> Result<f64> {
    chi.check_dim(g)?;
    let up = inverse_components(chi)?;
    Ok(contract(&up, g))
}

/// Full contraction `Σ_{ij} U^{ij̄} A_{ij̄}` of upper against lower indices.
pub(crate) fn contract(upper: &HermitianMatrix, lower: &HermitianMatrix) -> f64 {
    upper
        .as_slice()
        .iter()
        .zip(lower.as_slice())
        .map(|(u, a)| (u * a).re)
        .sum()
}

/// Inverse components of the metric `h`:
/// `h^{ij̄} = χ_φ^{il̄} χ_φ^{kj̄} g_{kl̄}`.
pub fn h_inverse_metric(chi_phi: &HermitianMatrix, g: &HermitianMatrix) -> Result<HermitianMatrix> {
    chi_phi.check_dim(g)?;
    if g.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite);
    }
    let n = g.dim();
    let x = inverse_components(chi_phi)?;
    // h = X gᵀ X in row-major index form.
    let mut xg: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for i in 0..n {
        for k in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for l in 0..n {
                s += x.get(i, l) * g.get(k, l);
            }
            xg[i * n + k] = s;
        }
    }
    let mut out: Entries = SmallVec::from_elem(C64::new(0.0, 0.0), n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s = C64::new(0.0, 0.0);
            for k in 0..n {
                s += xg[i * n + k] * x.get(k, j);
            }
            out[i * n + j] = s;
        }
    }
    Ok(HermitianMatrix::symmetrized(n, &out))
}

/// Upper bound on every `λ_i > 0` satisfying
/// `0 ≥ 1 − α Σ 1/λ_i + β Σ 1/λ_i²`, valid when `4/n ≤ α²/β < 4/(n−1)`.
pub fn li_eigenvalue_bound(alpha: f64, beta: f64, n: usize) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::OutOfRange(format!("alpha > 0 fails (alpha = {alpha})")));
    }
    if !(beta > 0.0) {
        return Err(Error::OutOfRange(format!("beta > 0 fails (beta = {beta})")));
    }
    if n < 2 {
        return Err(Error::OutOfRange(format!("n >= 2 fails (n = {n})")));
    }
    let ratio = alpha * alpha / beta;
    let nf = n as f64;
    if !(ratio >= 4.0 / nf) {
        return Err(Error::OutOfRange(format!(
            "4/n <= alpha^2/beta fails (alpha^2/beta = {ratio}, 4/n = {})",
            4.0 / nf
        )));
    }
    if !(ratio < 4.0 / (nf - 1.0)) {
        return Err(Error::OutOfRange(format!(
            "alpha^2/beta < 4/(n-1) fails (alpha^2/beta = {ratio}, 4/(n-1) = {})",
            4.0 / (nf - 1.0)
        )));
    }
    // rounding can push the discriminant a hair below zero at ratio = 4/n
    let disc = (nf * alpha * alpha - 4.0 * beta).max(0.0);
    Ok(2.0 * beta / (alpha - disc.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sample_spd(n: usize, seed: u64) -> HermitianMatrix {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let b: Vec<C64> = (0..n * n)
            .map(|_| c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut m = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                let mut s = c(0.0, 0.0);
                for k in 0..n {
                    s += b[i * n + k] * b[j * n + k].conj();
                }
                m[i * n + j] = s;
            }
            m[i * n + i] += 0.5;
        }
        HermitianMatrix::new(n, &m).unwrap()
    }

    fn matmul(a: &HermitianMatrix, b: &HermitianMatrix) -> Vec<C64> {
        let n = a.dim();
        let mut out = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    out[i * n + j] += a.get(i, k) * b.get(k, j);
                }
            }
        }
        out
    }

    #[test]
    fn construction_symmetrizes() {
        let m = HermitianMatrix::new(2, &[c(1.0, 0.3), c(2.0, 1.0), c(2.0, -3.0), c(4.0, 0.0)]).unwrap();
        assert_eq!(m.get(0, 0), c(1.0, 0.0));
        assert_eq!(m.get(0, 1), c(2.0, 2.0));
        assert_eq!(m.get(1, 0), c(2.0, -2.0));
        assert!(HermitianMatrix::new_checked(2, &[c(1.0, 0.0), c(2.0, 1.0), c(2.0, -3.0), c(4.0, 0.0)]).is_err());
        assert!(HermitianMatrix::new(0, &[]).is_err());
        assert!(HermitianMatrix::new(1, &[c(f64::NAN, 0.0)]).is_err());
    }

    #[test]
    fn eigenvalues_of_simple_matrices() {
        assert_eq!(eigenvalues_hermitian(&HermitianMatrix::identity(2)).unwrap().values, vec![1.0, 1.0]);
        let s = eigenvalues_hermitian(&HermitianMatrix::diagonal(&[4.0, 2.0])).unwrap();
        assert!((s.values[0] - 2.0).abs() < 1e-14 && (s.values[1] - 4.0).abs() < 1e-14);
    }

    /// Roots of the characteristic polynomial of a 3×3 Hermitian matrix by
    /// bisection on sign changes.
    fn char_poly_roots_3(h: &HermitianMatrix) -> Vec<f64> {
        let a = |i, j| h.get(i, j);
        let tr = h.trace();
        let minors = (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)).re
            + (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)).re
            + (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)).re;
        let det = determinant_leibniz(h).re;
        let p = |x: f64| x * x * x - tr * x * x + minors * x - det;
        let bound = 1.0 + h.as_slice().iter().map(|z| z.norm()).sum::<f64>();
        let steps = 20_000;
        let mut roots = Vec::new();
        let mut x0 = -bound;
        let mut p0 = p(x0);
        for k in 1..=steps {
            let x1 = -bound + 2.0 * bound * k as f64 / steps as f64;
            let p1 = p(x1);
            if p0 == 0.0 {
                roots.push(x0);
            } else if p0 * p1 < 0.0 {
                let (mut lo, mut hi) = (x0, x1);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if p(lo) * p(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
                roots.push(0.5 * (lo + hi));
            }
            x0 = x1;
            p0 = p1;
        }
        roots
    }

    #[test]
    fn eigenvalues_match_characteristic_polynomial() {
        for seed in 0..20 {
            let h = sample_spd(3, seed).add(&HermitianMatrix::scaled_identity(3, -1.2)).unwrap();
            let roots = char_poly_roots_3(&h);
            let s = eigenvalues_hermitian(&h).unwrap();
            assert_eq!(roots.len(), 3, "seed {seed}: {roots:?}");
            for (r, e) in roots.iter().zip(&s.values) {
                assert!((r - e).abs() < 1e-9, "seed {seed}: {r} vs {e}");
            }
        }
    }

    #[test]
    fn positive_definiteness() {
        assert!(is_positive_definite(&HermitianMatrix::identity(2), 0.0).unwrap());
        assert!(!is_positive_definite(&HermitianMatrix::diagonal(&[1.0, -0.1]), 0.0).unwrap());
        assert!(!is_positive_definite(&HermitianMatrix::diagonal(&[1e-9, 1.0]), 1e-8).unwrap());
        assert!(is_positive_definite(&HermitianMatrix::identity(2), -1.0).is_err());
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(inverse_hermitian(&HermitianMatrix::identity(3)).unwrap(), HermitianMatrix::identity(3));
        let inv = inverse_hermitian(&HermitianMatrix::diagonal(&[2.0, 4.0])).unwrap();
        assert!((inv.get(0, 0).re - 0.5).abs() < 1e-15 && (inv.get(1, 1).re - 0.25).abs() < 1e-15);
        assert!(matches!(
            inverse_hermitian(&HermitianMatrix::diagonal(&[1.0, -1.0])),
            Err(Error::NotPositiveDefinite)
        ));
        for seed in 0..50 {
            let h = sample_spd(3, seed);
            let inv = inverse_hermitian(&h).unwrap();
            let p = matmul(&h, &inv);
            for i in 0..3 {
                for j in 0..3 {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((p[i * 3 + j] - c(expect, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn inverse_components_contract_to_delta() {
        let chi = sample_spd(3, 7);
        let up = inverse_components(&chi).unwrap();
        for i in 0..3 {
            for k in 0..3 {
                let s: C64 = (0..3).map(|j| up.get(i, j) * chi.get(k, j)).sum();
                let expect = if i == k { 1.0 } else { 0.0 };
                assert!((s - c(expect, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn trace_pair_cases() {
        let t = trace_pair(&HermitianMatrix::diagonal(&[2.0, 4.0]), &HermitianMatrix::identity(2)).unwrap();
        assert!((t - 0.75).abs() < 1e-15);
        let chi = sample_spd(3, 3);
        assert!((trace_pair(&chi, &chi).unwrap() - 3.0).abs() < 3e-13);
        assert!(trace_pair(&chi, &HermitianMatrix::identity(2)).is_err());
        assert!(trace_pair(&HermitianMatrix::diagonal(&[1.0, -1.0]), &HermitianMatrix::identity(2)).is_err());
    }

    #[test]
    fn trace_pair_matches_wedge_oracle() {
        for seed in 0..200 {
            let chi = sample_spd(2, seed);
            let g = sample_spd(2, seed + 1000);
            let a = trace_pair(&chi, &g).unwrap();
            let b = wedge_trace_ratio_oracle(&g, &chi).unwrap();
            assert!(((a - b) / b).abs() < 1e-12);
        }
    }

    #[test]
    fn h_metric_cases() {
        let h = h_inverse_metric(&HermitianMatrix::diagonal(&[2.0, 0.5, 3.0]), &HermitianMatrix::identity(3)).unwrap();
        for (i, l) in [2.0f64, 0.5, 3.0].iter().enumerate() {
            assert!((h.get(i, i).re * l * l - 1.0).abs() < 1e-14);
        }
        let g = sample_spd(3, 11);
        let h = h_inverse_metric(&HermitianMatrix::identity(3), &g).unwrap();
        // χ_φ = I: h^{ij̄} = g_{jī} = conj(g_{ij̄})
        for i in 0..3 {
            for j in 0..3 {
                assert!((h.get(i, j) - g.get(i, j).conj()).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn h_metric_matches_index_sum_oracle() {
        for seed in 0..30 {
            let chi = sample_spd(3, seed);
            let g = sample_spd(3, seed + 500);
            let h = h_inverse_metric(&chi, &g).unwrap();
            // quadruple loop directly on χ^{ij̄} = conj(χ⁻¹)
            let inv = inverse_hermitian(&chi).unwrap();
            let up = |i: usize, j: usize| inv.get(i, j).conj();
            let mut tr_h_chi = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    let mut hij = c(0.0, 0.0);
                    for k in 0..3 {
                        for l in 0..3 {
                            hij += up(i, l) * up(k, j) * g.get(k, l);
                        }
                    }
                    assert!((hij - h.get(i, j)).norm() < 1e-12);
                    tr_h_chi += (hij * chi.get(i, j)).re;
                }
            }
            // tr_h χ_φ collapses to tr_{χ_φ} g
            let via_formula = contract(&h, &chi);
            assert!((via_formula - tr_h_chi).abs() < 1e-12 * tr_h_chi.abs());
            assert!((via_formula - trace_pair(&chi, &g).unwrap()).abs() < 1e-12 * via_formula.abs());
        }
    }

    #[test]
    fn li_bound_cases() {
        assert!((li_eigenvalue_bound(2.0, 2.0, 2).unwrap() - 2.0).abs() < 1e-15);
        let expect = 6.0 / (3.0 - 6f64.sqrt());
        assert!((li_eigenvalue_bound(3.0, 3.0, 2).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 10.8990).abs() < 1e-4);
        match li_eigenvalue_bound(3.0, 1.0, 2) {
            Err(Error::OutOfRange(msg)) => assert!(msg.contains("4/(n-1)")),
            other => panic!("unexpected {other:?}"),
        }
        match li_eigenvalue_bound(1.0, 1.0, 2) {
            Err(Error::OutOfRange(msg)) => assert!(msg.contains("4/n <=")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(li_eigenvalue_bound(1.0, 1.0, 1).is_err());
    }

    /// Literal two-dimensional grid search on (0, hi]² at step 1e−3.
    fn grid_max_admissible_2d(alpha: f64, beta: f64, hi: f64) -> f64 {
        let steps = (hi / 1e-3).round() as usize;
        let inv: Vec<f64> = (1..=steps).map(|k| 1.0 / (k as f64 * 1e-3)).collect();
        let q: Vec<f64> = inv.iter().map(|x| beta * x * x - alpha * x).collect();
        let mut best = 0.0f64;
        for a in 0..steps {
            for b in 0..steps {
                if 1.0 + q[a] + q[b] <= 0.0 {
                    best = best.max((a.max(b) + 1) as f64 * 1e-3);
                }
            }
        }
        best
    }

    #[test]
    fn li_bound_grid_search_2d() {
        let m = grid_max_admissible_2d(2.0, 2.0, 10.0);
        assert!(m <= 2.0 + 1e-2, "{m}");
        assert!(m >= 2.0 - 1e-2, "{m}");
        let bound = li_eigenvalue_bound(3.0, 3.0, 2).unwrap();
        let m = grid_max_admissible_2d(3.0, 3.0, 20.0);
        assert!(m <= bound + 1e-3 && m >= bound - 1e-2, "{m} vs {bound}");
    }

    #[test]
    fn generalized_eigenvalues_relative_to_reference() {
        let omega = HermitianMatrix::diagonal(&[2.0, 0.5]);
        let a = HermitianMatrix::diagonal(&[1.0, 1.0]);
        let s = generalized_eigenvalues(&a, &omega).unwrap();
        assert!((s.values[0] - 0.5).abs() < 1e-14 && (s.values[1] - 2.0).abs() < 1e-14);
        let w = Whitening::new(&omega).unwrap();
        assert!((w.min_eigenvalue(&a) - 0.5).abs() < 1e-14);
        assert!(w.exceeds(&a, 0.49) && !w.exceeds(&a, 0.51));
        for seed in 0..20 {
            let a = sample_spd(3, seed);
            let b = sample_spd(3, seed + 99);
            let w = Whitening::new(&b).unwrap();
            let s = w.eigenvalues(&a).unwrap();
            // tr_b a = Σ λ_i and tr_a b = Σ 1/λ_i
            let sum: f64 = s.values.iter().sum();
            let sum_inv: f64 = s.values.iter().map(|l| 1.0 / l).sum();
            assert!((sum - trace_pair(&b, &a).unwrap()).abs() < 1e-10 * sum);
            assert!((sum_inv - trace_pair(&a, &b).unwrap()).abs() < 1e-10 * sum_inv);
            assert!((w.min_eigenvalue(&a) - s.min()).abs() < 1e-10);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn double_inverse_is_identity(seed in 0u64..10_000, n in 1usize..5) {
                let h = sample_spd(n, seed);
                let back = inverse_hermitian(&inverse_hermitian(&h).unwrap()).unwrap();
                let scale = h.max_abs();
                for (a, b) in h.as_slice().iter().zip(back.as_slice()) {
                    prop_assert!((a - b).norm() <= 1e-11 * scale);
                }
            }

            #[test]
            fn self_trace_is_dimension(seed in 0u64..10_000, n in 1usize..5) {
                let h = sample_spd(n, seed);
                let t = trace_pair(&h, &h).unwrap();
                prop_assert!((t - n as f64).abs() <= 1e-13 * n as f64);
            }

            #[test]
            fn h_of_diagonal_is_inverse_square(l in proptest::collection::vec(0.05f64..20.0, 1..5)) {
                let h = h_inverse_metric(&HermitianMatrix::diagonal(&l), &HermitianMatrix::identity(l.len())).unwrap();
                for (i, li) in l.iter().enumerate() {
                    prop_assert!((h.get(i, i).re - 1.0 / (li * li)).abs() <= 1e-14 / (li * li));
                }
            }
        }
    }
}
