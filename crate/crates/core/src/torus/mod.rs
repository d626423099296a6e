//! Uniform periodic grids on the flat complex torus `ℂⁿ / (ℤ + iℤ)ⁿ` and the
//! fields sampled on them.
//!
//! Real axes are ordered `(x¹, y¹, …, xⁿ, yⁿ)` with `z^j = x^j + i y^j`;
//! field values are stored row-major over that order, so the last axis
//! (`yⁿ`) varies fastest.

mod snapshot;
mod spectral;

pub use snapshot::{read_snapshot, write_snapshot, SnapshotHeader};
pub use spectral::{
    antiholomorphic_gradient, dbar_hessian, dbar_hessian_entry, flat_laplacian, holomorphic_gradient,
    spectral_tail_energy, TAIL_WARN_THRESHOLD,
};

use std::fmt;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::hermitian::{Entries, HermitianMatrix, C64};

/// Default cap on the total number of grid points.
pub const DEFAULT_MAX_POINTS: usize = 1 << 22;

/// Shape of a periodic grid: complex dimension `n` and `N` points per real
/// axis, for `N^{2n}` points in total. Each real axis has period 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub n_complex: usize,
    pub points_per_axis: usize,
    pub max_points: usize,
}

impl GridSpec {
    pub fn new(n_complex: usize, points_per_axis: usize) -> Result<Self> {
        Self::with_cap(n_complex, points_per_axis, DEFAULT_MAX_POINTS)
    }

    pub fn with_cap(n_complex: usize, points_per_axis: usize, max_points: usize) -> Result<Self> {
        let spec = Self {
            n_complex,
            points_per_axis,
            max_points,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_complex == 0 {
            return Err(Error::Grid("complex dimension must be >= 1".into()));
        }
        let n = self.points_per_axis;
        if n < 8 || !n.is_multiple_of(2) {
            return Err(Error::Grid(format!("points per axis must be even and >= 8, got {n}")));
        }
        match self.checked_point_count() {
            Some(total) if total <= self.max_points => Ok(()),
            _ => Err(Error::Grid(format!(
                "{n}^{} points exceeds the cap of {}",
                2 * self.n_complex,
                self.max_points
            ))),
        }
    }

    fn checked_point_count(&self) -> Option<usize> {
        (0..self.real_axes()).try_fold(1usize, |acc, _| acc.checked_mul(self.points_per_axis))
    }

    #[inline]
    pub fn real_axes(&self) -> usize {
        2 * self.n_complex
    }

    #[inline]
    pub fn point_count(&self) -> usize {
        self.points_per_axis.pow(self.real_axes() as u32)
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.points_per_axis as f64
    }

    /// Stride of a real axis in the flat index.
    #[inline]
    pub fn stride(&self, axis: usize) -> usize {
        self.points_per_axis.pow((self.real_axes() - 1 - axis) as u32)
    }

    /// Per-axis indices of a flat point index.
    pub fn unflatten(&self, mut p: usize) -> SmallVec<[usize; 8]> {
        let axes = self.real_axes();
        let mut idx: SmallVec<[usize; 8]> = SmallVec::from_elem(0, axes);
        for a in (0..axes).rev() {
            idx[a] = p % self.points_per_axis;
            p /= self.points_per_axis;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        idx.iter().fold(0, |acc, &k| acc * self.points_per_axis + k)
    }
}

struct GridInner {
    spec: GridSpec,
    fft: Arc<dyn Fft<f64>>,
    ifft: Arc<dyn Fft<f64>>,
    /// Signed wavenumber for each per-axis FFT index.
    wavenumbers: Vec<i64>,
    /// Per-axis FFT indices of every mode, `real_axes` entries per mode.
    mode_axes: Vec<u16>,
}

/// Grid handle with coordinates and FFT plans; cheap to clone.
#[derive(Clone)]
pub struct Grid {
    inner: Arc<GridInner>,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.inner.spec).finish()
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.inner, &other.inner) || self.spec() == other.spec()
    }
}

pub fn make_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    let n = spec.points_per_axis;
    let mut planner = FftPlanner::new();
    let wavenumbers = (0..n as i64)
        .map(|k| if k <= n as i64 / 2 { k } else { k - n as i64 })
        .collect();
    let axes = spec.real_axes();
    let mut mode_axes = Vec::with_capacity(spec.point_count() * axes);
    for p in 0..spec.point_count() {
        mode_axes.extend(spec.unflatten(p).iter().map(|&k| k as u16));
    }
    Ok(Grid {
        inner: Arc::new(GridInner {
            spec,
            fft: planner.plan_fft_forward(n),
            ifft: planner.plan_fft_inverse(n),
            wavenumbers,
            mode_axes,
        }),
    })
}

impl Grid {
    pub fn new(n_complex: usize, points_per_axis: usize) -> Result<Self> {
        make_grid(GridSpec::new(n_complex, points_per_axis)?)
    }

    #[inline]
    pub fn spec(&self) -> GridSpec {
        self.inner.spec
    }

    #[inline]
    pub fn n_complex(&self) -> usize {
        self.inner.spec.n_complex
    }

    #[inline]
    pub fn points_per_axis(&self) -> usize {
        self.inner.spec.points_per_axis
    }

    #[inline]
    pub fn point_count(&self) -> usize {
        self.inner.spec.point_count()
    }

    /// Coordinates `k/N`, `k = 0..N`, shared by every real axis.
    pub fn axis_coordinates(&self) -> Vec<f64> {
        let n = self.points_per_axis();
        (0..n).map(|k| k as f64 / n as f64).collect()
    }

    /// Real coordinates `(x¹, y¹, …)` of a flat point index.
    pub fn coordinates(&self, p: usize) -> SmallVec<[f64; 8]> {
        let h = self.spec().spacing();
        self.spec().unflatten(p).iter().map(|&k| k as f64 * h).collect()
    }

    /// Signed per-axis wavenumbers of mode `p`.
    #[inline]
    pub(crate) fn mode_wavenumbers(&self, p: usize) -> impl Iterator<Item = i64> + '_ {
        let axes = self.spec().real_axes();
        self.inner.mode_axes[p * axes..(p + 1) * axes]
            .iter()
            .map(move |&k| self.inner.wavenumbers[k as usize])
    }

    pub(crate) fn forward(&self, data: &mut [C64]) {
        self.transform(data, &self.inner.fft);
    }

    /// Normalized inverse transform.
    pub(crate) fn inverse(&self, data: &mut [C64]) {
        self.transform(data, &self.inner.ifft);
        let scale = 1.0 / data.len() as f64;
        for z in data.iter_mut() {
            *z *= scale;
        }
    }

    fn transform(&self, data: &mut [C64], fft: &Arc<dyn Fft<f64>>) {
        let spec = self.spec();
        let n = spec.points_per_axis;
        debug_assert_eq!(data.len(), spec.point_count());
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut buf: Vec<C64> = Vec::new();
        for axis in 0..spec.real_axes() {
            let stride = spec.stride(axis);
            if stride == 1 {
                fft.process_with_scratch(data, &mut scratch);
                continue;
            }
            let block = n * stride;
            buf.resize(block, C64::new(0.0, 0.0));
            for chunk in data.chunks_mut(block) {
                for k in 0..n {
                    let row = &chunk[k * stride..(k + 1) * stride];
                    for (inner, &z) in row.iter().enumerate() {
                        buf[inner * n + k] = z;
                    }
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                for k in 0..n {
                    let row = &mut chunk[k * stride..(k + 1) * stride];
                    for (inner, z) in row.iter_mut().enumerate() {
                        *z = buf[inner * n + k];
                    }
                }
            }
        }
    }
}

fn check_same_grid(a: &Grid, b: &Grid) -> Result<()> {
    if a != b {
        return Err(Error::Grid(format!(
            "fields live on different grids: {:?} vs {:?}",
            a.spec(),
            b.spec()
        )));
    }
    Ok(())
}

/// Real field sampled on the grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.point_count() {
            return Err(Error::DimensionMismatch {
                expected: grid.point_count(),
                found: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite field value".into()));
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_vec_unchecked(grid: &Grid, values: Vec<f64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn zeros(grid: &Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self::from_vec_unchecked(grid, vec![c; grid.point_count()])
    }

    /// Samples `f` at the real coordinates of every grid point.
    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = (0..grid.point_count()).map(|p| f(&grid.coordinates(p))).collect();
        Self::from_vec_unchecked(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sup_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (p, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = p;
            }
        }
        best
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self::from_vec_unchecked(&self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_vec_unchecked(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect(),
        ))
    }

    /// `self + c · other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + c * b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn shift(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// Largest pointwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs())))
    }
}

/// Integral against the normalized measure `dμ = ωⁿ / ∫ωⁿ`.
///
/// For a constant Kähler form `ω` the volume density is constant and cancels
/// under normalization, so this is the grid mean (the periodic trapezoidal
/// rule). Compensated (Neumaier) summation in index order, so the result is
/// reproducible and accurate to a few ulps.
pub fn integrate_mu(f: &ScalarField) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0;
    for &v in &f.values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    (sum + comp) / f.values.len() as f64
}

/// A Hermitian matrix at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct HermitianField {
    grid: Grid,
    values: Vec<C64>,
}

impl HermitianField {
    pub fn constant(grid: &Grid, m: &HermitianMatrix) -> Result<Self> {
        if m.dim() != grid.n_complex() {
            return Err(Error::DimensionMismatch {
                expected: grid.n_complex(),
                found: m.dim(),
            });
        }
        let mut values = Vec::with_capacity(grid.point_count() * m.as_slice().len());
        for _ in 0..grid.point_count() {
            values.extend_from_slice(m.as_slice());
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn from_fn(grid: &Grid, f: impl Fn(&[f64]) -> HermitianMatrix) -> Result<Self> {
        let n = grid.n_complex();
        let mut values = Vec::with_capacity(grid.point_count() * n * n);
        for p in 0..grid.point_count() {
            let m = f(&grid.coordinates(p));
            if m.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    found: m.dim(),
                });
            }
            values.extend_from_slice(m.as_slice());
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Wraps raw per-point row-major entries, symmetrizing each matrix.
    pub fn from_entries(grid: &Grid, mut values: Vec<C64>) -> Result<Self> {
        let n = grid.n_complex();
        if values.len() != grid.point_count() * n * n {
            return Err(Error::DimensionMismatch {
                expected: grid.point_count() * n * n,
                found: values.len(),
            });
        }
        if values.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite matrix entry".into()));
        }
        for m in values.chunks_mut(n * n) {
            let s = HermitianMatrix::symmetrized(n, m);
            m.copy_from_slice(s.as_slice());
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub(crate) fn from_raw(grid: &Grid, values: Vec<C64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub(crate) fn into_raw(self) -> Vec<C64> {
        self.values
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.grid.n_complex()
    }

    /// Matrix at flat point index `p`.
    #[inline]
    pub fn at(&self, p: usize) -> HermitianMatrix {
        let nn = self.dim() * self.dim();
        HermitianMatrix::from_entries_unchecked(self.dim(), Entries::from_slice(&self.values[p * nn..(p + 1) * nn]))
    }

    /// Entry `(i, j)` at every point.
    pub fn entry_field(&self, i: usize, j: usize) -> Vec<C64> {
        let n = self.dim();
        self.values.chunks(n * n).map(|m| m[i * n + j]).collect()
    }

    pub fn raw(&self) -> &[C64] {
        &self.values
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(Self::from_raw(
            &self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scale(&self, c: f64) -> Self {
        Self::from_raw(&self.grid, self.values.iter().map(|z| z * c).collect())
    }

    /// Largest entrywise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        check_same_grid(&self.grid, &other.grid)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm())))
    }
}

/// `n` complex components per grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexVectorField {
    grid: Grid,
    values: Vec<C64>,
}

impl ComplexVectorField {
    pub(crate) fn from_raw(grid: &Grid, values: Vec<C64>) -> Self {
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Components at flat point index `p`.
    pub fn at(&self, p: usize) -> &[C64] {
        let n = self.grid.n_complex();
        &self.values[p * n..(p + 1) * n]
    }

    /// Component `j` at every point.
    pub fn component(&self, j: usize) -> Vec<C64> {
        let n = self.grid.n_complex();
        self.values.chunks(n).map(|v| v[j]).collect()
    }

    pub fn raw(&self) -> &[C64] {
        &self.values
    }
}
