//! Independent checks of the core kernels: a grid search for the eigenvalue
//! bound, a sweep of the trace identity against mixed discriminants, and a
//! finite-difference study of the spectral Hessian.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::hermitian::{li_eigenvalue_bound, trace_pair, wedge_trace_ratio_oracle, HermitianMatrix, C64};
use crate::torus::{dbar_hessian, Grid, ScalarField};

pub const LI_GRID_STEP: f64 = 1e-3;
pub const WEDGE_TOLERANCE: f64 = 1e-12;
pub const MIN_HESSIAN_ORDER: f64 = 2.0;

/// Outcome of scanning `λ = k·step` on `(0, 2·bound]` in every coordinate.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiGridResult {
    pub alpha: f64,
    pub beta: f64,
    pub n: usize,
    pub bound: f64,
    /// Largest grid value of any single coordinate of an admissible point.
    pub max_admissible: f64,
    /// Grid values of a coordinate exceeding `bound + step` that belong to an
    /// admissible point.
    pub violations: usize,
}

impl LiGridResult {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn q(alpha: f64, beta: f64, lambda: f64) -> f64 {
    beta / (lambda * lambda) - alpha / lambda
}

fn li_grid(alpha: f64, beta: f64, n: usize, step: f64) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    let bound = li_eigenvalue_bound(alpha, beta, n)?;
    let per_unit = (1.0 / step).round();
    let count = (2.0 * bound * per_unit).floor() as usize;
    let lambdas: Vec<f64> = (1..=count).map(|k| k as f64 / per_unit).collect();
    let qs = lambdas.iter().map(|&l| q(alpha, beta, l)).collect();
    Ok((bound, lambdas, qs))
}

/// The condition `1 + Σ q(λ_i) ≤ 0` with `q(λ) = β/λ² − α/λ` separates over
/// coordinates, so a coordinate value `λ₁` belongs to an admissible grid
/// point iff `1 + q(λ₁) + (n−1)·min q ≤ 0`.
pub fn li_grid_search(alpha: f64, beta: f64, n: usize, step: f64) -> Result<LiGridResult> {
    let (bound, lambdas, qs) = li_grid(alpha, beta, n, step)?;
    let q_min = qs.iter().copied().fold(f64::INFINITY, f64::min);
    let rest = (n - 1) as f64 * q_min;
    let mut max_admissible = 0.0f64;
    let mut violations = 0;
    for (&l, &ql) in lambdas.iter().zip(&qs) {
        if 1.0 + ql + rest <= 0.0 {
            max_admissible = max_admissible.max(l);
            if l > bound + step {
                violations += 1;
            }
        }
    }
    Ok(LiGridResult {
        alpha,
        beta,
        n,
        bound,
        max_admissible,
        violations,
    })
}

/// All admissible grid points for `n = 2`.
pub fn li_admissible_pairs(alpha: f64, beta: f64, step: f64) -> Result<Vec<(f64, f64)>> {
    let (_, lambdas, qs) = li_grid(alpha, beta, 2, step)?;
    let mut out = Vec::new();
    for (i, &qi) in qs.iter().enumerate() {
        for (j, &qj) in qs.iter().enumerate() {
            if 1.0 + qi + qj <= 0.0 {
                out.push((lambdas[i], lambdas[j]));
            }
        }
    }
    Ok(out)
}

/// Seeded `(α, β, n)` with `n ∈ {2, 3}`, `α ∈ [0.5, 5)` and
/// `α²/β ∈ [4/n, 0.95·4/(n−1))`.
pub fn sample_admissible(rng: &mut ChaCha8Rng) -> (f64, f64, usize) {
    let n = rng.gen_range(2..=3usize);
    let alpha = rng.gen_range(0.5..5.0);
    let ratio = rng.gen_range(4.0 / n as f64..0.95 * 4.0 / (n - 1) as f64);
    (alpha, alpha * alpha / ratio, n)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LiSweep {
    pub cases: usize,
    pub passed: usize,
    /// Largest `max_admissible − bound` over the cases.
    pub worst_excess: f64,
    pub tight_case_bound: f64,
    pub tight_case_points: Vec<(f64, f64)>,
}

impl LiSweep {
    pub fn all_passed(&self) -> bool {
        self.passed == self.cases && self.tight_case_points == [(2.0, 2.0)] && self.tight_case_bound == 2.0
    }
}

pub fn li_sweep(seed: u64, cases: usize) -> Result<LiSweep> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for _ in 0..cases {
        let (alpha, beta, n) = sample_admissible(&mut rng);
        let r = li_grid_search(alpha, beta, n, LI_GRID_STEP)?;
        if r.passed() {
            passed += 1;
        }
        worst_excess = worst_excess.max(r.max_admissible - r.bound);
    }
    Ok(LiSweep {
        cases,
        passed,
        worst_excess,
        tight_case_bound: li_eigenvalue_bound(2.0, 2.0, 2)?,
        tight_case_points: li_admissible_pairs(2.0, 2.0, LI_GRID_STEP)?,
    })
}

/// `M M* + 0.2·I` with `M` uniform in the unit complex square.
pub fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> HermitianMatrix {
    let m: Vec<C64> = (0..n * n)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let mut a = vec![C64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                a[i * n + j] += m[i * n + k] * m[j * n + k].conj();
            }
        }
        a[i * n + i] += C64::new(0.2, 0.0);
    }
    HermitianMatrix::new(n, &a).expect("Hermitian by construction")
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WedgeSweep {
    pub dims: Vec<usize>,
    pub cases: usize,
    pub passed: usize,
    pub worst_relative_error: f64,
}

/// `trace_pair(χ, g)` against `n·(g ∧ χ^{n−1})/χⁿ` for random pairs, the
/// dimension cycling through `dims`.
pub fn wedge_sweep(seed: u64, cases: usize, dims: &[usize]) -> Result<WedgeSweep> {
    if dims.is_empty() {
        return Err(Error::InvalidInput("no dimensions to sweep".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut passed = 0;
    let mut worst = 0.0f64;
    for k in 0..cases {
        let n = dims[k % dims.len()];
        let chi = random_spd(n, &mut rng);
        let g = random_spd(n, &mut rng);
        let a = trace_pair(&chi, &g)?;
        let b = wedge_trace_ratio_oracle(&g, &chi)?;
        let rel = ((a - b) / b).abs();
        worst = worst.max(rel);
        if rel <= WEDGE_TOLERANCE {
            passed += 1;
        }
    }
    Ok(WedgeSweep {
        dims: dims.to_vec(),
        cases,
        passed,
        worst_relative_error: worst,
    })
}

/// Seeded real field with modes `|k_a| ≤ 2` on every axis.
pub fn band_limited_field(grid: &Grid, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axes = grid.spec().real_axes();
    let terms: Vec<(Vec<f64>, f64, f64)> = (0..6)
        .map(|_| {
            let k = (0..axes).map(|_| rng.gen_range(-2i32..=2) as f64).collect();
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..1.0))
        })
        .collect();
    ScalarField::from_fn(grid, |x| {
        terms
            .iter()
            .map(|(k, a, ph)| {
                let arg: f64 = k.iter().zip(x).map(|(k, x)| k * x).sum();
                a * (TAU * (arg + ph)).cos()
            })
            .sum()
    })
}

/// Fourth-order central differences on the periodic grid.
struct Stencil<'a> {
    grid: &'a Grid,
    h: f64,
}

impl Stencil<'_> {
    fn shifted(&self, p: usize, axis: usize, by: i64) -> usize {
        let spec = self.grid.spec();
        let stride = spec.stride(axis);
        let n = spec.points_per_axis as i64;
        let i = ((p / stride) as i64) % n;
        let j = (i + by).rem_euclid(n);
        (p as i64 + (j - i) * stride as i64) as usize
    }

    fn first(&self, f: &[f64], axis: usize) -> Vec<f64> {
        (0..f.len())
            .map(|p| {
                let at = |s| f[self.shifted(p, axis, s)];
                (-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * self.h)
            })
            .collect()
    }

    fn second(&self, f: &[f64], axis: usize) -> Vec<f64> {
        (0..f.len())
            .map(|p| {
                let at = |s| f[self.shifted(p, axis, s)];
                (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2)) / (12.0 * self.h * self.h)
            })
            .collect()
    }

    fn mixed(&self, f: &[f64], a: usize, b: usize) -> Vec<f64> {
        if a == b {
            self.second(f, a)
        } else {
            self.first(&self.first(f, a), b)
        }
    }
}

/// `∂_i∂_j̄φ` from fourth-order finite differences, with
/// `∂_i∂_j̄ = ¼[∂_{x^i}∂_{x^j} + ∂_{y^i}∂_{y^j} + i(∂_{x^i}∂_{y^j} − ∂_{y^i}∂_{x^j})]`
/// and real axes ordered `(x¹, y¹, x², y², …)`.
pub fn fd_hessian_entry(phi: &ScalarField, i: usize, j: usize) -> Vec<C64> {
    let grid = phi.grid();
    let st = Stencil {
        grid,
        h: 1.0 / grid.points_per_axis() as f64,
    };
    let f = phi.values();
    let (xi, yi, xj, yj) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
    let xx = st.mixed(f, xi, xj);
    let yy = st.mixed(f, yi, yj);
    let (xy, yx) = if i == j {
        (vec![0.0; f.len()], vec![0.0; f.len()])
    } else {
        (st.mixed(f, xi, yj), st.mixed(f, yi, xj))
    };
    (0..f.len())
        .map(|p| C64::new(0.25 * (xx[p] + yy[p]), 0.25 * (xy[p] - yx[p])))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct HessianStudy {
    pub n: usize,
    pub points_per_axis: Vec<usize>,
    /// Max-norm difference between the spectral and finite-difference Hessians.
    pub errors: Vec<f64>,
    /// `log₂(e_N / e_{2N})` for consecutive resolutions.
    pub orders: Vec<f64>,
}

impl HessianStudy {
    pub fn min_order(&self) -> f64 {
        self.orders.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

pub fn hessian_study(n: usize, sizes: &[usize], seed: u64) -> Result<HessianStudy> {
    let mut errors = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let grid = Grid::new(n, size)?;
        let phi = band_limited_field(&grid, seed);
        let spectral = dbar_hessian(&phi)?;
        let mut err = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                let fd = fd_hessian_entry(&phi, i, j);
                for (p, z) in fd.iter().enumerate() {
                    err = err.max((spectral.at(p).get(i, j) - z).norm());
                }
            }
        }
        errors.push(err);
    }
    let orders = errors.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    Ok(HessianStudy {
        n,
        points_per_axis: sizes.to_vec(),
        errors,
        orders,
    })
}
