//! Reproducible background data for tests and generated runs.
//!
//! `χ = c₀·I + a·P` with `P` a random Hermitian field built from Fourier
//! modes with every wavenumber component in `{−2, …, 2}`, and `F` a random
//! real field of the same kind. Each entry of `P` and `F` is normalized by
//! the ℓ¹ norm of its coefficients, so `|P_{ij̄}| ≤ 1` and `|F| ≤ f_amplitude`
//! pointwise. The amplitudes are multiplied by 0.8 until the cone margin on
//! a fixed `N = 8` reference grid reaches [`TARGET_MARGIN`]; the result is
//! therefore the same function for every resolution.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::BackgroundGeometry;
use crate::error::{Error, Result};
use crate::hermitian::{cone_margin, HermitianMatrix, PointKernel, C64};
use crate::torus::{Grid, HermitianField, ScalarField};

pub const TARGET_MARGIN: f64 = 0.1;
pub const REFERENCE_POINTS_PER_AXIS: usize = 8;
const MODES_PER_ENTRY: usize = 4;
const MAX_MODE: i32 = 2;
const SHRINK: f64 = 0.8;
const MAX_SHRINKS: u32 = 60;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometryParams {
    pub seed: u64,
    pub c0: f64,
    pub chi_amplitude: f64,
    #[serde(rename = "F_amplitude")]
    pub f_amplitude: f64,
}

impl Default for GeometryParams {
    fn default() -> Self {
        Self {
            seed: 0,
            c0: 1.0,
            chi_amplitude: 0.3,
            f_amplitude: 0.5,
        }
    }
}

impl GeometryParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(Error::InvalidInput(format!("c0 must be positive, got {}", self.c0)));
        }
        if !(self.chi_amplitude >= 0.0 && self.chi_amplitude.is_finite()) {
            return Err(Error::InvalidInput("chi_amplitude must be >= 0".into()));
        }
        if !(0.0..=0.5).contains(&self.f_amplitude) {
            return Err(Error::InvalidInput(format!(
                "F_amplitude must lie in [0, 0.5], got {}",
                self.f_amplitude
            )));
        }
        Ok(())
    }
}

/// A sum `Σ c_m e^{2πi k_m·x}` with `Σ|c_m| = 1`.
#[derive(Clone, Debug)]
struct ModeSum {
    terms: Vec<(Vec<i32>, C64)>,
}

impl ModeSum {
    fn sample(rng: &mut ChaCha8Rng, axes: usize) -> Self {
        let mut terms: Vec<(Vec<i32>, C64)> = (0..MODES_PER_ENTRY)
            .map(|_| {
                let k = (0..axes).map(|_| rng.gen_range(-MAX_MODE..=MAX_MODE)).collect();
                let c = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                (k, c)
            })
            .collect();
        let norm: f64 = terms.iter().map(|(_, c)| c.norm()).sum();
        for (_, c) in &mut terms {
            *c /= norm;
        }
        Self { terms }
    }

    fn eval(&self, x: &[f64]) -> C64 {
        self.terms
            .iter()
            .map(|(k, c)| {
                let phase: f64 = k.iter().zip(x).map(|(&ki, xi)| ki as f64 * xi).sum();
                c * C64::from_polar(1.0, TAU * phase)
            })
            .sum()
    }
}

struct RandomData {
    n: usize,
    /// Upper-triangular entries of `P`, row by row.
    entries: Vec<ModeSum>,
    f: ModeSum,
}

impl RandomData {
    fn sample(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let axes = 2 * n;
        let entries = (0..n * (n + 1) / 2).map(|_| ModeSum::sample(&mut rng, axes)).collect();
        let f = ModeSum::sample(&mut rng, axes);
        Self { n, entries, f }
    }

    fn perturbation(&self, x: &[f64]) -> HermitianMatrix {
        let n = self.n;
        let mut m = vec![C64::new(0.0, 0.0); n * n];
        let mut e = self.entries.iter();
        for i in 0..n {
            for j in i..n {
                let v = e.next().expect("entry count").eval(x);
                if i == j {
                    m[i * n + i] = C64::new(v.re, 0.0);
                } else {
                    m[i * n + j] = v;
                    m[j * n + i] = v.conj();
                }
            }
        }
        HermitianMatrix::new(n, &m).expect("Hermitian by construction")
    }

    fn chi(&self, grid: &Grid, c0: f64, amplitude: f64) -> Result<HermitianField> {
        let base = HermitianMatrix::scaled_identity(self.n, c0);
        HermitianField::from_fn(grid, |x| {
            base.add(&self.perturbation(x).scale(amplitude)).expect("same dimension")
        })
    }

    fn f(&self, grid: &Grid, amplitude: f64) -> ScalarField {
        ScalarField::from_fn(grid, |x| amplitude * self.f.eval(x).re)
    }
}

#[derive(Clone, Copy)]
enum FChoice {
    Random,
    Stationary,
}

/// `F = log(tr_χ ω) − log n`, evaluated with the same kernel and operation
/// order as the flow so that `φ ≡ 0` is stationary to the last bit.
fn stationary_f(chi: &HermitianField, omega: &HermitianMatrix) -> Result<ScalarField> {
    let ln_n = (chi.dim() as f64).ln();
    let kernel = PointKernel::new(omega)?;
    let values = chi
        .raw()
        .chunks(chi.dim() * chi.dim())
        .map(|m| kernel.trace(m, 0.0).map(|t| t.tr.ln() - ln_n).ok_or(Error::NotPositiveDefinite))
        .collect::<Result<Vec<f64>>>()?;
    ScalarField::new(chi.grid(), values)
}

fn build(grid: &Grid, data: &RandomData, params: &GeometryParams, omega: &HermitianMatrix, choice: FChoice, scale: f64) -> Result<(HermitianField, ScalarField)> {
    let chi = data.chi(grid, params.c0, scale * params.chi_amplitude)?;
    let f = match choice {
        FChoice::Random => data.f(grid, scale * params.f_amplitude),
        FChoice::Stationary => stationary_f(&chi, omega)?,
    };
    Ok((chi, f))
}

fn generate(grid: &Grid, params: &GeometryParams, omega: HermitianMatrix, choice: FChoice) -> Result<BackgroundGeometry> {
    params.validate()?;
    let n = grid.n_complex();
    if omega.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: omega.dim(),
        });
    }
    let data = RandomData::sample(n, params.seed);
    let reference = if grid.points_per_axis() == REFERENCE_POINTS_PER_AXIS {
        grid.clone()
    } else {
        Grid::new(n, REFERENCE_POINTS_PER_AXIS)?
    };
    let mut scale = 1.0;
    let mut shrinks = 0;
    loop {
        let margin = match build(&reference, &data, params, &omega, choice, scale) {
            Ok((chi, f)) if (0..reference.point_count()).all(|p| chi.at(p).cholesky().is_some()) => {
                cone_margin(&chi, &omega, &f)?.margin
            }
            Ok(_) | Err(Error::NotPositiveDefinite) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        if margin >= TARGET_MARGIN {
            break;
        }
        if shrinks == MAX_SHRINKS {
            return Err(Error::InvalidInput(format!(
                "no amplitude reaches cone margin {TARGET_MARGIN} (last margin {margin:.3e}); increase c0"
            )));
        }
        scale *= SHRINK;
        shrinks += 1;
    }
    if shrinks > 0 {
        log::debug!("geometry amplitudes scaled by {scale} to reach the target cone margin");
    }
    let (chi, f) = build(grid, &data, params, &omega, choice, scale)?;
    BackgroundGeometry::new(omega, chi, f)
}

/// Seeded random geometry with `ω = I`.
pub fn generated_geometry(grid: &Grid, params: &GeometryParams) -> Result<BackgroundGeometry> {
    generated_geometry_with_omega(grid, params, HermitianMatrix::identity(grid.n_complex()))
}

pub fn generated_geometry_with_omega(grid: &Grid, params: &GeometryParams, omega: HermitianMatrix) -> Result<BackgroundGeometry> {
    generate(grid, params, omega, FChoice::Random)
}

/// Seeded `χ` with `F = log(tr_χ ω / n)`, for which `φ ≡ 0` is stationary.
pub fn stationary_geometry(grid: &Grid, params: &GeometryParams) -> Result<BackgroundGeometry> {
    stationary_geometry_with_omega(grid, params, HermitianMatrix::identity(grid.n_complex()))
}

pub fn stationary_geometry_with_omega(grid: &Grid, params: &GeometryParams, omega: HermitianMatrix) -> Result<BackgroundGeometry> {
    generate(grid, params, omega, FChoice::Stationary)
}

/// `ω = I`, `χ ≡ c·I`, `F ≡ f0`.
pub fn constant_geometry(grid: &Grid, c: f64, f0: f64) -> Result<BackgroundGeometry> {
    let n = grid.n_complex();
    let chi = HermitianField::constant(grid, &HermitianMatrix::scaled_identity(n, c))?;
    BackgroundGeometry::new(HermitianMatrix::identity(n), chi, ScalarField::constant(grid, f0))
}
