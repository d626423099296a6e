//! Run configuration. The file is JSON; `schema` must equal [`SCHEMA`] and
//! unknown keys are rejected at every level.

use std::fs;
use std::path::{Path, PathBuf};

use donaldson_core::flow::{constant_geometry, generated_geometry, stationary_geometry};
use donaldson_core::heat::{HeatConfig, InitialProfile};
use donaldson_core::torus::Grid;
use donaldson_core::{BackgroundGeometry, FlowConfig, GeometryParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA: &str = "donaldson-run/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Flow,
    Heat,
    Oracle,
    All,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    /// Mode used when the subcommand does not fix one; informational otherwise.
    #[serde(default)]
    pub mode: Option<Mode>,
    #[serde(default)]
    pub grid: Option<GridSection>,
    #[serde(default)]
    pub geometry: Option<GeometrySection>,
    #[serde(default)]
    pub flow: Option<FlowConfig>,
    #[serde(default)]
    pub heat: Option<HeatSection>,
    #[serde(default)]
    pub oracle: Option<OracleSection>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    #[serde(rename = "N")]
    pub points_per_axis: usize,
}

impl GridSection {
    pub fn build(&self) -> Result<Grid, CliError> {
        Grid::new(self.n, self.points_per_axis).map_err(|e| CliError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometrySection {
    /// Seeded `χ` and `F`.
    Generated {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_c0")]
        c0: f64,
        #[serde(default = "default_chi_amplitude")]
        chi_amplitude: f64,
        #[serde(rename = "F_amplitude", default = "default_f_amplitude")]
        f_amplitude: f64,
    },
    /// Seeded `χ` with `F` chosen so that `φ ≡ 0` is stationary.
    Stationary {
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_c0")]
        c0: f64,
        #[serde(default = "default_chi_amplitude")]
        chi_amplitude: f64,
    },
    /// `ω = I`, `χ ≡ c·I`, `F ≡ f0`.
    Constant { c: f64, f0: f64 },
    /// Another JSON file holding a geometry section, relative to the config.
    File { path: PathBuf },
}

fn default_c0() -> f64 {
    GeometryParams::default().c0
}

fn default_chi_amplitude() -> f64 {
    GeometryParams::default().chi_amplitude
}

fn default_f_amplitude() -> f64 {
    GeometryParams::default().f_amplitude
}

impl GeometrySection {
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Generated { .. } => "generated",
            Self::Stationary { .. } => "stationary",
            Self::Constant { .. } => "constant",
            Self::File { .. } => "file",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match *self {
            Self::Generated { seed, .. } | Self::Stationary { seed, .. } => Some(seed),
            _ => None,
        }
    }

    fn set_seed(&mut self, s: u64) {
        if let Self::Generated { seed, .. } | Self::Stationary { seed, .. } = self {
            *seed = s;
        }
    }

    /// Replaces a `file` section by the section it points to.
    fn resolve(&mut self, base: &Path) -> Result<(), CliError> {
        if let Self::File { path } = self {
            let path = base.join(path);
            let text = fs::read_to_string(&path)
                .map_err(|e| CliError::Config(format!("geometry file {}: {e}", path.display())))?;
            let inner: GeometrySection = serde_json::from_str(&text)
                .map_err(|e| CliError::Config(format!("geometry file {}: {e}", path.display())))?;
            if matches!(inner, Self::File { .. }) {
                return Err(CliError::Config(format!(
                    "geometry file {} points to another file",
                    path.display()
                )));
            }
            *self = inner;
        }
        Ok(())
    }

    /// Builds the geometry; cone violations and invalid parameters are
    /// configuration errors.
    pub fn build(&self, grid: &Grid) -> Result<BackgroundGeometry, CliError> {
        let result = match *self {
            Self::Generated {
                seed,
                c0,
                chi_amplitude,
                f_amplitude,
            } => generated_geometry(
                grid,
                &GeometryParams {
                    seed,
                    c0,
                    chi_amplitude,
                    f_amplitude,
                },
            ),
            Self::Stationary {
                seed,
                c0,
                chi_amplitude,
            } => stationary_geometry(
                grid,
                &GeometryParams {
                    seed,
                    c0,
                    chi_amplitude,
                    ..GeometryParams::default()
                },
            ),
            Self::Constant { c, f0 } => constant_geometry(grid, c, f0),
            Self::File { .. } => return Err(CliError::Config("unresolved geometry file".into())),
        };
        result.map_err(|e| CliError::Config(e.to_string()))
    }
}

/// Where the heat equation takes its coefficients from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientMode {
    /// `∂u/∂t = Δ_ω u`.
    Identity,
    /// Frozen at the final flow snapshot.
    FrozenFinal,
    /// Linear in time between the stored flow snapshots.
    Interpolated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatSection {
    #[serde(default)]
    pub u0: InitialProfile,
    pub s1: f64,
    pub s2: f64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub coefficients: CoefficientMode,
    #[serde(default = "default_t_end")]
    pub t_end: f64,
    #[serde(default = "default_sample_every")]
    pub sample_every: f64,
    #[serde(default = "default_dt_max")]
    pub dt_max: f64,
    #[serde(default = "default_dt_safety")]
    pub dt_safety: f64,
}

fn default_alpha() -> f64 {
    HeatConfig::default().alpha
}

fn default_t_end() -> f64 {
    HeatConfig::default().t_end
}

fn default_sample_every() -> f64 {
    HeatConfig::default().sample_every
}

fn default_dt_max() -> f64 {
    HeatConfig::default().dt_max
}

fn default_dt_safety() -> f64 {
    HeatConfig::default().dt_safety
}

impl HeatSection {
    pub fn heat_config(&self) -> HeatConfig {
        HeatConfig {
            t_end: self.t_end,
            dt_max: self.dt_max,
            dt_safety: self.dt_safety,
            sample_every: self.sample_every,
            alpha: self.alpha,
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self.u0 {
            InitialProfile::Random { seed, .. } => Some(seed),
            _ => None,
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        self.heat_config().validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(0.0 < self.s1 && self.s1 < self.s2 && self.s2 <= self.t_end) {
            return Err(CliError::Config(format!(
                "heat: need 0 < s1 < s2 <= t_end, got s1 = {}, s2 = {}, t_end = {}",
                self.s1, self.s2, self.t_end
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSection {
    #[serde(default = "default_oracle_seed")]
    pub seed: u64,
    #[serde(default = "default_cases")]
    pub eigenvalue_cases: usize,
    #[serde(default = "default_cases")]
    pub identity_cases: usize,
    #[serde(default = "default_identity_dims")]
    pub identity_dims: Vec<usize>,
    #[serde(default = "default_hessian_sizes")]
    pub hessian_sizes: Vec<usize>,
}

fn default_oracle_seed() -> u64 {
    2024
}

fn default_cases() -> usize {
    1000
}

fn default_identity_dims() -> Vec<usize> {
    vec![2, 3, 4]
}

fn default_hessian_sizes() -> Vec<usize> {
    vec![8, 16, 32]
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            seed: default_oracle_seed(),
            eigenvalue_cases: default_cases(),
            identity_cases: default_cases(),
            identity_dims: default_identity_dims(),
            hessian_sizes: default_hessian_sizes(),
        }
    }
}

impl OracleSection {
    fn validate(&self) -> Result<(), CliError> {
        if self.eigenvalue_cases == 0 || self.identity_cases == 0 {
            return Err(CliError::Config("oracle: case counts must be positive".into()));
        }
        if self.identity_dims.is_empty() || self.identity_dims.iter().any(|&d| d < 2) {
            return Err(CliError::Config("oracle: identity_dims must be a non-empty list of values >= 2".into()));
        }
        if self.hessian_sizes.len() < 2 {
            return Err(CliError::Config("oracle: hessian_sizes needs at least two grid sizes".into()));
        }
        Ok(())
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if cfg.schema != SCHEMA {
            return Err(CliError::Config(format!(
                "unsupported schema {:?}, expected {SCHEMA:?}",
                cfg.schema
            )));
        }
        if let Some(g) = cfg.geometry.as_mut() {
            g.resolve(path.parent().unwrap_or(Path::new(".")))?;
        }
        Ok(cfg)
    }

    /// Applies `--seed` to every seeded section.
    pub fn override_seed(&mut self, seed: u64) {
        if let Some(g) = self.geometry.as_mut() {
            g.set_seed(seed);
        }
        if let Some(InitialProfile::Random { seed: s, .. }) = self.heat.as_mut().map(|h| &mut h.u0) {
            *s = seed;
        }
        if let Some(o) = self.oracle.as_mut() {
            o.seed = seed;
        }
    }

    /// Checks that the sections `mode` needs are present and valid.
    pub fn validate(&self, mode: Mode) -> Result<(), CliError> {
        let missing = |name: &str| CliError::Config(format!("mode {mode:?} needs a `{name}` section").to_lowercase());
        let needs_flow = matches!(mode, Mode::Flow | Mode::All);
        let needs_heat = matches!(mode, Mode::Heat | Mode::All);
        if needs_flow || needs_heat {
            let grid = self.grid.ok_or_else(|| missing("grid"))?;
            if grid.n < 1 {
                return Err(CliError::Config("grid.n must be >= 1".into()));
            }
            grid.build()?;
            self.geometry.as_ref().ok_or_else(|| missing("geometry"))?;
        }
        if needs_flow {
            let flow = self.flow.as_ref().ok_or_else(|| missing("flow"))?;
            flow.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if needs_heat {
            let heat = self.heat.as_ref().ok_or_else(|| missing("heat"))?;
            heat.validate()?;
        }
        if matches!(mode, Mode::Oracle | Mode::All) {
            self.oracle.as_ref().ok_or_else(|| missing("oracle"))?.validate()?;
        }
        Ok(())
    }
}
