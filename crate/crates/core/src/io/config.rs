//! Versioned TOML run configuration.
//!
//! Every key is optional; missing keys take the defaults below. Unknown keys
//! are rejected. The density scaling and the integral weight inherit the
//! top-level `cutoff` unless the weight sets its own.
//!
//! ```toml
//! version = 1
//! seed = 0
//! cutoff = 6.0
//!
//! [grid]
//! radial_order = 3
//! angular = [14, 26, 38]
//! outer_radius = 5.0
//! volume_factor = true
//!
//! [scaling]
//! kind = "tent"            # or "bell-poly" with a, b
//! t = 3.0
//!
//! [weight]
//! kind = "bell-poly"       # "tent" (t), "laplacian" (length), "constant"
//! a = 6.0
//! b = 4.0
//!
//! [density]
//! exponent = 1.0
//! per_species_channels = false
//! [density.species.H]
//! amplitude = 0.75
//! sigma0 = 0.9
//! slope = 0.15
//!
//! [minisum]
//! kernel = "square-angle"  # or "exp-cosine"
//! weighting = "density-scaling"  # or "constant"
//! [minisum.solver]
//! tolerance = 1e-14
//! max_iterations = 64
//!
//! [gp]
//! starts = 8
//! output_scale_bounds = [1e-3, 1e3]
//! length_scale_bounds = [1e-2, 1e2]
//! jitter = 1e-8
//!
//! [active]
//! max_uncertainty = 0.1
//! max_samples = 100
//! acquisition = "max-variance"  # or "variance-plus-error"
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::fingerprint::{DensityModel, Featurizer, FrameSource, MinisumWeighting, SpeciesKernel};
use crate::frame::{MinisumKernel, SolverSettings};
use crate::quadrature::{composite_grid, QuadratureGrid};
use crate::regress::{ActiveLearning, HyperSearch};
use crate::weights::{DensityScaling, IntegralWeight, WeightKind};

pub const CONFIG_VERSION: u32 = 1;

/// A config problem located by its dotted key path.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

impl SchemaError {
    fn new(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self { path: path.into(), message: message.to_string() }
    }
}

impl fmt::Display for SchemaError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "config: {}", self.message)
        } else {
            write!(f, "config key `{}`: {}", self.path, self.message)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub radial_order: usize,
    /// Lebedev node count of each radial layer, innermost first.
    pub angular: Vec<usize>,
    pub outer_radius: f64,
    /// Include the `τ³` volume factor of the radial scaling in the weights.
    pub volume_factor: bool,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { radial_order: 3, angular: vec![14, 26, 38], outer_radius: 5.0, volume_factor: true }
    }
}

/// Density scaling shape; its cutoff is the run cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalingConfig {
    Tent { t: f64 },
    BellPoly { a: f64, b: f64 },
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig::Tent { t: 3.0 }
    }
}

/// Integral weight shape; `cutoff` defaults to the run cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightConfig {
    BellPoly {
        a: f64,
        b: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    Tent {
        t: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    Laplacian {
        length: f64,
    },
    Constant {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
}

impl Default for WeightConfig {
    fn default() -> Self {
        WeightConfig::BellPoly { a: 6.0, b: 4.0, cutoff: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    /// Power `p` of the `σ⁻ᵖ` kernel prefactor.
    pub exponent: f64,
    pub per_species_channels: bool,
    /// Replaces the default table entirely when given.
    pub species: BTreeMap<String, SpeciesKernel>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        let standard = DensityModel::standard();
        Self { exponent: standard.exponent, per_species_channels: false, species: standard.kernels }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MinisumConfig {
    pub kernel: MinisumKernel,
    pub weighting: MinisumWeighting,
    pub solver: SolverSettings,
}

impl Default for MinisumConfig {
    fn default() -> Self {
        Self {
            kernel: MinisumKernel::SquareAngle,
            weighting: MinisumWeighting::DensityScaling,
            solver: SolverSettings::default(),
        }
    }
}

/// Everything a run needs besides its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub version: u32,
    /// Seed for every randomized step.
    pub seed: u64,
    /// Neighborhood cutoff `R_c` in Å.
    pub cutoff: f64,
    pub grid: GridConfig,
    pub scaling: ScalingConfig,
    pub weight: WeightConfig,
    pub density: DensityConfig,
    pub minisum: MinisumConfig,
    pub gp: HyperSearch,
    pub active: ActiveLearning,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 0,
            cutoff: 6.0,
            grid: GridConfig::default(),
            scaling: ScalingConfig::default(),
            weight: WeightConfig::default(),
            density: DensityConfig::default(),
            minisum: MinisumConfig::default(),
            gp: HyperSearch::default(),
            active: ActiveLearning::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.version != CONFIG_VERSION {
            return Err(SchemaError::new(
                "version",
                format!("unsupported version {}, expected {CONFIG_VERSION}", self.version),
            ));
        }
        if !(self.cutoff > 0.0 && self.cutoff.is_finite()) {
            return Err(SchemaError::new("cutoff", "must be positive"));
        }
        self.scaling().validate().map_err(|e| SchemaError::new("scaling", e))?;
        self.grid()?;
        if self.density.species.is_empty() {
            return Err(SchemaError::new("density.species", "at least one species is required"));
        }
        for (name, k) in &self.density.species {
            k.validate().map_err(|e| SchemaError::new(format!("density.species.{name}"), e))?;
        }
        if !self.density.exponent.is_finite() {
            return Err(SchemaError::new("density.exponent", "must be finite"));
        }
        self.minisum.solver.validate().map_err(|e| SchemaError::new("minisum.solver", e))?;
        self.gp.validate().map_err(|e| SchemaError::new("gp", e))?;
        if !(self.active.max_uncertainty > 0.0 && self.active.max_uncertainty.is_finite()) {
            return Err(SchemaError::new("active.max_uncertainty", "must be positive"));
        }
        Ok(())
    }

    pub fn scaling(&self) -> DensityScaling {
        match self.scaling {
            ScalingConfig::Tent { t } => DensityScaling::Tent { t, cutoff: self.cutoff },
            ScalingConfig::BellPoly { a, b } => DensityScaling::BellPoly { a, b, cutoff: self.cutoff },
        }
    }

    pub fn weight_kind(&self) -> WeightKind {
        let rc = |c: Option<f64>| c.unwrap_or(self.cutoff);
        match self.weight {
            WeightConfig::BellPoly { a, b, cutoff } => WeightKind::BellPoly { a, b, cutoff: rc(cutoff) },
            WeightConfig::Tent { t, cutoff } => WeightKind::Tent { t, cutoff: rc(cutoff) },
            WeightConfig::Laplacian { length } => WeightKind::Laplacian { length },
            WeightConfig::Constant { cutoff } => WeightKind::Constant { cutoff: rc(cutoff) },
        }
    }

    pub fn integral_weight(&self) -> Result<IntegralWeight, SchemaError> {
        IntegralWeight::new(self.weight_kind()).map_err(|e| SchemaError::new("weight", e))
    }

    pub fn grid(&self) -> Result<QuadratureGrid, SchemaError> {
        let w = self.integral_weight()?;
        let g = &self.grid;
        composite_grid(g.radial_order, &g.angular, g.outer_radius, &w, g.volume_factor)
            .map_err(|e| SchemaError::new("grid", e))
    }

    pub fn density_model(&self) -> DensityModel {
        DensityModel { kernels: self.density.species.clone(), scaling: self.scaling(), exponent: self.density.exponent }
    }

    pub fn frame_source(&self) -> FrameSource {
        FrameSource::AutoMinisum {
            settings: self.minisum.solver,
            kernel: self.minisum.kernel,
            weighting: self.minisum.weighting,
        }
    }

    pub fn featurizer(&self) -> Result<Featurizer, SchemaError> {
        let mut f = Featurizer::new(Arc::new(self.grid()?), self.density_model(), self.frame_source());
        f.per_species_channels = self.density.per_species_channels;
        Ok(f)
    }
}

/// Dotted path of the key nearest a byte offset: the enclosing `[table]`
/// header plus the key on that line.
fn key_path(text: &str, offset: usize) -> String {
    let offset = offset.min(text.len());
    let line_start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    let line_end = text[offset..].find('\n').map_or(text.len(), |i| offset + i);
    let line = &text[line_start..line_end];
    let table = text[..line_start]
        .lines()
        .rev()
        .map(str::trim)
        .find(|l| l.starts_with('['))
        .map(|l| l.trim_matches(|c| c == '[' || c == ']').trim().to_string());
    let key = line
        .split('=')
        .next()
        .map(|k| k.trim().trim_matches('"').to_string())
        .filter(|k| !k.is_empty() && !k.starts_with('['));
    let header = line.trim().strip_prefix('[').map(|l| l.trim_matches(']').trim().to_string());
    match (header, table, key) {
        (Some(h), _, _) => h,
        (None, Some(t), Some(k)) => format!("{t}.{k}"),
        (None, None, Some(k)) => k,
        (None, Some(t), None) => t,
        (None, None, None) => String::new(),
    }
}

/// Parses, applies defaults, and validates.
pub fn load_config(text: &str) -> Result<RunConfig, SchemaError> {
    let config: RunConfig = toml::from_str(text).map_err(|e| {
        let path = e.span().map(|s| key_path(text, s.start)).unwrap_or_default();
        SchemaError::new(path, e.message())
    })?;
    config.validate()?;
    Ok(config)
}

/// Canonical form with every default spelled out.
pub fn write_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("run config serializes to TOML")
}
