//! Density-field fingerprints: atoms of a neighborhood, projected into a
//! canonical frame and smeared with species Gaussians, sampled on a
//! quadrature grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{canonical_frame, CanonicalFrame, FrameError, MinisumKernel, MinisumProblem, SolverSettings, Vec3};
use crate::quadrature::QuadratureGrid;
use crate::weights::DensityScaling;

/// Relative distance below which fingerprints from different frames are merged.
pub const DEDUP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FingerprintError {
    #[error("no kernel for species {0:?}")]
    UnknownSpecies(String),
    #[error("fingerprints sampled on different grids ({left:016x} vs {right:016x})")]
    GridMismatch { left: u64, right: u64 },
    #[error("fingerprint has zero norm")]
    ZeroFingerprint,
    #[error("invalid species kernel: {0}")]
    InvalidKernel(String),
    #[error("expected {expected} values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// One neighbor atom, positioned relative to the fingerprint center.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub species: String,
    pub displacement: Vec3,
}

/// Atoms within the cutoff of a center point.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomicNeighborhood {
    center: Vec3,
    neighbors: Vec<Neighbor>,
    cutoff: f64,
}

impl AtomicNeighborhood {
    /// Keeps the atoms whose displacement from `center` is strictly shorter than `cutoff`.
    pub fn from_positions<'a, I>(center: Vec3, atoms: I, cutoff: f64) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec3)>,
    {
        Self::from_displacements(center, atoms.into_iter().map(|(s, p)| (s, p - center)), cutoff)
    }

    /// Same as [`Self::from_positions`] with center-relative input.
    pub fn from_displacements<'a, I>(center: Vec3, displacements: I, cutoff: f64) -> Self
    where
        I: IntoIterator<Item = (&'a str, Vec3)>,
    {
        let neighbors = displacements
            .into_iter()
            .filter(|(_, x)| x.norm() < cutoff)
            .map(|(s, x)| Neighbor { species: s.to_string(), displacement: x })
            .collect();
        Self { center, neighbors, cutoff }
    }

    pub fn center(&self) -> &Vec3 {
        &self.center
    }

    pub fn neighbors(&self) -> &[Neighbor] {
        &self.neighbors
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn displacements(&self) -> Vec<Vec3> {
        self.neighbors.iter().map(|n| n.displacement).collect()
    }
}

/// Non-stationary Gaussian `c σ(r)^-p exp(-½ d² / σ(r)²)` with `σ(r) = σ₀ + k r`,
/// where `r` is the atom's distance from the center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeciesKernel {
    pub amplitude: f64,
    pub sigma0: f64,
    pub slope: f64,
}

impl SpeciesKernel {
    pub fn new(amplitude: f64, sigma0: f64, slope: f64) -> Result<Self, FingerprintError> {
        let k = Self { amplitude, sigma0, slope };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), FingerprintError> {
        let ok = self.amplitude > 0.0
            && self.amplitude.is_finite()
            && self.sigma0 > 0.0
            && self.sigma0.is_finite()
            && self.slope >= 0.0
            && self.slope.is_finite();
        if ok {
            Ok(())
        } else {
            Err(FingerprintError::InvalidKernel(format!(
                "amplitude {}, sigma0 {}, slope {}",
                self.amplitude, self.sigma0, self.slope
            )))
        }
    }

    pub fn width(&self, r: f64) -> f64 {
        self.sigma0 + self.slope * r
    }

    /// Kernel value for an atom at distance `r` from the center and squared
    /// separation `d2` from the sample point.
    pub fn value(&self, r: f64, d2: f64, exponent: f64) -> f64 {
        let s = self.width(r);
        self.amplitude * s.powf(-exponent) * (-0.5 * d2 / (s * s)).exp()
    }
}

/// Species kernels, cutoff scaling, and kernel normalization exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityModel {
    pub kernels: BTreeMap<String, SpeciesKernel>,
    pub scaling: DensityScaling,
    pub exponent: f64,
}

impl DensityModel {
    pub fn new(kernels: BTreeMap<String, SpeciesKernel>, scaling: DensityScaling) -> Self {
        Self { kernels, scaling, exponent: 1.0 }
    }

    /// Kernels for H, C, N, and O with a cubic tent cutoff at 6 Å.
    pub fn standard() -> Self {
        let kernels = [
            ("H", SpeciesKernel { amplitude: 0.75, sigma0: 0.9, slope: 0.15 }),
            ("C", SpeciesKernel { amplitude: 1.0, sigma0: 1.2, slope: 0.2 }),
            ("N", SpeciesKernel { amplitude: 1.0, sigma0: 1.35, slope: 0.225 }),
            ("O", SpeciesKernel { amplitude: 1.0, sigma0: 1.5, slope: 0.25 }),
        ]
        .into_iter()
        .map(|(s, k)| (s.to_string(), k))
        .collect();
        Self::new(kernels, DensityScaling::Tent { t: 3.0, cutoff: 6.0 })
    }

    pub fn kernel(&self, species: &str) -> Result<&SpeciesKernel, FingerprintError> {
        self.kernels.get(species).ok_or_else(|| FingerprintError::UnknownSpecies(species.to_string()))
    }

    pub fn species(&self) -> impl Iterator<Item = &str> {
        self.kernels.keys().map(String::as_str)
    }

    fn sources<'n>(
        &self,
        neigh: &'n AtomicNeighborhood,
        frame: &CanonicalFrame,
    ) -> Result<Vec<Source<'n>>, FingerprintError> {
        let mut sources = Vec::with_capacity(neigh.len());
        for n in neigh.neighbors() {
            let kernel = self.kernel(&n.species)?;
            let r = n.displacement.norm();
            let scale = self.scaling.value(r);
            let sigma = kernel.width(r);
            sources.push(Source {
                position: frame.project(&n.displacement),
                amplitude: scale * kernel.amplitude * sigma.powf(-self.exponent),
                inv_two_var: 0.5 / (sigma * sigma),
                species: &n.species,
            });
        }
        Ok(sources)
    }
}

struct Source<'a> {
    position: Vec3,
    amplitude: f64,
    inv_two_var: f64,
    species: &'a str,
}

fn superpose<'a>(sources: impl Iterator<Item = &'a Source<'a>>, r: &Vec3) -> f64 {
    sources.map(|s| s.amplitude * (-(s.position - r).norm_squared() * s.inv_two_var).exp()).sum()
}

/// Density at `r` (frame coordinates) of the neighborhood projected into `frame`.
pub fn evaluate_density(
    neigh: &AtomicNeighborhood,
    frame: &CanonicalFrame,
    model: &DensityModel,
    r: &Vec3,
) -> Result<f64, FingerprintError> {
    let sources = model.sources(neigh, frame)?;
    Ok(superpose(sources.iter(), r))
}

/// Radial weights `g(r)` of the minisum problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinisumWeighting {
    /// The density cutoff scaling, so atoms fade in and out smoothly.
    #[default]
    DensityScaling,
    /// Every atom counts equally.
    Constant,
}

/// Where the canonical frame of a neighborhood comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FrameSource {
    AutoMinisum { settings: SolverSettings, kernel: MinisumKernel, weighting: MinisumWeighting },
    Fixed(CanonicalFrame),
}

impl Default for FrameSource {
    fn default() -> Self {
        FrameSource::AutoMinisum {
            settings: SolverSettings::default(),
            kernel: MinisumKernel::SquareAngle,
            weighting: MinisumWeighting::default(),
        }
    }
}

/// Canonical frames of `neigh` according to `source`.
pub fn neighborhood_frames(
    neigh: &AtomicNeighborhood,
    scaling: &DensityScaling,
    source: &FrameSource,
) -> Result<Vec<CanonicalFrame>, FingerprintError> {
    match source {
        FrameSource::Fixed(frame) => Ok(vec![*frame]),
        FrameSource::AutoMinisum { settings, kernel, weighting } => {
            let displacements = neigh.displacements();
            if !neigh.is_empty() && displacements.iter().all(|x| x.norm() == 0.0) {
                // only atoms sitting on the center: the density is spherically symmetric
                return Ok(vec![CanonicalFrame::identity()]);
            }
            let problem = match weighting {
                MinisumWeighting::DensityScaling => {
                    MinisumProblem::from_displacements(&displacements, |r| scaling.value(r), *kernel)
                }
                MinisumWeighting::Constant => MinisumProblem::from_displacements(&displacements, |_| 1.0, *kernel),
            }?;
            Ok(canonical_frame(&problem, settings)?)
        }
    }
}

/// Density samples on a quadrature grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Fingerprint {
    values: Vec<f64>,
    channels: usize,
    grid: Arc<QuadratureGrid>,
    pub frame: CanonicalFrame,
    pub center: Vec3,
    pub provenance: Option<String>,
}

impl Fingerprint {
    /// Wraps raw samples; `values` holds `channels` consecutive blocks of grid length.
    pub fn from_values(
        values: Vec<f64>,
        channels: usize,
        grid: Arc<QuadratureGrid>,
        frame: CanonicalFrame,
        center: Vec3,
    ) -> Result<Self, FingerprintError> {
        let expected = channels * grid.len();
        if channels == 0 || values.len() != expected {
            return Err(FingerprintError::LengthMismatch { expected, got: values.len() });
        }
        Ok(Self { values, channels, grid, frame, center, provenance: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> &Arc<QuadratureGrid> {
        &self.grid
    }

    pub fn grid_hash(&self) -> u64 {
        self.grid.hash()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_provenance(mut self, tag: impl Into<String>) -> Self {
        self.provenance = Some(tag.into());
        self
    }

    fn weights(&self) -> impl Iterator<Item = &f64> {
        self.grid.weights().iter().cycle().take(self.values.len())
    }

    /// Weighted L2 norm.
    pub fn norm(&self) -> f64 {
        self.values.iter().zip(self.weights()).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }

    fn check(&self, other: &Fingerprint) -> Result<(), FingerprintError> {
        if self.grid_hash() != other.grid_hash() || self.channels != other.channels {
            return Err(FingerprintError::GridMismatch { left: self.grid_hash(), right: other.grid_hash() });
        }
        Ok(())
    }

    /// Weighted inner product over the grid.
    pub fn inner(&self, other: &Fingerprint) -> Result<f64, FingerprintError> {
        self.check(other)?;
        Ok(self.values.iter().zip(&other.values).zip(self.weights()).map(|((a, b), w)| w * a * b).sum())
    }
}

/// `[Σ w_k (ρ₁(r_k) - ρ₂(r_k))²]^½`.
pub fn fingerprint_distance(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    a.check(b)?;
    Ok(a.values.iter().zip(&b.values).zip(a.weights()).map(|((x, y), w)| w * (x - y) * (x - y)).sum::<f64>().sqrt())
}

/// Weighted inner product normalized by both weighted norms.
pub fn fingerprint_similarity(a: &Fingerprint, b: &Fingerprint) -> Result<f64, FingerprintError> {
    let ab = a.inner(b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(FingerprintError::ZeroFingerprint);
    }
    Ok((ab / (na * nb)).clamp(-1.0, 1.0))
}

/// Components of a world vector in the frame: `Rᵀ y`.
pub fn project_vector(frame: &CanonicalFrame, y: &Vec3) -> Vec3 {
    frame.project(y)
}

/// World vector from frame components: `R ỹ`.
pub fn unproject_vector(frame: &CanonicalFrame, y: &Vec3) -> Vec3 {
    frame.unproject(y)
}

/// Grid, density model, and frame policy bundled for repeated extraction.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub grid: Arc<QuadratureGrid>,
    pub model: DensityModel,
    pub frame_source: FrameSource,
    /// One density block per species instead of a single shared channel.
    pub per_species_channels: bool,
}

impl Featurizer {
    pub fn new(grid: Arc<QuadratureGrid>, model: DensityModel, frame_source: FrameSource) -> Self {
        Self { grid, model, frame_source, per_species_channels: false }
    }

    pub fn channels(&self) -> usize {
        if self.per_species_channels {
            self.model.kernels.len()
        } else {
            1
        }
    }

    pub fn frames(&self, neigh: &AtomicNeighborhood) -> Result<Vec<CanonicalFrame>, FingerprintError> {
        neighborhood_frames(neigh, &self.model.scaling, &self.frame_source)
    }

    /// Samples the density in one given frame.
    pub fn sample(&self, neigh: &AtomicNeighborhood, frame: &CanonicalFrame) -> Result<Fingerprint, FingerprintError> {
        let sources = self.model.sources(neigh, frame)?;
        let nodes = self.grid.nodes();
        let values = if self.per_species_channels {
            self.model
                .species()
                .flat_map(|sp| {
                    let sources = &sources;
                    nodes.iter().map(move |r| superpose(sources.iter().filter(|s| s.species == sp), r))
                })
                .collect()
        } else {
            nodes.iter().map(|r| superpose(sources.iter(), r)).collect()
        };
        Fingerprint::from_values(values, self.channels(), self.grid.clone(), *frame, *neigh.center())
    }

    /// One fingerprint per distinct canonical frame.
    pub fn extract(&self, neigh: &AtomicNeighborhood) -> Result<Vec<Fingerprint>, FingerprintError> {
        if neigh.is_empty() {
            return Err(FrameError::EmptyNeighborhood.into());
        }
        let mut out: Vec<Fingerprint> = Vec::new();
        for frame in self.frames(neigh)? {
            let fp = self.sample(neigh, &frame)?;
            let scale = fp.norm();
            let duplicate =
                out.iter().any(|kept| fingerprint_distance(kept, &fp).is_ok_and(|d| d <= DEDUP_TOLERANCE * scale));
            if !duplicate {
                out.push(fp);
            }
        }
        Ok(out)
    }
}

/// Fingerprints of `neigh` on `grid`, one per distinct canonical frame.
pub fn extract_fingerprint(
    neigh: &AtomicNeighborhood,
    model: &DensityModel,
    grid: Arc<QuadratureGrid>,
    frame_source: &FrameSource,
) -> Result<Vec<Fingerprint>, FingerprintError> {
    Featurizer::new(grid, model.clone(), frame_source.clone()).extract(neigh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::composite_grid;
    use crate::weights::{IntegralWeight, WeightKind};
    use approx::assert_relative_eq;

    fn grid() -> Arc<QuadratureGrid> {
        let w = IntegralWeight::new(WeightKind::BellPoly { a: 6.0, b: 4.0, cutoff: 6.0 }).unwrap();
        Arc::new(composite_grid(3, &[14, 26, 38], 5.0, &w, true).unwrap())
    }

    #[test]
    fn neighborhood_excludes_boundary_atoms() {
        let n = AtomicNeighborhood::from_positions(
            Vec3::new(1.0, 0.0, 0.0),
            [("H", Vec3::new(7.0, 0.0, 0.0)), ("H", Vec3::new(6.9, 0.0, 0.0))],
            6.0,
        );
        assert_eq!(n.len(), 1);
        assert_relative_eq!(n.neighbors()[0].displacement.x, 5.9);
    }

    #[test]
    fn single_atom_density_at_origin() {
        let model = DensityModel::standard();
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("O", Vec3::zeros())], 6.0);
        let frame = CanonicalFrame::identity();
        let d = 0.8;
        let rho = evaluate_density(&n, &frame, &model, &Vec3::new(0.0, d, 0.0)).unwrap();
        assert_relative_eq!(rho, (-0.5 * d * d / 2.25f64).exp() / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn empty_neighborhood_has_zero_density() {
        let model = DensityModel::standard();
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [], 6.0);
        let rho = evaluate_density(&n, &CanonicalFrame::identity(), &model, &Vec3::x()).unwrap();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn unknown_species_is_reported() {
        let model = DensityModel::standard();
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("Xe", Vec3::x())], 6.0);
        assert_eq!(
            evaluate_density(&n, &CanonicalFrame::identity(), &model, &Vec3::x()),
            Err(FingerprintError::UnknownSpecies("Xe".into()))
        );
    }

    #[test]
    fn single_atom_fingerprint_is_a_gaussian_of_node_distance() {
        let model = DensityModel::standard();
        let x = Vec3::new(0.0, 1.3, 0.0);
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("H", x)], 6.0);
        let fps = extract_fingerprint(&n, &model, grid(), &FrameSource::default()).unwrap();
        assert_eq!(fps.len(), 1);
        let fp = &fps[0];
        let atom = Vec3::new(1.3, 0.0, 0.0);
        let sigma = 0.9 + 0.15 * 1.3;
        let scale = (1.0 - 1.3 / 6.0f64).powi(3);
        for (v, r) in fp.values().iter().zip(fp.grid().nodes()) {
            let expected = scale * 0.75 / sigma * (-0.5 * (r - atom).norm_squared() / (sigma * sigma)).exp();
            assert_relative_eq!(*v, expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn distance_and_similarity_basics() {
        let model = DensityModel::standard();
        let f = Featurizer::new(grid(), model, FrameSource::Fixed(CanonicalFrame::identity()));
        let a = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("C", Vec3::new(1.0, 0.2, 0.0))], 6.0);
        let b = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("C", Vec3::new(1.5, 0.0, 0.4))], 6.0);
        let fa = &f.extract(&a).unwrap()[0];
        let fb = &f.extract(&b).unwrap()[0];
        assert_eq!(fingerprint_distance(fa, fa).unwrap(), 0.0);
        assert_eq!(fingerprint_distance(fa, fb).unwrap(), fingerprint_distance(fb, fa).unwrap());
        assert_relative_eq!(fingerprint_similarity(fa, fa).unwrap(), 1.0, epsilon = 1e-14);
        let s = fingerprint_similarity(fa, fb).unwrap();
        assert!(s > 0.0 && s < 1.0);
        let scaled = Fingerprint::from_values(
            fb.values().iter().map(|v| 3.5 * v).collect(),
            1,
            fb.grid().clone(),
            fb.frame,
            fb.center,
        )
        .unwrap();
        assert_relative_eq!(fingerprint_similarity(fa, &scaled).unwrap(), s, epsilon = 1e-14);
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let w = IntegralWeight::new(WeightKind::Laplacian { length: 1.0 }).unwrap();
        let other = Arc::new(composite_grid(2, &[6, 14], 4.0, &w, true).unwrap());
        let model = DensityModel::standard();
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [("H", Vec3::x())], 6.0);
        let a = &extract_fingerprint(&n, &model, grid(), &FrameSource::default()).unwrap()[0];
        let b = &extract_fingerprint(&n, &model, other, &FrameSource::default()).unwrap()[0];
        assert!(matches!(fingerprint_distance(a, b), Err(FingerprintError::GridMismatch { .. })));
    }

    #[test]
    fn per_species_channels_split_the_density() {
        let model = DensityModel::standard();
        let mut f = Featurizer::new(grid(), model, FrameSource::Fixed(CanonicalFrame::identity()));
        let n = AtomicNeighborhood::from_displacements(
            Vec3::zeros(),
            [("H", Vec3::x()), ("O", Vec3::new(0.0, 1.0, 1.0))],
            6.0,
        );
        let single = f.extract(&n).unwrap().remove(0);
        f.per_species_channels = true;
        let split = f.extract(&n).unwrap().remove(0);
        assert_eq!(split.len(), 4 * single.len());
        let m = single.len();
        for k in 0..m {
            let sum: f64 = (0..4).map(|c| split.values()[c * m + k]).sum();
            assert_relative_eq!(sum, single.values()[k], max_relative = 1e-14);
        }
    }

    #[test]
    fn empty_neighborhood_cannot_be_fingerprinted() {
        let model = DensityModel::standard();
        let n = AtomicNeighborhood::from_displacements(Vec3::zeros(), [], 6.0);
        assert_eq!(
            extract_fingerprint(&n, &model, grid(), &FrameSource::default()),
            Err(FingerprintError::Frame(FrameError::EmptyNeighborhood))
        );
    }
}
