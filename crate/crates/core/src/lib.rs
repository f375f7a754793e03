//! Rotation-invariant density fingerprints for atomistic neighborhoods.
//!
//! Each neighborhood is aligned to a canonical frame found by kernel minisum
//! optimization on the unit sphere, smeared into a density field, and sampled
//! on a composite radial × angular quadrature grid. Fingerprints feed a
//! Gaussian-process regressor with active learning.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod fingerprint;
pub mod frame;
pub mod graphspec;
pub mod io;
pub mod oracle;
pub mod quadrature;
pub mod regress;
pub mod weights;
pub mod workflow;

pub use fingerprint::{
    fingerprint_distance, fingerprint_similarity, AtomicNeighborhood, DensityModel, Featurizer, Fingerprint,
    FingerprintError, FrameSource, SpeciesKernel,
};
pub use frame::{CanonicalFrame, MinisumKernel, MinisumProblem, SolverSettings, UnitVector3, Vec3};
pub use io::{CenterSelector, RunConfig, Structure};
pub use oracle::{Labels, Oracle, OracleSpec};
pub use quadrature::{AngularRule, QuadratureGrid, RadialRule};
pub use regress::{GPHyperparameters, GPModel, HyperSearch, VectorModel};
pub use weights::{DensityScaling, IntegralWeight, WeightKind};
