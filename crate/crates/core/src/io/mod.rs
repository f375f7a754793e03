//! Structures, extended XYZ, run configuration, and binary persistence.

pub mod config;
pub mod container;
pub mod elements;
pub mod structure;
pub mod xyz;

pub use config::{load_config, write_config, RunConfig, SchemaError};
pub use container::{
    csv_field, fingerprints_csv, read_fingerprints, read_models, write_fingerprints, write_models, ContainerError,
};
pub use structure::{Atom, Center, CenterSelector, Structure, StructureError};
pub use xyz::{parse_xyz, write_xyz, XyzError};
