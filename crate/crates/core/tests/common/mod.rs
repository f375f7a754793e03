#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use decaf::fingerprint::MinisumWeighting;
use decaf::quadrature::composite_grid;
use decaf::{
    AtomicNeighborhood, DensityModel, Featurizer, FrameSource, IntegralWeight, MinisumKernel, QuadratureGrid,
    SolverSettings, Vec3, WeightKind,
};
use nalgebra::{Matrix3, Quaternion, UnitQuaternion};
use rand::Rng;

pub const SPECIES: [&str; 3] = ["H", "C", "O"];

/// Uniform direction by rejection from the cube.
pub fn random_direction(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

/// Haar-uniform rotation from a uniform unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    loop {
        let q = Quaternion::new(
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
        );
        let n = q.norm();
        if n > 0.1 && n <= 1.0 {
            return *UnitQuaternion::from_quaternion(q).to_rotation_matrix().matrix();
        }
    }
}

/// `n` atoms of mixed species uniform in a cube of half-width `half`.
pub fn random_atoms(rng: &mut impl Rng, n: usize, half: f64) -> Vec<(&'static str, Vec3)> {
    (0..n)
        .map(|_| {
            let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            (SPECIES[rng.gen_range(0..SPECIES.len())], v * half)
        })
        .collect()
}

pub fn neighborhood(atoms: &[(&str, Vec3)], cutoff: f64) -> AtomicNeighborhood {
    AtomicNeighborhood::from_displacements(Vec3::zeros(), atoms.iter().map(|(s, x)| (*s, *x)), cutoff)
}

pub fn rotated(atoms: &[(&'static str, Vec3)], r: &Matrix3<f64>) -> Vec<(&'static str, Vec3)> {
    atoms.iter().map(|(s, x)| (*s, r * x)).collect()
}

/// The default grid: 3 layers of (14, 26, 38) nodes, R* = 5, BellPoly(6, 4) weight at R_c = 6.
pub fn default_grid() -> Arc<QuadratureGrid> {
    grid_with(WeightKind::BellPoly { a: 6.0, b: 4.0, cutoff: 6.0 })
}

pub fn grid_with(kind: WeightKind) -> Arc<QuadratureGrid> {
    let w = IntegralWeight::new(kind).unwrap();
    Arc::new(composite_grid(3, &[14, 26, 38], 5.0, &w, true).unwrap())
}

pub fn featurizer(kernel: MinisumKernel) -> Featurizer {
    let source = FrameSource::AutoMinisum {
        settings: SolverSettings::default(),
        kernel,
        weighting: MinisumWeighting::DensityScaling,
    };
    Featurizer::new(default_grid(), DensityModel::standard(), source)
}

/// `n` points on a ring of radius `radius` starting at angle `phase`, with
/// heights alternating `±lift`.
pub fn ring(n: usize, radius: f64, phase: f64, lift: f64) -> Vec<Vec3> {
    (0..n)
        .map(|k| {
            let t = phase + 2.0 * PI * k as f64 / n as f64;
            let z = if k % 2 == 0 { lift } else { -lift };
            Vec3::new(radius * t.cos(), radius * t.sin(), z)
        })
        .collect()
}

pub fn rotation_z(angle: f64) -> Matrix3<f64> {
    let (s, c) = angle.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

pub fn mirror_z() -> Matrix3<f64> {
    Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, -1.0))
}
