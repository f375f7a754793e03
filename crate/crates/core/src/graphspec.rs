//! Experimental: spectra of the density graph whose vertices are quadrature
//! nodes and whose edges are bridged by atoms.
//!
//! The incidence matrix `E[i][j] = k(x_i, z_j)` links atoms to nodes, the
//! adjacency is `A = EᵀE`, and the spectrum of the symmetric normalized
//! Laplacian `I - D^-½ A D^-½` is invariant under atom permutation.

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::frame::Vec3;

/// Nodes whose degree falls below this fraction of the largest degree are dropped.
pub const DEGREE_FLOOR: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("no node is connected to any atom")]
    AllDisconnected,
    #[error("kernel produced a negative or non-finite entry at atom {atom}, node {node}")]
    InvalidEntry { atom: usize, node: usize },
}

/// Isotropic Gaussian `c σ⁻¹ exp(-½ d² / σ²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianKernel {
    pub amplitude: f64,
    pub sigma: f64,
}

impl GaussianKernel {
    pub fn value(&self, a: &Vec3, b: &Vec3) -> f64 {
        let d2 = (a - b).norm_squared();
        self.amplitude / self.sigma * (-0.5 * d2 / (self.sigma * self.sigma)).exp()
    }
}

impl Default for GaussianKernel {
    fn default() -> Self {
        Self { amplitude: 1.0, sigma: 1.0 }
    }
}

/// Atoms × nodes kernel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct IncidenceMatrix {
    entries: DMatrix<f64>,
}

impl IncidenceMatrix {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn atoms(&self) -> usize {
        self.entries.nrows()
    }

    pub fn nodes(&self) -> usize {
        self.entries.ncols()
    }

    /// `A = EᵀE`.
    pub fn adjacency(&self) -> DMatrix<f64> {
        self.entries.transpose() * &self.entries
    }
}

/// Evaluates `kernel(x_i, z_j)` for every atom and node.
pub fn incidence(
    atoms: &[Vec3],
    nodes: &[Vec3],
    kernel: impl Fn(&Vec3, &Vec3) -> f64,
) -> Result<IncidenceMatrix, GraphError> {
    let mut entries = DMatrix::zeros(atoms.len(), nodes.len());
    for (i, x) in atoms.iter().enumerate() {
        for (j, z) in nodes.iter().enumerate() {
            let v = kernel(x, z);
            if !(v >= 0.0 && v.is_finite()) {
                return Err(GraphError::InvalidEntry { atom: i, node: j });
            }
            entries[(i, j)] = v;
        }
    }
    Ok(IncidenceMatrix { entries })
}

/// Normalized Laplacian over the retained nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLaplacian {
    pub matrix: DMatrix<f64>,
    /// Original indices of the nodes kept.
    pub retained: Vec<usize>,
    /// Original indices of the zero-degree nodes dropped.
    pub dropped: Vec<usize>,
}

pub fn normalized_laplacian(e: &IncidenceMatrix) -> Result<NormalizedLaplacian, GraphError> {
    let a = e.adjacency();
    let degrees: Vec<f64> = a.row_iter().map(|r| r.sum()).collect();
    let max = degrees.iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return Err(GraphError::AllDisconnected);
    }
    let (retained, dropped): (Vec<usize>, Vec<usize>) =
        (0..degrees.len()).partition(|&j| degrees[j] >= DEGREE_FLOOR * max);
    let m = retained.len();
    let inv_sqrt: Vec<f64> = retained.iter().map(|&j| degrees[j].sqrt().recip()).collect();
    let mut l = DMatrix::zeros(m, m);
    for (p, &i) in retained.iter().enumerate() {
        for (q, &j) in retained.iter().enumerate() {
            let identity = if p == q { 1.0 } else { 0.0 };
            l[(p, q)] = identity - inv_sqrt[p] * a[(i, j)] * inv_sqrt[q];
        }
    }
    // symmetrize away rounding so the eigensolver sees an exactly symmetric matrix
    let l = (&l + l.transpose()) * 0.5;
    Ok(NormalizedLaplacian { matrix: l, retained, dropped })
}

/// Eigenvalues of the normalized Laplacian with the dropped nodes recorded.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub dropped: Vec<usize>,
}

/// Smallest `count` eigenvalues of the normalized Laplacian, ascending, after
/// removing the trivial zero eigenvalue.
pub fn laplacian_spectrum(e: &IncidenceMatrix, count: usize) -> Result<Spectrum, GraphError> {
    let lap = normalized_laplacian(e)?;
    let mut values: Vec<f64> = SymmetricEigen::new(lap.matrix).eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values.remove(0);
    values.truncate(count);
    Ok(Spectrum { values, dropped: lap.dropped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn coincident_atom_and_node() {
        let k = GaussianKernel { amplitude: 2.0, sigma: 0.5 };
        let e = incidence(&[Vec3::zeros()], &[Vec3::zeros()], |a, b| k.value(a, b)).unwrap();
        assert_relative_eq!(e.entries()[(0, 0)], 4.0);
    }

    #[test]
    fn far_nodes_are_dropped() {
        let k = GaussianKernel::default();
        let nodes = [Vec3::zeros(), Vec3::x(), Vec3::new(500.0, 0.0, 0.0)];
        let e = incidence(&[Vec3::zeros(), Vec3::y()], &nodes, |a, b| k.value(a, b)).unwrap();
        let s = laplacian_spectrum(&e, 5).unwrap();
        assert_eq!(s.dropped, vec![2]);
        assert_eq!(s.values.len(), 1);
    }

    #[test]
    fn disconnected_graph_is_an_error() {
        let e = incidence(&[Vec3::zeros()], &[Vec3::x()], |_, _| 0.0).unwrap();
        assert_eq!(laplacian_spectrum(&e, 1), Err(GraphError::AllDisconnected));
    }

    #[test]
    fn negative_kernel_is_rejected() {
        assert!(matches!(
            incidence(&[Vec3::zeros()], &[Vec3::x()], |_, _| -1.0),
            Err(GraphError::InvalidEntry { atom: 0, node: 0 })
        ));
    }
}
