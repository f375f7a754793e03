//! Structure-level helpers: fingerprint every center of many structures and
//! assemble vector-regression samples from labeled structures.

use thiserror::Error;

use crate::fingerprint::{Featurizer, Fingerprint, FingerprintError};
use crate::frame::Vec3;
use crate::io::{Center, CenterSelector, Structure, StructureError};
use crate::regress::{RegressError, VectorModel, VectorSample};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkflowError {
    #[error("structure {id}: {source}")]
    Structure { id: String, source: StructureError },
    #[error("center {label}: {source}")]
    Fingerprint { label: String, source: FingerprintError },
    #[error("structure {id} has no {what}")]
    MissingLabel { id: String, what: &'static str },
    #[error(transparent)]
    Regress(#[from] RegressError),
}

/// Fingerprints of one center of one structure.
#[derive(Debug, Clone)]
pub struct CenterFingerprints {
    pub structure: usize,
    pub center: Center,
    pub fingerprints: Vec<Fingerprint>,
}

/// Fingerprints for the selected centers of one structure, tagged with the center label.
pub fn fingerprint_structure(
    featurizer: &Featurizer,
    index: usize,
    structure: &Structure,
    selector: &CenterSelector,
    cutoff: f64,
) -> Result<Vec<CenterFingerprints>, WorkflowError> {
    let centers =
        structure.centers(selector).map_err(|source| WorkflowError::Structure { id: structure.id.clone(), source })?;
    centers
        .into_iter()
        .map(|center| {
            let neigh = structure.neighborhood(center.position, cutoff);
            let fingerprints = featurizer
                .extract(&neigh)
                .map_err(|source| WorkflowError::Fingerprint { label: center.label.clone(), source })?
                .into_iter()
                .map(|f| f.with_provenance(center.label.clone()))
                .collect();
            Ok(CenterFingerprints { structure: index, center, fingerprints })
        })
        .collect()
}

/// Runs `f` over `0..n` on up to `workers` threads; results keep index order.
pub fn parallel_map<T, E, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>, E>
where
    T: Send,
    E: Send,
    F: Fn(usize) -> Result<T, E> + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(f).collect();
    }
    let chunk = n.div_ceil(workers);
    let f = &f;
    let parts: Vec<Result<Vec<T>, E>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let range = (w * chunk).min(n)..((w + 1) * chunk).min(n);
                scope.spawn(move || range.map(f).collect::<Result<Vec<T>, E>>())
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// [`fingerprint_structure`] over many structures, flattened in input order.
pub fn fingerprint_structures(
    featurizer: &Featurizer,
    structures: &[Structure],
    selector: &CenterSelector,
    cutoff: f64,
    workers: usize,
) -> Result<Vec<CenterFingerprints>, WorkflowError> {
    let per = parallel_map(structures.len(), workers, |i| {
        fingerprint_structure(featurizer, i, &structures[i], selector, cutoff)
    })?;
    Ok(per.into_iter().flatten().collect())
}

/// One sample per atom: its fingerprints and its force.
pub fn force_samples(
    featurizer: &Featurizer,
    structures: &[Structure],
    cutoff: f64,
    workers: usize,
) -> Result<Vec<VectorSample>, WorkflowError> {
    let centers = fingerprint_structures(featurizer, structures, &CenterSelector::AllAtoms, cutoff, workers)?;
    centers
        .into_iter()
        .map(|c| {
            let s = &structures[c.structure];
            let forces =
                s.forces.as_ref().ok_or_else(|| WorkflowError::MissingLabel { id: s.id.clone(), what: "forces" })?;
            Ok(VectorSample { fingerprints: c.fingerprints, vector: forces[c.center.atom.expect("atom-centered")] })
        })
        .collect()
}

/// One sample per structure: the fingerprints at the center of mass and the dipole.
pub fn dipole_samples(
    featurizer: &Featurizer,
    structures: &[Structure],
    cutoff: f64,
    workers: usize,
) -> Result<Vec<VectorSample>, WorkflowError> {
    let centers = fingerprint_structures(featurizer, structures, &CenterSelector::CenterOfMass, cutoff, workers)?;
    centers
        .into_iter()
        .map(|c| {
            let s = &structures[c.structure];
            let dipole = s.dipole.ok_or_else(|| WorkflowError::MissingLabel { id: s.id.clone(), what: "dipole" })?;
            Ok(VectorSample { fingerprints: c.fingerprints, vector: dipole })
        })
        .collect()
}

/// World-frame force prediction for every atom of `structure`.
pub fn predict_forces(
    model: &VectorModel,
    featurizer: &Featurizer,
    structure: &Structure,
    cutoff: f64,
) -> Result<Vec<(Vec3, Vec3)>, WorkflowError> {
    fingerprint_structure(featurizer, 0, structure, &CenterSelector::AllAtoms, cutoff)?
        .into_iter()
        .map(|c| Ok(model.predict(&c.fingerprints)?))
        .collect()
}
