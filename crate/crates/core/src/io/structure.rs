use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::elements::{atomic_mass, is_element};
use crate::fingerprint::AtomicNeighborhood;
use crate::frame::Vec3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StructureError {
    #[error("structure has no atoms")]
    Empty,
    #[error("unknown element {0:?}")]
    UnknownElement(String),
    #[error("atom {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("{atoms} atoms but {forces} force rows")]
    ForceCount { atoms: usize, forces: usize },
    #[error("center atom {index} out of range for {atoms} atoms")]
    CenterOutOfRange { index: usize, atoms: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub element: String,
    pub position: Vec3,
}

impl Atom {
    pub fn new(element: impl Into<String>, position: Vec3) -> Self {
        Self { element: element.into(), position }
    }
}

/// A molecular cluster with optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Structure {
    pub id: String,
    pub atoms: Vec<Atom>,
    pub forces: Option<Vec<Vec3>>,
    pub energy: Option<f64>,
    pub dipole: Option<Vec3>,
    /// Extra comment-line `key=value` pairs, kept for round-tripping.
    pub properties: BTreeMap<String, String>,
}

impl Structure {
    pub fn new(id: impl Into<String>, atoms: Vec<Atom>) -> Result<Self, StructureError> {
        let s = Self { id: id.into(), atoms, forces: None, energy: None, dipole: None, properties: BTreeMap::new() };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), StructureError> {
        if self.atoms.is_empty() {
            return Err(StructureError::Empty);
        }
        for (i, a) in self.atoms.iter().enumerate() {
            if !is_element(&a.element) {
                return Err(StructureError::UnknownElement(a.element.clone()));
            }
            if !a.position.iter().all(|c| c.is_finite()) {
                return Err(StructureError::NonFinite(i));
            }
        }
        if let Some(f) = &self.forces {
            if f.len() != self.atoms.len() {
                return Err(StructureError::ForceCount { atoms: self.atoms.len(), forces: f.len() });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn center_of_mass(&self) -> Vec3 {
        let mut total = 0.0;
        let mut acc = Vec3::zeros();
        for a in &self.atoms {
            let m = atomic_mass(&a.element).unwrap_or(1.0);
            total += m;
            acc += a.position * m;
        }
        acc / total
    }

    /// `x ↦ R x + t` applied to positions; forces and dipole are rotated.
    pub fn transformed(&self, rotation: &Matrix3<f64>, translation: &Vec3) -> Self {
        let mut out = self.clone();
        for a in &mut out.atoms {
            a.position = rotation * a.position + translation;
        }
        if let Some(f) = &mut out.forces {
            for v in f.iter_mut() {
                *v = rotation * *v;
            }
        }
        out.dipole = out.dipole.map(|d| rotation * d);
        out
    }

    /// Atoms strictly within `cutoff` of `center`.
    pub fn neighborhood(&self, center: Vec3, cutoff: f64) -> AtomicNeighborhood {
        AtomicNeighborhood::from_positions(center, self.atoms.iter().map(|a| (a.element.as_str(), a.position)), cutoff)
    }

    /// Fingerprint centers picked by `selector`.
    pub fn centers(&self, selector: &CenterSelector) -> Result<Vec<Center>, StructureError> {
        let atom = |index: usize| -> Result<Center, StructureError> {
            let a = self.atoms.get(index).ok_or(StructureError::CenterOutOfRange { index, atoms: self.atoms.len() })?;
            Ok(Center { label: format!("{}#{index}", self.id), atom: Some(index), position: a.position })
        };
        Ok(match selector {
            CenterSelector::AllAtoms => (0..self.atoms.len()).map(atom).collect::<Result<_, _>>()?,
            CenterSelector::Atom(i) => vec![atom(*i)?],
            CenterSelector::CenterOfMass => {
                vec![Center { label: format!("{}#com", self.id), atom: None, position: self.center_of_mass() }]
            }
            CenterSelector::Point(p) => vec![Center { label: format!("{}#point", self.id), atom: None, position: *p }],
        })
    }
}

/// A fingerprint center within a structure.
#[derive(Debug, Clone, PartialEq)]
pub struct Center {
    /// `"<structure id>#<atom index | com | point>"`.
    pub label: String,
    pub atom: Option<usize>,
    pub position: Vec3,
}

/// How fingerprint centers are chosen.
///
/// Text form: `all`, `atom:<index>`, `com`, or `point:<x>,<y>,<z>`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum CenterSelector {
    #[default]
    AllAtoms,
    Atom(usize),
    CenterOfMass,
    Point(Vec3),
}

impl FromStr for CenterSelector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s {
            "all" => return Ok(CenterSelector::AllAtoms),
            "com" => return Ok(CenterSelector::CenterOfMass),
            _ => {}
        }
        if let Some(i) = s.strip_prefix("atom:") {
            return i.trim().parse().map(CenterSelector::Atom).map_err(|_| format!("bad atom index {i:?}"));
        }
        if let Some(p) = s.strip_prefix("point:") {
            let c: Vec<f64> = p
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|_| format!("bad point {p:?}"))?;
            if c.len() != 3 || !c.iter().all(|v| v.is_finite()) {
                return Err(format!("point needs three finite coordinates, got {p:?}"));
            }
            return Ok(CenterSelector::Point(Vec3::new(c[0], c[1], c[2])));
        }
        Err(format!("unknown center selector {s:?}; expected all, atom:<i>, com, or point:<x>,<y>,<z>"))
    }
}

impl TryFrom<String> for CenterSelector {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<CenterSelector> for String {
    fn from(c: CenterSelector) -> Self {
        c.to_string()
    }
}

impl fmt::Display for CenterSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CenterSelector::AllAtoms => write!(f, "all"),
            CenterSelector::Atom(i) => write!(f, "atom:{i}"),
            CenterSelector::CenterOfMass => write!(f, "com"),
            CenterSelector::Point(p) => write!(f, "point:{},{},{}", p.x, p.y, p.z),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn water() -> Structure {
        Structure::new(
            "w",
            vec![
                Atom::new("O", Vec3::zeros()),
                Atom::new("H", Vec3::new(0.96, 0.0, 0.0)),
                Atom::new("H", Vec3::new(-0.24, 0.93, 0.0)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation() {
        assert_eq!(Structure::new("e", vec![]), Err(StructureError::Empty));
        assert_eq!(
            Structure::new("x", vec![Atom::new("Qq", Vec3::zeros())]),
            Err(StructureError::UnknownElement("Qq".into()))
        );
        assert_eq!(
            Structure::new("n", vec![Atom::new("H", Vec3::new(f64::NAN, 0.0, 0.0))]),
            Err(StructureError::NonFinite(0))
        );
    }

    #[test]
    fn center_of_mass_is_mass_weighted() {
        let com = water().center_of_mass();
        let m = 15.999 + 2.0 * 1.008;
        assert_relative_eq!(com.x, 1.008 * (0.96 - 0.24) / m, epsilon = 1e-15);
        assert_relative_eq!(com.y, 1.008 * 0.93 / m, epsilon = 1e-15);
    }

    #[test]
    fn selectors() {
        let w = water();
        assert_eq!(w.centers(&CenterSelector::AllAtoms).unwrap().len(), 3);
        assert_eq!(w.centers(&"atom:2".parse().unwrap()).unwrap()[0].label, "w#2");
        assert!(w.centers(&CenterSelector::Atom(3)).is_err());
        for s in ["all", "atom:4", "com", "point:1,2.5,-3"] {
            assert_eq!(s.parse::<CenterSelector>().unwrap().to_string(), s);
        }
        assert!("point:1,2".parse::<CenterSelector>().is_err());
        assert!("middle".parse::<CenterSelector>().is_err());
    }

    #[test]
    fn boundary_atom_is_excluded() {
        let s =
            Structure::new("b", vec![Atom::new("H", Vec3::zeros()), Atom::new("H", Vec3::new(6.0, 0.0, 0.0))]).unwrap();
        assert_eq!(s.neighborhood(Vec3::zeros(), 6.0).len(), 1);
    }
}
