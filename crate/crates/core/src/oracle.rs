//! Label sources for training: analytic potentials and an external program.
//!
//! The external protocol: the child receives one extended-XYZ frame on stdin
//! and prints one extended-XYZ frame carrying `energy=`, force columns,
//! and/or `dipole=` on stdout.

use std::fmt;
use std::io::{Read, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::Vec3;
use crate::io::{parse_xyz, write_xyz, Atom, Structure};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("structure outside the oracle domain: {0}")]
    Domain(String),
    #[error("could not run {program}: {message}")]
    Spawn { program: String, message: String },
    #[error("oracle timed out after {0:?}")]
    Timeout(Duration),
    #[error("oracle exited with {status}: {stderr}")]
    Failed { status: String, stderr: String },
    #[error("oracle output unusable: {0}")]
    Output(String),
}

/// Labels returned for one structure.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Labels {
    pub energy: Option<f64>,
    pub forces: Option<Vec<Vec3>>,
    pub dipole: Option<Vec3>,
}

pub trait Oracle {
    fn label(&self, structure: &Structure) -> Result<Labels, OracleError>;
}

/// Energy and forces of a sum of pair potentials `V(r)` with derivative `dV`.
fn pairwise(structure: &Structure, v: impl Fn(f64) -> f64, dv: impl Fn(f64) -> f64) -> Result<Labels, OracleError> {
    let n = structure.len();
    let mut energy = 0.0;
    let mut forces = vec![Vec3::zeros(); n];
    for i in 0..n {
        for j in i + 1..n {
            let d = structure.atoms[i].position - structure.atoms[j].position;
            let r = d.norm();
            if r == 0.0 {
                return Err(OracleError::Domain(format!("atoms {i} and {j} coincide")));
            }
            energy += v(r);
            let f = d * (-dv(r) / r);
            forces[i] += f;
            forces[j] -= f;
        }
    }
    Ok(Labels { energy: Some(energy), forces: Some(forces), dipole: None })
}

/// `4ε[(σ/r)¹² - (σ/r)⁶]` between every pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LennardJones {
    pub epsilon: f64,
    pub sigma: f64,
}

impl LennardJones {
    pub fn energy(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        4.0 * self.epsilon * (s6 * s6 - s6)
    }

    /// Pair force `-dV/dr`; positive is repulsive.
    pub fn force(&self, r: f64) -> f64 {
        let s6 = (self.sigma / r).powi(6);
        24.0 * self.epsilon / r * (2.0 * s6 * s6 - s6)
    }
}

impl Oracle for LennardJones {
    fn label(&self, structure: &Structure) -> Result<Labels, OracleError> {
        pairwise(structure, |r| self.energy(r), |r| -self.force(r))
    }
}

/// `D (1 - e^{-a(r - r₀)})²` between every pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Morse {
    pub depth: f64,
    pub width: f64,
    pub r0: f64,
}

impl Morse {
    pub fn energy(&self, r: f64) -> f64 {
        let e = (-self.width * (r - self.r0)).exp();
        self.depth * (1.0 - e) * (1.0 - e)
    }

    pub fn force(&self, r: f64) -> f64 {
        let e = (-self.width * (r - self.r0)).exp();
        -2.0 * self.depth * self.width * e * (1.0 - e)
    }
}

impl Oracle for Morse {
    fn label(&self, structure: &Structure) -> Result<Labels, OracleError> {
        pairwise(structure, |r| self.energy(r), |r| -self.force(r))
    }
}

/// Two-variable model surface of a proton shared between two water-like
/// monomers.
///
/// Atoms are ordered `[H*, O₁, O₂, H₁ₐ, H₁ᵦ, H₂ₐ, H₂ᵦ]`. With `r = |O₁O₂|` and
/// `uₖ` the unit H–H direction of monomer `k`,
/// `E = D (1 - e^{-a(r - r₀)})² + c e^{-b(r - r₀)} (2 (u₁·u₂)² - 1)`.
/// The energy depends on the twist `φ` between the monomers only through
/// `cos² φ`, so it is symmetric under `φ ↦ -φ` and `φ ↦ π - φ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymmetricDimerSurrogate {
    pub depth: f64,
    pub width: f64,
    pub r0: f64,
    pub coupling: f64,
    pub decay: f64,
}

impl Default for SymmetricDimerSurrogate {
    fn default() -> Self {
        Self { depth: 1.0, width: 2.0, r0: 2.4, coupling: 0.05, decay: 1.0 }
    }
}

const DIMER_LAYOUT: [&str; 7] = ["H", "O", "O", "H", "H", "H", "H"];

impl SymmetricDimerSurrogate {
    /// Layout at O–O distance `r` and twist `phi`, shared proton at the origin.
    pub fn geometry(r: f64, phi: f64) -> Structure {
        let (a, b) = (0.24, 0.93);
        let o1 = Vec3::new(-r / 2.0, 0.0, 0.0);
        let o2 = Vec3::new(r / 2.0, 0.0, 0.0);
        let positions = [
            Vec3::zeros(),
            o1,
            o2,
            o1 + Vec3::new(-a, b, 0.0),
            o1 + Vec3::new(-a, -b, 0.0),
            o2 + Vec3::new(a, b * phi.cos(), b * phi.sin()),
            o2 + Vec3::new(a, -b * phi.cos(), -b * phi.sin()),
        ];
        let atoms = DIMER_LAYOUT.iter().zip(positions).map(|(e, p)| Atom::new(*e, p)).collect();
        Structure::new(format!("dimer_r{r}_phi{phi}"), atoms).expect("dimer layout is valid")
    }

    pub fn energy_of(&self, positions: &[Vec3]) -> f64 {
        let r = (positions[1] - positions[2]).norm();
        let u1 = (positions[3] - positions[4]).normalize();
        let u2 = (positions[5] - positions[6]).normalize();
        let c2 = u1.dot(&u2).powi(2);
        let e = (-self.width * (r - self.r0)).exp();
        self.depth * (1.0 - e) * (1.0 - e) + self.coupling * (-self.decay * (r - self.r0)).exp() * (2.0 * c2 - 1.0)
    }
}

impl Oracle for SymmetricDimerSurrogate {
    fn label(&self, structure: &Structure) -> Result<Labels, OracleError> {
        let elements: Vec<&str> = structure.atoms.iter().map(|a| a.element.as_str()).collect();
        if elements != DIMER_LAYOUT {
            return Err(OracleError::Domain(format!("expected atoms {DIMER_LAYOUT:?}, got {elements:?}")));
        }
        let mut x = structure.positions();
        let degenerate = (x[1] - x[2]).norm() == 0.0 || x[3] == x[4] || x[5] == x[6];
        if degenerate {
            return Err(OracleError::Domain("coincident atoms in the dimer".into()));
        }
        let energy = self.energy_of(&x);
        let h = 1e-6;
        let mut forces = vec![Vec3::zeros(); x.len()];
        for i in 0..x.len() {
            for c in 0..3 {
                let keep = x[i][c];
                x[i][c] = keep + h;
                let up = self.energy_of(&x);
                x[i][c] = keep - h;
                let down = self.energy_of(&x);
                x[i][c] = keep;
                forces[i][c] = -(up - down) / (2.0 * h);
            }
        }
        Ok(Labels { energy: Some(energy), forces: Some(forces), dipole: None })
    }
}

/// Runs a program per structure; see the module docs for the protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalCommand {
    pub program: PathBuf,
    #[serde(default)]
    pub args: Vec<String>,
    /// Seconds before the child is killed.
    pub timeout: f64,
}

impl Oracle for ExternalCommand {
    fn label(&self, structure: &Structure) -> Result<Labels, OracleError> {
        let program = self.program.display().to_string();
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| OracleError::Spawn { program: program.clone(), message: e.to_string() })?;
        let input = write_xyz(std::slice::from_ref(structure));
        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = std::thread::spawn(move || stdin.write_all(input.as_bytes()));
        let mut stdout = child.stdout.take().expect("stdout is piped");
        let mut stderr = child.stderr.take().expect("stderr is piped");
        let reader = std::thread::spawn(move || {
            let mut s = String::new();
            stdout.read_to_string(&mut s).map(|_| s)
        });
        let err_reader = std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        });
        let limit = Duration::from_secs_f64(self.timeout.max(0.0));
        let start = Instant::now();
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) if start.elapsed() >= limit => {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(OracleError::Timeout(limit));
                }
                Ok(None) => std::thread::sleep(Duration::from_millis(5)),
                Err(e) => return Err(OracleError::Spawn { program, message: e.to_string() }),
            }
        };
        // a child that exits without reading its input closes the pipe early
        let _ = writer.join();
        let stderr = err_reader.join().unwrap_or_default();
        if !status.success() {
            return Err(OracleError::Failed { status: status.to_string(), stderr: stderr.trim().to_string() });
        }
        let out = reader
            .join()
            .map_err(|_| OracleError::Output("reader thread panicked".into()))?
            .map_err(|e| OracleError::Output(e.to_string()))?;
        let frames = parse_xyz(&out).map_err(|e| OracleError::Output(e.to_string()))?;
        let frame = frames.into_iter().next().ok_or_else(|| OracleError::Output("no frame printed".into()))?;
        if frame.len() != structure.len() {
            return Err(OracleError::Output(format!(
                "printed {} atoms for a {}-atom structure",
                frame.len(),
                structure.len()
            )));
        }
        Ok(Labels { energy: frame.energy, forces: frame.forces, dipole: frame.dipole })
    }
}

/// Which oracle to use.
///
/// Text form: `lj:<ε>,<σ>`, `morse:<D>,<a>,<r₀>`, `dimer`, or `cmd:<program>`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OracleSpec {
    LennardJones(LennardJones),
    Morse(Morse),
    SymmetricDimer(SymmetricDimerSurrogate),
    External(ExternalCommand),
}

impl OracleSpec {
    pub fn build(&self) -> Box<dyn Oracle + Send + Sync> {
        match self {
            OracleSpec::LennardJones(o) => Box::new(*o),
            OracleSpec::Morse(o) => Box::new(*o),
            OracleSpec::SymmetricDimer(o) => Box::new(*o),
            OracleSpec::External(o) => Box::new(o.clone()),
        }
    }
}

fn numbers(s: &str, n: usize, what: &str) -> Result<Vec<f64>, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("{what} parameters {s:?} are not numbers"))?;
    if v.len() != n || !v.iter().all(|x| x.is_finite()) {
        return Err(format!("{what} needs {n} finite parameters, got {s:?}"));
    }
    Ok(v)
}

impl FromStr for OracleSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (kind, rest) = s.split_once(':').unwrap_or((s, ""));
        match kind.trim() {
            "lj" => {
                let v = numbers(rest, 2, "lj")?;
                Ok(OracleSpec::LennardJones(LennardJones { epsilon: v[0], sigma: v[1] }))
            }
            "morse" => {
                let v = numbers(rest, 3, "morse")?;
                Ok(OracleSpec::Morse(Morse { depth: v[0], width: v[1], r0: v[2] }))
            }
            "dimer" if rest.is_empty() => Ok(OracleSpec::SymmetricDimer(SymmetricDimerSurrogate::default())),
            "cmd" if !rest.is_empty() => Ok(OracleSpec::External(ExternalCommand {
                program: PathBuf::from(rest),
                args: Vec::new(),
                timeout: 60.0,
            })),
            _ => Err(format!(
                "unknown oracle {s:?}; expected lj:<eps>,<sigma>, morse:<D>,<a>,<r0>, dimer, or cmd:<program>"
            )),
        }
    }
}

impl fmt::Display for OracleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OracleSpec::LennardJones(o) => write!(f, "lj:{},{}", o.epsilon, o.sigma),
            OracleSpec::Morse(o) => write!(f, "morse:{},{},{}", o.depth, o.width, o.r0),
            OracleSpec::SymmetricDimer(_) => write!(f, "dimer"),
            OracleSpec::External(o) => write!(f, "cmd:{}", o.program.display()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dimer(element: &str, r: f64) -> Structure {
        Structure::new("d", vec![Atom::new(element, Vec3::zeros()), Atom::new(element, Vec3::new(r, 0.0, 0.0))])
            .unwrap()
    }

    #[test]
    fn lennard_jones_minimum_and_forces() {
        let lj = LennardJones { epsilon: 1.0, sigma: 0.98 };
        let rmin = 0.98 * 2f64.powf(1.0 / 6.0);
        assert_relative_eq!(lj.energy(rmin), -1.0, epsilon = 1e-12);
        assert!(lj.force(rmin).abs() < 1e-12);
        let l = lj.label(&dimer("N", 1.0)).unwrap();
        let f = l.forces.unwrap();
        assert_relative_eq!(f[1].x, lj.force(1.0), max_relative = 1e-12);
        assert_relative_eq!(f[0].x, -lj.force(1.0), max_relative = 1e-12);
        let h = 1e-6;
        let fd = -(lj.energy(1.0 + h) - lj.energy(1.0 - h)) / (2.0 * h);
        assert_relative_eq!(lj.force(1.0), fd, max_relative = 1e-7);
    }

    #[test]
    fn morse_force_matches_derivative() {
        let m = Morse { depth: 2.0, width: 1.5, r0: 1.1 };
        for r in [0.8, 1.1, 2.0] {
            let h = 1e-6;
            let fd = -(m.energy(r + h) - m.energy(r - h)) / (2.0 * h);
            assert_relative_eq!(m.force(r), fd, epsilon = 1e-8);
        }
        assert!(m.label(&Structure { atoms: vec![Atom::new("H", Vec3::zeros()); 2], ..dimer("H", 1.0) }).is_err());
    }

    #[test]
    fn surrogate_symmetry() {
        let s = SymmetricDimerSurrogate::default();
        for phi in [0.1, 0.7, 1.3] {
            let e = |p: f64| s.label(&SymmetricDimerSurrogate::geometry(2.5, p)).unwrap().energy.unwrap();
            assert_relative_eq!(e(phi), e(-phi), epsilon = 1e-14);
            assert_relative_eq!(e(phi), e(std::f64::consts::PI - phi), epsilon = 1e-14);
        }
        assert!(s.label(&dimer("O", 1.0)).is_err());
    }

    #[test]
    fn spec_text_round_trip() {
        for s in ["lj:1,0.98", "morse:1,2,3", "dimer", "cmd:/bin/true"] {
            assert_eq!(s.parse::<OracleSpec>().unwrap().to_string(), s);
        }
        assert!("lj:1".parse::<OracleSpec>().is_err());
        assert!("quantum".parse::<OracleSpec>().is_err());
    }

    #[cfg(unix)]
    #[test]
    fn external_command_protocol() {
        let dir = std::env::temp_dir().join(format!("decaf-oracle-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let script = dir.join("echo_energy.sh");
        std::fs::write(&script, "#!/bin/sh\nread n\nread c\necho \"$n\"\necho \"energy=-2.5\"\ncat\n").unwrap();
        let sleeper = dir.join("sleep.sh");
        std::fs::write(&sleeper, "#!/bin/sh\nsleep 5\n").unwrap();
        let failing = dir.join("fail.sh");
        std::fs::write(&failing, "#!/bin/sh\necho boom >&2\nexit 3\n").unwrap();
        for p in [&script, &sleeper, &failing] {
            use std::os::unix::fs::PermissionsExt;
            std::fs::set_permissions(p, std::fs::Permissions::from_mode(0o755)).unwrap();
        }
        let run = |program: &PathBuf, timeout: f64| {
            ExternalCommand { program: program.clone(), args: vec![], timeout }.label(&dimer("N", 1.1))
        };
        assert_eq!(run(&script, 10.0).unwrap().energy, Some(-2.5));
        assert!(matches!(run(&sleeper, 0.2), Err(OracleError::Timeout(_))));
        match run(&failing, 10.0) {
            Err(OracleError::Failed { stderr, .. }) => assert_eq!(stderr, "boom"),
            other => panic!("{other:?}"),
        }
        let _ = std::fs::remove_dir_all(&dir);
    }
}
