//! Kernel-minisum optimization on the unit sphere and canonical coordinate
//! frames for atomistic neighborhoods.
//!
//! A minisum problem seeks the unit probe `w` minimizing `Σ g_i κ(w, e_i)`
//! over neighbor directions `e_i` with radial weights `g_i`. Two kernels are
//! provided: the square angle `½ acos²(wᵀe)` and the exponentiated cosine
//! `exp(-wᵀe)`. Local minima are found with Barzilai-Borwein projected
//! gradient descent; global minima with deterministic multi-start.
//!
//! [`canonical_frame`] chains a global solve, a constrained solve in the plane
//! orthogonal to the first axis, and a half-space rule fixing the handedness
//! of the third axis. Symmetric neighborhoods yield several tied frames; all
//! of them are returned.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

/// Plain 3-vector used for displacements and gradients.
pub type Vec3 = Vector3<f64>;

/// Objectives closer than this are treated as co-global minima.
pub const CO_GLOBAL_TOLERANCE: f64 = 1e-9;

/// Local minima closer than this angle (radians) are merged.
pub const CLUSTER_ANGLE: f64 = 1e-4;

/// Directions within this angle of the constraint axis carry no in-plane information.
pub const DEGENERATE_ANGLE: f64 = 1e-8;

/// Atoms with `|eᵀ(b_α × b_β)|` below this lie in the α–β plane and are left
/// out of both half-space sums.
pub const HALF_SPACE_BAND: f64 = 1e-10;

/// Offset of the golden-angle lattice used for global restarts.
pub const START_LATTICE_OFFSET: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FrameError {
    #[error("minisum problem has no directions")]
    EmptyProblem,
    #[error("{directions} directions but {weights} weights")]
    LengthMismatch { directions: usize, weights: usize },
    #[error("weight {index} is negative or not finite ({value})")]
    InvalidWeight { index: usize, value: f64 },
    #[error("all minisum weights are zero")]
    AllZeroWeights,
    #[error("invalid solver settings: {0}")]
    InvalidSettings(&'static str),
    #[error("minisum descent did not converge within {iterations} iterations")]
    NotConverged { iterations: usize },
    #[error("all directions are collinear with the constraint axis")]
    DegenerateInPlane,
    #[error("initial guess is not orthogonal to the constraint axis")]
    InitialNotOrthogonal,
    #[error("neighborhood contains no atoms within the cutoff")]
    EmptyNeighborhood,
}

/// A direction on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitVector3(Vec3);

impl UnitVector3 {
    /// Normalizes `(x, y, z)`; `None` for zero or non-finite input.
    pub fn new(x: f64, y: f64, z: f64) -> Option<Self> {
        Self::from_vector(Vec3::new(x, y, z))
    }

    pub fn from_vector(v: Vec3) -> Option<Self> {
        let n = v.norm();
        if !n.is_finite() || n == 0.0 {
            return None;
        }
        let u = v / n;
        // a second pass removes the last ulp of norm error for badly scaled input
        let n2 = u.norm();
        Some(Self(u / n2))
    }

    pub fn x_axis() -> Self {
        Self(Vec3::x())
    }

    pub fn y_axis() -> Self {
        Self(Vec3::y())
    }

    pub fn z_axis() -> Self {
        Self(Vec3::z())
    }

    #[inline]
    pub fn as_vector(&self) -> &Vec3 {
        &self.0
    }

    #[inline]
    pub fn into_vector(self) -> Vec3 {
        self.0
    }

    pub fn x(&self) -> f64 {
        self.0.x
    }

    pub fn y(&self) -> f64 {
        self.0.y
    }

    pub fn z(&self) -> f64 {
        self.0.z
    }

    #[inline]
    pub fn dot(&self, other: &UnitVector3) -> f64 {
        self.0.dot(&other.0)
    }

    /// Angle to `other` in `[0, π]`, accurate for nearly parallel vectors.
    pub fn angle_to(&self, other: &UnitVector3) -> f64 {
        self.0.cross(&other.0).norm().atan2(self.0.dot(&other.0))
    }

    pub fn neg(&self) -> Self {
        Self(-self.0)
    }

    /// Applies an orthogonal matrix.
    pub fn transform(&self, m: &Matrix3<f64>) -> Self {
        Self::from_vector(m * self.0).expect("orthogonal map of a unit vector")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MinisumKernel {
    SquareAngle,
    ExpCosine,
}

impl MinisumKernel {
    /// Kernel value for a probe/direction cosine.
    pub fn value(self, cosine: f64) -> f64 {
        match self {
            MinisumKernel::SquareAngle => {
                let a = cosine.clamp(-1.0, 1.0).acos();
                0.5 * a * a
            }
            MinisumKernel::ExpCosine => (-cosine).exp(),
        }
    }
}

/// Weighted neighbor directions and the kernel to minimize against.
#[derive(Debug, Clone, PartialEq)]
pub struct MinisumProblem {
    directions: Vec<UnitVector3>,
    weights: Vec<f64>,
    kernel: MinisumKernel,
}

impl MinisumProblem {
    /// Validates the input; zero-weight entries are dropped.
    pub fn new(directions: Vec<UnitVector3>, weights: Vec<f64>, kernel: MinisumKernel) -> Result<Self, FrameError> {
        if directions.is_empty() {
            return Err(FrameError::EmptyProblem);
        }
        if directions.len() != weights.len() {
            return Err(FrameError::LengthMismatch { directions: directions.len(), weights: weights.len() });
        }
        if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(FrameError::InvalidWeight { index, value });
        }
        let (directions, weights): (Vec<_>, Vec<_>) =
            directions.into_iter().zip(weights).filter(|(_, g)| *g > 0.0).unzip();
        if directions.is_empty() {
            return Err(FrameError::AllZeroWeights);
        }
        Ok(Self { directions, weights, kernel })
    }

    /// Builds a problem from center-relative displacements, weighting each
    /// direction by `weight_fn(‖x‖)`. Atoms sitting on the center have no
    /// direction and are skipped, as are atoms of zero weight.
    pub fn from_displacements(
        displacements: &[Vec3],
        weight_fn: impl Fn(f64) -> f64,
        kernel: MinisumKernel,
    ) -> Result<Self, FrameError> {
        let mut directions = Vec::with_capacity(displacements.len());
        let mut weights = Vec::with_capacity(displacements.len());
        for x in displacements {
            let r = x.norm();
            let g = weight_fn(r);
            if g > 0.0 {
                if let Some(e) = UnitVector3::from_vector(*x) {
                    directions.push(e);
                    weights.push(g);
                }
            }
        }
        if directions.is_empty() {
            return Err(FrameError::EmptyNeighborhood);
        }
        Self::new(directions, weights, kernel)
    }

    pub fn directions(&self) -> &[UnitVector3] {
        &self.directions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn kernel(&self) -> MinisumKernel {
        self.kernel
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    /// Same weights and kernel, directions mapped through an orthogonal matrix.
    pub fn transformed(&self, m: &Matrix3<f64>) -> Self {
        Self {
            directions: self.directions.iter().map(|e| e.transform(m)).collect(),
            weights: self.weights.clone(),
            kernel: self.kernel,
        }
    }

    /// Same directions and weights under a different kernel.
    pub fn with_kernel(&self, kernel: MinisumKernel) -> Self {
        Self { kernel, ..self.clone() }
    }

    /// Objective at an arbitrary probe (not necessarily unit).
    pub fn objective(&self, w: &Vec3) -> f64 {
        match self.kernel {
            MinisumKernel::SquareAngle => sa_objective(self, w),
            MinisumKernel::ExpCosine => ec_objective(self, w),
        }
    }

    /// Euclidean gradient of the objective.
    pub fn gradient(&self, w: &Vec3, pole_clip: f64) -> Vec3 {
        match self.kernel {
            MinisumKernel::SquareAngle => sa_gradient(self, w, pole_clip),
            MinisumKernel::ExpCosine => ec_gradient(self, w),
        }
    }

    fn pairs(&self) -> impl Iterator<Item = (&Vec3, f64)> {
        self.directions.iter().map(UnitVector3::as_vector).zip(self.weights.iter().copied())
    }
}

/// `½ Σ g_i acos²(wᵀe_i)` with the cosine clamped to `[-1, 1]`.
pub fn sa_objective(problem: &MinisumProblem, w: &Vec3) -> f64 {
    0.5 * problem
        .pairs()
        .map(|(e, g)| {
            let a = w.dot(e).clamp(-1.0, 1.0).acos();
            g * a * a
        })
        .sum::<f64>()
}

/// `acos(c) / √(1 - c²)`, with its left limit 1 at `c = 1` and the
/// denominator clipped from below near the pole `c = -1`.
fn sa_factor(c: f64, pole_clip: f64) -> f64 {
    let c = c.clamp(-1.0, 1.0);
    // (1-c)(1+c) keeps full precision as c -> ±1
    let s2 = (1.0 - c) * (1.0 + c);
    if c > 0.0 {
        if s2 == 0.0 {
            1.0
        } else {
            c.acos() / s2.sqrt()
        }
    } else {
        c.acos() / s2.max(pole_clip).sqrt()
    }
}

/// `Σ -g_i · acos(wᵀe_i)/√(1-(wᵀe_i)²) · e_i`.
pub fn sa_gradient(problem: &MinisumProblem, w: &Vec3, pole_clip: f64) -> Vec3 {
    problem.pairs().fold(Vec3::zeros(), |acc, (e, g)| acc - e * (g * sa_factor(w.dot(e), pole_clip)))
}

/// `Σ g_i exp(-wᵀe_i)`.
pub fn ec_objective(problem: &MinisumProblem, w: &Vec3) -> f64 {
    problem.pairs().map(|(e, g)| g * (-w.dot(e)).exp()).sum()
}

/// `Σ -g_i exp(-wᵀe_i) e_i`.
pub fn ec_gradient(problem: &MinisumProblem, w: &Vec3) -> Vec3 {
    problem.pairs().fold(Vec3::zeros(), |acc, (e, g)| acc - e * (g * (-w.dot(e)).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Stop once consecutive probes differ by less than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Step size of the first iteration, before Barzilai-Borwein takes over.
    pub bootstrap_step: f64,
    /// Fresh guesses tried by [`solve_with_restarts`] before giving up.
    pub max_restarts: usize,
    /// Lower clip on `1 - (wᵀe)²` near antipodal directions.
    pub pole_clip: f64,
    /// Multi-start count on the sphere for global solves.
    pub sphere_starts: usize,
    /// Multi-start count on the circle for constrained global solves.
    pub circle_starts: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-14,
            max_iterations: 64,
            bootstrap_step: 0.01,
            max_restarts: 8,
            pole_clip: 1e-12,
            sphere_starts: 32,
            circle_starts: 16,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), FrameError> {
        if !(self.tolerance > 0.0) {
            return Err(FrameError::InvalidSettings("tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(FrameError::InvalidSettings("max_iterations must be at least 1"));
        }
        if !(self.bootstrap_step > 0.0) {
            return Err(FrameError::InvalidSettings("bootstrap_step must be positive"));
        }
        if !(self.pole_clip > 0.0 && self.pole_clip < 1.0) {
            return Err(FrameError::InvalidSettings("pole_clip must lie in (0, 1)"));
        }
        if self.max_restarts == 0 || self.sphere_starts == 0 || self.circle_starts == 0 {
            return Err(FrameError::InvalidSettings("restart and start counts must be at least 1"));
        }
        Ok(())
    }
}

/// A converged local minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinisumSolution {
    pub direction: UnitVector3,
    pub objective: f64,
    pub iterations: usize,
}

fn descend(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    initial: &UnitVector3,
    axis: Option<&Vec3>,
) -> Result<MinisumSolution, FrameError> {
    let project = |v: Vec3| match axis {
        Some(a) => v - a * a.dot(&v),
        None => v,
    };
    let renormalize = |v: Vec3| UnitVector3::from_vector(project(v)).map(UnitVector3::into_vector);
    let absolute_step = problem.kernel == MinisumKernel::ExpCosine;

    let mut w = renormalize(*initial.as_vector()).ok_or(FrameError::InitialNotOrthogonal)?;
    let mut previous: Option<(Vec3, Vec3)> = None;
    for iteration in 1..=settings.max_iterations {
        let grad = problem.gradient(&w, settings.pole_clip);
        let tangential = project(grad - w * w.dot(&grad));
        let step = match previous {
            None => settings.bootstrap_step,
            Some((w_prev, t_prev)) => {
                let dt = tangential - t_prev;
                let denom = dt.norm_squared();
                let bb = (w - w_prev).dot(&dt) / denom;
                if denom > 0.0 && bb.is_finite() {
                    if absolute_step {
                        bb.abs()
                    } else {
                        bb
                    }
                } else {
                    settings.bootstrap_step
                }
            }
        };
        previous = Some((w, tangential));
        let next = match renormalize(w - tangential * step) {
            Some(v) => v,
            None => break,
        };
        let moved = (next - w).norm();
        w = next;
        if moved < settings.tolerance {
            let direction = UnitVector3(w);
            return Ok(MinisumSolution { direction, objective: problem.objective(&w), iterations: iteration });
        }
    }
    Err(FrameError::NotConverged { iterations: settings.max_iterations })
}

/// Projected Barzilai-Borwein descent from `initial` to a local minimum.
pub fn solve_minisum(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    initial: &UnitVector3,
) -> Result<MinisumSolution, FrameError> {
    settings.validate()?;
    descend(problem, settings, initial, None)
}

/// Outcome of [`solve_with_restarts`]: the solution and the number of guesses used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestartedSolution {
    pub solution: MinisumSolution,
    pub guesses: usize,
}

/// Tries guesses in order until one converges, at most `max_restarts` of them.
pub fn solve_with_restarts<I>(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    guesses: I,
) -> Result<RestartedSolution, FrameError>
where
    I: IntoIterator<Item = UnitVector3>,
{
    settings.validate()?;
    for (k, guess) in guesses.into_iter().take(settings.max_restarts).enumerate() {
        match descend(problem, settings, &guess, None) {
            Ok(solution) => return Ok(RestartedSolution { solution, guesses: k + 1 }),
            Err(FrameError::NotConverged { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(FrameError::NotConverged { iterations: settings.max_iterations })
}

/// Deterministic golden-angle lattice of `n` directions on the sphere.
pub fn sphere_starts(n: usize) -> Vec<UnitVector3> {
    let golden = PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|k| {
            let z = 1.0 - 2.0 * (k as f64 + START_LATTICE_OFFSET) / n as f64;
            let rho = (1.0 - z * z).max(0.0).sqrt();
            let phi = golden * k as f64 + START_LATTICE_OFFSET;
            UnitVector3::new(rho * phi.cos(), rho * phi.sin(), z).expect("lattice point")
        })
        .collect()
}

/// An orthonormal pair spanning the plane orthogonal to `axis`.
fn plane_basis(axis: &Vec3) -> (Vec3, Vec3) {
    let seed = if axis.z.abs() < 0.9 { Vec3::z() } else { Vec3::x() };
    let u = (seed - axis * axis.dot(&seed)).normalize();
    let v = axis.cross(&u);
    (u, v)
}

/// Deterministic, evenly spaced starts on the great circle orthogonal to `axis`.
pub fn circle_starts(axis: &UnitVector3, n: usize) -> Vec<UnitVector3> {
    let (u, v) = plane_basis(axis.as_vector());
    (0..n)
        .map(|k| {
            let t = 2.0 * PI * (k as f64 + START_LATTICE_OFFSET) / n as f64;
            UnitVector3::from_vector(u * t.cos() + v * t.sin()).expect("circle point")
        })
        .collect()
}

fn merge_solution(found: &mut Vec<MinisumSolution>, candidate: MinisumSolution) {
    if let Some(existing) = found.iter_mut().find(|s| s.direction.angle_to(&candidate.direction) < CLUSTER_ANGLE) {
        if candidate.objective < existing.objective {
            *existing = candidate;
        }
    } else {
        found.push(candidate);
    }
}

fn collect_minima<I>(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    starts: I,
    axis: Option<&Vec3>,
) -> Result<Vec<MinisumSolution>, FrameError>
where
    I: IntoIterator<Item = UnitVector3>,
{
    let mut found = Vec::new();
    for start in starts {
        match descend(problem, settings, &start, axis) {
            Ok(solution) => merge_solution(&mut found, solution),
            Err(FrameError::NotConverged { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    if found.is_empty() {
        return Err(FrameError::NotConverged { iterations: settings.max_iterations });
    }
    found.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    Ok(found)
}

/// All distinct local minima reached from the sphere lattice, best first.
pub fn solve_minisum_global(
    problem: &MinisumProblem,
    settings: &SolverSettings,
) -> Result<Vec<MinisumSolution>, FrameError> {
    settings.validate()?;
    collect_minima(problem, settings, sphere_starts(settings.sphere_starts), None)
}

/// Leading run of solutions tied with the best one.
pub fn co_global(solutions: &[MinisumSolution]) -> &[MinisumSolution] {
    match solutions.first() {
        None => solutions,
        Some(best) => {
            let n = solutions.iter().take_while(|s| s.objective - best.objective <= CO_GLOBAL_TOLERANCE).count();
            &solutions[..n]
        }
    }
}

fn check_in_plane(problem: &MinisumProblem, axis: &UnitVector3) -> Result<(), FrameError> {
    let informative =
        problem.directions.iter().any(|e| e.as_vector().cross(axis.as_vector()).norm() > DEGENERATE_ANGLE.sin());
    if informative {
        Ok(())
    } else {
        Err(FrameError::DegenerateInPlane)
    }
}

/// Descent restricted to the great circle orthogonal to `axis`.
pub fn solve_minisum_constrained(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    axis: &UnitVector3,
    initial: &UnitVector3,
) -> Result<MinisumSolution, FrameError> {
    settings.validate()?;
    if initial.dot(axis).abs() > 1e-10 {
        return Err(FrameError::InitialNotOrthogonal);
    }
    check_in_plane(problem, axis)?;
    descend(problem, settings, initial, Some(axis.as_vector()))
}

/// All distinct constrained minima reached from the circle starts, best first.
pub fn solve_minisum_constrained_global(
    problem: &MinisumProblem,
    settings: &SolverSettings,
    axis: &UnitVector3,
) -> Result<Vec<MinisumSolution>, FrameError> {
    settings.validate()?;
    check_in_plane(problem, axis)?;
    collect_minima(problem, settings, circle_starts(axis, settings.circle_starts), Some(axis.as_vector()))
}

/// Orthonormal triple `[b_α, b_β, b_γ]`; `b_γ = ±(b_α × b_β)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CanonicalFrame {
    pub b_alpha: UnitVector3,
    pub b_beta: UnitVector3,
    pub b_gamma: UnitVector3,
}

impl CanonicalFrame {
    /// Assembles a frame, orthogonalizing `b_beta` against `b_alpha`.
    pub fn from_axes(b_alpha: UnitVector3, b_beta: UnitVector3, right_handed: bool) -> Option<Self> {
        let a = *b_alpha.as_vector();
        let b = UnitVector3::from_vector(b_beta.as_vector() - a * a.dot(b_beta.as_vector()))?;
        let n = a.cross(b.as_vector());
        let c = UnitVector3::from_vector(if right_handed { n } else { -n })?;
        Some(Self { b_alpha, b_beta: b, b_gamma: c })
    }

    pub fn identity() -> Self {
        Self { b_alpha: UnitVector3::x_axis(), b_beta: UnitVector3::y_axis(), b_gamma: UnitVector3::z_axis() }
    }

    /// `R = [b_α b_β b_γ]` (axes as columns).
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::from_columns(&[*self.b_alpha.as_vector(), *self.b_beta.as_vector(), *self.b_gamma.as_vector()])
    }

    pub fn determinant(&self) -> f64 {
        self.matrix().determinant()
    }

    pub fn is_right_handed(&self) -> bool {
        self.determinant() > 0.0
    }

    /// Frame coordinates `Rᵀy`.
    pub fn project(&self, y: &Vec3) -> Vec3 {
        Vec3::new(self.b_alpha.as_vector().dot(y), self.b_beta.as_vector().dot(y), self.b_gamma.as_vector().dot(y))
    }

    /// World coordinates `R ỹ`.
    pub fn unproject(&self, y: &Vec3) -> Vec3 {
        self.b_alpha.as_vector() * y.x + self.b_beta.as_vector() * y.y + self.b_gamma.as_vector() * y.z
    }

    /// The frame carried along by an orthogonal map.
    pub fn transform(&self, m: &Matrix3<f64>) -> Self {
        Self {
            b_alpha: self.b_alpha.transform(m),
            b_beta: self.b_beta.transform(m),
            b_gamma: self.b_gamma.transform(m),
        }
    }

    /// Largest axis-to-axis angle between two frames.
    pub fn max_axis_angle(&self, other: &CanonicalFrame) -> f64 {
        [
            self.b_alpha.angle_to(&other.b_alpha),
            self.b_beta.angle_to(&other.b_beta),
            self.b_gamma.angle_to(&other.b_gamma),
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    /// Frame coefficients, row-major with one axis per row.
    pub fn to_rows(&self) -> [f64; 9] {
        let (a, b, c) = (self.b_alpha, self.b_beta, self.b_gamma);
        [a.x(), a.y(), a.z(), b.x(), b.y(), b.z(), c.x(), c.y(), c.z()]
    }

    /// Rows already unit to rounding are kept bit-for-bit.
    pub fn from_rows(rows: &[f64; 9]) -> Option<Self> {
        let axis = |k: usize| {
            let v = Vec3::new(rows[k], rows[k + 1], rows[k + 2]);
            if (v.norm() - 1.0).abs() <= 4.0 * f64::EPSILON {
                Some(UnitVector3(v))
            } else {
                UnitVector3::from_vector(v)
            }
        };
        Some(Self { b_alpha: axis(0)?, b_beta: axis(3)?, b_gamma: axis(6)? })
    }
}

/// Second axis when the neighborhood offers no in-plane direction: the world
/// z-axis orthogonalized against `b_alpha`, or the y-axis when z is parallel.
pub fn fallback_beta(b_alpha: &UnitVector3) -> UnitVector3 {
    let a = b_alpha.as_vector();
    let seed = if a.z.abs() > 1.0 - 1e-8 { Vec3::y() } else { Vec3::z() };
    UnitVector3::from_vector(seed - a * a.dot(&seed)).expect("seed not parallel to axis")
}

/// Picks the sign of `b_γ` from the kernel sums of the bisector against the
/// atoms on either side of the α–β plane; a tie keeps both signs.
fn orient(problem: &MinisumProblem, b_alpha: &UnitVector3, b_beta: &UnitVector3) -> Vec<CanonicalFrame> {
    let normal = b_alpha.as_vector().cross(b_beta.as_vector());
    let bisector = (b_alpha.as_vector() + b_beta.as_vector()) / 2f64.sqrt();
    let (mut upper, mut lower) = (0.0, 0.0);
    for (e, g) in problem.pairs() {
        let side = e.dot(&normal);
        let k = g * problem.kernel.value(bisector.dot(e));
        if side > HALF_SPACE_BAND {
            upper += k;
        } else if side < -HALF_SPACE_BAND {
            lower += k;
        }
    }
    let tie = HALF_SPACE_BAND * (1.0 + upper + lower);
    let frame = |right_handed| CanonicalFrame::from_axes(*b_alpha, *b_beta, right_handed).expect("orthogonal axes");
    if (upper - lower).abs() <= tie {
        vec![frame(true), frame(false)]
    } else {
        vec![frame(upper < lower)]
    }
}

/// Canonical frames of a neighborhood, one per co-global `(b_α, b_β)` pair.
pub fn canonical_frame(problem: &MinisumProblem, settings: &SolverSettings) -> Result<Vec<CanonicalFrame>, FrameError> {
    let alphas = match collinear_axis(problem) {
        Some(axis) => collinear_minima(problem, &axis),
        None => solve_minisum_global(problem, settings)?,
    };
    let mut frames = Vec::new();
    for alpha in co_global(&alphas) {
        let b_alpha = alpha.direction;
        if problem.len() == 1 {
            frames.push(fallback_frame(&b_alpha));
            continue;
        }
        match solve_minisum_constrained_global(problem, settings, &b_alpha) {
            Ok(betas) => {
                for beta in co_global(&betas) {
                    frames.extend(orient(problem, &b_alpha, &beta.direction));
                }
            }
            Err(FrameError::DegenerateInPlane) => frames.push(fallback_frame(&b_alpha)),
            Err(e) => return Err(e),
        }
    }
    Ok(frames)
}

/// Common line of all directions, if they are collinear.
fn collinear_axis(problem: &MinisumProblem) -> Option<UnitVector3> {
    let first = problem.directions[0];
    let limit = DEGENERATE_ANGLE.sin();
    problem.directions.iter().all(|e| e.as_vector().cross(first.as_vector()).norm() <= limit).then_some(first)
}

/// Global minima of a collinear problem, evaluated in closed form: the two
/// poles of the line and the great circle between them. The circle is a
/// continuum of minima, so it is represented by the fallback direction.
fn collinear_minima(problem: &MinisumProblem, axis: &UnitVector3) -> Vec<MinisumSolution> {
    let ring = fallback_beta(axis);
    let mut minima: Vec<MinisumSolution> = [*axis, axis.neg(), ring]
        .into_iter()
        .map(|direction| MinisumSolution {
            direction,
            objective: problem.objective(direction.as_vector()),
            iterations: 0,
        })
        .collect();
    minima.sort_by(|a, b| a.objective.total_cmp(&b.objective));
    minima
}

fn fallback_frame(b_alpha: &UnitVector3) -> CanonicalFrame {
    CanonicalFrame::from_axes(*b_alpha, fallback_beta(b_alpha), true).expect("orthogonal fallback")
}
