//! Radial (generalized Gauss-Laguerre), angular (Lebedev) and composite 3D
//! quadrature grids on which density fields are sampled.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::frame::{UnitVector3, Vec3};
use crate::weights::IntegralWeight;

/// Radial orders covered by the published table.
pub const TABULATED_RADIAL_ORDERS: std::ops::RangeInclusive<usize> = 2..=6;

/// Largest radial order accepted; orders past the table come from the same recurrence.
pub const MAX_RADIAL_ORDER: usize = 20;

/// Supported Lebedev node counts.
pub const LEBEDEV_COUNTS: [usize; 5] = [6, 14, 26, 38, 50];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("unsupported {rule} order {order}")]
    UnsupportedOrder { rule: &'static str, order: usize },
    #[error("{layers} angular layers given for radial order {radial}")]
    LayerCountMismatch { layers: usize, radial: usize },
    #[error("outer radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("node {node} at radius {radius} has non-positive weight {weight}")]
    NonPositiveWeight { node: usize, radius: f64, weight: f64 },
}

/// Gauss rule for `∫₀^∞ f(r) r² e⁻ʳ dr`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl RadialRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(r, a)| a * f(*r)).sum()
    }
}

/// Generalized Gauss-Laguerre rule with weight `r² e⁻ʳ` (Golub-Welsch).
pub fn laguerre_rule(order: usize) -> Result<RadialRule, QuadratureError> {
    if !(TABULATED_RADIAL_ORDERS.start()..=&MAX_RADIAL_ORDER).contains(&&order) {
        return Err(QuadratureError::UnsupportedOrder { rule: "laguerre", order });
    }
    const ALPHA: f64 = 2.0;
    // Jacobi matrix of the monic generalized Laguerre recurrence
    let jacobi = DMatrix::from_fn(order, order, |i, j| {
        if i == j {
            2.0 * i as f64 + ALPHA + 1.0
        } else if i.abs_diff(j) == 1 {
            let k = i.max(j) as f64;
            (k * (k + ALPHA)).sqrt()
        } else {
            0.0
        }
    });
    let mut nodes: Vec<f64> = jacobi.symmetric_eigen().eigenvalues.iter().copied().collect();
    nodes.sort_by(f64::total_cmp);
    // Newton polish, then w = Γ(n+α+1) / (n! x L'(x)²) with Γ(n+3)/n! = (n+1)(n+2)
    let scale = ((order + 1) * (order + 2)) as f64;
    let mut weights = Vec::with_capacity(order);
    for x in &mut nodes {
        for _ in 0..3 {
            let (p, dp) = laguerre_value(order, ALPHA, *x);
            *x -= p / dp;
        }
        let (_, dp) = laguerre_value(order, ALPHA, *x);
        weights.push(scale / (*x * dp * dp));
    }
    Ok(RadialRule { nodes, weights })
}

/// `L_n^(α)(x)` and its derivative from the three-term recurrence.
fn laguerre_value(n: usize, alpha: f64, x: f64) -> (f64, f64) {
    let (mut prev, mut cur) = (1.0, 1.0 + alpha - x);
    for k in 1..n {
        let k = k as f64;
        let next = ((2.0 * k + 1.0 + alpha - x) * cur - (k + alpha) * prev) / (k + 1.0);
        prev = cur;
        cur = next;
    }
    let n = n as f64;
    (cur, (n * cur - (n + alpha) * prev) / x)
}

/// Lebedev rule on the unit sphere; weights sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularRule {
    pub nodes: Vec<UnitVector3>,
    pub weights: Vec<f64>,
}

impl AngularRule {
    pub fn count(&self) -> usize {
        self.nodes.len()
    }

    /// Mean of `f` over the sphere.
    pub fn average(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(q, b)| b * f(q.as_vector())).sum()
    }
}

struct LebedevBuilder {
    nodes: Vec<UnitVector3>,
    weights: Vec<f64>,
}

impl LebedevBuilder {
    fn new() -> Self {
        Self { nodes: Vec::new(), weights: Vec::new() }
    }

    fn push(&mut self, x: f64, y: f64, z: f64, w: f64) {
        self.nodes.push(UnitVector3::new(x, y, z).expect("nonzero node"));
        self.weights.push(w);
    }

    /// Octahedron vertices.
    fn a1(&mut self, w: f64) -> &mut Self {
        for axis in 0..3 {
            for s in [1.0, -1.0] {
                let mut p = [0.0; 3];
                p[axis] = s;
                self.push(p[0], p[1], p[2], w);
            }
        }
        self
    }

    /// Edge midpoints of the cube: `(0, ±a, ±a)` and permutations.
    fn a2(&mut self, w: f64) -> &mut Self {
        let a = 0.5f64.sqrt();
        for zero in 0..3 {
            for (s1, s2) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                let (u, v) = (s1 * a, s2 * a);
                let v = match zero {
                    0 => [0.0, u, v],
                    1 => [u, 0.0, v],
                    _ => [u, v, 0.0],
                };
                self.push(v[0], v[1], v[2], w);
            }
        }
        self
    }

    /// Cube corners `(±1, ±1, ±1)/√3`.
    fn a3(&mut self, w: f64) -> &mut Self {
        let a = (1.0f64 / 3.0).sqrt();
        for sx in [1.0, -1.0] {
            for sy in [1.0, -1.0] {
                for sz in [1.0, -1.0] {
                    self.push(sx * a, sy * a, sz * a, w);
                }
            }
        }
        self
    }

    /// `(±l, ±l, ±m)` and its cyclic placements, `m = √(1 - 2l²)`.
    fn bk(&mut self, l: f64, w: f64) -> &mut Self {
        let m = (1.0 - 2.0 * l * l).sqrt();
        for odd in [2usize, 1, 0] {
            for s0 in [1.0, -1.0] {
                for s1 in [1.0, -1.0] {
                    for s2 in [1.0, -1.0] {
                        let mut v = [s0 * l, s1 * l, s2 * l];
                        v[odd] = [s0, s1, s2][odd] * m;
                        self.push(v[0], v[1], v[2], w);
                    }
                }
            }
        }
        self
    }

    /// `(±p, ±q, 0)` with all coordinate placements, `q = √(1 - p²)`.
    fn ck(&mut self, p: f64, w: f64) -> &mut Self {
        let q = (1.0 - p * p).sqrt();
        for (zero, lo, hi) in [(2usize, 0usize, 1usize), (1, 0, 2), (0, 1, 2)] {
            for (u, v) in [(p, q), (q, p)] {
                for (su, sv) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                    let mut c = [0.0; 3];
                    c[lo] = su * u;
                    c[hi] = sv * v;
                    debug_assert_eq!(c[zero], 0.0);
                    self.push(c[0], c[1], c[2], w);
                }
            }
        }
        self
    }

    fn finish(&mut self) -> AngularRule {
        AngularRule { nodes: std::mem::take(&mut self.nodes), weights: std::mem::take(&mut self.weights) }
    }
}

/// Lebedev rule with `count` nodes, built from exact symmetry-class constants.
pub fn lebedev_rule(count: usize) -> Result<AngularRule, QuadratureError> {
    let mut b = LebedevBuilder::new();
    let rule = match count {
        6 => b.a1(1.0 / 6.0).finish(),
        14 => b.a1(1.0 / 15.0).a3(3.0 / 40.0).finish(),
        26 => b.a1(1.0 / 21.0).a2(4.0 / 105.0).a3(9.0 / 280.0).finish(),
        38 => {
            let p = ((1.0 - (1.0f64 / 3.0).sqrt()) / 2.0).sqrt();
            b.a1(1.0 / 105.0).a3(9.0 / 280.0).ck(p, 1.0 / 35.0).finish()
        }
        50 => {
            b.a1(4.0 / 315.0).a2(64.0 / 2835.0).a3(27.0 / 1280.0).bk(1.0 / 11f64.sqrt(), 14641.0 / 725_760.0).finish()
        }
        _ => return Err(QuadratureError::UnsupportedOrder { rule: "lebedev", order: count }),
    };
    Ok(rule)
}

/// One spherical shell of the composite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLayer {
    /// Node radius after scaling.
    pub radius: f64,
    /// Laguerre abscissa before scaling.
    pub laguerre_node: f64,
    pub radial_weight: f64,
    pub angular: AngularRule,
}

/// Composite Laguerre × Lebedev grid with weights baked in.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureGrid {
    layers: Vec<GridLayer>,
    scale: f64,
    outer_radius: f64,
    volume_factor: bool,
    weight_spec: String,
    nodes: Vec<Vec3>,
    weights: Vec<f64>,
    layer_index: Vec<usize>,
    hash: u64,
}

impl QuadratureGrid {
    pub fn layers(&self) -> &[GridLayer] {
        &self.layers
    }

    /// Radial scale `τ = R* / max r_n`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Whether the `τ³` Jacobian is included in the weights.
    pub fn has_volume_factor(&self) -> bool {
        self.volume_factor
    }

    pub fn weight_spec(&self) -> &str {
        &self.weight_spec
    }

    pub fn nodes(&self) -> &[Vec3] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Layer of each node, inner to outer.
    pub fn layer_index(&self) -> &[usize] {
        &self.layer_index
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Identity derived from node positions and weights.
    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// `Σ w_k f(r_k)`, approximating `∫ w(r) f(r) dV`.
    pub fn integrate(&self, f: impl Fn(&Vec3) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(r, w)| w * f(r)).sum()
    }
}

fn grid_hash(nodes: &[Vec3], weights: &[f64]) -> u64 {
    let mut h = Sha256::new();
    h.update(b"decaf-grid-v1");
    h.update((nodes.len() as u64).to_le_bytes());
    for (r, w) in nodes.iter().zip(weights) {
        for c in [r.x, r.y, r.z, *w] {
            h.update(c.to_le_bytes());
        }
    }
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Builds the composite grid: Lebedev shells of `angular_per_layer[n]` nodes
/// at Laguerre radii scaled so the outer shell sits at `outer_radius`. Node
/// weights are `4π α_n β_m w(r_k) e^{r_n}`, times `τ³` when `volume_factor`.
pub fn composite_grid(
    radial_order: usize,
    angular_per_layer: &[usize],
    outer_radius: f64,
    weight: &IntegralWeight,
    volume_factor: bool,
) -> Result<QuadratureGrid, QuadratureError> {
    if angular_per_layer.len() != radial_order {
        return Err(QuadratureError::LayerCountMismatch { layers: angular_per_layer.len(), radial: radial_order });
    }
    if !(outer_radius > 0.0 && outer_radius.is_finite()) {
        return Err(QuadratureError::InvalidRadius(outer_radius));
    }
    let radial = laguerre_rule(radial_order)?;
    let scale = outer_radius / radial.nodes.last().copied().expect("order >= 2");
    let jacobian = if volume_factor { scale.powi(3) } else { 1.0 };

    let mut layers = Vec::with_capacity(radial_order);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let mut layer_index = Vec::new();
    for (n, (&count, (&r_n, &alpha))) in
        angular_per_layer.iter().zip(radial.nodes.iter().zip(&radial.weights)).enumerate()
    {
        let angular = lebedev_rule(count)?;
        let radius = if n + 1 == radial_order { outer_radius } else { scale * r_n };
        for (q, beta) in angular.nodes.iter().zip(&angular.weights) {
            let weight_k = 4.0 * PI * alpha * beta * weight.value(radius) * r_n.exp() * jacobian;
            if !(weight_k > 0.0 && weight_k.is_finite()) {
                return Err(QuadratureError::NonPositiveWeight { node: nodes.len(), radius, weight: weight_k });
            }
            nodes.push(q.as_vector() * radius);
            weights.push(weight_k);
            layer_index.push(n);
        }
        layers.push(GridLayer { radius, laguerre_node: r_n, radial_weight: alpha, angular });
    }
    let hash = grid_hash(&nodes, &weights);
    Ok(QuadratureGrid {
        layers,
        scale,
        outer_radius,
        volume_factor,
        weight_spec: weight.to_string(),
        nodes,
        weights,
        layer_index,
        hash,
    })
}
