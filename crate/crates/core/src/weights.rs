//! Radial weight functions: the density scaling `W_c` that fades atoms out at
//! the cutoff, and the normalized weight `w(r)` inside the distance integral.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightError {
    #[error("invalid {what}: {detail}")]
    InvalidParameter { what: &'static str, detail: String },
    #[error("integral weight {spec} integrates to {integral}, expected 1")]
    NotNormalized { spec: String, integral: f64 },
}

fn invalid(what: &'static str, detail: impl Into<String>) -> WeightError {
    WeightError::InvalidParameter { what, detail: detail.into() }
}

/// Compact polynomial `-b sᵃ + a sᵇ` in the complementary coordinate `s = 1 - r/h`.
fn bell_numerator(s: f64, a: f64, b: f64) -> f64 {
    -b * s.powf(a) + a * s.powf(b)
}

/// `∫₀¹ sᵖ (1-s)² ds`.
fn beta_moment(p: f64) -> f64 {
    2.0 / ((p + 1.0) * (p + 2.0) * (p + 3.0))
}

/// Density scaling `W_c(r)`: unity at the center, zero at and beyond the cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DensityScaling {
    /// `(1 - r/R_c)ᵗ`, `t > 2`.
    Tent { t: f64, cutoff: f64 },
    /// `[-b sᵃ + a sᵇ]/(a - b)`, `a > b > 2`.
    BellPoly { a: f64, b: f64, cutoff: f64 },
}

impl DensityScaling {
    pub fn tent(t: f64, cutoff: f64) -> Result<Self, WeightError> {
        let s = DensityScaling::Tent { t, cutoff };
        s.validate()?;
        Ok(s)
    }

    pub fn bell_poly(a: f64, b: f64, cutoff: f64) -> Result<Self, WeightError> {
        let s = DensityScaling::BellPoly { a, b, cutoff };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), WeightError> {
        if !(self.cutoff() > 0.0 && self.cutoff().is_finite()) {
            return Err(invalid("cutoff", format!("{} is not positive", self.cutoff())));
        }
        match *self {
            DensityScaling::Tent { t, .. } if !(t > 2.0) => {
                Err(invalid("tent exponent", format!("t = {t} must exceed 2")))
            }
            DensityScaling::BellPoly { a, b, .. } if !(a > b && b > 2.0) => {
                Err(invalid("bell exponents", format!("need a > b > 2, got a = {a}, b = {b}")))
            }
            _ => Ok(()),
        }
    }

    pub fn cutoff(&self) -> f64 {
        match *self {
            DensityScaling::Tent { cutoff, .. } | DensityScaling::BellPoly { cutoff, .. } => cutoff,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        let cutoff = self.cutoff();
        if r >= cutoff {
            return 0.0;
        }
        let s = 1.0 - r / cutoff;
        match *self {
            DensityScaling::Tent { t, .. } => s.powf(t),
            DensityScaling::BellPoly { a, b, .. } => bell_numerator(s, a, b) / (a - b),
        }
    }

    /// Same shape, different cutoff.
    pub fn with_cutoff(&self, cutoff: f64) -> Self {
        match *self {
            DensityScaling::Tent { t, .. } => DensityScaling::Tent { t, cutoff },
            DensityScaling::BellPoly { a, b, .. } => DensityScaling::BellPoly { a, b, cutoff },
        }
    }
}

impl fmt::Display for DensityScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DensityScaling::Tent { t, cutoff } => write!(f, "tent(t={t},rc={cutoff})"),
            DensityScaling::BellPoly { a, b, cutoff } => {
                write!(f, "bell-poly(a={a},b={b},rc={cutoff})")
            }
        }
    }
}

/// Shape of the integral weight, before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum WeightKind {
    /// Bell polynomial normalized over the ball of radius `cutoff`.
    BellPoly { a: f64, b: f64, cutoff: f64 },
    /// Tent normalized over the ball of radius `cutoff`.
    Tent { t: f64, cutoff: f64 },
    /// `exp(-r/l) / (8π l³)`.
    Laplacian { length: f64 },
    /// `3 / (4π R_c³)` inside the ball.
    Constant { cutoff: f64 },
}

impl fmt::Display for WeightKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WeightKind::BellPoly { a, b, cutoff } => write!(f, "bell-poly(a={a},b={b},rc={cutoff})"),
            WeightKind::Tent { t, cutoff } => write!(f, "tent(t={t},rc={cutoff})"),
            WeightKind::Laplacian { length } => write!(f, "laplacian(l={length})"),
            WeightKind::Constant { cutoff } => write!(f, "constant(rc={cutoff})"),
        }
    }
}

/// Normalized radial weight `w(r)` with `∫ w dV = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralWeight {
    kind: WeightKind,
    scale: f64,
}

impl IntegralWeight {
    /// Computes the normalization and checks it by numerical integration.
    pub fn new(kind: WeightKind) -> Result<Self, WeightError> {
        let positive = |what, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(what, format!("{v} is not positive")))
            }
        };
        let scale = match kind {
            WeightKind::BellPoly { a, b, cutoff } => {
                positive("cutoff", cutoff)?;
                if !(a > b && b > 2.0) {
                    return Err(invalid("bell exponents", format!("need a > b > 2, got a = {a}, b = {b}")));
                }
                let h3 = cutoff.powi(3);
                1.0 / (8.0
                    * PI
                    * h3
                    * (a / (b.powi(3) + 6.0 * b * b + 11.0 * b + 6.0) - b / (a.powi(3) + 6.0 * a * a + 11.0 * a + 6.0)))
            }
            WeightKind::Tent { t, cutoff } => {
                positive("cutoff", cutoff)?;
                if !(t > 2.0) {
                    return Err(invalid("tent exponent", format!("t = {t} must exceed 2")));
                }
                1.0 / (4.0 * PI * cutoff.powi(3) * beta_moment(t))
            }
            WeightKind::Laplacian { length } => {
                positive("laplacian length", length)?;
                1.0 / (8.0 * PI * length.powi(3))
            }
            WeightKind::Constant { cutoff } => {
                positive("cutoff", cutoff)?;
                3.0 / (4.0 * PI * cutoff.powi(3))
            }
        };
        let weight = Self { kind, scale };
        let integral = weight.volume_integral();
        if (integral - 1.0).abs() > 1e-6 {
            return Err(WeightError::NotNormalized { spec: kind.to_string(), integral });
        }
        Ok(weight)
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    /// Radius beyond which the weight vanishes, if any.
    pub fn support(&self) -> Option<f64> {
        match self.kind {
            WeightKind::BellPoly { cutoff, .. } | WeightKind::Tent { cutoff, .. } | WeightKind::Constant { cutoff } => {
                Some(cutoff)
            }
            WeightKind::Laplacian { .. } => None,
        }
    }

    pub fn value(&self, r: f64) -> f64 {
        match self.kind {
            WeightKind::Laplacian { length } => self.scale * (-r / length).exp(),
            WeightKind::BellPoly { a, b, cutoff } => {
                if r >= cutoff {
                    0.0
                } else {
                    self.scale * bell_numerator(1.0 - r / cutoff, a, b)
                }
            }
            WeightKind::Tent { t, cutoff } => {
                if r >= cutoff {
                    0.0
                } else {
                    self.scale * (1.0 - r / cutoff).powf(t)
                }
            }
            WeightKind::Constant { cutoff } => {
                if r < cutoff {
                    self.scale
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫ w dV` by composite Gauss-Legendre over the support.
    pub fn volume_integral(&self) -> f64 {
        let upper = match self.kind {
            WeightKind::Laplacian { length } => 80.0 * length,
            _ => self.support().expect("compact weight"),
        };
        4.0 * PI * gauss_legendre_panels(|r| self.value(r) * r * r, 0.0, upper, 400)
    }
}

impl fmt::Display for IntegralWeight {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.kind.fmt(f)
    }
}

/// Composite 5-point Gauss-Legendre rule on `panels` equal subintervals.
pub(crate) fn gauss_legendre_panels(f: impl Fn(f64) -> f64, lo: f64, hi: f64, panels: usize) -> f64 {
    const NODES: [f64; 5] =
        [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const WEIGHTS: [f64; 5] = [
        0.568_888_888_888_888_9,
        0.478_628_670_499_366_5,
        0.478_628_670_499_366_5,
        0.236_926_885_056_189_1,
        0.236_926_885_056_189_1,
    ];
    let h = (hi - lo) / panels as f64;
    (0..panels)
        .map(|k| {
            let mid = lo + (k as f64 + 0.5) * h;
            NODES.iter().zip(WEIGHTS).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
        })
        .sum()
}
