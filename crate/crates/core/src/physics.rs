//! Potentials and pointwise monotone solves.
//!
//! The logarithmic potential `h(r) = r ln r + (1 - r) ln(1 - r)` scaled by the
//! quench factor `phi(alpha) = alpha^p` approximates the subdifferential of
//! the indicator of `[0, 1]` as `alpha -> 0`. Both pointwise resolvents used by
//! the time stepper live here.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smooth part `F` of the double obstacle potential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SmoothPotential {
    /// `F(r) = -(c/2) (2r - 1)^2`
    ConcaveQuadratic { c: f64 },
}

/// Coupling function `g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Coupling {
    /// `g(r) = r`
    Linear,
    /// `g(r) = r (2 - r)`
    Quadratic,
    /// `g = 0` (degenerate, decouples the chemical potential equation)
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialConfig {
    pub smooth: SmoothPotential,
    pub coupling: Coupling,
    /// Exponent `p` in `phi(alpha) = alpha^p`.
    pub quench_exponent: f64,
}

impl Default for PotentialConfig {
    fn default() -> Self {
        Self {
            smooth: SmoothPotential::ConcaveQuadratic { c: 1.0 },
            coupling: Coupling::Linear,
            quench_exponent: 1.0,
        }
    }
}

impl PotentialConfig {
    /// Validates `g >= 0` and `g'' <= 0` on a 1001-point sample of `[0, 1]`.
    pub fn new(smooth: SmoothPotential, coupling: Coupling, quench_exponent: f64) -> Result<Self> {
        let cfg = Self {
            smooth,
            coupling,
            quench_exponent,
        };
        if !(quench_exponent.is_finite() && quench_exponent > 0.0) {
            return Err(Error::Config(format!(
                "quench exponent must be positive, got {quench_exponent}"
            )));
        }
        let SmoothPotential::ConcaveQuadratic { c } = smooth;
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::Assumption {
                tag: "A1",
                message: format!("smooth potential coefficient must be finite and >= 0, got {c}"),
            });
        }
        for k in 0..=1000 {
            let r = k as f64 / 1000.0;
            if cfg.g(r) < 0.0 {
                return Err(Error::Assumption {
                    tag: "A1",
                    message: format!("g({r}) = {} < 0", cfg.g(r)),
                });
            }
            if cfg.g_second(r) > 0.0 {
                return Err(Error::Assumption {
                    tag: "A1",
                    message: format!("g''({r}) = {} > 0", cfg.g_second(r)),
                });
            }
        }
        Ok(cfg)
    }

    pub fn f_value(&self, r: f64) -> f64 {
        let SmoothPotential::ConcaveQuadratic { c } = self.smooth;
        -0.5 * c * (2.0 * r - 1.0).powi(2)
    }

    pub fn f_prime(&self, r: f64) -> f64 {
        let SmoothPotential::ConcaveQuadratic { c } = self.smooth;
        -2.0 * c * (2.0 * r - 1.0)
    }

    pub fn f_second(&self, _r: f64) -> f64 {
        let SmoothPotential::ConcaveQuadratic { c } = self.smooth;
        -4.0 * c
    }

    pub fn g(&self, r: f64) -> f64 {
        match self.coupling {
            Coupling::Linear => r,
            Coupling::Quadratic => r * (2.0 - r),
            Coupling::Zero => 0.0,
        }
    }

    pub fn g_prime(&self, r: f64) -> f64 {
        match self.coupling {
            Coupling::Linear => 1.0,
            Coupling::Quadratic => 2.0 - 2.0 * r,
            Coupling::Zero => 0.0,
        }
    }

    pub fn g_second(&self, _r: f64) -> f64 {
        match self.coupling {
            Coupling::Linear | Coupling::Zero => 0.0,
            Coupling::Quadratic => -2.0,
        }
    }

    pub fn phi(&self, alpha: f64) -> f64 {
        alpha.powf(self.quench_exponent)
    }

    pub fn quench_level(&self, alpha: f64) -> Result<QuenchLevel> {
        QuenchLevel::new(alpha, self.quench_exponent)
    }
}

/// Quench parameter `alpha` in `(0, 1]` together with `phi(alpha)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuenchLevel {
    alpha: f64,
    phi: f64,
}

impl QuenchLevel {
    pub fn new(alpha: f64, exponent: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Domain(format!("alpha must lie in (0, 1], got {alpha}")));
        }
        Ok(Self {
            alpha,
            phi: alpha.powf(exponent),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi(&self) -> f64 {
        self.phi
    }
}

/// Either a deep-quench level or the limiting double obstacle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Level {
    Quench(QuenchLevel),
    Obstacle,
}

impl Level {
    /// `alpha`, with 0 standing for the obstacle problem.
    pub fn alpha(&self) -> f64 {
        match self {
            Level::Quench(q) => q.alpha(),
            Level::Obstacle => 0.0,
        }
    }

    pub fn phi(&self) -> f64 {
        match self {
            Level::Quench(q) => q.phi(),
            Level::Obstacle => 0.0,
        }
    }

    /// `alpha = 0` maps to the obstacle.
    pub fn from_alpha(alpha: f64, exponent: f64) -> Result<Self> {
        if alpha == 0.0 {
            Ok(Level::Obstacle)
        } else {
            Ok(Level::Quench(QuenchLevel::new(alpha, exponent)?))
        }
    }
}

fn xlnx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

pub fn h_value(r: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::Domain(format!("h is defined on [0, 1], got {r}")));
    }
    Ok(xlnx(r) + xlnx(1.0 - r))
}

pub fn h_prime(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("h' is defined on (0, 1), got {r}")));
    }
    Ok((r / (1.0 - r)).ln())
}

pub fn h_second(r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Domain(format!("h'' is defined on (0, 1), got {r}")));
    }
    Ok(1.0 / (r * (1.0 - r)))
}

/// Largest double strictly below 1.
pub const RHO_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;
/// Smallest positive normal double.
pub const RHO_FLOOR: f64 = f64::MIN_POSITIVE;

fn logistic(y: f64) -> f64 {
    if y >= 0.0 {
        1.0 / (1.0 + (-y).exp())
    } else {
        let e = y.exp();
        e / (1.0 + e)
    }
}

/// Unique `r` in `(0, 1)` with `r + s h'(r) = b`.
///
/// Solved as `logistic(y) + s y = b` for the logit `y = h'(r)`, whose root is
/// bracketed by `[(b - 1)/s, b/s]`; Newton steps that leave the bracket are
/// replaced by bisection. Roots closer to an endpoint than double precision
/// resolves are returned as [`RHO_FLOOR`] or [`RHO_CEIL`].
pub fn resolvent_quench(b: f64, s: f64) -> Result<f64> {
    if !(s > 0.0 && s.is_finite()) {
        return Err(Error::Domain(format!("quench resolvent needs s > 0, got {s}")));
    }
    if !b.is_finite() {
        return Err(Error::Domain(format!("quench resolvent needs finite b, got {b}")));
    }
    let residual = |y: f64| logistic(y) + s * y - b;
    let mut lo = (b - 1.0) / s;
    let mut hi = b / s;
    let mut y = {
        let r0 = b.clamp(1e-12, 1.0 - 1e-12);
        (r0 / (1.0 - r0)).ln().clamp(lo, hi)
    };
    let tol = 1e-15 * b.abs().max(1.0);
    for _ in 0..200 {
        let gv = residual(y);
        if gv.abs() <= tol {
            break;
        }
        if gv > 0.0 {
            hi = y;
        } else {
            lo = y;
        }
        let r = logistic(y);
        let slope = r * (1.0 - r) + s;
        let mut next = y - gv / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if next == y || hi - lo <= 4.0 * f64::EPSILON * y.abs().max(1.0) {
            y = next;
            break;
        }
        y = next;
    }
    Ok(logistic(y).clamp(RHO_FLOOR, RHO_CEIL))
}

/// Implicit step for the obstacle: `r = clip(b, 0, 1)`, `xi = (b - r)/tau`.
pub fn resolvent_obstacle(b: f64, tau: f64) -> (f64, f64) {
    let r = b.clamp(0.0, 1.0);
    (r, (b - r) / tau)
}

/// Membership test `xi` in the subdifferential of the indicator of `[0, 1]` at `r`.
pub fn in_obstacle_subdifferential(r: f64, xi: f64) -> bool {
    if r == 0.0 {
        xi <= 0.0
    } else if r == 1.0 {
        xi >= 0.0
    } else if r > 0.0 && r < 1.0 {
        xi == 0.0
    } else {
        false
    }
}
