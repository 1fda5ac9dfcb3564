//! The two map families and their branch inverses.
//!
//! Every map shares the intermittent left branch `x (1 + (2x)^alpha)` on
//! `[0, 1/2]`. LSV maps continue with the doubling branch `2x - 1` on
//! `(1/2, 1]`; attracting maps continue with the quadratic branch
//! `1/2 + K (x - 1/2) + 2 (1 - K) (x - 1/2)^2`, which fixes `1/2` (as a right
//! limit) and `1`, with slope `K < 1` at `1/2`.
//!
//! The point `1/2` belongs to the left half. Quantities that are one-sided at
//! `1/2` take a [`BranchPoint`] so the caller states which half is meant.

use serde::Serialize;

use crate::error::{Error, Result};

/// Points this far outside `[0, 1]` are clamped instead of rejected.
pub const DOMAIN_TOLERANCE: f64 = 1e-12;

const LEFT_INVERSE_MAX_ITER: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MapKind {
    Lsv,
    Attracting,
}

/// Which half-interval a point belongs to: `(0, 1/2]` or `(1/2, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Half {
    Left,
    Right,
}

/// A point in `[0, 1]` tagged with the half it is evaluated on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchPoint {
    pub x: f64,
    pub side: Half,
}

impl BranchPoint {
    pub fn left(x: f64) -> Self {
        Self { x, side: Half::Left }
    }

    pub fn right(x: f64) -> Self {
        Self { x, side: Half::Right }
    }

    /// Tags `x` by the default membership rule: `x <= 1/2` is left.
    pub fn at(x: f64) -> Self {
        if x <= 0.5 {
            Self::left(x)
        } else {
            Self::right(x)
        }
    }

    fn validate(self) -> Result<Self> {
        let x = clamp_unit(self.x)?;
        match self.side {
            Half::Left if x > 0.5 => Err(Error::Domain { x, domain: "[0, 1/2] (left half)" }),
            Half::Right if x < 0.5 => Err(Error::Domain { x, domain: "[1/2, 1] (right half)" }),
            _ => Ok(Self { x, side: self.side }),
        }
    }
}

/// One interval map: an LSV map `S_alpha` or an attracting map `R_{alpha,K}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapSpec {
    kind: MapKind,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    kappa: Option<f64>,
}

/// Left-branch preimage `y` of a point together with `xi = (2y)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeftPreimage {
    pub y: f64,
    pub xi: f64,
}

impl MapSpec {
    pub fn lsv(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { kind: MapKind::Lsv, alpha, kappa: None })
    }

    pub fn attracting(alpha: f64, kappa: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(kappa > 0.0 && kappa < 1.0) {
            return Err(Error::InvalidSystem(format!("attracting slope K must lie in (0, 1), got {kappa}")));
        }
        Ok(Self { kind: MapKind::Attracting, alpha, kappa: Some(kappa) })
    }

    pub fn kind(&self) -> MapKind {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Slope `K` at the fixed point `1/2`; `None` for LSV maps.
    pub fn kappa(&self) -> Option<f64> {
        self.kappa
    }

    pub fn is_attracting(&self) -> bool {
        self.kind == MapKind::Attracting
    }

    /// Evaluates the map at `x`, using the left branch for `x <= 1/2`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let x = clamp_unit(x)?;
        Ok(if x <= 0.5 { self.eval_left(x) } else { self.eval_right_offset(x - 0.5) + 0.5 })
    }

    /// Left branch without domain checks. Exact at `x = 1/2`.
    #[inline]
    pub fn eval_left(&self, x: f64) -> f64 {
        x * (1.0 + (2.0 * x).powf(self.alpha))
    }

    /// Right branch in offset coordinates: maps `u = x - 1/2` to `T(x) - 1/2`.
    #[inline]
    pub fn eval_right_offset(&self, u: f64) -> f64 {
        match self.kappa {
            None => 2.0 * u - 0.5,
            Some(k) => u * (k + 2.0 * (1.0 - k) * u),
        }
    }

    /// One-sided derivative; at `x = 1/2` the side picks the branch.
    pub fn derivative(&self, point: BranchPoint) -> Result<f64> {
        let p = point.validate()?;
        Ok(match p.side {
            Half::Left => self.left_derivative_from_xi((2.0 * p.x).powf(self.alpha)),
            Half::Right => self.right_derivative_offset(p.x - 0.5),
        })
    }

    /// `1 + (alpha + 1) xi` where `xi = (2x)^alpha`.
    #[inline]
    pub fn left_derivative_from_xi(&self, xi: f64) -> f64 {
        1.0 + (self.alpha + 1.0) * xi
    }

    #[inline]
    pub fn right_derivative_offset(&self, u: f64) -> f64 {
        match self.kappa {
            None => 2.0,
            Some(k) => k + 4.0 * (1.0 - k) * u,
        }
    }

    /// Inverse of the left branch: the unique `y` in `[0, 1/2]` with `T(y) = x`.
    pub fn left_inverse(&self, x: f64) -> Result<f64> {
        Ok(self.left_preimage(x)?.y)
    }

    /// `xi(x) = (2 y(x))^alpha`.
    pub fn xi(&self, x: f64) -> Result<f64> {
        Ok(self.left_preimage(x)?.xi)
    }

    /// Left-branch preimage and the matching `xi`.
    ///
    /// Safeguarded Newton iteration on the bracket `[x / (1 + (2x)^alpha), min(x, 1/2)]`;
    /// the branch is convex and increasing with derivative at least 1, so a
    /// handful of steps reach full double precision. The stopping rule is
    /// relative so preimages of very small points keep all their digits.
    pub fn left_preimage(&self, x: f64) -> Result<LeftPreimage> {
        let x = clamp_unit(x)?;
        if x == 0.0 {
            return Ok(LeftPreimage { y: 0.0, xi: 0.0 });
        }
        if x == 1.0 {
            return Ok(LeftPreimage { y: 0.5, xi: 1.0 });
        }
        let a = self.alpha;
        let mut lo = x / (1.0 + (2.0 * x).powf(a));
        let mut hi = x.min(0.5);
        let mut y = lo;
        for _ in 0..LEFT_INVERSE_MAX_ITER {
            let xi = (2.0 * y).powf(a);
            let g = y * (1.0 + xi) - x;
            if g == 0.0 {
                return Ok(LeftPreimage { y, xi });
            }
            if g < 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let newton = y - g / (1.0 + (a + 1.0) * xi);
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            let tol = 2.0 * f64::EPSILON * next;
            if (next - y).abs() <= tol || hi - lo <= tol {
                return Ok(LeftPreimage { y: next, xi: (2.0 * next).powf(a) });
            }
            y = next;
        }
        Err(Error::Convergence {
            what: "left-branch inverse",
            iterations: LEFT_INVERSE_MAX_ITER,
            residual: (self.eval_left(y) - x).abs(),
        })
    }

    /// Right-branch inverse on `(1/2, 1]`, dispatching on the map kind.
    pub fn right_inverse(&self, x: f64) -> Result<f64> {
        match self.kind {
            MapKind::Lsv => right_inverse_lsv(x),
            MapKind::Attracting => self.right_inverse_attracting(x),
        }
    }

    /// Inverse of the quadratic right branch of an attracting map.
    pub fn right_inverse_attracting(&self, x: f64) -> Result<f64> {
        if self.kappa.is_none() {
            return Err(Error::InvalidArgument("right_inverse_attracting on an LSV map".into()));
        }
        let x = clamp_unit(x)?;
        if x <= 0.5 {
            return Err(Error::Domain { x, domain: "(1/2, 1]" });
        }
        Ok(0.5 + self.right_inverse_attracting_offset(x - 0.5))
    }

    /// Offset form of the attracting inverse: given `v = x - 1/2 > 0`, returns
    /// `u = z_r(x) - 1/2`.
    ///
    /// Uses `u = 2v / (K + sqrt(K^2 + 8(1-K)v))`, the rationalised quadratic
    /// root, which has no cancellation for small `v` nor for `K` close to 1.
    #[inline]
    pub fn right_inverse_attracting_offset(&self, v: f64) -> f64 {
        let k = self.kappa.unwrap_or(1.0);
        2.0 * v / (k + (k * k + 8.0 * (1.0 - k) * v).sqrt())
    }
}

/// Inverse of the LSV right branch: `z(x) = (x + 1) / 2`.
pub fn right_inverse_lsv(x: f64) -> Result<f64> {
    let x = clamp_unit(x)?;
    if x <= 0.0 {
        return Err(Error::Domain { x, domain: "(0, 1]" });
    }
    Ok(0.5 * (x + 1.0))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidSystem(format!("alpha must be positive and finite, got {alpha}")))
    }
}

pub(crate) fn clamp_unit(x: f64) -> Result<f64> {
    if !(-DOMAIN_TOLERANCE..=1.0 + DOMAIN_TOLERANCE).contains(&x) {
        return Err(Error::Domain { x, domain: "[0, 1]" });
    }
    Ok(x.clamp(0.0, 1.0))
}
