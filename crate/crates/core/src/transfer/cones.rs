//! Membership checks for the invariant cones and the density envelopes.
//!
//! - `C0`: non-negative and non-increasing on each half.
//! - `C1`: additionally `x^d f(x)` and `(x - 1/2)^d f(x)` non-decreasing.
//! - `C2`: additionally `f <= a1 x^(-t1)` on the left, `f <= a2 (x - 1/2)^(-t2)`
//!   on the right, and unit mass.
//!
//! Checks run on grid nodes. Tails are covered analytically: a tail
//! `~t^(-s)` satisfies the `C1` conditions whenever `s <= d`, and stays under
//! an envelope `t^(-t_i)` exactly when `s <= t_i`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::Half;
use crate::rng;
use crate::system::RandomSystem;
use crate::transfer::grid::{Density, DensityGrid, Grid, Tails};
use crate::transfer::operator::apply_operator_unnormalized;

/// Relative slack used by the monotonicity checks.
pub const CONE_SLACK: f64 = 1e-9;

const MASS_TOLERANCE: f64 = 1e-8;
const AUX_POINTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeParams {
    pub d: f64,
    pub beta: f64,
    pub t1: f64,
    pub t2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl ConeParams {
    /// Exponents for `beta` (default: midpoint of the admissible range) and
    /// envelope constants large enough for `C2` to be invariant.
    pub fn new(system: &RandomSystem, beta: Option<f64>) -> Result<Self> {
        let report = system.classify();
        let range = report
            .beta_range
            .ok_or_else(|| Error::Precondition(format!("cone exponents need eta < 1, got eta = {}", report.eta)))?;
        let beta = beta.unwrap_or_else(|| range.default_beta(report.gamma));
        if !range.contains(beta) {
            return Err(Error::InvalidArgument(format!(
                "beta = {beta} outside the admissible range ({}, {}{}",
                range.lower,
                range.upper,
                if range.upper_inclusive { "]" } else { ")" }
            )));
        }
        let d = report.alpha_max + 2.0;
        let t1 = report.alpha_min + 1.0 - beta;
        let t2 = 1.0 - beta;
        let (a1, a2) = sufficient_constants(system, beta, d, t1, t2);
        Ok(Self { d, beta, t1, t2, a1, a2 })
    }

    pub fn with_envelope(self, a1: f64, a2: f64) -> Self {
        Self { a1, a2, ..self }
    }

    pub fn exponent(&self, half: Half) -> f64 {
        match half {
            Half::Left => self.t1,
            Half::Right => self.t2,
        }
    }

    pub fn constant(&self, half: Half) -> f64 {
        match half {
            Half::Left => self.a1,
            Half::Right => self.a2,
        }
    }
}

/// Envelope constants for which one application of `P` maps `C2` into
/// itself, read off the invariance argument:
///
/// ```text
/// a2 = 2^(d+1) (1 + p_S/2) 2^(-t2) / (1 - sum_r p_r K_r^(-beta))
/// a1 = p_S a2 2^(t2-1) (alpha_i + 2) / (p_i (1 - t1))
/// ```
///
/// with `i` a symbol attaining `alpha_min`.
pub fn sufficient_constants(system: &RandomSystem, beta: f64, d: f64, t1: f64, t2: f64) -> (f64, f64) {
    let m = 2f64.powf(d + 1.0);
    let p_s = system.p_lsv();
    let a2 = m * (1.0 + 0.5 * p_s) * 2f64.powf(-t2) / (1.0 - system.attracting_moment(beta));
    let i = system.alpha_min_symbol();
    let (p_i, alpha_i) = (system.probs()[i], system.maps()[i].alpha());
    let a1 = p_s * a2 * 2f64.powf(t2 - 1.0) * (alpha_i + 2.0) / (p_i * (1.0 - t1));
    (a1, a2)
}

/// First pair of nodes (or single node) breaking a condition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Violation {
    pub half: Half,
    pub index: usize,
    /// Coordinate in `[0, 1]` of the node at `index`.
    pub x: f64,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeCheck {
    pub pass: bool,
    pub violation: Option<Violation>,
}

impl ConeCheck {
    fn from(violation: Option<Violation>) -> Self {
        Self { pass: violation.is_none(), violation }
    }
}

fn coordinate(half: Half, t: f64) -> f64 {
    match half {
        Half::Left => t,
        Half::Right => 0.5 + t,
    }
}

/// `f >= 0` and non-increasing on each half, up to `1e-9 * max f`.
pub fn check_cone_c0(f: &DensityGrid) -> ConeCheck {
    let o = f.grid().offsets();
    let slack = CONE_SLACK * f.max(Half::Left).max(f.max(Half::Right));
    for half in [Half::Left, Half::Right] {
        let v = f.values(half);
        if let Some(i) = v.iter().position(|&y| y < 0.0) {
            return ConeCheck::from(Some(Violation { half, index: i, x: coordinate(half, o[i]), lhs: v[i], rhs: 0.0 }));
        }
        if let Some(i) = (0..v.len() - 1).find(|&i| v[i + 1] > v[i] + slack) {
            return ConeCheck::from(Some(Violation {
                half,
                index: i,
                x: coordinate(half, o[i]),
                lhs: v[i + 1],
                rhs: v[i],
            }));
        }
    }
    ConeCheck::from(None)
}

/// `t^d f` non-decreasing on each half (`t` the offset from the singular
/// point), with relative slack `1e-9`.
pub fn check_cone_c1(f: &DensityGrid, params: &ConeParams) -> ConeCheck {
    let o = f.grid().offsets();
    for half in [Half::Left, Half::Right] {
        if f.tails().exponent(half) > params.d {
            return ConeCheck::from(Some(Violation {
                half,
                index: 0,
                x: coordinate(half, o[0]),
                lhs: f.tails().exponent(half),
                rhs: params.d,
            }));
        }
        let v = f.values(half);
        let g: Vec<f64> = o.iter().zip(v).map(|(t, y)| t.powf(params.d) * y).collect();
        if let Some(i) = (0..g.len() - 1).find(|&i| g[i + 1] < g[i] - CONE_SLACK * g[i].abs()) {
            return ConeCheck::from(Some(Violation {
                half,
                index: i,
                x: coordinate(half, o[i]),
                lhs: g[i + 1],
                rhs: g[i],
            }));
        }
    }
    ConeCheck::from(None)
}

/// Smallest `a` with `f(t) <= a t^(-exponent)` on one half, tail included.
pub fn fit_envelope(f: &DensityGrid, half: Half, exponent: f64) -> f64 {
    if f.tails().exponent(half) > exponent + 1e-12 && f.values(half)[0] > 0.0 {
        return f64::INFINITY;
    }
    let o = f.grid().offsets();
    o.iter().zip(f.values(half)).map(|(t, y)| y * t.powf(exponent)).fold(0.0, f64::max)
}

/// Smallest `a` with `f(x) <= a x^(-exponent)` on all of `(0, 1]`: a pole
/// at `0` of order at most `exponent` and none at `1/2`.
pub fn fit_global_envelope(f: &DensityGrid, exponent: f64) -> f64 {
    let left = fit_envelope(f, Half::Left, exponent);
    if f.tails().right > 1e-12 && f.right_values()[0] > 0.0 {
        return f64::INFINITY;
    }
    let o = f.grid().offsets();
    o.iter().zip(f.right_values()).map(|(u, y)| y * (0.5 + u).powf(exponent)).fold(left, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub pass: bool,
    pub fitted_a1: f64,
    pub fitted_a2: f64,
    pub mass: f64,
}

/// Envelope bounds of `C2` with the constants in `params`, plus unit mass.
/// Also reports the smallest constants that would pass.
pub fn check_cone_c2(f: &DensityGrid, params: &ConeParams) -> EnvelopeCheck {
    let fitted_a1 = fit_envelope(f, Half::Left, params.t1);
    let fitted_a2 = fit_envelope(f, Half::Right, params.t2);
    let mass = f.mass();
    let pass = fitted_a1 <= params.a1 && fitted_a2 <= params.a2 && (mass - 1.0).abs() <= MASS_TOLERANCE;
    EnvelopeCheck { pass, fitted_a1, fitted_a2, mass }
}

/// Lipschitz bound on `t^d f` between adjacent nodes:
/// `|x^d f(x) - y^d f(y)| <= a 2^(-d+1+t) d |x - y|`, with `(a, t)` the
/// envelope of the half.
pub fn lipschitz_envelope_check(f: &DensityGrid, params: &ConeParams) -> ConeCheck {
    let o = f.grid().offsets();
    let d = params.d;
    for half in [Half::Left, Half::Right] {
        let lip = params.constant(half) * 2f64.powf(-d + 1.0 + params.exponent(half)) * d;
        let v = f.values(half);
        for i in 0..o.len() - 1 {
            let lhs = (o[i + 1].powf(d) * v[i + 1] - o[i].powf(d) * v[i]).abs();
            let rhs = lip * (o[i + 1] - o[i]);
            if lhs > rhs * (1.0 + CONE_SLACK) {
                return ConeCheck::from(Some(Violation { half, index: i, x: coordinate(half, o[i]), lhs, rhs }));
            }
        }
    }
    ConeCheck::from(None)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Monotone {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxiliaryReport {
    /// `(1 + x)^d / (1 + (alpha + 1) x)` non-decreasing on `[0, 1]`.
    pub ratio_increasing: bool,
    /// Direction claimed for `H_{K,b}`; `None` for `1 < b < 2`.
    pub h_direction: Option<Monotone>,
    pub h_pass: Option<bool>,
    /// `H_{K,b}(1/2) = K^(b-1)`.
    pub h_at_half: f64,
    pub pass: bool,
}

/// `H_{K,b}(x) = (K + 2(1-K)(x - 1/2))^b / (K + 4(1-K)(x - 1/2))` on `[1/2, 1]`.
pub fn h_kb(k: f64, b: f64, x: f64) -> f64 {
    let u = x - 0.5;
    (k + 2.0 * (1.0 - k) * u).powf(b) / (k + 4.0 * (1.0 - k) * u)
}

fn monotone_on(values: impl Iterator<Item = f64>, dir: Monotone) -> bool {
    let v: Vec<f64> = values.collect();
    v.windows(2).all(|w| {
        let tol = 1e-12 * w[0].abs().max(w[1].abs());
        match dir {
            Monotone::Increasing => w[1] >= w[0] - tol,
            Monotone::Decreasing => w[1] <= w[0] + tol,
        }
    })
}

/// Grid checks of the monotone auxiliary functions behind the `C1`
/// invariance: the ratio `(1 + x)^d / (1 + (alpha + 1) x)` and `H_{K,b}`.
pub fn auxiliary_monotone_checks(alpha: f64, k: f64, b: f64, d: f64) -> Result<AuxiliaryReport> {
    let valid = alpha > 0.0 && k > 0.0 && k < 1.0 && b >= 0.0 && d >= alpha + 1.0;
    if !valid {
        return Err(Error::InvalidArgument(format!(
            "need alpha > 0, 0 < K < 1, b >= 0 and d >= alpha + 1; got alpha={alpha}, K={k}, b={b}, d={d}"
        )));
    }
    let xs = (0..AUX_POINTS).map(|i| i as f64 / (AUX_POINTS - 1) as f64);
    let ratio_increasing =
        monotone_on(xs.clone().map(|x| (1.0 + x).powf(d) / (1.0 + (alpha + 1.0) * x)), Monotone::Increasing);
    let h_direction = if b >= 2.0 {
        Some(Monotone::Increasing)
    } else if b <= 1.0 {
        Some(Monotone::Decreasing)
    } else {
        None
    };
    let h_pass = h_direction.map(|dir| monotone_on(xs.map(|x| h_kb(k, b, 0.5 + 0.5 * x)), dir));
    Ok(AuxiliaryReport {
        ratio_increasing,
        h_direction,
        h_pass,
        h_at_half: h_kb(k, b, 0.5),
        pass: ratio_increasing && h_pass.unwrap_or(true),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxiliaryTrial {
    pub alpha: f64,
    pub k: f64,
    pub b: f64,
    pub d: f64,
    pub report: AuxiliaryReport,
}

/// Runs [`auxiliary_monotone_checks`] on `count` random parameter sets from
/// substreams of `seed`. Even trials draw `b` in `[0, 1]`, odd ones in
/// `[2, 4]`, so both claimed directions of `H_{K,b}` are covered.
pub fn auxiliary_trials(seed: u64, count: usize) -> Result<Vec<AuxiliaryTrial>> {
    (0..count as u64)
        .map(|i| {
            let mut r = rng::substream(seed, i);
            let alpha = r.random_range(0.05..2.0);
            let k = r.random_range(0.05..0.95);
            let b = if i % 2 == 0 { r.random_range(0.0..=1.0) } else { r.random_range(2.0..=4.0) };
            let d = alpha + 1.0 + r.random_range(0.0..3.0);
            let report = auxiliary_monotone_checks(alpha, k, b, d)?;
            Ok(AuxiliaryTrial { alpha, k, b, d, report })
        })
        .collect()
}

/// A random member of `C1` built from non-negative combinations of
/// functions that are each in `C1`: a constant, poles `t^(-s)` at either
/// singular point, and cut-offs `1 / (1 + (t/c)^m)` with `m <= d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeMember {
    pub constant: f64,
    pub left_pole: (f64, f64),
    pub right_pole: (f64, f64),
    pub left_cutoff: (f64, f64, f64),
    pub right_cutoff: (f64, f64, f64),
    pub scale: f64,
}

impl ConeMember {
    /// Draws a member whose poles stay within the envelope exponents.
    pub fn random<R: Rng + ?Sized>(params: &ConeParams, rng: &mut R) -> Self {
        let cutoff = |rng: &mut R| {
            let c = (rng.random_range(1e-3f64.ln()..0.5f64.ln())).exp();
            let m = rng.random_range(0.5..params.d - 0.5);
            (rng.random::<f64>(), c, m)
        };
        let left_cutoff = cutoff(rng);
        let right_cutoff = cutoff(rng);
        Self {
            constant: rng.random::<f64>(),
            left_pole: (rng.random::<f64>(), rng.random_range(0.0..params.t1)),
            right_pole: (rng.random::<f64>(), rng.random_range(0.0..=params.t2)),
            left_cutoff,
            right_cutoff,
            scale: 1.0,
        }
    }

    pub fn tails(&self) -> Tails {
        Tails { left: self.left_pole.1, right: self.right_pole.1 }
    }

    fn eval(&self, pole: (f64, f64), cutoff: (f64, f64, f64), t: f64) -> f64 {
        let (w, c, m) = cutoff;
        self.scale * (self.constant + pole.0 * t.powf(-pole.1) + w / (1.0 + (t / c).powf(m)))
    }
}

impl Density for ConeMember {
    fn left(&self, x: f64) -> f64 {
        self.eval(self.left_pole, self.left_cutoff, x)
    }
    fn right(&self, u: f64) -> f64 {
        self.eval(self.right_pole, self.right_cutoff, u)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConeTrial {
    pub member: ConeMember,
    pub input_a1: f64,
    pub input_a2: f64,
    pub output_a1: f64,
    pub output_a2: f64,
    pub c0: ConeCheck,
    pub c1: ConeCheck,
    pub c2: EnvelopeCheck,
}

impl ConeTrial {
    pub fn pass(&self) -> bool {
        self.c0.pass && self.c1.pass && self.c2.pass
    }
}

/// Headroom on the envelope constants in [`cone_preservation`].
pub const ENVELOPE_HEADROOM: f64 = 1.1;

/// Applies `P` once to `count` random normalised members of `C2` and checks
/// the image against `C0`, `C1` and `C2`.
///
/// Each member `g` lies in `C2(a1, a2)` with `a_i = max(fitted_i(g), A_i)`,
/// where `A_i` are the constants in `params` (the invariance is only claimed
/// for large enough constants). The image must satisfy the envelopes with
/// `1.1 a_i`.
pub fn cone_preservation(
    system: &RandomSystem,
    grid: &std::sync::Arc<Grid>,
    params: &ConeParams,
    seed: u64,
    count: usize,
) -> Result<Vec<ConeTrial>> {
    (0..count as u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng::substream(seed, k);
            let mut member = ConeMember::random(params, &mut r);
            let sampled = DensityGrid::sample(grid.clone(), &member, member.tails())?;
            member.scale = 1.0 / sampled.mass();
            let input = DensityGrid::sample(grid.clone(), &member, member.tails())?;
            let input_a1 = fit_envelope(&input, Half::Left, params.t1);
            let input_a2 = fit_envelope(&input, Half::Right, params.t2);
            let out_tails = Tails { left: member.left_pole.1.max(member.right_pole.1), right: member.right_pole.1 };
            let image = apply_operator_unnormalized(system, &member, grid, out_tails)?.normalized()?;
            let envelope = params.with_envelope(
                ENVELOPE_HEADROOM * input_a1.max(params.a1),
                ENVELOPE_HEADROOM * input_a2.max(params.a2),
            );
            let c2 = check_cone_c2(&image, &envelope);
            Ok(ConeTrial {
                member,
                input_a1,
                input_a2,
                output_a1: c2.fitted_a1,
                output_a2: c2.fitted_a2,
                c0: check_cone_c0(&image),
                c1: check_cone_c1(&image, params),
                c2,
            })
        })
        .collect()
}
