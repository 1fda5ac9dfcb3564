//! Random compositions: a finite family of maps chosen i.i.d. with a fixed
//! probability vector, the phase thresholds `eta` and `gamma`, and orbit
//! sampling for the skew product.
//!
//! Symbols are 0-based indices into [`RandomSystem::maps`]. Exported files
//! print them 1-based.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{clamp_unit, MapSpec};
use crate::rng::{self, StreamRng};

/// Tolerance on `sum(p) = 1`.
pub const PROB_SUM_TOLERANCE: f64 = 1e-12;

/// Half-width of the band around `eta = 1` reported as [`Phase::Critical`].
pub const CRITICAL_BAND: f64 = 1e-12;

const GAMMA_TOLERANCE: f64 = 1e-13;

#[derive(Debug, Clone, Serialize)]
pub struct RandomSystem {
    maps: Vec<MapSpec>,
    probs: Vec<f64>,
    #[serde(skip)]
    sampler: WeightedIndex<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Phase {
    /// `eta < 1`: a unique absolutely continuous stationary probability exists.
    FiniteACS,
    /// `eta > 1`: no absolutely continuous stationary probability.
    NoFiniteACS,
    /// `eta` within the critical band around 1; no claim is made.
    Critical,
}

/// Admissible envelope exponents `beta` in `(alpha_min, gamma) ∩ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaRange {
    /// Exclusive lower end, `alpha_min`.
    pub lower: f64,
    /// Upper end, `min(gamma, 1)`.
    pub upper: f64,
    /// True when `gamma > 1`, so that `beta = 1` itself is admissible.
    pub upper_inclusive: bool,
}

impl BetaRange {
    pub fn contains(&self, beta: f64) -> bool {
        beta > self.lower && (beta < self.upper || (self.upper_inclusive && beta == self.upper))
    }

    /// Midpoint of `(alpha_min, gamma)`, capped at 1.
    pub fn default_beta(&self, gamma: f64) -> f64 {
        (0.5 * (self.lower + gamma)).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    pub eta: f64,
    pub gamma: f64,
    pub alpha_min: f64,
    pub alpha_max: f64,
    pub phase: Phase,
    pub beta_range: Option<BetaRange>,
}

/// A point of `[0, 1]` stored so that both singular points keep full relative
/// precision: left-half points by their coordinate, right-half points by their
/// offset `x - 1/2 > 0`.
///
/// Orbits trapped near `1/2` from above approach it geometrically; in plain
/// coordinates they would round onto `1/2` after a few dozen steps and be
/// thrown to `1` by the left branch instead of to `0` by the LSV branch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Site {
    Left(f64),
    Right(f64),
}

impl Site {
    pub fn from_x(x: f64) -> Self {
        if x <= 0.5 {
            Site::Left(x)
        } else {
            Site::Right(x - 0.5)
        }
    }

    pub fn x(self) -> f64 {
        match self {
            Site::Left(x) => x,
            Site::Right(u) => 0.5 + u,
        }
    }

    fn from_left_image(y: f64) -> Self {
        if y <= 0.5 {
            Site::Left(y)
        } else {
            // Exact by Sterbenz for y in (1/2, 1].
            Site::Right((y - 0.5).min(0.5))
        }
    }
}

/// A realised symbol sequence and the orbit it drives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitTrace {
    pub seed: Option<u64>,
    pub word: Vec<usize>,
    pub points: Vec<f64>,
}

impl RandomSystem {
    pub fn new(maps: Vec<MapSpec>, probs: Vec<f64>) -> Result<Self> {
        if maps.len() < 2 {
            return Err(Error::InvalidSystem(format!("need at least two maps, got {}", maps.len())));
        }
        if probs.len() != maps.len() {
            return Err(Error::InvalidSystem(format!("{} maps but {} probabilities", maps.len(), probs.len())));
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidSystem(format!("probabilities must be strictly positive, got {p}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > PROB_SUM_TOLERANCE {
            return Err(Error::InvalidSystem(format!("probabilities sum to {total}, not 1")));
        }
        if !maps.iter().any(|m| !m.is_attracting()) {
            return Err(Error::InvalidSystem("at least one LSV map is required".into()));
        }
        if !maps.iter().any(|m| m.is_attracting()) {
            return Err(Error::InvalidSystem("at least one attracting map is required".into()));
        }
        let alpha_min = maps.iter().map(|m| m.alpha()).fold(f64::INFINITY, f64::min);
        if alpha_min >= 1.0 {
            return Err(Error::InvalidSystem(format!("alpha_min must be below 1, got {alpha_min}")));
        }
        let sampler =
            WeightedIndex::new(&probs).map_err(|e| Error::InvalidSystem(format!("probability vector: {e}")))?;
        Ok(Self { maps, probs, sampler })
    }

    pub fn maps(&self) -> &[MapSpec] {
        &self.maps
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    /// `(p_j, map_j)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, &MapSpec)> + '_ {
        self.probs.iter().copied().zip(self.maps.iter())
    }

    /// `(p_r, K_r)` over the attracting maps.
    pub fn attracting(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.iter().filter_map(|(p, m)| m.kappa().map(|k| (p, k)))
    }

    pub fn alpha_min(&self) -> f64 {
        self.maps.iter().map(|m| m.alpha()).fold(f64::INFINITY, f64::min)
    }

    pub fn alpha_max(&self) -> f64 {
        self.maps.iter().map(|m| m.alpha()).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the first map attaining `alpha_min`.
    pub fn alpha_min_symbol(&self) -> usize {
        let a = self.alpha_min();
        self.maps.iter().position(|m| m.alpha() == a).unwrap_or(0)
    }

    /// Total probability of the LSV maps, `p_S`.
    pub fn p_lsv(&self) -> f64 {
        self.iter().filter(|(_, m)| !m.is_attracting()).map(|(p, _)| p).sum()
    }

    /// `sum_r p_r K_r^(-delta)` over the attracting maps.
    pub fn attracting_moment(&self, delta: f64) -> f64 {
        self.attracting().map(|(p, k)| p * k.powf(-delta)).sum()
    }

    /// `eta = sum_r p_r K_r^(-alpha_min)`.
    pub fn eta(&self) -> f64 {
        self.attracting_moment(self.alpha_min())
    }

    /// `gamma = sup { delta >= 0 : sum_r p_r K_r^(-delta) < 1 }`.
    ///
    /// The moment is continuous and strictly increasing in `delta`, below 1 at
    /// `delta = 0` (some mass sits on LSV maps) and unbounded, so `gamma` is its
    /// unique crossing of 1. Bracketed by doubling from `[0, 1]`, then bisected.
    pub fn gamma(&self) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while self.attracting_moment(hi) < 1.0 {
            lo = hi;
            hi *= 2.0;
            if !hi.is_finite() {
                return f64::INFINITY;
            }
        }
        for _ in 0..200 {
            if hi - lo <= GAMMA_TOLERANCE * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.attracting_moment(mid) < 1.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn classify(&self) -> PhaseReport {
        self.classify_with(CRITICAL_BAND)
    }

    pub fn classify_with(&self, tol: f64) -> PhaseReport {
        let eta = self.eta();
        let gamma = self.gamma();
        let alpha_min = self.alpha_min();
        let phase = if eta < 1.0 - tol {
            Phase::FiniteACS
        } else if eta > 1.0 + tol {
            Phase::NoFiniteACS
        } else {
            Phase::Critical
        };
        let beta_range = (phase == Phase::FiniteACS).then(|| BetaRange {
            lower: alpha_min,
            upper: gamma.min(1.0),
            upper_inclusive: gamma > 1.0,
        });
        PhaseReport { eta, gamma, alpha_min, alpha_max: self.alpha_max(), phase, beta_range }
    }

    /// Draws one symbol according to the probability vector.
    #[inline]
    pub fn sample_symbol<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.sampler.sample(rng)
    }

    /// `n` i.i.d. symbols from the main stream of `seed`.
    pub fn sample_word(&self, seed: u64, n: usize) -> Vec<usize> {
        let mut rng = rng::substream(seed, rng::MAIN_STREAM);
        self.sample_word_with(&mut rng, n)
    }

    pub fn sample_word_with(&self, rng: &mut StreamRng, n: usize) -> Vec<usize> {
        (0..n).map(|_| self.sample_symbol(rng)).collect()
    }

    /// Applies map `symbol` to `x` without domain checks.
    #[inline]
    pub fn apply(&self, symbol: usize, x: f64) -> f64 {
        let m = &self.maps[symbol];
        let y = if x <= 0.5 { m.eval_left(x) } else { 0.5 + m.eval_right_offset(x - 0.5) };
        y.min(1.0)
    }

    /// Applies map `symbol` to a site, keeping offset precision near `1/2`.
    #[inline]
    pub fn step(&self, symbol: usize, site: Site) -> Site {
        let m = &self.maps[symbol];
        match site {
            Site::Left(x) => Site::from_left_image(m.eval_left(x)),
            Site::Right(u) => match m.kappa() {
                None => Site::from_left_image(2.0 * u),
                Some(_) => Site::Right(m.eval_right_offset(u).min(0.5)),
            },
        }
    }

    /// Orbit of `x0` under `T_{word[n-1]} ∘ ... ∘ T_{word[0]}`.
    pub fn iterate_orbit(&self, x0: f64, word: &[usize]) -> Result<OrbitTrace> {
        let x0 = clamp_unit(x0)?;
        if let Some(s) = word.iter().find(|s| **s >= self.len()) {
            return Err(Error::InvalidArgument(format!("symbol {s} out of range")));
        }
        let mut points = Vec::with_capacity(word.len() + 1);
        points.push(x0);
        let mut site = Site::from_x(x0);
        for &s in word {
            site = self.step(s, site);
            points.push(site.x());
        }
        Ok(OrbitTrace { seed: None, word: word.to_vec(), points })
    }

    /// Samples a word of length `n` from `seed` and iterates `x0` along it.
    pub fn sample_orbit(&self, seed: u64, x0: f64, n: usize) -> Result<OrbitTrace> {
        let word = self.sample_word(seed, n);
        let mut trace = self.iterate_orbit(x0, &word)?;
        trace.seed = Some(seed);
        Ok(trace)
    }

    /// The same system with probability vector `probs`.
    pub fn with_probs(&self, probs: Vec<f64>) -> Result<Self> {
        Self::new(self.maps.clone(), probs)
    }
}
