//! First returns of the skew product to `Y = ∪_j [j] × (A_j ∪ B_j)`.
//!
//! `A_j = (y_j(1/2), y_j(3/4))` sits in the left half and
//! `B_j = (3/4, z_j(3/4))` in the right half, where `y_j` and `z_j` are the
//! left and right branch inverses of map `j`. A point `(ω, x)` lies in `Y`
//! when `x ∈ A_{ω_1} ∪ B_{ω_1}`, i.e. membership is tested against the
//! symbol about to be applied.
//!
//! Kac's lemma ties the mean return time, taken under the stationary law
//! restricted to `Y`, to the inverse of the stationary mass of `Y`; that mean
//! is infinite when there is no finite stationary measure.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::rng;
use crate::system::{RandomSystem, Site};
use crate::transfer::{Cdf, DensityGrid};

pub const MIN_SAMPLES: usize = 1_000;
pub const DEFAULT_CAP: u64 = 10_000_000;

/// The two intervals of `Y` in the fibre of one symbol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KacFibre {
    pub symbol: usize,
    pub a: (f64, f64),
    pub b: (f64, f64),
}

impl KacFibre {
    #[inline]
    pub fn contains(&self, site: Site) -> bool {
        match site {
            Site::Left(x) => x > self.a.0 && x < self.a.1,
            Site::Right(u) => u > self.b.0 - 0.5 && u < self.b.1 - 0.5,
        }
    }

    pub fn length(&self) -> f64 {
        (self.a.1 - self.a.0) + (self.b.1 - self.b.0).max(0.0)
    }
}

pub fn kac_set(system: &RandomSystem) -> Result<Vec<KacFibre>> {
    system
        .maps()
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let a = (m.left_inverse(0.5)?, m.left_inverse(0.75)?);
            let b = (0.75, m.right_inverse(0.75)?);
            Ok(KacFibre { symbol: j, a, b })
        })
        .collect()
}

/// Number of steps until `(symbol, site)` re-enters the set, or `None` after
/// `cap` steps. Symbols after `symbol` are drawn from `rng`.
pub fn first_return<R, F>(
    system: &RandomSystem,
    symbol: usize,
    site: Site,
    rng: &mut R,
    cap: u64,
    mut in_set: F,
) -> Option<u64>
where
    R: Rng + ?Sized,
    F: FnMut(usize, Site) -> bool,
{
    let mut s = symbol;
    let mut x = site;
    for n in 1..=cap {
        x = system.step(s, x);
        s = system.sample_symbol(rng);
        if in_set(s, x) {
            return Some(n);
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StartLaw {
    /// Stationary density restricted to `Y`.
    Density,
    /// Lebesgue measure restricted to `Y`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnSample {
    pub start_symbol: usize,
    pub start_point: f64,
    /// Return time, or the cap when censored.
    pub return_time: u64,
    pub censored: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KacOptions {
    pub seed: u64,
    pub samples: usize,
    pub cap: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct KacRun {
    pub start_law: StartLaw,
    pub fibres: Vec<KacFibre>,
    /// Stationary mass of `Y` under the start density, when one was given.
    pub set_mass: Option<f64>,
    pub samples: Vec<ReturnSample>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReturnStats {
    pub samples: usize,
    /// Mean with censored samples counted at the cap.
    pub mean: f64,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: u64,
    pub censored: usize,
    pub censored_fraction: f64,
}

impl ReturnStats {
    pub fn of(samples: &[ReturnSample]) -> Self {
        let mut t: Vec<u64> = samples.iter().map(|s| s.return_time).collect();
        t.sort_unstable();
        let n = t.len();
        let q = |p: f64| t[((p * n as f64).ceil() as usize).clamp(1, n) - 1] as f64;
        let censored = samples.iter().filter(|s| s.censored).count();
        Self {
            samples: n,
            mean: t.iter().map(|&v| v as f64).sum::<f64>() / n as f64,
            median: q(0.5),
            q90: q(0.9),
            q99: q(0.99),
            max: t[n - 1],
            censored,
            censored_fraction: censored as f64 / n as f64,
        }
    }
}

impl KacRun {
    /// Statistics of the first `n` samples; runs with the same seed share
    /// prefixes, so nested sizes compare like with like.
    pub fn stats(&self, n: usize) -> ReturnStats {
        ReturnStats::of(&self.samples[..n.min(self.samples.len())])
    }
}

struct Starter<'a> {
    fibres: &'a [KacFibre],
    cdf: Option<Cdf<'a>>,
    symbol_law: WeightedIndex<f64>,
    /// Per fibre: weight of `A` within the fibre.
    a_share: Vec<f64>,
}

impl Starter<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, f64) {
        let j = self.symbol_law.sample(rng);
        let f = &self.fibres[j];
        let (lo, hi) = if rng.random::<f64>() < self.a_share[j] { f.a } else { f.b };
        let u = rng.random::<f64>();
        let x = match &self.cdf {
            None => lo + u * (hi - lo),
            Some(cdf) => cdf.inverse_within(lo, hi, u * cdf.between(lo, hi)),
        };
        (j, x.clamp(lo.next_up(), hi.next_down()))
    }
}

/// Samples first-return times to `Y`.
///
/// Starting fibres follow the stationary law restricted to `Y`: the symbol
/// `j` with weight `p_j mu(A_j ∪ B_j)` and the point from `mu` on
/// `A_j ∪ B_j`, with `mu` the given density or, without one, Lebesgue
/// measure. Sample `i` uses substream `i`, so runs are reproducible and
/// independent of the thread count.
pub fn kac_experiment(system: &RandomSystem, density: Option<&DensityGrid>, options: KacOptions) -> Result<KacRun> {
    if options.samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples, got {}", options.samples)));
    }
    if options.cap == 0 {
        return Err(Error::InvalidArgument("cap must be positive".into()));
    }
    let fibres = kac_set(system)?;
    let cdf = density.map(|d| d.cdf());
    let masses: Vec<(f64, f64)> = match &cdf {
        Some(cdf) => fibres.iter().map(|f| (cdf.between(f.a.0, f.a.1), cdf.between(f.b.0, f.b.1))).collect(),
        None => fibres.iter().map(|f| (f.a.1 - f.a.0, f.b.1 - f.b.0)).collect(),
    };
    let weights: Vec<f64> = system.probs().iter().zip(&masses).map(|(p, (a, b))| p * (a + b)).collect();
    let set_mass = density.map(|_| weights.iter().sum());
    let symbol_law = WeightedIndex::new(&weights)
        .map_err(|e| Error::Precondition(format!("return set has no stationary mass: {e}")))?;
    let a_share = masses.iter().map(|(a, b)| a / (a + b)).collect();
    let starter = Starter { fibres: &fibres, cdf, symbol_law, a_share };

    let samples = (0..options.samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::substream(options.seed, i);
            let (j, x) = starter.draw(&mut r);
            let t = first_return(system, j, Site::from_x(x), &mut r, options.cap, |s, site| fibres[s].contains(site));
            ReturnSample {
                start_symbol: j,
                start_point: x,
                return_time: t.unwrap_or(options.cap),
                censored: t.is_none(),
            }
        })
        .collect();
    Ok(KacRun {
        start_law: if density.is_some() { StartLaw::Density } else { StartLaw::Uniform },
        fibres,
        set_mass,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;
    use crate::transfer::{converged_density, GridSpec};
    use approx::assert_relative_eq;

    fn two(p1: f64, k: f64) -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, k).unwrap()], vec![p1, 1.0 - p1])
            .unwrap()
    }

    #[test]
    fn fibre_endpoints() {
        let s =
            RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(2.0, 0.4).unwrap()], vec![0.5, 0.5])
                .unwrap();
        let y = kac_set(&s).unwrap();
        assert_eq!(y[0].b, (0.75, 0.875));
        assert_relative_eq!(s.maps()[0].eval(y[0].a.0).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(s.maps()[0].eval(y[0].a.1).unwrap(), 0.75, epsilon = 1e-15);
        // x (1 + 2x) = 1/2 and = 3/4 for alpha = 1.
        let m = MapSpec::lsv(1.0).unwrap();
        assert_relative_eq!(m.left_inverse(0.5).unwrap(), (-1.0 + 5f64.sqrt()) / 4.0, epsilon = 1e-15);
        assert_relative_eq!(m.left_inverse(0.75).unwrap(), (-1.0 + 7f64.sqrt()) / 4.0, epsilon = 1e-15);
        assert!(y[0].a.0 < y[0].a.1);
        // 1/2 + 0.4 u + 1.2 u^2 = 3/4.
        let u = (-0.4 + (0.16f64 + 4.8 * 0.25).sqrt()) / 2.4;
        assert_relative_eq!(y[1].b.1, 0.5 + u, epsilon = 1e-15);
        assert_relative_eq!(y[1].b.1, 0.819246, epsilon = 1e-7);
        assert_relative_eq!(MapSpec::attracting(2.0, 0.4).unwrap().eval(y[1].b.1).unwrap(), 0.75, epsilon = 1e-12);
    }

    #[test]
    fn first_return_can_take_one_step() {
        let s = two(0.6, 0.2);
        let mut r = rng::substream(1, 0);
        // Every point of the target set lies in [0, 1], so one step suffices.
        let t = first_return(&s, 0, Site::from_x(0.3), &mut r, 10, |_, _| true);
        assert_eq!(t, Some(1));
        let t = first_return(&s, 0, Site::from_x(0.0), &mut r, 10, |_, site| site.x() > 0.5);
        assert_eq!(t, None);
    }

    #[test]
    fn returns_avoid_one_step_for_these_fibres() {
        let s = two(0.6, 0.2);
        let run = kac_experiment(&s, None, KacOptions { seed: 3, samples: 2000, cap: 100_000 }).unwrap();
        assert_eq!(run.start_law, StartLaw::Uniform);
        assert!(run.samples.iter().all(|x| x.return_time >= 2));
        for x in &run.samples {
            let f = &run.fibres[x.start_symbol];
            let p = x.start_point;
            assert!((p > f.a.0 && p < f.a.1) || (p > f.b.0 && p < f.b.1));
        }
    }

    #[test]
    fn mean_return_time_matches_inverse_set_mass() {
        // Kac: the mean return time under the stationary law on Y is 1 / m(Y).
        let s = two(0.6, 0.8);
        let g = GridSpec::with_nodes(1024).build().unwrap();
        let f = converged_density(&s, g, 200_000, 1e-11).unwrap().density;
        let run = kac_experiment(&s, Some(&f), KacOptions { seed: 1, samples: 100_000, cap: 10_000_000 }).unwrap();
        let stats = run.stats(100_000);
        let kac = 1.0 / run.set_mass.unwrap();
        assert_eq!(stats.censored, 0);
        assert!((stats.mean / kac - 1.0).abs() < 0.05, "mean {} against {}", stats.mean, kac);
    }

    #[test]
    fn stats_quantiles() {
        let samples: Vec<ReturnSample> = (1..=100)
            .map(|t| ReturnSample { start_symbol: 0, start_point: 0.3, return_time: t, censored: t == 100 })
            .collect();
        let st = ReturnStats::of(&samples);
        assert_eq!(st.median, 50.0);
        assert_eq!(st.q90, 90.0);
        assert_eq!(st.max, 100);
        assert_eq!(st.censored, 1);
        assert_relative_eq!(st.mean, 50.5, epsilon = 1e-12);
    }
}
