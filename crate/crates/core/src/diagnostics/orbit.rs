//! Empirical stationary densities from long random orbits.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::clamp_unit;
use crate::rng;
use crate::system::{RandomSystem, Site};

pub const MIN_STEPS: u64 = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HistogramOptions {
    pub x0: f64,
    pub seed: u64,
    /// Steps per replica, burn-in included.
    pub steps: u64,
    pub bins: usize,
    /// Independent orbits on substreams `0..replicas`.
    pub replicas: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bins: usize,
    /// Fraction of recorded points per bin.
    pub masses: Vec<f64>,
    pub recorded: u64,
    pub burn_in: u64,
}

impl Histogram {
    /// Bin-count density on `[0, 1]`.
    pub fn density(&self) -> Vec<f64> {
        self.masses.iter().map(|m| m * self.bins as f64).collect()
    }

    /// Mass of `[a, b)`, counting whole bins whose left edge lies inside.
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let n = self.bins as f64;
        let (i, j) = ((a * n).ceil() as usize, ((b * n).ceil() as usize).min(self.bins));
        self.masses[i.min(j)..j].iter().sum()
    }
}

#[inline]
fn bin_of(site: Site, bins: usize) -> usize {
    let x = site.x();
    ((x * bins as f64) as usize).min(bins - 1)
}

/// Histogram of one or more orbits started at `x0`; the first 1% of each
/// orbit is discarded.
pub fn orbit_histogram(system: &RandomSystem, options: HistogramOptions) -> Result<Histogram> {
    let x0 = clamp_unit(options.x0)?;
    if options.steps < MIN_STEPS {
        return Err(Error::InvalidArgument(format!("need at least {MIN_STEPS} steps, got {}", options.steps)));
    }
    if options.bins == 0 || options.replicas == 0 {
        return Err(Error::InvalidArgument("bins and replicas must be positive".into()));
    }
    let burn_in = options.steps / 100;
    let bins = options.bins;
    let counts: Vec<Vec<u64>> = (0..options.replicas)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::substream(options.seed, r);
            let mut counts = vec![0u64; bins];
            let mut site = Site::from_x(x0);
            for step in 0..options.steps {
                site = system.step(system.sample_symbol(&mut rng), site);
                if step >= burn_in {
                    counts[bin_of(site, bins)] += 1;
                }
            }
            counts
        })
        .collect();
    let mut total = vec![0u64; bins];
    for c in &counts {
        total.iter_mut().zip(c).for_each(|(t, v)| *t += v);
    }
    let recorded: u64 = total.iter().sum();
    let masses = total.iter().map(|&c| c as f64 / recorded as f64).collect();
    Ok(Histogram { bins, masses, recorded, burn_in })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;

    fn figure2(k: f64) -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, k).unwrap()], vec![0.6, 0.4])
            .unwrap()
    }

    fn opts(x0: f64, seed: u64) -> HistogramOptions {
        HistogramOptions { x0, seed, steps: 200_000, bins: 256, replicas: 1 }
    }

    #[test]
    fn fixed_point_gives_point_mass() {
        let h = orbit_histogram(&figure2(0.2), opts(0.0, 5)).unwrap();
        assert_eq!(h.masses[0], 1.0);
        assert_eq!(h.recorded, 200_000 - 2_000);
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let s = figure2(0.2);
        let o = HistogramOptions { replicas: 4, ..opts(0.3, 9) };
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| orbit_histogram(&s, o));
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| orbit_histogram(&s, o));
        assert_eq!(a.unwrap(), b.unwrap());
        let total: f64 = orbit_histogram(&s, o).unwrap().masses.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weaker_trapping_puts_less_mass_near_half() {
        let o = HistogramOptions { steps: 2_000_000, bins: 200, ..opts(0.3, 1) };
        let strong = orbit_histogram(&figure2(0.2), o).unwrap().mass_between(0.5, 0.51);
        let weak = orbit_histogram(&figure2(0.8), o).unwrap().mass_between(0.5, 0.51);
        assert!(weak < strong, "{weak} vs {strong}");
    }

    #[test]
    fn rejects_short_runs() {
        let o = HistogramOptions { steps: 1000, ..opts(0.3, 1) };
        assert!(orbit_histogram(&figure2(0.2), o).is_err());
    }
}
