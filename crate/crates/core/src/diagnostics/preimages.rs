//! Left-branch preimage sequences of `1/2`.
//!
//! For a fixed symbol `j`: `x_1(j) = 1/2`, `x_n(j) = y_j(x_{n-1}(j))`, which
//! decays like `n^(-1/alpha_j)`. For a word `ω`:
//! `x_n(ω) = y_{ω_1} ∘ ... ∘ y_{ω_{n-1}}(1/2)`. Since `y_i <= y_j` pointwise
//! whenever `alpha_i <= alpha_j`, the sequence of an `alpha_min` symbol is a
//! lower bound for every word.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::MapSpec;
use crate::rng;
use crate::system::RandomSystem;

pub const MAX_N: usize = 10_000;
pub const ORDERING_TOLERANCE: f64 = 1e-14;

/// `x_1(j), ..., x_n(j)` for a single map.
pub fn preimage_sequence(map: &MapSpec, n: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(n);
    let mut x = 0.5;
    for k in 0..n {
        if k > 0 {
            x = map.left_inverse(x)?;
        }
        out.push(x);
    }
    Ok(out)
}

/// `x_n(ω)` for a word `ω` of length at least `n - 1`.
pub fn word_preimage(system: &RandomSystem, word: &[usize], n: usize) -> Result<f64> {
    if n == 0 || word.len() + 1 < n {
        return Err(Error::InvalidArgument(format!("word of length {} too short for n = {n}", word.len())));
    }
    let mut x = 0.5;
    for &s in word[..n - 1].iter().rev() {
        x = system.maps()[s].left_inverse(x)?;
    }
    Ok(x)
}

/// Indices `n` at which word sequences are evaluated: every `n <= 100`, then
/// about 20 per decade.
pub fn checkpoints(n_max: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (1..=n_max.min(100)).collect();
    let mut v = 100.0f64;
    while (v as usize) < n_max {
        v *= 10f64.powf(0.05);
        let n = (v.round() as usize).min(n_max);
        if n > *out.last().unwrap() {
            out.push(n);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RatioBounds {
    pub symbol: usize,
    pub alpha: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub spread: f64,
    pub pass: bool,
}

/// Extremes of `x_n(j) n^(1/alpha_j)` over `n` in `[10, n_max]`.
pub fn ratio_bounds(map: &MapSpec, symbol: usize, n_max: usize, max_spread: f64) -> Result<RatioBounds> {
    let seq = preimage_sequence(map, n_max)?;
    let inv = 1.0 / map.alpha();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for (k, x) in seq.iter().enumerate().skip(9) {
        let r = x * ((k + 1) as f64).powf(inv);
        lo = lo.min(r);
        hi = hi.max(r);
    }
    let spread = hi / lo;
    Ok(RatioBounds { symbol, alpha: map.alpha(), ratio_min: lo, ratio_max: hi, spread, pass: spread <= max_spread })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PreimageReport {
    pub n_max: usize,
    pub ratios: Vec<RatioBounds>,
    pub words: usize,
    /// Symbol attaining `alpha_min` used as the lower bound.
    pub lower_symbol: usize,
    /// Largest `x_n(i) - x_n(ω)` over words and checkpoints.
    pub worst_ordering_gap: f64,
    pub ordering_pass: bool,
    pub pass: bool,
}

/// Ratio bounds for every map and the ordering `x_n(i) <= x_n(ω)` over
/// `words` random words drawn from substreams of `seed`.
pub fn preimage_bounds_check(system: &RandomSystem, seed: u64, n_max: usize, words: usize) -> Result<PreimageReport> {
    if !(10..=MAX_N).contains(&n_max) {
        return Err(Error::InvalidArgument(format!("n_max must lie in [10, {MAX_N}], got {n_max}")));
    }
    let ratios =
        system.maps().iter().enumerate().map(|(j, m)| ratio_bounds(m, j, n_max, 100.0)).collect::<Result<Vec<_>>>()?;
    let i = system.alpha_min_symbol();
    let lower = preimage_sequence(&system.maps()[i], n_max)?;
    let points = checkpoints(n_max);
    let gaps = (0..words as u64)
        .into_par_iter()
        .map(|w| {
            let mut r = rng::substream(seed, w);
            let word = system.sample_word_with(&mut r, n_max);
            points
                .iter()
                .try_fold(f64::NEG_INFINITY, |acc, &n| Ok(acc.max(lower[n - 1] - word_preimage(system, &word, n)?)))
        })
        .collect::<Result<Vec<f64>>>()?;
    let worst = gaps.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let ordering_pass = worst <= ORDERING_TOLERANCE;
    let pass = ordering_pass && ratios.iter().all(|r| r.pass);
    Ok(PreimageReport { n_max, ratios, words, lower_symbol: i, worst_ordering_gap: worst, ordering_pass, pass })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn system(a1: f64, a2: f64) -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(a1).unwrap(), MapSpec::attracting(a2, 0.3).unwrap()], vec![0.5, 0.5])
            .unwrap()
    }

    #[test]
    fn sequences_start_at_half_and_decrease() {
        let m = MapSpec::lsv(1.0).unwrap();
        let seq = preimage_sequence(&m, 1000).unwrap();
        assert_eq!(seq[0], 0.5);
        assert_relative_eq!(seq[1], (-1.0 + 5f64.sqrt()) / 4.0, epsilon = 1e-15);
        assert!(seq.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0));
    }

    #[test]
    fn ratio_is_bounded_for_half_alpha() {
        let r = ratio_bounds(&MapSpec::lsv(0.5).unwrap(), 0, 10_000, 100.0).unwrap();
        assert!(r.pass && r.spread < 2.0, "{r:?}");
    }

    #[test]
    fn constant_word_reproduces_fixed_sequence() {
        let s = system(0.5, 0.8);
        let seq = preimage_sequence(&s.maps()[0], 300).unwrap();
        let word = vec![0; 300];
        for n in [1, 2, 50, 300] {
            assert_eq!(word_preimage(&s, &word, n).unwrap(), seq[n - 1]);
        }
    }

    #[test]
    fn ordering_holds_for_random_words() {
        let r = preimage_bounds_check(&system(0.8, 0.5), 4, 2000, 20).unwrap();
        assert_eq!(r.lower_symbol, 1);
        assert!(r.ordering_pass && r.worst_ordering_gap <= 0.0);
    }

    #[test]
    fn checkpoint_layout() {
        let c = checkpoints(10_000);
        assert_eq!(&c[..3], &[1, 2, 3]);
        assert_eq!(*c.last().unwrap(), 10_000);
        assert!(c.windows(2).all(|w| w[1] > w[0]));
        assert!(preimage_bounds_check(&system(0.5, 0.5), 1, 20_000, 1).is_err());
    }
}
