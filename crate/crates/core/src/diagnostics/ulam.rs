//! Ulam discretisation of the annealed operator on equal bins.
//!
//! Entry `(i, k)` is `sum_j p_j |B_i ∩ T_j^{-1} B_k| / |B_i|`. Every branch is
//! monotone, so the overlaps are differences of branch preimages of the bin
//! edges; nothing is sampled.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::MapSpec;
use crate::system::RandomSystem;

pub const MIN_BINS: usize = 64;
pub const STATIONARY_TOLERANCE: f64 = 1e-12;
pub const MAX_STATIONARY_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, Serialize)]
pub struct UlamModel {
    pub bins: usize,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
    /// Stationary probability vector (bin masses).
    pub stationary: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Preimages of all bin edges under the two branches of one map.
struct EdgePreimages {
    left: Vec<f64>,
    right: Vec<f64>,
}

impl EdgePreimages {
    fn new(map: &MapSpec, bins: usize) -> Result<Self> {
        let edge = |k: usize| k as f64 / bins as f64;
        let left = (0..=bins).map(|k| map.left_inverse(edge(k))).collect::<Result<Vec<_>>>()?;
        let right = (0..=bins)
            .map(|k| {
                let c = edge(k);
                match map.kappa() {
                    None => 0.5 * (c + 1.0),
                    // Edges at or below 1/2 have no preimage in the right half.
                    Some(_) if c <= 0.5 => 0.5,
                    Some(_) => 0.5 + map.right_inverse_attracting_offset(c - 0.5),
                }
            })
            .collect();
        Ok(Self { left, right })
    }
}

/// Adds `weight * |[lo, hi] ∩ pre(B_k)|` for every target bin `k`.
fn spread(pre: &[f64], lo: f64, hi: f64, weight: f64, row: &mut Vec<(u32, f64)>) {
    if hi <= lo {
        return;
    }
    // pre is non-decreasing; find the bins whose preimage meets [lo, hi].
    let first = pre.partition_point(|&p| p <= lo).saturating_sub(1);
    for k in first..pre.len() - 1 {
        if pre[k] >= hi {
            break;
        }
        let overlap = pre[k + 1].min(hi) - pre[k].max(lo);
        if overlap > 0.0 {
            row.push((k as u32, weight * overlap));
        }
    }
}

impl UlamModel {
    pub fn build(system: &RandomSystem, bins: usize) -> Result<Self> {
        if bins < MIN_BINS || !bins.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("bins must be a power of two >= {MIN_BINS}, got {bins}")));
        }
        let pre = system.maps().iter().map(|m| EdgePreimages::new(m, bins)).collect::<Result<Vec<_>>>()?;
        let width = 1.0 / bins as f64;
        let rows: Vec<Vec<(u32, f64)>> = (0..bins)
            .into_par_iter()
            .map(|i| {
                let (a, b) = (i as f64 * width, (i + 1) as f64 * width);
                let mut row = Vec::new();
                for ((p, _), e) in system.iter().zip(&pre) {
                    let w = p / width;
                    spread(&e.left, a, b.min(0.5), w, &mut row);
                    spread(&e.right, a.max(0.5), b, w, &mut row);
                }
                row.sort_by_key(|&(k, _)| k);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(row.len());
                for (k, v) in row {
                    match merged.last_mut() {
                        Some((last, acc)) if *last == k => *acc += v,
                        _ => merged.push((k, v)),
                    }
                }
                let total: f64 = merged.iter().map(|e| e.1).sum();
                merged.iter_mut().for_each(|e| e.1 /= total);
                merged
            })
            .collect();
        let mut row_start = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for r in rows {
            for (k, v) in r {
                cols.push(k);
                vals.push(v);
            }
            row_start.push(cols.len());
        }
        let mut model = Self { bins, row_start, cols, vals, stationary: Vec::new(), iterations: 0, residual: f64::NAN };
        model.solve_stationary()?;
        Ok(model)
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_start[i]..self.row_start[i + 1];
        self.cols[r.clone()].iter().zip(&self.vals[r]).map(|(&k, &v)| (k as usize, v))
    }

    pub fn row_sum(&self, i: usize) -> f64 {
        self.row(i).map(|(_, v)| v).sum()
    }

    /// `pi T` for a row vector `pi`.
    pub fn push_forward(&self, pi: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.bins];
        for (i, &m) in pi.iter().enumerate() {
            if m != 0.0 {
                for (k, v) in self.row(i) {
                    out[k] += m * v;
                }
            }
        }
        out
    }

    fn solve_stationary(&mut self) -> Result<()> {
        let mut pi = vec![1.0 / self.bins as f64; self.bins];
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_STATIONARY_ITERATIONS {
            let mut next = self.push_forward(&pi);
            let total: f64 = next.iter().sum();
            next.iter_mut().for_each(|v| *v /= total);
            residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if residual < STATIONARY_TOLERANCE {
                self.stationary = pi;
                self.iterations = it;
                self.residual = residual;
                return Ok(());
            }
        }
        Err(Error::Convergence { what: "Ulam stationary vector", iterations: MAX_STATIONARY_ITERATIONS, residual })
    }

    /// Stationary vector as a density on `[0, 1]` (value per bin).
    pub fn density(&self) -> Vec<f64> {
        self.stationary.iter().map(|m| m * self.bins as f64).collect()
    }
}

/// `L^1` distance between two bin-mass vectors on the same bins.
pub fn binned_l1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch(format!("{} bins against {}", a.len(), b.len())));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum())
}
