//! The annealed transfer operator `P = sum_j p_j P_{T_j}` and power iteration.
//!
//! For `x` in the left half
//!
//! ```text
//! Pf(x) = sum_j p_j f(y_j) / (1 + (alpha_j + 1) xi_j) + p_S f(z) / 2
//! ```
//!
//! and in the right half the attracting branches add
//! `sum_r p_r f(z_r) / DR_r(z_r)`. Here `y_j` is the left-branch preimage,
//! `xi_j = (2 y_j)^alpha_j`, `z = (x + 1) / 2` and `z_r` the attracting
//! right-branch preimage.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::{BranchPoint, Half};
use crate::system::{Phase, RandomSystem};
use crate::transfer::grid::{Density, DensityGrid, Grid, Tails};

/// Residual at which power iteration stops early.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

/// Tail exponents assigned to operator outputs below the first grid node.
///
/// With `g = min(gamma, 1)`, a stationary density behaves like
/// `(x - 1/2)^(-(1 - g))` just above `1/2`: the attracting branches rescale
/// that pole by `K_r` and `sum_r p_r K_r^(-g) = 1` when `gamma < 1`. The LSV
/// branches feed mass from `(1/2, 1/2 + x/2]` into `[0, x]` at rate `~x^g`
/// while the neutral fixed point lets it leave at rate `~x^(1 + alpha_min)
/// f(x)`, so `f(x) ~ x^(-(1 + alpha_min - g))` near 0.
///
/// Outside the finite-measure phase those exponents are not integrable; the
/// exponents of the `gamma >= 1` case are used instead so iterates stay
/// normalisable.
pub fn stationary_tails(system: &RandomSystem) -> Tails {
    let report = system.classify();
    if report.phase == Phase::FiniteACS {
        let g = report.gamma.min(1.0);
        Tails { left: 1.0 + report.alpha_min - g, right: 1.0 - g }
    } else {
        Tails { left: report.alpha_min, right: 0.0 }
    }
}

fn check_density_domain(x: f64) -> Result<()> {
    if x > 0.0 && x <= 0.5 {
        Ok(())
    } else {
        Err(Error::Domain { x, domain: "(0, 1/2] (offset within a half)" })
    }
}

/// `Pf` at a left-half point `x` in `(0, 1/2]`.
pub fn apply_left<D: Density + ?Sized>(system: &RandomSystem, f: &D, x: f64) -> Result<f64> {
    check_density_domain(x)?;
    let mut acc = 0.0;
    let mut p_lsv = 0.0;
    for (p, m) in system.iter() {
        let pre = m.left_preimage(x)?;
        acc += p * f.left(pre.y) / m.left_derivative_from_xi(pre.xi);
        if !m.is_attracting() {
            p_lsv += p;
        }
    }
    Ok(acc + 0.5 * p_lsv * f.right(0.5 * x))
}

/// `Pf` at the right-half point `1/2 + u`, `u` in `(0, 1/2]`.
pub fn apply_right<D: Density + ?Sized>(system: &RandomSystem, f: &D, u: f64) -> Result<f64> {
    check_density_domain(u)?;
    let x = 0.5 + u;
    let mut acc = 0.0;
    let mut p_lsv = 0.0;
    for (p, m) in system.iter() {
        let pre = m.left_preimage(x)?;
        acc += p * f.left(pre.y) / m.left_derivative_from_xi(pre.xi);
        if m.is_attracting() {
            let w = m.right_inverse_attracting_offset(u);
            acc += p * f.right(w) / m.right_derivative_offset(w);
        } else {
            p_lsv += p;
        }
    }
    Ok(acc + 0.5 * p_lsv * f.right(0.25 + 0.5 * u))
}

/// `Pf(x)` at a tagged point; `x = 1/2` on the right side is rejected since
/// `f` may have a pole there.
pub fn apply_operator_at<D: Density + ?Sized>(system: &RandomSystem, f: &D, point: BranchPoint) -> Result<f64> {
    match point.side {
        Half::Left => apply_left(system, f, point.x),
        Half::Right => apply_right(system, f, point.x - 0.5),
    }
}

/// `Pf` on the nodes of `grid` without renormalisation. The output carries
/// `tails` below the first node.
pub fn apply_operator_unnormalized<D: Density + ?Sized>(
    system: &RandomSystem,
    f: &D,
    grid: &Arc<Grid>,
    tails: Tails,
) -> Result<DensityGrid> {
    let o = grid.offsets();
    let left: Vec<f64> = o.par_iter().map(|&x| apply_left(system, f, x)).collect::<Result<_>>()?;
    let right: Vec<f64> = o.par_iter().map(|&u| apply_right(system, f, u)).collect::<Result<_>>()?;
    DensityGrid::new(grid.clone(), left, right, tails)
}

/// One application of `P` on the grid of `f`, renormalised to unit mass.
pub fn apply_operator(system: &RandomSystem, f: &DensityGrid) -> Result<DensityGrid> {
    apply_operator_unnormalized(system, f, f.grid(), stationary_tails(system))?.normalized()
}

/// `P` restricted to grid densities that carry [`stationary_tails`], as a
/// sparse matrix over the `2n` node values (left half first).
///
/// Applying it agrees with [`apply_operator`] on such densities up to
/// rounding, and is much cheaper since all preimages are precomputed.
#[derive(Debug, Clone)]
pub struct GridOperator {
    grid: Arc<Grid>,
    tails: Tails,
    row_start: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

struct RowBuilder<'a> {
    grid: &'a Grid,
    tails: Tails,
    entries: Vec<(u32, f64)>,
}

impl RowBuilder<'_> {
    fn add(&mut self, half: Half, t: f64, weight: f64) {
        let n = self.grid.len();
        let base = match half {
            Half::Left => 0,
            Half::Right => n,
        };
        match self.grid.locate(t) {
            Some((i, lam)) => {
                self.entries.push(((base + i) as u32, weight * (1.0 - lam)));
                if lam > 0.0 {
                    self.entries.push(((base + i + 1) as u32, weight * lam));
                }
            }
            None => {
                let scale = (t / self.grid.first()).powf(-self.tails.exponent(half));
                self.entries.push((base as u32, weight * scale));
            }
        }
    }
}

impl GridOperator {
    pub fn new(system: &RandomSystem, grid: Arc<Grid>) -> Result<Self> {
        let tails = stationary_tails(system);
        let n = grid.len();
        let build_row = |row: usize| -> Result<Vec<(u32, f64)>> {
            let mut b = RowBuilder { grid: &grid, tails, entries: Vec::with_capacity(8) };
            let t = grid.offsets()[row % n];
            let mut p_lsv = 0.0;
            if row < n {
                for (p, m) in system.iter() {
                    let pre = m.left_preimage(t)?;
                    b.add(Half::Left, pre.y, p / m.left_derivative_from_xi(pre.xi));
                    if !m.is_attracting() {
                        p_lsv += p;
                    }
                }
                b.add(Half::Right, 0.5 * t, 0.5 * p_lsv);
            } else {
                for (p, m) in system.iter() {
                    let pre = m.left_preimage(0.5 + t)?;
                    b.add(Half::Left, pre.y, p / m.left_derivative_from_xi(pre.xi));
                    if m.is_attracting() {
                        let w = m.right_inverse_attracting_offset(t);
                        b.add(Half::Right, w, p / m.right_derivative_offset(w));
                    } else {
                        p_lsv += p;
                    }
                }
                b.add(Half::Right, 0.25 + 0.5 * t, 0.5 * p_lsv);
            }
            Ok(b.entries)
        };
        let rows: Vec<Vec<(u32, f64)>> = (0..2 * n).into_par_iter().map(build_row).collect::<Result<_>>()?;
        let mut row_start = Vec::with_capacity(2 * n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_start.push(0);
        for r in rows {
            for (c, v) in r {
                cols.push(c);
                vals.push(v);
            }
            row_start.push(cols.len());
        }
        Ok(Self { grid, tails, row_start, cols, vals })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn tails(&self) -> Tails {
        self.tails
    }

    /// Raw matrix-vector product on stacked `[left, right]` node values.
    pub fn apply_values(&self, input: &[f64], out: &mut [f64]) {
        out.par_iter_mut().enumerate().for_each(|(row, o)| {
            let range = self.row_start[row]..self.row_start[row + 1];
            *o = self.cols[range.clone()].iter().zip(&self.vals[range]).map(|(&c, &v)| v * input[c as usize]).sum();
        });
    }

    /// `P f` renormalised; `f` must carry this operator's tails.
    pub fn apply(&self, f: &DensityGrid) -> Result<DensityGrid> {
        if f.tails() != self.tails {
            return Err(Error::InvalidArgument(format!(
                "grid operator expects tails {:?}, density has {:?}",
                self.tails,
                f.tails()
            )));
        }
        if !Arc::ptr_eq(f.grid(), &self.grid) && f.grid().offsets() != self.grid.offsets() {
            return Err(Error::GridMismatch("density and operator use different grids".into()));
        }
        let n = self.grid.len();
        let mut input = Vec::with_capacity(2 * n);
        input.extend_from_slice(f.left_values());
        input.extend_from_slice(f.right_values());
        let mut out = vec![0.0; 2 * n];
        self.apply_values(&input, &mut out);
        let right = out.split_off(n);
        DensityGrid::new(self.grid.clone(), out, right, self.tails)?.normalized()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationOptions {
    pub iterations: usize,
    pub tolerance: f64,
    /// Return the running average `(1/n) sum_{i<n} P^i 1` instead of `P^n 1`.
    pub cesaro: bool,
}

impl IterationOptions {
    pub fn new(iterations: usize) -> Self {
        Self { iterations, tolerance: DEFAULT_TOLERANCE, cesaro: false }
    }
}

#[derive(Debug, Clone)]
pub struct PowerIteration {
    pub density: DensityGrid,
    /// `||P f_k - f_k||_1` for each completed step `k`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub phase: Phase,
}

/// Iterates `P` from `f = 1` on `grid`.
///
/// Stops after `options.iterations` steps or once the residual drops below
/// `options.tolerance`. In Cesàro mode the residual of the average after `k`
/// steps is `||P^k 1 - 1||_1 / k`, which follows from linearity.
pub fn power_iterate(system: &RandomSystem, grid: Arc<Grid>, options: IterationOptions) -> Result<PowerIteration> {
    let phase = system.classify().phase;
    if phase != Phase::FiniteACS {
        log::warn!("power iteration outside the finite-measure phase ({phase:?}); iterates need not converge");
    }
    let one = DensityGrid::constant(grid.clone(), 1.0);
    let mut residuals = Vec::new();
    if options.iterations == 0 {
        return Ok(PowerIteration { density: one, residuals, iterations: 0, converged: false, phase });
    }

    let mut current = one.clone();
    let mut sum_left = vec![0.0; grid.len()];
    let mut sum_right = vec![0.0; grid.len()];
    let mut operator: Option<GridOperator> = None;
    let mut converged = false;
    let mut steps = 0;
    while steps < options.iterations {
        if options.cesaro {
            sum_left.iter_mut().zip(current.left_values()).for_each(|(s, v)| *s += v);
            sum_right.iter_mut().zip(current.right_values()).for_each(|(s, v)| *s += v);
        }
        let next = if steps == 0 {
            apply_operator(system, &current)?
        } else {
            let op = match operator.take() {
                Some(op) => op,
                None => GridOperator::new(system, grid.clone())?,
            };
            let next = op.apply(&current)?;
            operator = Some(op);
            next
        };
        steps += 1;
        let residual =
            if options.cesaro { next.l1_distance(&one)? / steps as f64 } else { next.l1_distance(&current)? };
        residuals.push(residual);
        current = next;
        if residual < options.tolerance {
            converged = true;
            break;
        }
    }

    let density = if options.cesaro {
        let k = steps as f64;
        let left = sum_left.into_iter().map(|s| s / k).collect();
        let right = sum_right.into_iter().map(|s| s / k).collect();
        DensityGrid::new(grid, left, right, stationary_tails(system))?.normalized()?
    } else {
        current
    };
    Ok(PowerIteration { density, residuals, iterations: steps, converged, phase })
}

/// Power iteration run until the residual falls below `tolerance` or
/// `max_iterations` steps have been taken.
pub fn converged_density(
    system: &RandomSystem,
    grid: Arc<Grid>,
    max_iterations: usize,
    tolerance: f64,
) -> Result<PowerIteration> {
    power_iterate(system, grid, IterationOptions { iterations: max_iterations, tolerance, cesaro: false })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;
    use crate::transfer::grid::{FnDensity, GridSpec};
    use approx::assert_relative_eq;

    fn figure2(k: f64) -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, k).unwrap()], vec![0.6, 0.4])
            .unwrap()
    }

    fn one() -> FnDensity<impl Fn(f64) -> f64 + Sync, impl Fn(f64) -> f64 + Sync> {
        FnDensity { left: |_x: f64| 1.0, right: |_u: f64| 1.0 }
    }

    #[test]
    fn constant_density_limits() {
        let s = figure2(0.2);
        let near_zero = apply_operator_at(&s, &one(), BranchPoint::left(1e-300)).unwrap();
        assert_relative_eq!(near_zero, 1.0 + 0.6 / 2.0, epsilon = 1e-12);
        let at_one = apply_operator_at(&s, &one(), BranchPoint::right(1.0)).unwrap();
        let expected = 0.6 / 2.5 + 0.4 / 2.5 + 0.6 / 2.0 + 0.4 / (2.0 - 0.2);
        assert_relative_eq!(at_one, expected, epsilon = 1e-14);
        let zero = FnDensity { left: |_x: f64| 0.0, right: |_u: f64| 0.0 };
        assert_eq!(apply_operator_at(&s, &zero, BranchPoint::left(0.3)).unwrap(), 0.0);
        assert_eq!(apply_operator_at(&s, &zero, BranchPoint::right(0.7)).unwrap(), 0.0);
        assert!(apply_operator_at(&s, &one(), BranchPoint::right(0.5)).is_err());
    }

    #[test]
    fn one_application_is_decreasing_and_conserves_mass() {
        let s = figure2(0.2);
        let g = GridSpec::with_nodes(2048).build().unwrap();
        let f = DensityGrid::constant(g.clone(), 1.0);
        let raw = apply_operator_unnormalized(&s, &f, &g, stationary_tails(&s)).unwrap();
        assert!((raw.mass() - 1.0).abs() < 1e-6, "mass {}", raw.mass());
        for half in [Half::Left, Half::Right] {
            assert!(raw.values(half).windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn grid_operator_matches_direct_evaluation() {
        let s = RandomSystem::new(
            vec![
                MapSpec::lsv(0.4).unwrap(),
                MapSpec::attracting(0.7, 0.3).unwrap(),
                MapSpec::attracting(0.5, 0.6).unwrap(),
            ],
            vec![0.5, 0.3, 0.2],
        )
        .unwrap();
        let g = GridSpec::with_nodes(300).build().unwrap();
        let f = apply_operator(&s, &DensityGrid::constant(g.clone(), 1.0)).unwrap();
        let f = apply_operator(&s, &f).unwrap();
        let direct = apply_operator(&s, &f).unwrap();
        let fast = GridOperator::new(&s, g).unwrap().apply(&f).unwrap();
        for half in [Half::Left, Half::Right] {
            for (a, b) in direct.values(half).iter().zip(fast.values(half)) {
                assert_relative_eq!(*a, *b, max_relative = 1e-12);
            }
        }
        assert!(GridOperator::new(&s, f.grid().clone())
            .unwrap()
            .apply(&DensityGrid::constant(f.grid().clone(), 1.0))
            .is_err());
    }

    #[test]
    fn power_iteration_basics() {
        let s = figure2(0.2);
        let g = GridSpec::with_nodes(256).build().unwrap();
        let zero = power_iterate(&s, g.clone(), IterationOptions::new(0)).unwrap();
        assert!(zero.density.left_values().iter().all(|&v| v == 1.0));
        assert!(zero.residuals.is_empty());

        let run = power_iterate(&s, g.clone(), IterationOptions::new(100)).unwrap();
        assert_eq!(run.iterations, 100);
        assert_eq!(run.residuals.len(), 100);
        assert!(run.residuals[99] < run.residuals[0]);
        assert_relative_eq!(run.density.mass(), 1.0, epsilon = 1e-12);

        let ces = power_iterate(&s, g, IterationOptions { cesaro: true, ..IterationOptions::new(50) }).unwrap();
        assert_relative_eq!(ces.density.mass(), 1.0, epsilon = 1e-12);
        assert!(ces.density.left_values().windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn stationary_tail_exponents() {
        let a = stationary_tails(&figure2(0.2));
        let gamma = 0.4f64.ln() / 0.2f64.ln();
        assert_relative_eq!(a.left, 1.5 - gamma, epsilon = 1e-12);
        assert_relative_eq!(a.right, 1.0 - gamma, epsilon = 1e-12);
        let b = stationary_tails(&figure2(0.8));
        assert_eq!(b, Tails { left: 0.5, right: 0.0 });
    }

    #[test]
    fn output_is_independent_of_thread_count() {
        let s = figure2(0.2);
        let g = GridSpec::with_nodes(512).build().unwrap();
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
            pool.install(|| power_iterate(&s, g.clone(), IterationOptions::new(20)).unwrap())
        };
        let (a, b) = (run(1), run(4));
        assert_eq!(a.density, b.density);
        assert_eq!(a.residuals, b.residuals);
    }
}
