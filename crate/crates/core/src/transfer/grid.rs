//! Densities on `(0, 1]` sampled on two refined grids.
//!
//! Both halves share one set of offsets `o_0 < ... < o_{n-1} = 1/2`: left
//! nodes sit at `x = o_i`, right nodes at `x = 1/2 + o_i`. Offsets are
//! geometric near the singular end and uniform further out. Right-half
//! values are always addressed by their offset so the refinement near `1/2`
//! keeps full relative precision.
//!
//! Between nodes a density is linear. Below the first offset it follows a
//! power law `f(o_0) (t / o_0)^(-s)` with a per-half exponent `s < 1`, which
//! is integrated analytically.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::maps::Half;

pub const MIN_NODES_PER_HALF: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    pub nodes_per_half: usize,
    /// Smallest offset from each singular point.
    pub floor: f64,
    /// Largest ratio between consecutive offsets in the geometric part.
    pub ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { nodes_per_half: 2048, floor: 1e-8, ratio: 1.02 }
    }
}

impl GridSpec {
    pub fn with_nodes(nodes_per_half: usize) -> Self {
        Self { nodes_per_half, ..Self::default() }
    }

    pub fn build(&self) -> Result<Arc<Grid>> {
        Grid::new(*self).map(Arc::new)
    }
}

/// Shared node layout and trapezoid weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    spec: GridSpec,
    offsets: Vec<f64>,
    weights: Vec<f64>,
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let n = spec.nodes_per_half;
        if n < MIN_NODES_PER_HALF {
            return Err(Error::InvalidArgument(format!("need at least {MIN_NODES_PER_HALF} nodes per half, got {n}")));
        }
        if !(spec.floor > 0.0 && spec.floor <= 1e-6) {
            return Err(Error::InvalidArgument(format!("grid floor must lie in (0, 1e-6], got {}", spec.floor)));
        }
        if !(spec.ratio > 1.0 && spec.ratio.is_finite()) {
            return Err(Error::InvalidArgument(format!("grid ratio must exceed 1, got {}", spec.ratio)));
        }
        let offsets = build_offsets(n, spec.floor, spec.ratio);
        let weights = trapezoid_weights(&offsets);
        Ok(Self { spec, offsets, weights })
    }

    pub fn spec(&self) -> GridSpec {
        self.spec
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Offsets from the singular point of either half, ending at `1/2`.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    /// Trapezoid weights on the offsets.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn first(&self) -> f64 {
        self.offsets[0]
    }

    /// `(i, lambda)` with `t = (1 - lambda) o_i + lambda o_{i+1}`, or `None`
    /// when `t` lies below the first offset. Points beyond `1/2` clamp to the
    /// last node.
    #[inline]
    pub fn locate(&self, t: f64) -> Option<(usize, f64)> {
        let o = &self.offsets;
        if t < o[0] {
            return None;
        }
        let last = o.len() - 1;
        if t >= o[last] {
            return Some((last - 1, 1.0));
        }
        let i = o.partition_point(|&v| v <= t) - 1;
        Some((i, (t - o[i]) / (o[i + 1] - o[i])))
    }
}

fn build_offsets(n: usize, floor: f64, ratio: f64) -> Vec<f64> {
    // Geometric offsets floor * ratio^i up to a junction, then uniform
    // spacing to 1/2 no wider than the last geometric step.
    for k in 1..n {
        let junction = floor * ratio.powi(k as i32 - 1);
        if junction >= 0.5 {
            break;
        }
        let m = n - k;
        let h = (0.5 - junction) / m as f64;
        if h <= junction * (ratio - 1.0) {
            let mut out: Vec<f64> = (0..k).map(|i| floor * ratio.powi(i as i32)).collect();
            out.extend((1..=m).map(|i| if i == m { 0.5 } else { junction + h * i as f64 }));
            return out;
        }
    }
    let r = (0.5 / floor).powf(1.0 / (n - 1) as f64);
    (0..n).map(|i| if i == n - 1 { 0.5 } else { floor * r.powi(i as i32) }).collect()
}

fn trapezoid_weights(o: &[f64]) -> Vec<f64> {
    let n = o.len();
    (0..n)
        .map(|i| {
            let lo = if i == 0 { o[0] } else { o[i - 1] };
            let hi = if i == n - 1 { o[n - 1] } else { o[i + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

/// Power-law exponents of the two tails below the first offset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tails {
    pub left: f64,
    pub right: f64,
}

impl Tails {
    pub const FLAT: Tails = Tails { left: 0.0, right: 0.0 };

    pub fn new(left: f64, right: f64) -> Result<Self> {
        for s in [left, right] {
            if !(0.0..1.0).contains(&s) {
                return Err(Error::InvalidArgument(format!("tail exponent must lie in [0, 1), got {s}")));
            }
        }
        Ok(Self { left, right })
    }

    pub fn exponent(&self, half: Half) -> f64 {
        match half {
            Half::Left => self.left,
            Half::Right => self.right,
        }
    }
}

/// Something that can be evaluated on both halves.
pub trait Density: Sync {
    /// Value at `x` in `(0, 1/2]`.
    fn left(&self, x: f64) -> f64;
    /// Value at `1/2 + u` for `u` in `(0, 1/2]`.
    fn right(&self, u: f64) -> f64;

    fn at(&self, half: Half, t: f64) -> f64 {
        match half {
            Half::Left => self.left(t),
            Half::Right => self.right(t),
        }
    }
}

/// A density given by two closures, the right one in offset coordinates.
pub struct FnDensity<L, R> {
    pub left: L,
    pub right: R,
}

impl<L, R> Density for FnDensity<L, R>
where
    L: Fn(f64) -> f64 + Sync,
    R: Fn(f64) -> f64 + Sync,
{
    fn left(&self, x: f64) -> f64 {
        (self.left)(x)
    }
    fn right(&self, u: f64) -> f64 {
        (self.right)(u)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Arc<Grid>,
    left: Vec<f64>,
    right: Vec<f64>,
    tails: Tails,
}

impl DensityGrid {
    pub fn new(grid: Arc<Grid>, left: Vec<f64>, right: Vec<f64>, tails: Tails) -> Result<Self> {
        if left.len() != grid.len() || right.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "{} nodes per half but {} left and {} right values",
                grid.len(),
                left.len(),
                right.len()
            )));
        }
        if let Some(v) = left.iter().chain(&right).find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidArgument(format!("density values must be finite and non-negative, got {v}")));
        }
        Ok(Self { grid, left, right, tails })
    }

    pub fn constant(grid: Arc<Grid>, c: f64) -> Self {
        let n = grid.len();
        Self { grid, left: vec![c; n], right: vec![c; n], tails: Tails::FLAT }
    }

    /// Samples `f` at the nodes.
    pub fn sample<D: Density + ?Sized>(grid: Arc<Grid>, f: &D, tails: Tails) -> Result<Self> {
        let left = grid.offsets().iter().map(|&x| f.left(x)).collect();
        let right = grid.offsets().iter().map(|&u| f.right(u)).collect();
        Self::new(grid, left, right, tails)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn tails(&self) -> Tails {
        self.tails
    }

    pub fn left_values(&self) -> &[f64] {
        &self.left
    }

    pub fn right_values(&self) -> &[f64] {
        &self.right
    }

    pub fn values(&self, half: Half) -> &[f64] {
        match half {
            Half::Left => &self.left,
            Half::Right => &self.right,
        }
    }

    /// Node coordinates in `[0, 1]` with their values, ascending in `x`.
    pub fn points(&self) -> impl Iterator<Item = (Half, f64, f64)> + '_ {
        let o = self.grid.offsets();
        let left = o.iter().zip(&self.left).map(|(&x, &f)| (Half::Left, x, f));
        let right = o.iter().zip(&self.right).map(|(&u, &f)| (Half::Right, 0.5 + u, f));
        left.chain(right)
    }

    fn eval_half(&self, half: Half, t: f64) -> f64 {
        let v = self.values(half);
        match self.grid.locate(t) {
            Some((i, lam)) => (1.0 - lam) * v[i] + lam * v[i + 1],
            None => {
                let o0 = self.grid.first();
                if t <= 0.0 {
                    return if self.tails.exponent(half) > 0.0 { f64::INFINITY } else { v[0] };
                }
                v[0] * (t / o0).powf(-self.tails.exponent(half))
            }
        }
    }

    /// Integral over the part of the half below its first node.
    pub fn tail_mass(&self, half: Half) -> f64 {
        let s = self.tails.exponent(half);
        self.values(half)[0] * self.grid.first() / (1.0 - s)
    }

    pub fn half_mass(&self, half: Half) -> f64 {
        let w = self.grid.weights();
        let v = self.values(half);
        let body: f64 = w.iter().zip(v).map(|(w, f)| w * f).sum();
        body + self.tail_mass(half)
    }

    pub fn mass(&self) -> f64 {
        self.half_mass(Half::Left) + self.half_mass(Half::Right)
    }

    /// Rescales to unit mass.
    pub fn normalize(&mut self) -> Result<f64> {
        let m = self.mass();
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidArgument(format!("cannot normalize a density of mass {m}")));
        }
        let inv = 1.0 / m;
        self.left.iter_mut().chain(self.right.iter_mut()).for_each(|v| *v *= inv);
        Ok(m)
    }

    pub fn normalized(mut self) -> Result<Self> {
        self.normalize()?;
        Ok(self)
    }

    /// Cumulative distribution table for fast integrals over `[0, x]`.
    pub fn cdf(&self) -> Cdf<'_> {
        let o = self.grid.offsets();
        let cum = |half: Half| -> Vec<f64> {
            let v = self.values(half);
            let mut c = Vec::with_capacity(o.len());
            let mut acc = self.tail_mass(half);
            c.push(acc);
            for k in 0..o.len() - 1 {
                acc += 0.5 * (o[k + 1] - o[k]) * (v[k] + v[k + 1]);
                c.push(acc);
            }
            c
        };
        Cdf { density: self, left: cum(Half::Left), right: cum(Half::Right) }
    }

    /// Masses of `bins` equal bins of `[0, 1]`.
    pub fn bin_masses(&self, bins: usize) -> Vec<f64> {
        let cdf = self.cdf();
        let edges: Vec<f64> = (0..=bins).map(|k| cdf.at(k as f64 / bins as f64)).collect();
        edges.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect()
    }

    fn check_same_grid(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || self.grid.offsets == other.grid.offsets {
            Ok(())
        } else {
            Err(Error::GridMismatch("densities live on different grids".into()))
        }
    }

    /// `L^1` distance: trapezoid on `|f - g|` plus the exact tail integral.
    pub fn l1_distance(&self, other: &Self) -> Result<f64> {
        self.check_same_grid(other)?;
        let w = self.grid.weights();
        let mut acc = 0.0;
        for half in [Half::Left, Half::Right] {
            let (a, b) = (self.values(half), other.values(half));
            acc += w.iter().zip(a.iter().zip(b)).map(|(w, (x, y))| w * (x - y).abs()).sum::<f64>();
            acc += tail_l1(a[0], self.tails.exponent(half), b[0], other.tails.exponent(half)) * self.grid.first();
        }
        Ok(acc)
    }

    /// Least-squares slope of `log f` against `log t` over the first decade of
    /// offsets, i.e. near `0` (left) or near `1/2` from above (right).
    pub fn pole_slope(&self, half: Half) -> f64 {
        let o = self.grid.offsets();
        let v = self.values(half);
        let limit = 10.0 * o[0] * (1.0 + 1e-12);
        let pts: Vec<(f64, f64)> =
            o.iter().zip(v).take_while(|(t, _)| **t <= limit).map(|(t, f)| (t.ln(), f.ln())).collect();
        least_squares_slope(&pts)
    }

    /// Largest value on one half.
    pub fn max(&self, half: Half) -> f64 {
        self.values(half).iter().copied().fold(0.0, f64::max)
    }
}

/// Cumulative masses of a [`DensityGrid`] at its nodes.
pub struct Cdf<'a> {
    density: &'a DensityGrid,
    left: Vec<f64>,
    right: Vec<f64>,
}

impl Cdf<'_> {
    fn half_at(&self, half: Half, t: f64) -> f64 {
        let d = self.density;
        let v = d.values(half);
        let o = d.grid.offsets();
        if t <= 0.0 {
            return 0.0;
        }
        match d.grid.locate(t) {
            None => {
                let s = d.tails.exponent(half);
                v[0] * o[0] * (t / o[0]).powf(1.0 - s) / (1.0 - s)
            }
            Some((i, lam)) => {
                let c = match half {
                    Half::Left => &self.left,
                    Half::Right => &self.right,
                };
                let ft = (1.0 - lam) * v[i] + lam * v[i + 1];
                c[i] + 0.5 * (t.min(o[i + 1]) - o[i]) * (v[i] + ft)
            }
        }
    }

    /// Mass of `[0, x]`.
    pub fn at(&self, x: f64) -> f64 {
        if x <= 0.5 {
            self.half_at(Half::Left, x)
        } else {
            self.left[self.left.len() - 1] + self.half_at(Half::Right, x - 0.5)
        }
    }

    /// Mass of the interval `(a, b)`.
    pub fn between(&self, a: f64, b: f64) -> f64 {
        (self.at(b) - self.at(a)).max(0.0)
    }

    /// The `x` in `[a, b]` with `at(x) = at(a) + q`, by bisection.
    pub fn inverse_within(&self, a: f64, b: f64, q: f64) -> f64 {
        let target = self.at(a) + q;
        let (mut lo, mut hi) = (a, b);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.at(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

impl Density for DensityGrid {
    fn left(&self, x: f64) -> f64 {
        self.eval_half(Half::Left, x)
    }
    fn right(&self, u: f64) -> f64 {
        self.eval_half(Half::Right, u)
    }
}

/// `int_0^1 |a tau^-sa - b tau^-sb| dtau`.
fn tail_l1(a: f64, sa: f64, b: f64, sb: f64) -> f64 {
    let prim = |t: f64| a * t.powf(1.0 - sa) / (1.0 - sa) - b * t.powf(1.0 - sb) / (1.0 - sb);
    let whole = prim(1.0).abs();
    if sa == sb || a <= 0.0 || b <= 0.0 {
        return if sa == sb { (a - b).abs() / (1.0 - sa) } else { whole };
    }
    // The integrand changes sign at most once, where tau^(sb - sa) = b / a.
    let cross = (b / a).powf(1.0 / (sb - sa));
    if cross > 0.0 && cross < 1.0 {
        let c = prim(cross);
        c.abs() + (prim(1.0) - c).abs()
    } else {
        whole
    }
}

pub(crate) fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    if pts.len() < 2 || pts.iter().any(|(_, y)| !y.is_finite()) {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> Arc<Grid> {
        GridSpec::with_nodes(n).build().unwrap()
    }

    #[test]
    fn offsets_are_refined_and_end_at_half() {
        for n in [16, 64, 512, 2048, 8192] {
            let g = grid(n);
            let o = g.offsets();
            assert_eq!(o.len(), n);
            assert_eq!(o[0], 1e-8);
            assert_eq!(*o.last().unwrap(), 0.5);
            assert!(o.windows(2).all(|w| w[1] > w[0]));
            let steps: Vec<f64> = o.windows(2).map(|w| w[1] - w[0]).collect();
            assert!(steps.windows(2).all(|s| s[1] >= s[0] * (1.0 - 1e-9)), "spacing shrinks for n={n}");
        }
        let g = grid(2048);
        let r = g.offsets()[1] / g.offsets()[0];
        assert_relative_eq!(r, 1.02, epsilon = 1e-12);
    }

    #[test]
    fn grid_rejects_bad_specs() {
        assert!(GridSpec::with_nodes(8).build().is_err());
        assert!(GridSpec { floor: 1e-3, ..GridSpec::default() }.build().is_err());
        assert!(GridSpec { ratio: 1.0, ..GridSpec::default() }.build().is_err());
    }

    #[test]
    fn masses_of_simple_densities() {
        let g = grid(256);
        let one = DensityGrid::constant(g.clone(), 1.0);
        assert_relative_eq!(one.mass(), 1.0, epsilon = 1e-14);
        let zero = DensityGrid::constant(g.clone(), 0.0);
        assert_relative_eq!(one.l1_distance(&zero).unwrap(), 1.0, epsilon = 1e-14);
        assert_eq!(one.l1_distance(&one).unwrap(), 0.0);
        let n = g.len();
        let two_left = DensityGrid::new(g.clone(), vec![2.0; n], vec![1.0; n], Tails::FLAT).unwrap();
        assert_relative_eq!(one.l1_distance(&two_left).unwrap(), 0.5, epsilon = 1e-14);
    }

    #[test]
    fn power_law_tails_integrate_exactly() {
        let g = grid(2048);
        let s = 0.7;
        let f = FnDensity { left: |x: f64| x.powf(-s), right: |_u: f64| 0.0 };
        let d = DensityGrid::sample(g, &f, Tails::new(s, 0.0).unwrap()).unwrap();
        let exact = 0.5f64.powf(1.0 - s) / (1.0 - s);
        assert_relative_eq!(d.half_mass(Half::Left), exact, max_relative = 1e-4);
        assert_relative_eq!(d.pole_slope(Half::Left), -s, epsilon = 1e-9);
        assert_relative_eq!(d.left(1e-10), 1e7, max_relative = 1e-9);
    }

    #[test]
    fn bin_masses_sum_to_mass() {
        let g = grid(512);
        let f = FnDensity { left: |x: f64| x.powf(-0.5), right: |u: f64| 1.0 + u.powf(-0.3) };
        let d = DensityGrid::sample(g, &f, Tails::new(0.5, 0.3).unwrap()).unwrap();
        for bins in [64, 1000, 4096] {
            let b = d.bin_masses(bins);
            assert_eq!(b.len(), bins);
            assert_relative_eq!(b.iter().sum::<f64>(), d.mass(), max_relative = 1e-12);
        }
        let b = d.bin_masses(2);
        assert_relative_eq!(b[0], d.half_mass(Half::Left), max_relative = 1e-12);
    }

    #[test]
    fn tail_l1_handles_crossing() {
        // 2 tau^-0.5 exceeds 1 on all of (0, 1]: no crossing.
        assert_relative_eq!(tail_l1(1.0, 0.0, 2.0, 0.5), 4.0 - 1.0, epsilon = 1e-14);
        // 3 against 2 tau^-0.5 crosses at tau = 4/9: the two pieces
        // integrate to 4/3 and 1/3.
        assert_relative_eq!(tail_l1(3.0, 0.0, 2.0, 0.5), 5.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(tail_l1(2.0, 0.5, 3.0, 0.0), 5.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn interpolation_is_linear_between_nodes() {
        let g = grid(64);
        let f = FnDensity { left: |x: f64| 3.0 - x, right: |u: f64| 2.0 - 2.0 * u };
        let d = DensityGrid::sample(g, &f, Tails::FLAT).unwrap();
        for t in [0.001, 0.1234, 0.3, 0.5] {
            assert_relative_eq!(d.left(t), 3.0 - t, epsilon = 1e-13);
            assert_relative_eq!(d.right(t), 2.0 - 2.0 * t, epsilon = 1e-13);
        }
        assert!(DensityGrid::new(d.grid().clone(), vec![1.0; 3], vec![1.0; 64], Tails::FLAT).is_err());
        let other = DensityGrid::constant(grid(128), 1.0);
        assert!(d.l1_distance(&other).is_err());
    }
}
