//! Dependence of the stationary density on the parameters.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::system::{Phase, RandomSystem};
use crate::transfer::{converged_density, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvergenceOptions {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        Self { max_iterations: 1_000_000, tolerance: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContinuityPoint {
    pub delta: f64,
    pub eta: f64,
    pub distance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `p + delta * direction`, checked to stay strictly positive and in the
/// finite-measure phase.
pub fn perturb(system: &RandomSystem, direction: &[f64], delta: f64) -> Result<RandomSystem> {
    if direction.len() != system.len() {
        return Err(Error::InvalidArgument(format!(
            "direction has {} entries for {} maps",
            direction.len(),
            system.len()
        )));
    }
    let drift: f64 = direction.iter().sum();
    if drift.abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("direction must sum to zero, sums to {drift}")));
    }
    let probs: Vec<f64> = system.probs().iter().zip(direction).map(|(p, d)| p + delta * d).collect();
    if let Some(p) = probs.iter().find(|p| **p <= 0.0) {
        return Err(Error::Precondition(format!(
            "perturbation delta = {delta} makes a probability non-positive ({p})"
        )));
    }
    let perturbed = system.with_probs(probs)?;
    let report = perturbed.classify();
    if report.phase != Phase::FiniteACS {
        return Err(Error::Precondition(format!(
            "perturbation delta = {delta} leaves the finite-measure phase (eta = {})",
            report.eta
        )));
    }
    Ok(perturbed)
}

/// `||f_{p + delta d} - f_p||_1` for each `delta`, all densities converged on
/// the same grid. Every perturbation is validated before any density is
/// computed.
pub fn continuity_experiment(
    system: &RandomSystem,
    direction: &[f64],
    deltas: &[f64],
    grid: &Arc<Grid>,
    options: ConvergenceOptions,
) -> Result<Vec<ContinuityPoint>> {
    if system.classify().phase != Phase::FiniteACS {
        return Err(Error::Precondition("base system is not in the finite-measure phase".into()));
    }
    let perturbed = deltas.iter().map(|&d| perturb(system, direction, d)).collect::<Result<Vec<_>>>()?;
    let base = converged_density(system, grid.clone(), options.max_iterations, options.tolerance)?;
    deltas
        .iter()
        .zip(&perturbed)
        .map(|(&delta, s)| {
            if delta == 0.0 {
                return Ok(ContinuityPoint {
                    delta,
                    eta: s.eta(),
                    distance: 0.0,
                    iterations: base.iterations,
                    converged: base.converged,
                });
            }
            let run = converged_density(s, grid.clone(), options.max_iterations, options.tolerance)?;
            Ok(ContinuityPoint {
                delta,
                eta: s.eta(),
                distance: run.density.l1_distance(&base.density)?,
                iterations: run.iterations,
                converged: run.converged,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maps::MapSpec;
    use crate::transfer::GridSpec;

    fn figure2a() -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, 0.2).unwrap()], vec![0.6, 0.4])
            .unwrap()
    }

    #[test]
    fn perturbation_preconditions() {
        let s = figure2a();
        assert!(perturb(&s, &[1.0, -1.0], 0.1).is_ok());
        assert!(matches!(perturb(&s, &[-1.0, 1.0], 0.1), Err(Error::Precondition(_))));
        assert!(matches!(perturb(&s, &[1.0, -1.0], 0.5), Err(Error::Precondition(_))));
        assert!(perturb(&s, &[1.0, 1.0], 0.1).is_err());
        assert!(perturb(&s, &[1.0], 0.1).is_err());
    }

    #[test]
    fn zero_delta_gives_zero_distance() {
        let s = figure2a();
        let g = GridSpec::with_nodes(64).build().unwrap();
        let opts = ConvergenceOptions { max_iterations: 50, tolerance: 1e-10 };
        let pts = continuity_experiment(&s, &[1.0, -1.0], &[0.0, 0.05], &g, opts).unwrap();
        assert_eq!(pts[0].distance, 0.0);
        assert!(pts[1].distance > 0.0);
        assert!(continuity_experiment(&s, &[-1.0, 1.0], &[0.0, 0.1], &g, opts).is_err());
    }
}
