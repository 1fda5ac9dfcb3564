//! Parameter sweeps over the phase classification.

use std::sync::Arc;

use serde::Serialize;

use super::continuity::ConvergenceOptions;
use crate::error::{Error, Result};
use crate::maps::{Half, MapSpec};
use crate::system::{Phase, PhaseReport, RandomSystem};
use crate::transfer::{converged_density, DensityGrid, Grid};

/// The parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "symbol")]
pub enum SweepParameter {
    /// `p_j`; the other probabilities are rescaled to keep the total at 1.
    Prob(usize),
    /// `K_j` of an attracting map.
    Kappa(usize),
    /// `alpha_j`.
    Alpha(usize),
}

/// Summary of a converged density at one sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensitySummary {
    pub iterations: usize,
    pub converged: bool,
    pub final_residual: f64,
    pub left_slope: f64,
    pub right_slope: f64,
    pub right_max: f64,
}

impl DensitySummary {
    pub fn of(density: &DensityGrid, iterations: usize, converged: bool, final_residual: f64) -> Self {
        Self {
            iterations,
            converged,
            final_residual,
            left_slope: density.pole_slope(Half::Left),
            right_slope: density.pole_slope(Half::Right),
            right_max: density.max(Half::Right),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub report: Option<PhaseReport>,
    pub density: Option<DensitySummary>,
    /// Why this point could not be evaluated; the sweep carries on.
    pub error: Option<String>,
}

/// `system` with one parameter replaced.
pub fn with_parameter(system: &RandomSystem, parameter: SweepParameter, value: f64) -> Result<RandomSystem> {
    let check = |j: usize| {
        if j < system.len() {
            Ok(j)
        } else {
            Err(Error::InvalidArgument(format!("symbol {} out of range", j + 1)))
        }
    };
    match parameter {
        SweepParameter::Prob(j) => {
            let j = check(j)?;
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidSystem(format!("probability must lie in (0, 1), got {value}")));
            }
            let rest = 1.0 - system.probs()[j];
            let probs = system
                .probs()
                .iter()
                .enumerate()
                .map(|(i, &p)| if i == j { value } else { p * (1.0 - value) / rest })
                .collect();
            system.with_probs(probs)
        }
        SweepParameter::Kappa(j) | SweepParameter::Alpha(j) => {
            let j = check(j)?;
            let mut maps = system.maps().to_vec();
            let m = maps[j];
            maps[j] = match (parameter, m.kappa()) {
                (SweepParameter::Kappa(_), Some(_)) => MapSpec::attracting(m.alpha(), value)?,
                (SweepParameter::Kappa(_), None) => {
                    return Err(Error::InvalidArgument(format!("map {} has no slope K", j + 1)))
                }
                (_, Some(k)) => MapSpec::attracting(value, k)?,
                (_, None) => MapSpec::lsv(value)?,
            };
            RandomSystem::new(maps, system.probs().to_vec())
        }
    }
}

/// Classifies the system at each value, optionally also converging its
/// density (finite-measure points only). Failures are recorded per row.
pub fn sweep(
    system: &RandomSystem,
    parameter: SweepParameter,
    values: &[f64],
    density: Option<(&Arc<Grid>, ConvergenceOptions)>,
) -> Vec<SweepRow> {
    values
        .iter()
        .map(|&value| {
            let point = match with_parameter(system, parameter, value) {
                Ok(s) => s,
                Err(e) => return SweepRow { value, report: None, density: None, error: Some(e.to_string()) },
            };
            let report = point.classify();
            let finite = report.phase == Phase::FiniteACS;
            let mut row = SweepRow { value, report: Some(report), density: None, error: None };
            if let Some((grid, opts)) = density {
                if finite {
                    match converged_density(&point, grid.clone(), opts.max_iterations, opts.tolerance) {
                        Ok(run) => {
                            let last = run.residuals.last().copied().unwrap_or(f64::NAN);
                            row.density = Some(DensitySummary::of(&run.density, run.iterations, run.converged, last));
                        }
                        Err(e) => row.error = Some(e.to_string()),
                    }
                }
            }
            row
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn figure2a() -> RandomSystem {
        RandomSystem::new(vec![MapSpec::lsv(0.5).unwrap(), MapSpec::attracting(0.5, 0.2).unwrap()], vec![0.6, 0.4])
            .unwrap()
    }

    #[test]
    fn kappa_sweep_has_decreasing_eta() {
        let s = figure2a();
        let values: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
        let rows = sweep(&s, SweepParameter::Kappa(1), &values, None);
        let etas: Vec<f64> = rows.iter().map(|r| r.report.as_ref().unwrap().eta).collect();
        assert!(etas.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn sweep_records_failures_in_row() {
        let s = figure2a();
        let rows = sweep(&s, SweepParameter::Kappa(0), &[0.5], None);
        assert!(rows[0].error.is_some());
        let rows = sweep(&s, SweepParameter::Prob(1), &[0.3, 1.5, 0.7], None);
        assert!(rows[0].report.is_some() && rows[1].error.is_some() && rows[2].report.is_some());
        assert_eq!(rows[2].report.as_ref().unwrap().phase, Phase::NoFiniteACS);
        let p = with_parameter(&s, SweepParameter::Prob(1), 0.3).unwrap();
        assert_eq!(p.probs(), &[0.7, 0.3]);
        let a = with_parameter(&s, SweepParameter::Alpha(0), 0.3).unwrap();
        assert_eq!(a.alpha_min(), 0.3);
    }
}
