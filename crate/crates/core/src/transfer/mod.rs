//! Grid densities, the annealed transfer operator and cone checks.

pub mod cones;
pub mod grid;
pub mod operator;

pub use cones::{
    auxiliary_monotone_checks, auxiliary_trials, check_cone_c0, check_cone_c1, check_cone_c2, cone_preservation,
    fit_envelope, fit_global_envelope, lipschitz_envelope_check, AuxiliaryReport, AuxiliaryTrial, ConeCheck,
    ConeMember, ConeParams, ConeTrial, EnvelopeCheck,
};
pub use grid::{Cdf, Density, DensityGrid, FnDensity, Grid, GridSpec, Tails};
pub use operator::{
    apply_operator, apply_operator_at, apply_operator_unnormalized, converged_density, power_iterate, stationary_tails,
    GridOperator, IterationOptions, PowerIteration,
};
