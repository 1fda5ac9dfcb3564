//! Independent estimators and experiments around the transfer operator.

pub mod continuity;
pub mod kac;
pub mod orbit;
pub mod preimages;
pub mod sweep;
pub mod ulam;

pub use continuity::{continuity_experiment, perturb, ContinuityPoint, ConvergenceOptions};
pub use kac::{
    first_return, kac_experiment, kac_set, KacFibre, KacOptions, KacRun, ReturnSample, ReturnStats, StartLaw,
};
pub use orbit::{orbit_histogram, Histogram, HistogramOptions};
pub use preimages::{
    checkpoints, preimage_bounds_check, preimage_sequence, ratio_bounds, word_preimage, PreimageReport, RatioBounds,
};
pub use sweep::{sweep, with_parameter, DensitySummary, SweepParameter, SweepRow};
pub use ulam::{binned_l1, UlamModel};
