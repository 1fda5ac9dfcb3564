//! Numerical laboratory for random compositions of intermittent interval maps.
//!
//! The crate is organised bottom-up:
//!
//! - [`maps`]: the LSV and attracting map families and their branch inverses.
//! - [`system`]: a family of maps with a probability vector, the thresholds
//!   `eta` and `gamma`, and orbit sampling.
//! - [`transfer`]: densities on non-uniform grids, the annealed transfer
//!   operator, power iteration and cone checks.
//! - [`diagnostics`]: Ulam discretisation, orbit histograms, return times,
//!   preimage sequences and the continuity experiment.

pub mod diagnostics;
pub mod error;
pub mod maps;
pub mod rng;
pub mod system;
pub mod transfer;

pub use error::{Error, Result};
pub use maps::{BranchPoint, Half, MapKind, MapSpec};
pub use system::{BetaRange, OrbitTrace, Phase, PhaseReport, RandomSystem, Site};
