//! JSON run configuration.
//!
//! Unknown keys are rejected everywhere. Symbols are 1-based, as in the
//! output files. Every block except `continuity` and `sweep` has defaults,
//! and the resolved configuration (defaults filled in, flag overrides
//! applied) is what gets embedded in the outputs.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use intermap::diagnostics::{ConvergenceOptions, SweepParameter};
use intermap::transfer::GridSpec;
use intermap::{MapSpec, RandomSystem};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapConfig {
    Lsv { alpha: f64 },
    Attracting { alpha: f64, kappa: f64 },
}

impl MapConfig {
    fn spec(&self) -> intermap::Result<MapSpec> {
        match *self {
            MapConfig::Lsv { alpha } => MapSpec::lsv(alpha),
            MapConfig::Attracting { alpha, kappa } => MapSpec::attracting(alpha, kappa),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub nodes_per_half: usize,
    pub floor: f64,
    pub ratio: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        let g = GridSpec::default();
        Self { nodes_per_half: g.nodes_per_half, floor: g.floor, ratio: g.ratio }
    }
}

impl GridConfig {
    pub fn spec(&self) -> GridSpec {
        GridSpec { nodes_per_half: self.nodes_per_half, floor: self.floor, ratio: self.ratio }
    }
}

/// `P^n 1` for the `density` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensityConfig {
    pub iterations: usize,
    /// Stop early once the residual drops below this; 0 runs all iterations.
    pub tolerance: f64,
    pub cesaro: bool,
    /// Envelope exponent for the fitted constants; defaults to
    /// `min(1, (alpha_min + gamma) / 2)`.
    pub beta: Option<f64>,
}

impl Default for DensityConfig {
    fn default() -> Self {
        Self { iterations: 100, tolerance: 0.0, cesaro: false, beta: None }
    }
}

/// The converged density used by `kac`, `cones`, `continuity` and `sweep`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergeConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for ConvergeConfig {
    fn default() -> Self {
        let c = ConvergenceOptions::default();
        Self { max_iterations: c.max_iterations, tolerance: c.tolerance }
    }
}

impl ConvergeConfig {
    pub fn options(&self) -> ConvergenceOptions {
        ConvergenceOptions { max_iterations: self.max_iterations, tolerance: self.tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub x0: f64,
    pub steps: usize,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self { x0: 0.3, steps: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistogramConfig {
    pub x0: f64,
    pub steps: u64,
    pub bins: usize,
    pub replicas: u64,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self { x0: 0.3, steps: 10_000_000, bins: 4096, replicas: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UlamConfig {
    pub bins: usize,
}

impl Default for UlamConfig {
    fn default() -> Self {
        Self { bins: 4096 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KacStart {
    /// Converged density restricted to the return set; falls back to
    /// uniform outside the finite-measure phase.
    Density,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KacConfig {
    pub samples: usize,
    pub cap: u64,
    pub start: KacStart,
    /// Prefix sizes at which statistics are reported.
    pub sizes: Vec<usize>,
}

impl Default for KacConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            cap: intermap::diagnostics::kac::DEFAULT_CAP,
            start: KacStart::Density,
            sizes: vec![1_000, 10_000, 100_000],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConesConfig {
    pub beta: Option<f64>,
    pub members: usize,
    pub auxiliary: usize,
}

impl Default for ConesConfig {
    fn default() -> Self {
        Self { beta: None, members: 100, auxiliary: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreimagesConfig {
    pub n_max: usize,
    pub words: usize,
}

impl Default for PreimagesConfig {
    fn default() -> Self {
        Self { n_max: 10_000, words: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuityConfig {
    /// Tangent to the simplex: one entry per map, summing to zero.
    pub direction: Vec<f64>,
    pub deltas: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    Prob,
    Kappa,
    Alpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: SweepKind,
    pub symbol: usize,
    pub values: Vec<f64>,
    /// Also converge the density at each finite-measure point.
    #[serde(default)]
    pub density: bool,
}

impl SweepConfig {
    pub fn parameter(&self) -> SweepParameter {
        let j = self.symbol - 1;
        match self.parameter {
            SweepKind::Prob => SweepParameter::Prob(j),
            SweepKind::Kappa => SweepParameter::Kappa(j),
            SweepKind::Alpha => SweepParameter::Alpha(j),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub maps: Vec<MapConfig>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub density: DensityConfig,
    #[serde(default)]
    pub converge: ConvergeConfig,
    #[serde(default)]
    pub orbit: OrbitConfig,
    #[serde(default)]
    pub histogram: HistogramConfig,
    #[serde(default)]
    pub ulam: UlamConfig,
    #[serde(default)]
    pub kac: KacConfig,
    #[serde(default)]
    pub cones: ConesConfig,
    #[serde(default)]
    pub preimages: PreimagesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuity: Option<ContinuityConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
}

/// A parsed configuration together with its source text, so later errors
/// can point at the offending key.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub path: PathBuf,
    pub text: String,
    pub config: RunConfig,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(path, None, format!("cannot read config: {e}")))?;
        Self::parse(path, text)
    }

    pub fn parse(path: &Path, text: String) -> Result<Self, CliError> {
        let config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(path, Some(e.line()), e.to_string()))?;
        let loaded = Self { path: path.to_path_buf(), text, config };
        loaded.validate()?;
        Ok(loaded)
    }

    /// Line of the first occurrence of `"key"`, if any.
    pub fn line_of(&self, key: &str) -> Option<usize> {
        let quoted = format!("\"{key}\"");
        self.text.lines().position(|l| l.contains(&quoted)).map(|i| i + 1)
    }

    /// Config error anchored at `key`.
    pub fn error(&self, key: &str, message: impl Into<String>) -> CliError {
        CliError::config(&self.path, self.line_of(key), message.into())
    }

    pub fn system(&self) -> Result<RandomSystem, CliError> {
        let maps = self
            .config
            .maps
            .iter()
            .map(MapConfig::spec)
            .collect::<intermap::Result<Vec<_>>>()
            .map_err(|e| self.error("maps", e.to_string()))?;
        RandomSystem::new(maps, self.config.probs.clone()).map_err(|e| self.error("probs", e.to_string()))
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        self.system()?;
        c.grid.spec().build().map_err(|e| self.error("grid", e.to_string()))?;
        let positive = |v: f64| v.is_finite() && v >= 0.0;
        if !positive(c.density.tolerance) {
            return Err(self.error("density", "tolerance must be finite and non-negative"));
        }
        if !(c.converge.tolerance > 0.0 && c.converge.tolerance.is_finite()) {
            return Err(self.error("converge", "tolerance must be positive"));
        }
        if c.kac.sizes.iter().any(|&n| n == 0 || n > c.kac.samples) {
            return Err(self.error("sizes", format!("sizes must lie in [1, samples = {}]", c.kac.samples)));
        }
        if let Some(s) = &c.sweep {
            if s.symbol == 0 || s.symbol > c.maps.len() {
                return Err(self.error("symbol", format!("symbol must lie in [1, {}]", c.maps.len())));
            }
            if s.values.is_empty() {
                return Err(self.error("values", "sweep needs at least one value"));
            }
        }
        if let Some(k) = &c.continuity {
            if k.deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
                return Err(self.error("deltas", "deltas must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_MAPS: &str = r#"{
  "maps": [
    {"kind": "lsv", "alpha": 0.5},
    {"kind": "attracting", "alpha": 0.5, "kappa": 0.2}
  ],
  "probs": [0.6, 0.4]
}"#;

    fn parse(text: &str) -> Result<LoadedConfig, CliError> {
        LoadedConfig::parse(Path::new("run.json"), text.to_string())
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse(TWO_MAPS).unwrap();
        assert_eq!(c.config.grid.nodes_per_half, 2048);
        assert_eq!(c.config.density.iterations, 100);
        assert_eq!(c.system().unwrap().len(), 2);
    }

    #[test]
    fn unknown_keys_are_rejected_with_line() {
        let text = TWO_MAPS.replace("\"probs\"", "\"bogus\": 1,\n  \"probs\"");
        let e = parse(&text).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().starts_with("run.json:6:"), "{e}");
        let text = TWO_MAPS.replace("\"kappa\": 0.2", "\"kappa\": 0.2, \"beta\": 1");
        assert!(parse(&text).is_err());
    }

    #[test]
    fn invalid_system_points_at_probs() {
        let text = TWO_MAPS.replace("[0.6, 0.4]", "[0.6, 0.5]");
        let e = parse(&text).unwrap_err();
        assert!(e.to_string().starts_with("run.json:6:"), "{e}");
        let text = TWO_MAPS.replace("\"kappa\": 0.2", "\"kappa\": 1.2");
        let e = parse(&text).unwrap_err();
        assert!(e.to_string().starts_with("run.json:2:"), "{e}");
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = parse(TWO_MAPS).unwrap();
        let json = serde_json::to_string(&c.config).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c.config);
    }
}
