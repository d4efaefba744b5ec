//! JSON config schemas for every subcommand, plus the row-major matrix format
//! shared by configs and results.

use std::path::Path;

use hankel_sysid::pipeline::EstimationConfig;
use hankel_sysid::simulate::NoiseKind;
use hankel_sysid::solver::SolverOptions;
use hankel_sysid::{NoiseSpec, StateSpace};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Dense matrix stored row-major: `data[i * cols + j]` is entry `(i, j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixJson {
    pub fn to_matrix(&self) -> CliResult<DMatrix<f64>> {
        if self.rows * self.cols != self.data.len() {
            return Err(CliError::Config(format!(
                "matrix declares {}x{} but has {} entries",
                self.rows,
                self.cols,
                self.data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

impl From<&DMatrix<f64>> for MatrixJson {
    fn from(m: &DMatrix<f64>) -> Self {
        let data = (0..m.nrows()).flat_map(|i| m.row(i).iter().copied().collect::<Vec<_>>()).collect();
        Self { rows: m.nrows(), cols: m.ncols(), data }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemJson {
    pub a: MatrixJson,
    pub b: MatrixJson,
    pub c: MatrixJson,
}

impl SystemJson {
    pub fn to_state_space(&self) -> CliResult<StateSpace> {
        StateSpace::new(self.a.to_matrix()?, self.b.to_matrix()?, self.c.to_matrix()?)
            .map_err(|e| CliError::Config(format!("system: {e}")))
    }
}

impl From<&StateSpace> for SystemJson {
    fn from(s: &StateSpace) -> Self {
        Self { a: s.a().into(), b: s.b().into(), c: s.c().into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub system: SystemJson,
    pub noise: NoiseSpec,
    pub samples: usize,
    pub seed: u64,
    #[serde(default)]
    pub input: NoiseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateConfig {
    pub estimation: EstimationConfig,
    #[serde(default)]
    pub solver: SolverOptions,
    /// Expected input dimension of the trajectory.
    #[serde(default)]
    pub inputs: Option<usize>,
    /// Expected output dimension of the trajectory.
    #[serde(default)]
    pub outputs: Option<usize>,
    /// Ground truth; enables losses and the realization certificate.
    #[serde(default)]
    pub truth: Option<SystemJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RealizeConfig {
    /// Block-Hankel estimate of order `t`.
    pub hankel: MatrixJson,
    pub t: usize,
    /// Realization order; detected from `xi` when absent.
    #[serde(default)]
    pub order: Option<usize>,
    #[serde(default)]
    pub xi: Option<f64>,
}

/// `count` consecutive seeds from `start`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub start: u64,
    pub count: usize,
}

impl SeedRange {
    pub fn seeds(&self, offset: u64) -> Vec<u64> {
        (0..self.count as u64).map(|k| self.start.wrapping_add(offset).wrapping_add(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationConfig {
    pub n: usize,
    pub seeds: SeedRange,
    pub candidates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoveryConfig {
    pub n: usize,
    pub seeds: SeedRange,
    /// Required fraction of seeds with the true order.
    pub min_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub n_grid: Vec<usize>,
    pub seeds: SeedRange,
    /// Accepted interval for the log-log slope of the median spectral loss.
    pub slope_range: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceConfig {
    pub t: usize,
    pub r: usize,
    pub n_bar_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub max_spread: f64,
    pub max_trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseTermsConfig {
    pub t: usize,
    pub n_bar_grid: Vec<usize>,
    pub seeds: SeedRange,
    pub max_spread: f64,
    pub max_trend: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobustnessConfig {
    pub trials: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IdentitiesConfig {
    pub adjoint_pairs: usize,
    pub ho_kalman_systems: usize,
    pub solver_instances: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InequalityConfig {
    pub samples: usize,
    pub seed: u64,
}

/// Benchmark suites; every section is optional and skipped when absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub system: SystemJson,
    pub noise: NoiseSpec,
    pub t0: usize,
    pub delta: f64,
    /// Frozen penalty constant; calibrated from `calibration` when absent.
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub calibration: Option<CalibrationConfig>,
    #[serde(default)]
    pub identities: Option<IdentitiesConfig>,
    #[serde(default)]
    pub recovery: Option<RecoveryConfig>,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub covariance: Option<CovarianceConfig>,
    #[serde(default)]
    pub noise_terms: Option<NoiseTermsConfig>,
    #[serde(default)]
    pub robustness: Option<RobustnessConfig>,
    #[serde(default)]
    pub inequalities: Option<InequalityConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckConfig {
    #[serde(default = "default_pairs")]
    pub adjoint_pairs: usize,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_pairs() -> usize {
    1000
}

fn default_samples() -> usize {
    100_000
}

impl Default for CheckConfig {
    fn default() -> Self {
        Self { adjoint_pairs: default_pairs(), samples: default_samples(), seed: 0 }
    }
}

/// Reads and parses a config file. Parse errors keep serde's line and column
/// and name the offending field.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<(T, serde_json::Value)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: cannot read: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let parsed = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok((parsed, value))
}
