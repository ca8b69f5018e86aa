/*
Copyright 2026 The proxmetric Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

//! Experiment configuration: one TOML file per experiment, every field
//! defaulted, unknown keys rejected.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::HeuristicConfig;
use crate::error::{Error, Result};
use crate::net::{hex, MetricHead, OptimizerKind};
use crate::problems::{
    ingest_prices_csv, synth_portfolio_family, PortfolioFamily, ProblemFamily, QuadcopterFamily,
    QuadcopterModel, ToyFamily,
};
use crate::prox::Algorithm;
use crate::training::{TargetConfig, TrainConfig};

pub const TOY_PRESET: &str = include_str!("../presets/toy.toml");
pub const PORTFOLIO_PRESET: &str = include_str!("../presets/portfolio.toml");
pub const QUADCOPTER_PRESET: &str = include_str!("../presets/quadcopter.toml");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProblemConfig {
    Toy {
        #[serde(default = "default_toy_lo")]
        lo: f64,
        #[serde(default = "default_toy_hi")]
        hi: f64,
    },
    Portfolio {
        #[serde(default = "default_assets")]
        assets: usize,
        #[serde(default = "default_factors")]
        factors: usize,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
        #[serde(default = "default_budget")]
        budget: f64,
        /// Price table to estimate the market from instead of the synthetic one.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        prices_csv: Option<PathBuf>,
    },
    Quadcopter {
        #[serde(default = "default_horizon")]
        horizon: usize,
        #[serde(default = "default_attitude_range")]
        attitude_range: f64,
        #[serde(default = "default_other_range")]
        other_range: f64,
    },
}

fn default_toy_lo() -> f64 {
    -2.0
}
fn default_toy_hi() -> f64 {
    2.0
}
fn default_assets() -> usize {
    20
}
fn default_factors() -> usize {
    5
}
fn default_noise() -> f64 {
    0.1
}
fn default_budget() -> f64 {
    1.0
}
fn default_horizon() -> usize {
    10
}
fn default_attitude_range() -> f64 {
    PI / 6.0
}
fn default_other_range() -> f64 {
    0.8
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig::Toy {
            lo: default_toy_lo(),
            hi: default_toy_hi(),
        }
    }
}

impl ProblemConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemConfig::Toy { .. } => "toy",
            ProblemConfig::Portfolio { .. } => "portfolio",
            ProblemConfig::Quadcopter { .. } => "quadcopter",
        }
    }

    /// Builds the family; the synthetic market is drawn from `seed`.
    pub fn build(&self, seed: u64) -> Result<Box<dyn ProblemFamily>> {
        match self {
            ProblemConfig::Toy { lo, hi } => {
                if !(lo < hi) {
                    return Err(Error::Config(format!("toy range [{lo}, {hi}] is empty")));
                }
                Ok(Box::new(ToyFamily { lo: *lo, hi: *hi }))
            }
            ProblemConfig::Portfolio {
                assets,
                factors,
                noise_sigma,
                budget,
                prices_csv,
            } => {
                let fam = match prices_csv {
                    Some(path) => {
                        let (sigma, mu) = ingest_prices_csv(path)?;
                        PortfolioFamily::new(sigma, mu, *noise_sigma, *budget)?
                    }
                    None => {
                        if *assets < 2 || *factors == 0 {
                            return Err(Error::Config(
                                "portfolio needs at least 2 assets and 1 factor".into(),
                            ));
                        }
                        synth_portfolio_family(*assets, *factors, *noise_sigma, *budget, seed)?
                    }
                };
                Ok(Box::new(fam))
            }
            ProblemConfig::Quadcopter {
                horizon,
                attitude_range,
                other_range,
            } => {
                if *horizon == 0 {
                    return Err(Error::Config("quadcopter horizon must be positive".into()));
                }
                let mut fam = QuadcopterFamily::new(QuadcopterModel::benchmark(*horizon));
                fam.attitude_range = *attitude_range;
                fam.other_range = *other_range;
                Ok(Box::new(fam))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub targets: TargetConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            train: 2000,
            val: 0,
            test: 2000,
            targets: TargetConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub gamma: f64,
    /// Unroll lengths to train.
    pub k: Vec<usize>,
    pub algorithms: Vec<Algorithm>,
    /// Test-time iterations.
    pub budget_dr: usize,
    pub budget_admm: usize,
    pub error_floor: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            gamma: 1.0,
            k: vec![10],
            algorithms: Algorithm::ALL.to_vec(),
            budget_dr: 50,
            budget_admm: 50,
            error_floor: 1.0,
        }
    }
}

impl SolverSection {
    pub fn budget(&self, algorithm: Algorithm) -> usize {
        match algorithm {
            Algorithm::Dr => self.budget_dr,
            Algorithm::Admm => self.budget_admm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub metric_hidden: Vec<usize>,
    pub estimator_hidden: Vec<usize>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            metric_hidden: vec![20, 20],
            estimator_hidden: vec![80, 80],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeadConfig {
    pub m_min: f64,
    pub m_max: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// When nonempty, one model per value; the validation set picks the winner.
    pub rho_max_sweep: Vec<f64>,
}

impl Default for HeadConfig {
    fn default() -> Self {
        HeadConfig {
            m_min: 0.2,
            m_max: 5.0,
            rho_min: 0.05,
            rho_max: 1.0,
            rho_max_sweep: vec![],
        }
    }
}

impl HeadConfig {
    pub fn head(&self, rho_max: f64) -> Result<MetricHead> {
        MetricHead::new(self.m_min, self.m_max, self.rho_min, rho_max)
            .map_err(|e| Error::Config(e.to_string()))
    }

    /// The `ρ_max` values to train.
    pub fn candidates(&self) -> Vec<f64> {
        if self.rho_max_sweep.is_empty() {
            vec![self.rho_max]
        } else {
            self.rho_max_sweep.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub estimator_epochs: usize,
    pub estimator_learning_rate: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            estimator_epochs: 200,
            estimator_learning_rate: 1e-3,
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 16,
            optimizer: OptimizerKind::Adam,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub problem: ProblemConfig,
    pub data: DataConfig,
    pub solver: SolverSection,
    pub network: NetworkConfig,
    pub head: HeadConfig,
    pub train: TrainSection,
    pub heuristic: HeuristicConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 1,
            out_dir: PathBuf::from("runs/toy"),
            problem: ProblemConfig::default(),
            data: DataConfig::default(),
            solver: SolverSection::default(),
            network: NetworkConfig::default(),
            head: HeadConfig::default(),
            train: TrainSection::default(),
            heuristic: HeuristicConfig {
                epsilon: 1e-6,
                diagonalize: true,
            },
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "toy" => Self::from_toml(TOY_PRESET),
            "portfolio" => Self::from_toml(PORTFOLIO_PRESET),
            "quadcopter" => Self::from_toml(QUADCOPTER_PRESET),
            other => Err(Error::Config(format!("unknown preset {other:?}"))),
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization without `out_dir`, truncated
    /// to 16 hex digits.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.out_dir = PathBuf::new();
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        hex(&digest[..8])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.solver.k.is_empty() || self.solver.k.contains(&0) {
            return bad(format!(
                "solver.k must list positive unroll lengths, got {:?}",
                self.solver.k
            ));
        }
        if self.solver.algorithms.is_empty() {
            return bad("solver.algorithms is empty".into());
        }
        if !(self.solver.gamma > 0.0) || !(self.solver.error_floor > 0.0) {
            return bad("solver.gamma and solver.error_floor must be positive".into());
        }
        if self.solver.budget_dr == 0 || self.solver.budget_admm == 0 {
            return bad("test budgets must be positive".into());
        }
        for rho_max in self.head.candidates() {
            self.head.head(rho_max)?;
        }
        if self.head.rho_max_sweep.len() > 1 && self.data.val == 0 {
            return bad("a rho_max sweep needs a validation split".into());
        }
        let t = &self.train;
        if t.estimator_epochs == 0 || t.epochs == 0 || t.batch_size == 0 {
            return bad("epochs and batch size must be positive".into());
        }
        if !(t.learning_rate > 0.0) || !(t.estimator_learning_rate > 0.0) {
            return bad("learning rates must be positive".into());
        }
        if !(self.heuristic.epsilon > 0.0) {
            return bad("heuristic.epsilon must be positive".into());
        }
        if self.network.metric_hidden.contains(&0) || self.network.estimator_hidden.contains(&0) {
            return bad("hidden layer sizes must be positive".into());
        }
        Ok(())
    }

    pub fn estimator_train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.estimator_epochs,
            learning_rate: self.train.estimator_learning_rate,
            batch_size: self.train.batch_size,
            k: 1,
            seed: self.seed,
            optimizer: self.train.optimizer,
        }
    }

    pub fn metric_train_config(&self, k: usize) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            k,
            seed: self.seed,
            optimizer: self.train.optimizer,
        }
    }

    /// Layer sizes `[v, hidden…, out]`.
    pub fn layers(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        sizes
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_parse_and_differ() {
        let toy = ExperimentConfig::preset("toy").unwrap();
        let port = ExperimentConfig::preset("portfolio").unwrap();
        let quad = ExperimentConfig::preset("quadcopter").unwrap();
        assert_eq!(toy.problem.name(), "toy");
        assert_eq!(
            (port.data.train, port.data.val, port.data.test),
            (5000, 500, 500)
        );
        assert_eq!(port.solver.k, vec![5, 10, 15, 20, 25, 30]);
        assert_eq!(quad.solver.k.len(), 8);
        assert_eq!(
            port.head.rho_max_sweep,
            vec![1.0, 5.0, 10.0, 50.0, 100.0, 500.0]
        );
        assert_eq!(
            (
                toy.head.m_min,
                toy.head.m_max,
                toy.head.rho_min,
                toy.head.rho_max
            ),
            (0.2, 5.0, 0.05, 1.0)
        );
        assert_ne!(toy.hash(), port.hash());
        assert!(ExperimentConfig::preset("lasso").is_err());
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = ExperimentConfig::from_toml("seed = 4\n").unwrap();
        assert_eq!(cfg.seed, 4);
        assert_eq!(cfg.data, DataConfig::default());
        let quad = ExperimentConfig::from_toml("[problem]\nfamily = \"quadcopter\"\n").unwrap();
        assert_eq!(
            quad.problem,
            ProblemConfig::Quadcopter {
                horizon: 10,
                attitude_range: PI / 6.0,
                other_range: 0.8
            }
        );
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        for text in [
            "sed = 1\n",
            "[solver]\ngama = 1.0\n",
            "[problem]\nfamily = \"toy\"\nassets = 3\n",
            "[problem]\nfamily = \"lasso\"\n",
            "[solver]\nk = [0]\n",
            "[head]\nm_min = 2.0\nm_max = 1.0\n",
            "[head]\nrho_max_sweep = [1.0, 5.0]\n",
            "[train]\noptimizer = \"rmsprop\"\n",
        ] {
            let err = ExperimentConfig::from_toml(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "{text}: {err}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn round_trip_preserves_hash() {
        let cfg = ExperimentConfig::preset("portfolio").unwrap();
        let back = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
        let mut other = cfg.clone();
        other.seed = 2;
        assert_ne!(other.hash(), cfg.hash());
        let mut moved = cfg.clone();
        moved.out_dir = PathBuf::from("elsewhere");
        assert_eq!(moved.hash(), cfg.hash());
    }
}
