//! Experiment configuration: a versioned TOML file with strict keys.
//!
//! The auction block defines the spaces: behaviors are the joint bid
//! profiles over the bid grid, signals are the nine `(shown, clicks)`
//! labels, and users are the configured queries with per-slot click
//! probabilities. The loss bound is derived (`K = 2 * max bid`). Unknown
//! keys anywhere are errors.

use std::path::Path;

use serde::Deserialize;

use crate::bounds::MixingParameters;
use crate::error::{Error, Result};
use crate::gsp::{GspConfig, GspEnv, QuerySpec};
use crate::mechanism::{Environment, Mechanism};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    /// Global seed; every task derives its stream from this and the task
    /// index.
    pub seed: u64,
    pub auction: AuctionConfig,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub behavior_learning: BehaviorLearningConfig,
    #[serde(default)]
    pub mechanism_learning: MechanismLearningConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AuctionConfig {
    pub advertisers: usize,
    pub bid_levels: Vec<f64>,
    pub reserve_levels: Vec<f64>,
    pub queries: Vec<QueryConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryConfig {
    pub name: String,
    pub prob: f64,
    pub click_probs: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    /// Minimum transition probability of the generated ground truth.
    pub positivity_floor: f64,
    /// Use one shared matrix for every signal (mechanism-independent
    /// chain).
    pub signal_independent: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { positivity_floor: 0.06, signal_independent: false }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BehaviorLearningConfig {
    /// `nonparametric` or `parametric`.
    pub method: String,
    pub weight_bound: f64,
    pub restarts: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    /// Trajectory file (relative to the output directory) consumed by
    /// `fit-behavior`.
    pub trajectory_file: String,
    /// Generating weights for the parametric convergence experiments.
    pub true_weights: Vec<f64>,
}

impl Default for BehaviorLearningConfig {
    fn default() -> Self {
        Self {
            method: "nonparametric".into(),
            weight_bound: 2.0,
            restarts: 10,
            max_iters: 500,
            grad_tol: 1e-8,
            trajectory_file: "trajectory.csv".into(),
            true_weights: vec![0.8, -0.5, 0.3],
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MechanismLearningConfig {
    /// Sharing radius; defaults to one reserve-grid step.
    pub delta: Option<f64>,
    /// `mechanism` (the d_A rule) or `stationary` (the TV rule).
    pub rule: String,
    /// Reserves of the mechanism the training data is collected under.
    pub training_reserves: Option<Vec<f64>>,
}

impl Default for MechanismLearningConfig {
    fn default() -> Self {
        Self { delta: None, rule: "mechanism".into(), training_reserves: None }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Replication streams; each entry seeds one independent replication.
    pub seeds: Vec<u64>,
    pub t1_sweep: Vec<usize>,
    pub t2_sweep: Vec<usize>,
    /// Thresholds for the empirical tail summaries.
    pub tail_epsilons: Vec<f64>,
    /// Trajectory length written by `simulate`.
    pub simulate_t: usize,
    pub ablation_grid_sizes: Vec<usize>,
    pub ablation_t2: usize,
    pub ablation_seeds: Vec<u64>,
    /// Sharing radius for the ablation's sharing-on arm.
    pub ablation_delta: Option<f64>,
    /// The ablation requires the mechanism-independent chain; it refuses
    /// to run when this is disabled.
    pub ablation_signal_independent: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seeds: (0..20).collect(),
            t1_sweep: vec![1_000, 10_000, 100_000],
            t2_sweep: vec![100, 1_000, 10_000],
            tail_epsilons: vec![0.1, 0.25, 0.5],
            simulate_t: 1_000,
            ablation_grid_sizes: vec![5, 50, 500],
            ablation_t2: 1_000,
            ablation_seeds: (0..50).collect(),
            ablation_delta: None,
            ablation_signal_independent: true,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsConfig {
    pub beta0: f64,
    pub gamma: f64,
    pub s: f64,
    pub alpha: f64,
    /// Proof constants of the behavior bounds; documented default 1.0.
    pub c1: f64,
    pub c2: f64,
    /// Stability constant standing in for C(M*); documented default 1.0.
    pub c_hat: f64,
    pub pseudo_dim: usize,
    /// Fraction of eps spent on the behavior term of the total bound.
    pub behavior_fraction: f64,
    /// Replications for the empirical tail column of `bounds` (0 disables).
    pub empirical_seeds: Vec<u64>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            beta0: 1.0,
            gamma: 2.0,
            s: 1.0,
            alpha: 1.0,
            c1: 1.0,
            c2: 1.0,
            c_hat: 1.0,
            pseudo_dim: 2,
            behavior_fraction: 0.5,
            empirical_seeds: vec![],
        }
    }
}

impl Config {
    #[allow(clippy::should_implement_trait)] // fallible, unlike FromStr here
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: Config =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::from_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.experiment.seeds.is_empty() || self.experiment.ablation_seeds.is_empty() {
            return Err(Error::Config("seed lists must be non-empty".into()));
        }
        for (name, sweep) in [
            ("t1_sweep", &self.experiment.t1_sweep),
            ("t2_sweep", &self.experiment.t2_sweep),
        ] {
            if sweep.is_empty() || sweep.contains(&0) {
                return Err(Error::Config(format!("{name} values must be positive")));
            }
        }
        if self.experiment.simulate_t == 0 || self.experiment.ablation_t2 == 0 {
            return Err(Error::Config("trajectory lengths must be positive".into()));
        }
        if self.experiment.ablation_grid_sizes.contains(&0) {
            return Err(Error::Config("ablation grid sizes must be positive".into()));
        }
        match self.behavior_learning.method.as_str() {
            "nonparametric" | "parametric" => {}
            other => {
                return Err(Error::Config(format!(
                    "behavior_learning.method must be 'nonparametric' or 'parametric', got {other:?}"
                )))
            }
        }
        match self.mechanism_learning.rule.as_str() {
            "mechanism" | "stationary" => {}
            other => {
                return Err(Error::Config(format!(
                    "mechanism_learning.rule must be 'mechanism' or 'stationary', got {other:?}"
                )))
            }
        }
        // building the environment validates the auction block
        let env = self.build_env()?;
        if let Some(reserves) = &self.mechanism_learning.training_reserves {
            env.reserve_mechanism(reserves).map_err(|e| Error::Config(e.to_string()))?;
        }
        if self.model.positivity_floor <= 0.0
            || self.model.positivity_floor * env.n_behaviors() as f64 > 1.0
        {
            return Err(Error::Config(format!(
                "positivity_floor {} outside (0, 1/{}]",
                self.model.positivity_floor,
                env.n_behaviors()
            )));
        }
        self.mixing_parameters().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn gsp_config(&self) -> GspConfig {
        GspConfig {
            advertisers: self.auction.advertisers,
            bid_levels: self.auction.bid_levels.clone(),
            reserve_levels: self.auction.reserve_levels.clone(),
            queries: self
                .auction
                .queries
                .iter()
                .map(|q| QuerySpec {
                    name: q.name.clone(),
                    prob: q.prob,
                    click_probs: q.click_probs,
                })
                .collect(),
        }
    }

    pub fn build_env(&self) -> Result<GspEnv> {
        GspEnv::new(&self.gsp_config()).map_err(|e| Error::Config(e.to_string()))
    }

    /// The mechanism training data is collected under: configured reserves
    /// or zero reserves for every query.
    pub fn training_mechanism(&self, env: &GspEnv) -> Result<Mechanism> {
        match &self.mechanism_learning.training_reserves {
            Some(r) => env.reserve_mechanism(r),
            None => env.reserve_mechanism(&vec![0.0; self.auction.queries.len()]),
        }
    }

    /// Sharing radius: configured, or one reserve-grid step.
    pub fn sharing_delta(&self) -> f64 {
        if let Some(d) = self.mechanism_learning.delta {
            return d;
        }
        let mut levels = self.auction.reserve_levels.clone();
        levels.sort_by(|a, b| a.partial_cmp(b).unwrap());
        levels
            .windows(2)
            .map(|w| w[1] - w[0])
            .filter(|&g| g > 0.0)
            .fold(f64::INFINITY, f64::min)
            .min(1.0)
    }

    pub fn mixing_parameters(&self) -> Result<MixingParameters> {
        let env = self.build_env()?;
        MixingParameters::new(
            self.bounds.beta0,
            self.bounds.gamma,
            self.bounds.s,
            self.bounds.alpha,
            env.loss_bound(),
            self.bounds.c1,
            self.bounds.c2,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
seed = 42

[auction]
advertisers = 3
bid_levels = [1.0, 2.0]
reserve_levels = [0.0, 0.5, 1.0, 1.5, 2.0]

[[auction.queries]]
name = "q0"
prob = 0.6
click_probs = [0.55, 1.0]

[[auction.queries]]
name = "q1"
prob = 0.4
click_probs = [0.45, 1.0]
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = Config::from_str(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.experiment.seeds.len(), 20);
        assert_eq!(cfg.behavior_learning.method, "nonparametric");
        let env = cfg.build_env().unwrap();
        assert_eq!(env.n_behaviors(), 8);
        assert!((cfg.sharing_delta() - 0.5).abs() < 1e-12);
        let a0 = cfg.training_mechanism(&env).unwrap();
        assert_eq!(a0.params(), &[0.0, 0.0]);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let bad = format!("{MINIMAL}\n[experiment]\nnot_a_key = 1\n");
        let err = Config::from_str(&bad);
        assert!(matches!(err, Err(Error::Config(_))), "{err:?}");
    }

    #[test]
    fn schema_version_is_enforced() {
        let bad = MINIMAL.replace("schema_version = 1", "schema_version = 99");
        assert!(Config::from_str(&bad).is_err());
    }

    #[test]
    fn bad_probabilities_are_config_errors() {
        let bad = MINIMAL.replace("prob = 0.6", "prob = 0.9");
        assert!(Config::from_str(&bad).is_err());
    }

    #[test]
    fn empty_seed_list_rejected() {
        let bad = format!("{MINIMAL}\n[experiment]\nseeds = []\n");
        assert!(Config::from_str(&bad).is_err());
    }
}
