//! Experiment configuration: TOML-parsed, fully defaulted so the standard
//! protocols run with no flags, and hashed so every metric row carries its
//! provenance.

use std::fmt;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use lcb_core::bandits::BanditAlgo;
use lcb_core::orchestrator::{LcbConfig, Learner, Phase1Mode};
use lcb_core::sim::SimSpec;
use lcb_core::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Sim,
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmId {
    Lcb,
    /// LCB served the planted latent models instead of learned ones.
    LcbGt,
    PopulationLinucb,
    IndividualLinucb,
    Random,
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            AlgorithmId::Lcb => "lcb",
            AlgorithmId::LcbGt => "lcb_gt",
            AlgorithmId::PopulationLinucb => "population_linucb",
            AlgorithmId::IndividualLinucb => "individual_linucb",
            AlgorithmId::Random => "random",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for AlgorithmId {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "lcb" => AlgorithmId::Lcb,
            "lcb_gt" => AlgorithmId::LcbGt,
            "population_linucb" => AlgorithmId::PopulationLinucb,
            "individual_linucb" => AlgorithmId::IndividualLinucb,
            "random" => AlgorithmId::Random,
            other => bail!("unknown algorithm {other:?}"),
        })
    }
}

/// Synthetic-environment settings (the standard protocol's constants are the
/// defaults).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_true: usize,
    pub dim: usize,
    pub num_arms: usize,
    pub noise_sigma: f64,
    pub t_u: usize,
    /// Extra per-user horizons to sweep; empty means just `t_u`.
    pub t_u_sweep: Vec<usize>,
    pub users: u64,
    /// Seed of the planted models, fixed across replication seeds.
    pub model_seed: u64,
    /// Emit a curve point every this many users.
    pub checkpoint_every: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            n_true: 5,
            dim: 10,
            num_arms: 20,
            noise_sigma: 0.1,
            t_u: 20,
            t_u_sweep: Vec::new(),
            users: 1000,
            model_seed: 0,
            checkpoint_every: 50,
        }
    }
}

impl SimSection {
    pub fn spec(&self, t_u: usize) -> SimSpec {
        SimSpec {
            n_true: self.n_true,
            dim: self.dim,
            num_arms: self.num_arms,
            noise_sigma: self.noise_sigma,
            mixing: None,
            t_u,
            seed: self.model_seed,
        }
    }

    pub fn horizons(&self) -> Vec<usize> {
        if self.t_u_sweep.is_empty() {
            vec![self.t_u]
        } else {
            self.t_u_sweep.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerId {
    Em,
    Gibbs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BanditId {
    Exp3,
    Exp4p,
    EpochGreedy,
    Gts,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyId {
    Deterministic,
    Probabilistic,
}

/// Agent settings shared by the `lcb` and `lcb_gt` roster entries.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LcbSection {
    pub phase1_users: u64,
    pub max_components: usize,
    /// Users between retrainings; 0 means train once and freeze.
    pub retrain_every: usize,
    /// Uniform-random exploration steps at the start of every user.
    pub tau: usize,
    pub learner: LearnerId,
    pub em_iters: usize,
    pub gibbs_burn_in: usize,
    pub gibbs_samples: usize,
    pub policy: PolicyId,
    pub temperature: f64,
    pub bandit: BanditId,
    pub eta: f64,
    pub exp4p_delta: f64,
    pub iid_only: bool,
    pub ridge: f64,
    pub alpha_ucb: f64,
    pub seed: u64,
}

impl Default for LcbSection {
    fn default() -> Self {
        Self {
            phase1_users: 50,
            max_components: 5,
            retrain_every: 50,
            tau: 0,
            learner: LearnerId::Em,
            em_iters: 50,
            gibbs_burn_in: 50,
            gibbs_samples: 50,
            policy: PolicyId::Deterministic,
            temperature: 1.0,
            bandit: BanditId::Gts,
            // Likelihood-weighting rate 1/(2 sigma^2) for sigma = 0.1.
            eta: 50.0,
            exp4p_delta: 0.05,
            iid_only: false,
            ridge: 1.0,
            alpha_ucb: 1.0,
            seed: 0,
        }
    }
}

impl LcbSection {
    pub fn agent_config(&self, horizon: Option<usize>) -> LcbConfig {
        LcbConfig {
            phase1_users: self.phase1_users,
            max_components: self.max_components,
            retrain_every: if self.retrain_every == 0 {
                usize::MAX
            } else {
                self.retrain_every
            },
            tau: self.tau,
            phase1_mode: Phase1Mode::Shared,
            learner: match self.learner {
                LearnerId::Em => Learner::Em {
                    max_iters: self.em_iters,
                },
                LearnerId::Gibbs => Learner::Gibbs {
                    burn_in: self.gibbs_burn_in,
                    samples: self.gibbs_samples,
                },
            },
            policy_kind: match self.policy {
                PolicyId::Deterministic => PolicyKind::Deterministic,
                PolicyId::Probabilistic => PolicyKind::Probabilistic,
            },
            temperature: self.temperature,
            bandit: match self.bandit {
                BanditId::Exp3 => BanditAlgo::Exp3 { gamma: None },
                BanditId::Exp4p => BanditAlgo::Exp4P {
                    p_min: None,
                    delta: self.exp4p_delta,
                },
                BanditId::EpochGreedy => BanditAlgo::EpochGreedy,
                BanditId::Gts => BanditAlgo::Gts { eta: self.eta },
            },
            iid_only: self.iid_only,
            ridge: self.ridge,
            alpha_ucb: self.alpha_ucb,
            horizon_hint: horizon,
            seed: self.seed,
        }
    }
}

/// Offline (logged-data) experiment settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OfflineSection {
    /// Training log; generated synthetically when absent.
    pub train_log: Option<PathBuf>,
    /// Evaluation log; generated synthetically when absent.
    pub eval_log: Option<PathBuf>,
    pub train_users: u64,
    pub eval_users: u64,
    pub records_per_user: usize,
    pub num_classes: usize,
    pub num_categories: usize,
    pub projected_dim: usize,
    pub t_u: usize,
    pub preferred_rate: f64,
    pub base_rate: f64,
    pub preferred_per_class: usize,
    pub two_category_prob: f64,
    /// Seed of the synthetic logs (train uses it directly, eval an offset).
    pub log_seed: u64,
}

impl Default for OfflineSection {
    fn default() -> Self {
        Self {
            train_log: None,
            eval_log: None,
            train_users: 20_000,
            eval_users: 2_000,
            records_per_user: 40,
            num_classes: 10,
            num_categories: 21,
            projected_dim: 6,
            t_u: 20,
            preferred_rate: 0.5,
            base_rate: 0.05,
            preferred_per_class: 2,
            two_category_prob: 0.3,
            log_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub algorithms: Vec<AlgorithmId>,
    /// Replication seeds 0..seeds.
    pub seeds: u64,
    pub out_dir: PathBuf,
    pub sim: SimSection,
    pub lcb: LcbSection,
    pub offline: OfflineSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Sim,
            algorithms: vec![
                AlgorithmId::Lcb,
                AlgorithmId::LcbGt,
                AlgorithmId::PopulationLinucb,
                AlgorithmId::IndividualLinucb,
                AlgorithmId::Random,
            ],
            seeds: 20,
            out_dir: PathBuf::from("out"),
            sim: SimSection::default(),
            lcb: LcbSection::default(),
            offline: OfflineSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = toml::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.algorithms.is_empty() {
            bail!("algorithm roster must not be empty");
        }
        if self.seeds == 0 {
            bail!("seeds must be at least 1");
        }
        if self.sim.users == 0 || self.sim.checkpoint_every == 0 {
            bail!("sim.users and sim.checkpoint_every must be positive");
        }
        Ok(())
    }

    /// Short digest of the fully-resolved config, stamped on every output
    /// row. The output directory is excluded: where results are written does
    /// not change what experiment they came from.
    pub fn hash(&self) -> String {
        let mut normalized = self.clone();
        normalized.out_dir = PathBuf::new();
        let canonical = serde_json::to_string(&normalized).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        let mut out = String::with_capacity(12);
        for b in digest.iter().take(6) {
            out.push_str(&format!("{b:02x}"));
        }
        out
    }
}
