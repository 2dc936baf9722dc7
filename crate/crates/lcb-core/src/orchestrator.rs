//! End-to-end latent contextual bandit agent: phase-1 bootstrap with LinUCB
//! and data collection, phase-2 learn-construct-serve with a retraining
//! schedule, plus the baseline agents used in the experiments.

use rand::{Rng, RngCore};

use crate::bandits::{BanditAlgo, BanditState, Choice};
use crate::error::{LcbError, Result};
use crate::latent::{MixtureModel, Policy, PolicyKind};
use crate::linucb::LinUcb;
use crate::mlr::{em_fit, fit_gibbs, EmConfig, GibbsConfig};
use crate::types::{Context, InteractionLog, InteractionRecord};

/// Anything that can be dropped into an interactive evaluation loop: the
/// harness announces each new user, asks for an arm per context, and feeds
/// the observed reward back.
pub trait InteractiveAlgorithm {
    fn begin_user(&mut self, user_id: u64);
    fn select_arm(&mut self, ctx: &Context, rng: &mut dyn RngCore) -> Result<usize>;
    fn observe(&mut self, ctx: &Context, arm: usize, reward: f64) -> Result<()>;
}

/// Uniform-random arm selection.
#[derive(Debug, Default)]
pub struct RandomAgent;

impl InteractiveAlgorithm for RandomAgent {
    fn begin_user(&mut self, _user_id: u64) {}

    fn select_arm(&mut self, ctx: &Context, rng: &mut dyn RngCore) -> Result<usize> {
        Ok(rng.gen_range(0..ctx.num_arms()))
    }

    fn observe(&mut self, _ctx: &Context, _arm: usize, _reward: f64) -> Result<()> {
        Ok(())
    }
}

/// One LinUCB instance shared by every user.
#[derive(Debug)]
pub struct PopulationLinUcb {
    ridge: f64,
    alpha_ucb: f64,
    lin: Option<LinUcb>,
}

impl PopulationLinUcb {
    pub fn new(ridge: f64, alpha_ucb: f64) -> Self {
        Self {
            ridge,
            alpha_ucb,
            lin: None,
        }
    }

    fn ensure(&mut self, dim: usize) -> Result<&mut LinUcb> {
        if self.lin.is_none() {
            self.lin = Some(LinUcb::new(dim, self.ridge, self.alpha_ucb)?);
        }
        Ok(self.lin.as_mut().unwrap())
    }
}

impl InteractiveAlgorithm for PopulationLinUcb {
    fn begin_user(&mut self, _user_id: u64) {}

    fn select_arm(&mut self, ctx: &Context, _rng: &mut dyn RngCore) -> Result<usize> {
        let lin = self.ensure(ctx.dim())?;
        Ok(lin.select(ctx)?.0)
    }

    fn observe(&mut self, ctx: &Context, arm: usize, reward: f64) -> Result<()> {
        let lin = self.ensure(ctx.dim())?;
        lin.update(ctx.arm(arm), reward)
    }
}

/// A fresh LinUCB instance per user.
#[derive(Debug)]
pub struct IndividualLinUcb {
    ridge: f64,
    alpha_ucb: f64,
    current: Option<LinUcb>,
}

impl IndividualLinUcb {
    pub fn new(ridge: f64, alpha_ucb: f64) -> Self {
        Self {
            ridge,
            alpha_ucb,
            current: None,
        }
    }
}

impl InteractiveAlgorithm for IndividualLinUcb {
    fn begin_user(&mut self, _user_id: u64) {
        self.current = None;
    }

    fn select_arm(&mut self, ctx: &Context, _rng: &mut dyn RngCore) -> Result<usize> {
        if self.current.is_none() {
            self.current = Some(LinUcb::new(ctx.dim(), self.ridge, self.alpha_ucb)?);
        }
        Ok(self.current.as_ref().unwrap().select(ctx)?.0)
    }

    fn observe(&mut self, ctx: &Context, arm: usize, reward: f64) -> Result<()> {
        if let Some(lin) = self.current.as_mut() {
            lin.update(ctx.arm(arm), reward)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase1Mode {
    /// One LinUCB instance shared by all phase-1 users (the empirical setup).
    Shared,
    /// A separate LinUCB instance per phase-1 user (the analysis setup).
    PerUser,
}

/// Which latent-model learner the retraining step runs.
#[derive(Debug, Clone)]
pub enum Learner {
    Gibbs {
        burn_in: usize,
        samples: usize,
    },
    Em {
        max_iters: usize,
    },
}

#[derive(Debug, Clone)]
pub struct LcbConfig {
    /// Number of phase-1 bootstrap users (J). 0 skips phase 1 entirely.
    pub phase1_users: u64,
    /// Cap on the number of latent models / policies (N).
    pub max_components: usize,
    /// Users between re-trainings; `usize::MAX` trains once and never again.
    pub retrain_every: usize,
    /// Uniform-random i.i.d. exploration steps at the start of every user.
    pub tau: usize,
    pub phase1_mode: Phase1Mode,
    pub learner: Learner,
    pub policy_kind: PolicyKind,
    pub temperature: f64,
    pub bandit: BanditAlgo,
    /// Train on i.i.d. records only (analysis mode) instead of everything.
    pub iid_only: bool,
    pub ridge: f64,
    pub alpha_ucb: f64,
    /// Expected per-user horizon, used to tune the bandit's exploration.
    pub horizon_hint: Option<usize>,
    /// Base seed for the learner (advanced per retraining).
    pub seed: u64,
}

impl Default for LcbConfig {
    fn default() -> Self {
        Self {
            phase1_users: 50,
            max_components: 5,
            retrain_every: 50,
            tau: 0,
            phase1_mode: Phase1Mode::Shared,
            learner: Learner::Em { max_iters: 50 },
            policy_kind: PolicyKind::Deterministic,
            temperature: 1.0,
            // Likelihood-weighting rate 1/(2 sigma^2) for sigma = 0.1 rewards.
            bandit: BanditAlgo::Gts { eta: 50.0 },
            iid_only: false,
            ridge: 1.0,
            alpha_ucb: 1.0,
            horizon_hint: Some(20),
            seed: 0,
        }
    }
}

struct Session {
    user_id: u64,
    step: usize,
    phase1: bool,
    /// Per-user LinUCB in analysis-mode phase 1.
    linucb: Option<LinUcb>,
    bandit: Option<BanditState>,
    /// Snapshot of the policy set taken when the user arrived.
    policies: Vec<Policy>,
    last_choice: Option<Choice>,
}

/// The full two-phase algorithm behind the [`InteractiveAlgorithm`] surface.
pub struct LcbAgent {
    cfg: LcbConfig,
    log: InteractionLog,
    users_started: u64,
    users_since_train: usize,
    shared_linucb: Option<LinUcb>,
    model: Option<MixtureModel>,
    policies: Vec<Policy>,
    session: Option<Session>,
    warnings: Vec<String>,
    retrain_count: usize,
    /// True when the latent models were injected (ground-truth mode); the
    /// agent then never retrains.
    injected: bool,
}

impl LcbAgent {
    pub fn new(cfg: LcbConfig) -> Self {
        Self {
            cfg,
            log: InteractionLog::new(),
            users_started: 0,
            users_since_train: 0,
            shared_linucb: None,
            model: None,
            policies: Vec::new(),
            session: None,
            warnings: Vec::new(),
            retrain_count: 0,
            injected: false,
        }
    }

    /// Ground-truth mode: skip learning and phase 1, serve straight from the
    /// provided latent models.
    pub fn with_true_models(mut cfg: LcbConfig, model: MixtureModel) -> Self {
        cfg.phase1_users = 0;
        let policies = model.policies(cfg.policy_kind, cfg.temperature);
        let mut agent = Self::new(cfg);
        agent.model = Some(model);
        agent.policies = policies;
        agent.injected = true;
        agent
    }

    /// Start phase 2 from a pre-trained model (batch mode); the agent will
    /// still retrain on schedule unless `retrain_every` is `usize::MAX`.
    pub fn with_pretrained(mut cfg: LcbConfig, model: MixtureModel) -> Self {
        cfg.phase1_users = 0;
        let policies = model.policies(cfg.policy_kind, cfg.temperature);
        let mut agent = Self::new(cfg);
        agent.model = Some(model);
        agent.policies = policies;
        agent
    }

    pub fn log(&self) -> &InteractionLog {
        &self.log
    }

    pub fn model(&self) -> Option<&MixtureModel> {
        self.model.as_ref()
    }

    pub fn policies(&self) -> &[Policy] {
        &self.policies
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn retrain_count(&self) -> usize {
        self.retrain_count
    }

    fn in_phase1(&self) -> bool {
        self.users_started <= self.cfg.phase1_users
    }

    fn retrain(&mut self) {
        let data = self.log.training_pairs(self.cfg.iid_only);
        if data.is_empty() {
            self.warnings
                .push("retraining skipped: no training data".into());
            return;
        }
        let seed = self.cfg.seed.wrapping_add(self.retrain_count as u64);
        let fitted = match &self.cfg.learner {
            Learner::Em { max_iters } => em_fit(
                &data,
                &EmConfig {
                    n_components: self.cfg.max_components,
                    max_iters: *max_iters,
                    seed,
                    tol: 1e-8,
                },
            )
            .map(|fit| fit.model),
            Learner::Gibbs { burn_in, samples } => {
                let dim = data[0].features[0].len();
                let prior = crate::mlr::NigPrior::standard(dim);
                fit_gibbs(
                    &data,
                    &prior,
                    &GibbsConfig {
                        burn_in: *burn_in,
                        samples: *samples,
                        seed,
                        max_components: self.cfg.max_components,
                        ..GibbsConfig::default()
                    },
                )
                .map(|run| run.model)
            }
        };
        match fitted {
            Ok(model) => {
                self.policies = model.policies(self.cfg.policy_kind, self.cfg.temperature);
                self.model = Some(model);
                self.users_since_train = 0;
                self.retrain_count += 1;
            }
            Err(e) => {
                // Keep serving with the previous policy set.
                self.warnings.push(format!("learner failure: {e}"));
            }
        }
    }
}

impl InteractiveAlgorithm for LcbAgent {
    fn begin_user(&mut self, user_id: u64) {
        self.users_started += 1;
        let phase1 = self.in_phase1();
        if !phase1 {
            if self.users_started == self.cfg.phase1_users + 1 {
                self.log.mark_phase_boundary();
            }
            let due = self.model.is_none()
                || (!self.injected
                    && self.cfg.retrain_every != usize::MAX
                    && self.users_since_train >= self.cfg.retrain_every);
            if due && !self.injected {
                self.retrain();
            }
            self.users_since_train += 1;
        }
        self.session = Some(Session {
            user_id,
            step: 0,
            phase1,
            linucb: None,
            bandit: None,
            policies: self.policies.clone(),
            last_choice: None,
        });
    }

    fn select_arm(&mut self, ctx: &Context, rng: &mut dyn RngCore) -> Result<usize> {
        let tau = self.cfg.tau;
        let session = self
            .session
            .as_mut()
            .ok_or_else(|| LcbError::InvalidParameter("select before begin_user".into()))?;
        session.last_choice = None;

        // i.i.d. collection window at the start of every user.
        if session.step < tau {
            return Ok(rng.gen_range(0..ctx.num_arms()));
        }

        if session.phase1 || session.policies.is_empty() {
            // Bootstrap (or learner-failure fallback): LinUCB.
            match self.cfg.phase1_mode {
                Phase1Mode::Shared => {
                    if self.shared_linucb.is_none() {
                        self.shared_linucb =
                            Some(LinUcb::new(ctx.dim(), self.cfg.ridge, self.cfg.alpha_ucb)?);
                    }
                    Ok(self.shared_linucb.as_ref().unwrap().select(ctx)?.0)
                }
                Phase1Mode::PerUser => {
                    if session.linucb.is_none() {
                        session.linucb =
                            Some(LinUcb::new(ctx.dim(), self.cfg.ridge, self.cfg.alpha_ucb)?);
                    }
                    Ok(session.linucb.as_ref().unwrap().select(ctx)?.0)
                }
            }
        } else {
            if session.bandit.is_none() {
                session.bandit = Some(self.cfg.bandit.create(
                    session.policies.len(),
                    ctx.num_arms(),
                    self.cfg.horizon_hint,
                )?);
            }
            let bandit = session.bandit.as_mut().unwrap();
            let choice = bandit.choose(ctx, &session.policies, rng)?;
            let arm = choice.arm;
            session.last_choice = Some(choice);
            Ok(arm)
        }
    }

    fn observe(&mut self, ctx: &Context, arm: usize, reward: f64) -> Result<()> {
        let tau = self.cfg.tau;
        let session = self
            .session
            .as_mut()
            .ok_or_else(|| LcbError::InvalidParameter("observe before begin_user".into()))?;
        let iid = session.step < tau;
        session.step += 1;
        self.log.append(InteractionRecord::new(
            session.user_id,
            session.step,
            ctx.clone(),
            arm,
            reward,
            iid,
        )?)?;

        if session.phase1 || session.policies.is_empty() {
            // LinUCB learns from every phase-1 pull, uniform ones included.
            match self.cfg.phase1_mode {
                Phase1Mode::Shared => {
                    if let Some(lin) = self.shared_linucb.as_mut() {
                        lin.update(ctx.arm(arm), reward)?;
                    }
                }
                Phase1Mode::PerUser => {
                    if let Some(lin) = session.linucb.as_mut() {
                        lin.update(ctx.arm(arm), reward)?;
                    }
                }
            }
        } else if !iid {
            if let (Some(bandit), Some(choice)) =
                (session.bandit.as_mut(), session.last_choice.take())
            {
                if choice.arm == arm {
                    bandit.learn(ctx, &session.policies, &choice, reward)?;
                }
            }
        }
        Ok(())
    }
}
