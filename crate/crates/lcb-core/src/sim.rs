//! Synthetic environment with planted latent classes and exact regret
//! accounting.

use nalgebra::DVector;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{LcbError, Result};
use crate::latent::{MixtureComponent, MixtureModel};
use crate::orchestrator::InteractiveAlgorithm;
use crate::types::Context;

/// Parameters of the planted environment.
#[derive(Debug, Clone)]
pub struct SimSpec {
    /// Number of planted latent classes.
    pub n_true: usize,
    pub dim: usize,
    pub num_arms: usize,
    pub noise_sigma: f64,
    /// Class mixing weights; `None` means uniform.
    pub mixing: Option<Vec<f64>>,
    /// Interactions per user.
    pub t_u: usize,
    /// Seed of the planted models (kept fixed across replications).
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            n_true: 5,
            dim: 10,
            num_arms: 20,
            noise_sigma: 0.1,
            mixing: None,
            t_u: 20,
            seed: 0,
        }
    }
}

/// Plant `n_true` coefficient vectors: each gets 4 dominant coordinates
/// (cycled through the dimensions so overlaps are minimized), dominant
/// values drawn uniform [0.5, 1], the rest uniform [0, 0.1], then
/// unit-normalized.
pub fn generate_models(spec: &SimSpec) -> Result<MixtureModel> {
    const DOMINANT: usize = 4;
    if spec.dim < DOMINANT {
        return Err(LcbError::InvalidParameter(format!(
            "dim must be at least {DOMINANT} for the dominant-coordinate pattern"
        )));
    }
    if spec.n_true == 0 {
        return Err(LcbError::InvalidParameter(
            "n_true must be at least 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mixing = match &spec.mixing {
        Some(m) => {
            if m.len() != spec.n_true {
                return Err(LcbError::InvalidParameter(
                    "mixing length must equal n_true".into(),
                ));
            }
            m.clone()
        }
        None => vec![1.0 / spec.n_true as f64; spec.n_true],
    };
    let mut components = Vec::with_capacity(spec.n_true);
    for (h, &pi) in mixing.iter().enumerate() {
        let mut beta = DVector::from_fn(spec.dim, |_, _| rng.gen_range(0.0..0.1));
        for j in 0..DOMINANT {
            let coord = (h * DOMINANT + j) % spec.dim;
            beta[coord] = rng.gen_range(0.5..1.0);
        }
        beta /= beta.norm();
        components.push(MixtureComponent {
            pi,
            beta,
            // Floored so a noiseless environment still yields a valid model.
            sigma2: (spec.noise_sigma * spec.noise_sigma).max(1e-12),
        });
    }
    MixtureModel::new(components)
}

/// Per-step regret: gap between the best arm's expected reward and the
/// chosen arm's, under the user's true coefficients.
pub fn regret_step(beta: &DVector<f64>, ctx: &Context, chosen: usize) -> f64 {
    let best = ctx
        .arms()
        .iter()
        .map(|x| beta.dot(x))
        .fold(f64::NEG_INFINITY, f64::max);
    best - beta.dot(ctx.arm(chosen))
}

/// One seeded replication of the environment.
pub struct SimEnv {
    models: MixtureModel,
    mixing: Vec<f64>,
    num_arms: usize,
    dim: usize,
    noise_sigma: f64,
    rng: ChaCha8Rng,
    clip_count: u64,
}

impl SimEnv {
    pub fn new(spec: &SimSpec, env_seed: u64) -> Result<Self> {
        let models = generate_models(spec)?;
        Self::with_models(spec, models, env_seed)
    }

    pub fn with_models(spec: &SimSpec, models: MixtureModel, env_seed: u64) -> Result<Self> {
        let mixing = match &spec.mixing {
            Some(m) => m.clone(),
            None => vec![1.0 / spec.n_true as f64; spec.n_true],
        };
        Ok(Self {
            models,
            mixing,
            num_arms: spec.num_arms,
            dim: spec.dim,
            noise_sigma: spec.noise_sigma,
            rng: ChaCha8Rng::seed_from_u64(env_seed),
            clip_count: 0,
        })
    }

    pub fn models(&self) -> &MixtureModel {
        &self.models
    }

    pub fn draw_user_class(&mut self) -> usize {
        let u: f64 = self.rng.gen();
        let mut acc = 0.0;
        for (h, pi) in self.mixing.iter().enumerate() {
            acc += pi;
            if u < acc {
                return h;
            }
        }
        self.mixing.len() - 1
    }

    /// `K` arm vectors sampled uniform on [-1, 1]^d and scaled to unit norm.
    pub fn sample_context(&mut self, step: usize) -> Context {
        let arms = (0..self.num_arms)
            .map(|_| loop {
                let x = DVector::from_fn(self.dim, |_, _| self.rng.gen_range(-1.0..1.0));
                let n = x.norm();
                if n > 1e-12 {
                    break x / n;
                }
            })
            .collect();
        Context::new(arms, step).expect("generated context is valid")
    }

    /// Draw `beta' x + N(0, sigma^2)` and clip into the [0, 1] reward range;
    /// clips are counted so their rate can be audited.
    pub fn sample_reward(&mut self, class: usize, x: &DVector<f64>) -> f64 {
        let mean = self.models.components()[class].beta.dot(x);
        let noise = if self.noise_sigma > 0.0 {
            Normal::new(0.0, self.noise_sigma)
                .unwrap()
                .sample(&mut self.rng)
        } else {
            0.0
        };
        let raw = mean + noise;
        if !(0.0..=1.0).contains(&raw) {
            self.clip_count += 1;
        }
        raw.clamp(0.0, 1.0)
    }

    pub fn clip_count(&self) -> u64 {
        self.clip_count
    }
}

/// Per-run metrics: cumulative regret and reward per user, in arrival order.
#[derive(Debug, Clone, Default)]
pub struct SimMetrics {
    pub per_user_regret: Vec<f64>,
    pub per_user_reward: Vec<f64>,
    pub user_classes: Vec<usize>,
    pub clip_count: u64,
}

impl SimMetrics {
    pub fn mean_per_user_regret(&self) -> f64 {
        if self.per_user_regret.is_empty() {
            return 0.0;
        }
        self.per_user_regret.iter().sum::<f64>() / self.per_user_regret.len() as f64
    }
}

/// Drive an interactive algorithm through `num_users` sequential users.
///
/// The environment draws its own seed from `rng`, so a single seed
/// reproduces the entire run (environment and algorithm randomness alike).
pub fn run_simulation<R: Rng + RngCore>(
    spec: &SimSpec,
    algo: &mut dyn InteractiveAlgorithm,
    num_users: u64,
    rng: &mut R,
) -> Result<SimMetrics> {
    let env_seed = rng.next_u64();
    let mut env = SimEnv::new(spec, env_seed)?;
    run_in_env(spec, &mut env, algo, num_users, rng)
}

pub fn run_in_env<R: Rng + RngCore>(
    spec: &SimSpec,
    env: &mut SimEnv,
    algo: &mut dyn InteractiveAlgorithm,
    num_users: u64,
    rng: &mut R,
) -> Result<SimMetrics> {
    let mut metrics = SimMetrics::default();
    for user in 1..=num_users {
        let class = env.draw_user_class();
        algo.begin_user(user);
        let mut regret = 0.0;
        let mut reward_total = 0.0;
        for step in 1..=spec.t_u {
            let ctx = env.sample_context(step);
            let arm = algo.select_arm(&ctx, rng)?;
            let reward = env.sample_reward(class, ctx.arm(arm));
            algo.observe(&ctx, arm, reward)?;
            regret += regret_step(&env.models().components()[class].beta, &ctx, arm);
            reward_total += reward;
        }
        metrics.per_user_regret.push(regret);
        metrics.per_user_reward.push(reward_total);
        metrics.user_classes.push(class);
    }
    metrics.clip_count = env.clip_count();
    Ok(metrics)
}
