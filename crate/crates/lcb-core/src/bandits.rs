//! Policy-selection bandits: given the N constructed per-class policies,
//! learn per user which policy to follow.
//!
//! EXP3 treats each policy as an arm; EXP4.P consumes the probabilistic
//! policies' arm distributions as expert advice; Epoch-Greedy alternates
//! single exploration steps with greedy exploitation on importance-weighted
//! estimates; Generalized Thompson Sampling keeps a multiplicative-weights
//! posterior over policies driven by squared prediction error.
//!
//! All weight vectors are stored in log domain so rewards in [0, 1] can
//! never overflow or zero them out.

use rand::Rng;

use crate::error::{LcbError, Result};
use crate::latent::{Policy, PolicyKind};
use crate::mlr::log_sum_exp;
use crate::types::Context;

/// Which bandit to run over the policy set, with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BanditAlgo {
    Exp3 { gamma: Option<f64> },
    Exp4P { p_min: Option<f64>, delta: f64 },
    EpochGreedy,
    Gts { eta: f64 },
}

impl BanditAlgo {
    /// Instantiate per-user state. `horizon` (the user's T_u), when known,
    /// sets the tuned exploration rates; otherwise anytime defaults apply.
    pub fn create(
        &self,
        n_policies: usize,
        num_arms: usize,
        horizon: Option<usize>,
    ) -> Result<BanditState> {
        if n_policies == 0 {
            return Err(LcbError::EmptyInput("policy set"));
        }
        let n = n_policies as f64;
        Ok(match *self {
            BanditAlgo::Exp3 { gamma } => {
                let gamma = gamma.unwrap_or_else(|| match horizon {
                    Some(t) if t > 0 => {
                        (n * n.ln().max(0.0) / ((std::f64::consts::E - 1.0) * t as f64))
                            .sqrt()
                            .min(1.0)
                    }
                    _ => 0.1,
                });
                BanditState::Exp3(Exp3::new(n_policies, gamma)?)
            }
            BanditAlgo::Exp4P { p_min, delta } => {
                let k = num_arms as f64;
                let p_min = p_min.unwrap_or_else(|| match horizon {
                    Some(t) if t > 0 => (n.ln().max(0.0) / (k * t as f64)).sqrt().min(1.0 / k),
                    _ => 1.0 / (2.0 * k),
                });
                let bonus = match horizon {
                    Some(t) if t > 0 => ((n / delta).ln() / (k * t as f64)).sqrt(),
                    _ => 0.0,
                };
                BanditState::Exp4P(Exp4P::new(n_policies, num_arms, p_min, bonus)?)
            }
            BanditAlgo::EpochGreedy => BanditState::EpochGreedy(EpochGreedy::new(n_policies)),
            BanditAlgo::Gts { eta } => BanditState::Gts(Gts::new(n_policies, eta)?),
        })
    }
}

/// Outcome of one selection round.
#[derive(Debug, Clone)]
pub struct Choice {
    pub arm: usize,
    /// The policy followed, when the algorithm commits to one.
    pub policy: Option<usize>,
    /// The selection distribution used this round (over policies for
    /// EXP3/GTS, over arms for EXP4.P and Epoch-Greedy).
    pub dist: Vec<f64>,
    /// True iff this round was a uniform exploration pull.
    pub explore: bool,
}

/// Per-user state of the configured policy-selection algorithm.
#[derive(Debug, Clone)]
pub enum BanditState {
    Exp3(Exp3),
    Exp4P(Exp4P),
    EpochGreedy(EpochGreedy),
    Gts(Gts),
}

impl BanditState {
    pub fn choose<R: Rng + ?Sized>(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        rng: &mut R,
    ) -> Result<Choice> {
        match self {
            BanditState::Exp3(s) => s.round(ctx, policies, rng),
            BanditState::Exp4P(s) => s.round(ctx, policies, rng),
            BanditState::EpochGreedy(s) => s.round(ctx, policies, rng),
            BanditState::Gts(s) => s.round(ctx, policies, rng),
        }
    }

    pub fn learn(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        choice: &Choice,
        reward: f64,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(LcbError::RewardOutOfRange(reward));
        }
        match self {
            BanditState::Exp3(s) => {
                let policy = choice.policy.expect("exp3 choice carries a policy");
                s.update(policy, reward)
            }
            BanditState::Exp4P(s) => s.update(ctx, policies, choice.arm, reward),
            BanditState::EpochGreedy(s) => {
                if choice.explore {
                    s.record_exploration(ctx.clone(), choice.arm, reward);
                }
                Ok(())
            }
            BanditState::Gts(s) => {
                let x = ctx.arm(choice.arm);
                let predictions: Vec<f64> = policies.iter().map(|p| p.beta.dot(x)).collect();
                s.update(&predictions, reward)
            }
        }
    }
}

fn normalized_weights(log_w: &[f64]) -> Vec<f64> {
    let z = log_sum_exp(log_w);
    log_w.iter().map(|lw| (lw - z).exp()).collect()
}

fn sample_categorical<R: Rng + ?Sized>(dist: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, p) in dist.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    dist.len() - 1
}

/// Exponential-weights bandit over deterministic policies, each treated as
/// one arm of a non-contextual adversarial bandit.
#[derive(Debug, Clone)]
pub struct Exp3 {
    log_w: Vec<f64>,
    gamma: f64,
}

impl Exp3 {
    pub fn new(n: usize, gamma: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(LcbError::InvalidParameter("gamma must be in [0, 1]".into()));
        }
        Ok(Self {
            log_w: vec![0.0; n],
            gamma,
        })
    }

    /// Mixed selection distribution `q_h = (1-gamma) w_h/sum(w) + gamma/N`.
    pub fn policy_distribution(&self) -> Vec<f64> {
        let n = self.log_w.len() as f64;
        normalized_weights(&self.log_w)
            .into_iter()
            .map(|w| (1.0 - self.gamma) * w + self.gamma / n)
            .collect()
    }

    pub fn round<R: Rng + ?Sized>(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        rng: &mut R,
    ) -> Result<Choice> {
        let q = self.policy_distribution();
        let h = sample_categorical(&q, rng);
        let arm = policies[h].deterministic_action(ctx)?;
        Ok(Choice {
            arm,
            policy: Some(h),
            dist: q,
            explore: false,
        })
    }

    /// Importance-weighted update of the chosen policy only.
    pub fn update(&mut self, chosen: usize, reward: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(LcbError::RewardOutOfRange(reward));
        }
        let q = self.policy_distribution();
        let n = self.log_w.len() as f64;
        self.log_w[chosen] += self.gamma * (reward / q[chosen]) / n;
        // Re-center so the log weights stay bounded.
        let z = log_sum_exp(&self.log_w);
        for lw in self.log_w.iter_mut() {
            *lw -= z;
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        normalized_weights(&self.log_w)
    }
}

/// Expert-advice bandit over probabilistic policies with the high-probability
/// variance-corrected weight update.
#[derive(Debug, Clone)]
pub struct Exp4P {
    log_w: Vec<f64>,
    p_min: f64,
    /// `sqrt(ln(N/delta) / (K T))` when the horizon is known, else 0.
    bonus: f64,
    num_arms: usize,
}

impl Exp4P {
    pub fn new(n: usize, num_arms: usize, p_min: f64, bonus: f64) -> Result<Self> {
        if p_min < 0.0 || p_min * num_arms as f64 > 1.0 {
            return Err(LcbError::InvalidParameter(format!(
                "p_min * K must lie in [0, 1], got {}",
                p_min * num_arms as f64
            )));
        }
        Ok(Self {
            log_w: vec![0.0; n],
            p_min,
            bonus,
            num_arms,
        })
    }

    fn advice(&self, ctx: &Context, policies: &[Policy]) -> Result<Vec<Vec<f64>>> {
        policies
            .iter()
            .map(|p| {
                if p.kind != PolicyKind::Probabilistic {
                    return Err(LcbError::InvalidParameter(
                        "EXP4.P requires probabilistic policies".into(),
                    ));
                }
                p.probabilistic_action(ctx)
            })
            .collect()
    }

    /// Arm distribution: weighted mixture of the experts' advice with a
    /// uniform exploration floor of `p_min` per arm.
    pub fn arm_distribution(&self, ctx: &Context, policies: &[Policy]) -> Result<Vec<f64>> {
        let advice = self.advice(ctx, policies)?;
        let w = normalized_weights(&self.log_w);
        let k = self.num_arms;
        let mut p = vec![0.0; k];
        for (wh, xi) in w.iter().zip(&advice) {
            for a in 0..k {
                p[a] += wh * xi[a];
            }
        }
        let scale = 1.0 - k as f64 * self.p_min;
        for pa in p.iter_mut() {
            *pa = scale * *pa + self.p_min;
        }
        Ok(p)
    }

    pub fn round<R: Rng + ?Sized>(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        rng: &mut R,
    ) -> Result<Choice> {
        let p = self.arm_distribution(ctx, policies)?;
        let arm = sample_categorical(&p, rng);
        Ok(Choice {
            arm,
            policy: None,
            dist: p,
            explore: false,
        })
    }

    pub fn update(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        chosen_arm: usize,
        reward: f64,
    ) -> Result<()> {
        if !(0.0..=1.0).contains(&reward) {
            return Err(LcbError::RewardOutOfRange(reward));
        }
        let advice = self.advice(ctx, policies)?;
        let p = self.arm_distribution(ctx, policies)?;
        let r_hat = reward / p[chosen_arm];
        for (h, xi) in advice.iter().enumerate() {
            let y_hat = xi[chosen_arm] * r_hat;
            let v_hat: f64 = xi.iter().zip(&p).map(|(x, pa)| x / pa).sum();
            self.log_w[h] += (self.p_min / 2.0) * (y_hat + v_hat * self.bonus);
        }
        let z = log_sum_exp(&self.log_w);
        for lw in self.log_w.iter_mut() {
            *lw -= z;
        }
        Ok(())
    }

    pub fn weights(&self) -> Vec<f64> {
        normalized_weights(&self.log_w)
    }
}

/// Epoch-Greedy over deterministic policies: epoch `l` spends one uniform
/// exploration step, then `l` steps exploiting the policy with the best
/// importance-weighted empirical reward on the stored exploration records.
#[derive(Debug, Clone)]
pub struct EpochGreedy {
    n_policies: usize,
    exploration: Vec<(Context, usize, f64)>,
    epoch: usize,
    pos_in_epoch: usize,
}

impl EpochGreedy {
    pub fn new(n_policies: usize) -> Self {
        Self {
            n_policies,
            exploration: Vec::new(),
            epoch: 1,
            pos_in_epoch: 0,
        }
    }

    /// Importance-weighted value estimate of each policy on the stored
    /// exploration records: mean of `K * r * 1[policy action == pulled arm]`.
    pub fn policy_values(&self, policies: &[Policy]) -> Result<Vec<f64>> {
        let mut values = vec![0.0; policies.len()];
        if self.exploration.is_empty() {
            return Ok(values);
        }
        for (ctx, arm, reward) in &self.exploration {
            let k = ctx.num_arms() as f64;
            for (h, p) in policies.iter().enumerate() {
                if p.deterministic_action(ctx)? == *arm {
                    values[h] += k * reward;
                }
            }
        }
        let m = self.exploration.len() as f64;
        for v in values.iter_mut() {
            *v /= m;
        }
        Ok(values)
    }

    pub fn round<R: Rng + ?Sized>(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        rng: &mut R,
    ) -> Result<Choice> {
        if policies.len() != self.n_policies {
            return Err(LcbError::InvalidParameter(
                "policy set size changed mid-session".into(),
            ));
        }
        let k = ctx.num_arms();
        let choice = if self.pos_in_epoch == 0 {
            let arm = rng.gen_range(0..k);
            Choice {
                arm,
                policy: None,
                dist: vec![1.0 / k as f64; k],
                explore: true,
            }
        } else {
            let values = self.policy_values(policies)?;
            let mut best = 0usize;
            for h in 1..values.len() {
                if values[h] > values[best] {
                    best = h;
                }
            }
            let arm = policies[best].deterministic_action(ctx)?;
            let mut dist = vec![0.0; k];
            dist[arm] = 1.0;
            Choice {
                arm,
                policy: Some(best),
                dist,
                explore: false,
            }
        };
        // Advance the schedule: epoch l has 1 exploration + l exploitation steps.
        self.pos_in_epoch += 1;
        if self.pos_in_epoch > self.epoch {
            self.epoch += 1;
            self.pos_in_epoch = 0;
        }
        Ok(choice)
    }

    pub fn record_exploration(&mut self, ctx: Context, arm: usize, reward: f64) {
        self.exploration.push((ctx, arm, reward));
    }
}

/// Generalized Thompson Sampling over deterministic policies: sample a
/// policy proportional to its weight, then exponentially down-weight every
/// policy by its squared reward-prediction error.
#[derive(Debug, Clone)]
pub struct Gts {
    log_w: Vec<f64>,
    eta: f64,
}

impl Gts {
    pub fn new(n: usize, eta: f64) -> Result<Self> {
        if eta < 0.0 || !eta.is_finite() {
            return Err(LcbError::InvalidParameter(
                "eta must be non-negative".into(),
            ));
        }
        Ok(Self {
            log_w: vec![0.0; n],
            eta,
        })
    }

    pub fn weights(&self) -> Vec<f64> {
        normalized_weights(&self.log_w)
    }

    pub fn round<R: Rng + ?Sized>(
        &mut self,
        ctx: &Context,
        policies: &[Policy],
        rng: &mut R,
    ) -> Result<Choice> {
        let w = self.weights();
        let h = sample_categorical(&w, rng);
        let arm = policies[h].deterministic_action(ctx)?;
        Ok(Choice {
            arm,
            policy: Some(h),
            dist: w,
            explore: false,
        })
    }

    /// `w_h *= exp(-eta * (r - prediction_h)^2)`, renormalized.
    pub fn update(&mut self, predictions: &[f64], reward: f64) -> Result<()> {
        if predictions.len() != self.log_w.len() {
            return Err(LcbError::DimensionMismatch {
                expected: self.log_w.len(),
                got: predictions.len(),
            });
        }
        for (lw, pred) in self.log_w.iter_mut().zip(predictions) {
            let loss = (reward - pred) * (reward - pred);
            *lw -= self.eta * loss;
        }
        let z = log_sum_exp(&self.log_w);
        for lw in self.log_w.iter_mut() {
            *lw -= z;
        }
        Ok(())
    }
}
