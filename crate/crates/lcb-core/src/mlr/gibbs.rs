//! Collapsed Gibbs sampler for a Dirichlet-process mixture of linear
//! regressions with per-user class assignments.
//!
//! Assignment is per user: all of a user's records move between clusters
//! together. Cluster membership weights combine the Chinese Restaurant
//! Process term with the cluster's posterior-predictive likelihood of the
//! user's data; the concentration parameter is resampled with the
//! auxiliary-variable scheme.

use std::path::Path;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{LcbError, Result};
use crate::latent::{MixtureComponent, MixtureModel};
use crate::mlr::log_sum_exp;
use crate::mlr::nig::{NigPrior, SuffStats};
use crate::types::UserData;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PosteriorSummary {
    /// Extract the mixture from the final retained sweep.
    LastSweep,
    /// Extract from the retained sweep with the highest joint log
    /// probability (CRP partition term plus cluster marginal likelihoods).
    MapOverSweeps,
}

#[derive(Debug, Clone)]
pub struct GibbsConfig {
    pub alpha_init: f64,
    /// Gamma(u0, v0) hyperprior on the DP concentration.
    pub alpha_prior: (f64, f64),
    pub burn_in: usize,
    pub samples: usize,
    pub seed: u64,
    pub max_components: usize,
    pub summary: PosteriorSummary,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            alpha_init: 1.0,
            alpha_prior: (1.0, 1.0),
            burn_in: 100,
            samples: 100,
            seed: 0,
            max_components: usize::MAX,
            summary: PosteriorSummary::LastSweep,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ClusterStats {
    pub stats: SuffStats,
    pub users: usize,
}

/// State of one Gibbs chain: per-user assignments, cluster sufficient
/// statistics, and the DP concentration.
#[derive(Debug, Clone)]
pub struct GibbsState {
    pub assignments: Vec<usize>,
    pub clusters: Vec<ClusterStats>,
    pub alpha: f64,
    pub alpha_prior: (f64, f64),
}

impl GibbsState {
    /// Seat users sequentially by the CRP-weighted predictive, which gives a
    /// reasonable starting partition in a single pass.
    pub fn init<R: Rng + ?Sized>(
        data: &[UserData],
        prior: &NigPrior,
        alpha: f64,
        alpha_prior: (f64, f64),
        rng: &mut R,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(LcbError::EmptyInput("gibbs training data"));
        }
        let mut state = Self {
            assignments: Vec::with_capacity(data.len()),
            clusters: Vec::new(),
            alpha,
            alpha_prior,
        };
        for user in data {
            let stats = SuffStats::from_user(user);
            let h = state.sample_assignment(prior, &stats, rng)?;
            state.insert(h, &stats);
            state.assignments.push(h);
        }
        Ok(state)
    }

    fn insert(&mut self, h: usize, stats: &SuffStats) {
        if h == self.clusters.len() {
            self.clusters.push(ClusterStats {
                stats: stats.clone(),
                users: 1,
            });
        } else {
            self.clusters[h].stats.add(stats);
            self.clusters[h].users += 1;
        }
    }

    /// Remove one user from cluster `h`, deleting the cluster if it empties.
    /// Returns the remapping applied to cluster indices, if any.
    fn remove(&mut self, h: usize, stats: &SuffStats) -> Option<(usize, usize)> {
        self.clusters[h].stats.sub(stats);
        self.clusters[h].users -= 1;
        if self.clusters[h].users == 0 {
            let last = self.clusters.len() - 1;
            self.clusters.swap_remove(h);
            if h != last {
                return Some((last, h));
            }
        }
        None
    }

    /// Sample a cluster index for a user with the given sufficient
    /// statistics (the user must currently be un-seated). Index
    /// `clusters.len()` means a new cluster.
    fn sample_assignment<R: Rng + ?Sized>(
        &self,
        prior: &NigPrior,
        user_stats: &SuffStats,
        rng: &mut R,
    ) -> Result<usize> {
        let mut log_w = Vec::with_capacity(self.clusters.len() + 1);
        for cluster in &self.clusters {
            let post = prior.posterior_from_stats(&cluster.stats)?;
            log_w.push((cluster.users as f64).ln() + post.predictive_loglik_stats(user_stats)?);
        }
        log_w.push(self.alpha.ln() + prior.predictive_loglik_stats(user_stats)?);

        let z = log_sum_exp(&log_w);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (h, lw) in log_w.iter().enumerate() {
            acc += (lw - z).exp();
            if u < acc {
                return Ok(h);
            }
        }
        Ok(log_w.len() - 1)
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    /// Joint log probability of the current partition: CRP term plus the
    /// marginal likelihood of each cluster's data.
    pub fn log_joint(&self, prior: &NigPrior) -> Result<f64> {
        let n = self.assignments.len() as f64;
        let k = self.clusters.len() as f64;
        let mut lp = k * self.alpha.ln() + ln_gamma(self.alpha) - ln_gamma(self.alpha + n);
        for cluster in &self.clusters {
            lp += ln_gamma(cluster.users as f64);
            lp += prior.predictive_loglik_stats(&cluster.stats)?;
        }
        Ok(lp)
    }

    /// Verify that every cluster's statistics equal the sums over its
    /// currently assigned users. Intended for tests.
    pub fn consistent_with(&self, user_stats: &[SuffStats], tol: f64) -> bool {
        let mut rebuilt: Vec<ClusterStats> = self
            .clusters
            .iter()
            .map(|c| ClusterStats {
                stats: SuffStats::zeros(c.stats.xtx.nrows()),
                users: 0,
            })
            .collect();
        for (u, &h) in self.assignments.iter().enumerate() {
            if h >= rebuilt.len() {
                return false;
            }
            rebuilt[h].stats.add(&user_stats[u]);
            rebuilt[h].users += 1;
        }
        self.clusters.iter().zip(&rebuilt).all(|(a, b)| {
            a.users == b.users
                && a.stats.n == b.stats.n
                && (&a.stats.xtx - &b.stats.xtx).abs().max() < tol
                && (&a.stats.xtr - &b.stats.xtr).abs().max() < tol
                && (a.stats.rtr - b.stats.rtr).abs() < tol
        })
    }
}

/// One full sweep: every user is un-seated, reassigned by the collapsed
/// conditional, and re-seated.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut GibbsState,
    prior: &NigPrior,
    data: &[UserData],
    rng: &mut R,
) -> Result<()> {
    let user_stats: Vec<SuffStats> = data.iter().map(SuffStats::from_user).collect();
    gibbs_sweep_with_stats(state, prior, &user_stats, rng)
}

pub fn gibbs_sweep_with_stats<R: Rng + ?Sized>(
    state: &mut GibbsState,
    prior: &NigPrior,
    user_stats: &[SuffStats],
    rng: &mut R,
) -> Result<()> {
    for u in 0..user_stats.len() {
        let h_old = state.assignments[u];
        if let Some((from, to)) = state.remove(h_old, &user_stats[u]) {
            for a in state.assignments.iter_mut() {
                if *a == from {
                    *a = to;
                }
            }
        }
        let h_new = state.sample_assignment(prior, &user_stats[u], rng)?;
        state.insert(h_new, &user_stats[u]);
        state.assignments[u] = h_new;
    }
    Ok(())
}

/// Resample the DP concentration by the auxiliary-variable scheme: draw
/// `eta ~ Beta(alpha+1, n)` and then `alpha` from the two-component Gamma
/// mixture determined by the hyperprior, cluster count, and `eta`.
pub fn sample_alpha<R: Rng + ?Sized>(state: &mut GibbsState, rng: &mut R) -> Result<()> {
    let n = state.assignments.len() as f64;
    let k = state.clusters.len() as f64;
    if k == 0.0 {
        return Err(LcbError::EmptyInput("clusters"));
    }
    let (u0, v0) = state.alpha_prior;
    let eta: f64 = Beta::new(state.alpha + 1.0, n)
        .map_err(|e| LcbError::InvalidParameter(e.to_string()))?
        .sample(rng);
    let rate = v0 - eta.ln();
    // Odds of the "shape + k" component vs "shape + k - 1".
    let odds = (u0 + k - 1.0) / (n * rate);
    let shape = if rng.gen::<f64>() < odds / (1.0 + odds) {
        u0 + k
    } else {
        u0 + k - 1.0
    };
    let draw = Gamma::new(shape, 1.0 / rate)
        .map_err(|e| LcbError::InvalidParameter(e.to_string()))?
        .sample(rng);
    state.alpha = draw.max(1e-12);
    Ok(())
}

/// Collapse the partition into a finite mixture: one component per cluster
/// with the posterior-mean coefficients, keeping at most `max_components`
/// clusters (largest first) and renormalizing the weights.
pub fn extract_mixture(
    state: &GibbsState,
    prior: &NigPrior,
    max_components: usize,
) -> Result<MixtureModel> {
    if state.clusters.is_empty() {
        return Err(LcbError::EmptyInput("gibbs state"));
    }
    if max_components == 0 {
        return Err(LcbError::InvalidParameter(
            "max_components must be at least 1".into(),
        ));
    }
    let mut order: Vec<usize> = (0..state.clusters.len()).collect();
    order.sort_by(|&a, &b| state.clusters[b].users.cmp(&state.clusters[a].users));
    order.truncate(max_components);

    let total: usize = order.iter().map(|&h| state.clusters[h].users).sum();
    let mut components = Vec::with_capacity(order.len());
    for &h in &order {
        let post = prior.posterior_from_stats(&state.clusters[h].stats)?;
        let (beta, sigma2) = post.point_estimates();
        components.push(MixtureComponent {
            pi: state.clusters[h].users as f64 / total as f64,
            beta,
            sigma2,
        });
    }
    MixtureModel::new(components)
}

/// Learner checkpoint: enough to resume or audit a chain.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsCheckpoint {
    pub assignments: Vec<usize>,
    pub alpha: f64,
    pub seed: u64,
    pub sweep: usize,
}

impl GibbsCheckpoint {
    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Result of a full Gibbs run.
#[derive(Debug, Clone)]
pub struct GibbsRun {
    pub model: MixtureModel,
    pub state: GibbsState,
    pub sweeps: usize,
}

/// Run burn-in plus retained sweeps and extract the mixture per the
/// configured summary rule.
pub fn fit_gibbs(data: &[UserData], prior: &NigPrior, cfg: &GibbsConfig) -> Result<GibbsRun> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let user_stats: Vec<SuffStats> = data.iter().map(SuffStats::from_user).collect();
    let mut state = GibbsState::init(data, prior, cfg.alpha_init, cfg.alpha_prior, &mut rng)?;

    for _ in 0..cfg.burn_in {
        gibbs_sweep_with_stats(&mut state, prior, &user_stats, &mut rng)?;
        sample_alpha(&mut state, &mut rng)?;
    }

    let mut best: Option<(f64, GibbsState)> = None;
    let mut sweeps = cfg.burn_in;
    for _ in 0..cfg.samples.max(1) {
        gibbs_sweep_with_stats(&mut state, prior, &user_stats, &mut rng)?;
        sample_alpha(&mut state, &mut rng)?;
        sweeps += 1;
        if cfg.summary == PosteriorSummary::MapOverSweeps {
            let lp = state.log_joint(prior)?;
            if best.as_ref().map_or(true, |(b, _)| lp > *b) {
                best = Some((lp, state.clone()));
            }
        }
    }

    let final_state = match (cfg.summary, best) {
        (PosteriorSummary::MapOverSweeps, Some((_, s))) => s,
        _ => state,
    };
    let model = extract_mixture(&final_state, prior, cfg.max_components)?;
    Ok(GibbsRun {
        model,
        state: final_state,
        sweeps,
    })
}

/// Generate one user's records from a planted linear model. Test helper used
/// by the planted-recovery checks; kept here so both unit and integration
/// tests share it.
pub fn synth_user<R: Rng + ?Sized>(
    user_id: u64,
    beta: &DVector<f64>,
    noise: f64,
    records: usize,
    rng: &mut R,
) -> UserData {
    let d = beta.len();
    let mut features = Vec::with_capacity(records);
    let mut rewards = Vec::with_capacity(records);
    for _ in 0..records {
        let mut x = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        let n = x.norm();
        if n > 1e-12 {
            x /= n;
        }
        let eps: f64 = rand_distr::Normal::new(0.0, noise).unwrap().sample(rng);
        rewards.push(beta.dot(&x) + eps);
        features.push(x);
    }
    UserData {
        user_id,
        features,
        rewards,
    }
}
