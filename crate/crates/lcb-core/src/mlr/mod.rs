//! Latent-class learning from logged interactions.
//!
//! Two learners share the [`MixtureModel`](crate::latent::MixtureModel)
//! output type: a collapsed Gibbs sampler over a Dirichlet-process mixture of
//! linear regressions ([`gibbs`]), and a finite-mixture EM learner ([`em`])
//! that doubles as a deterministic cross-check.

pub mod em;
pub mod gibbs;
pub mod nig;

pub use em::{em_fit, EmConfig, EmFit};
pub use gibbs::{
    extract_mixture, fit_gibbs, gibbs_sweep, sample_alpha, GibbsCheckpoint, GibbsConfig,
    GibbsRun, GibbsState, PosteriorSummary,
};
pub use nig::{NigPrior, SuffStats};

/// `ln(sum(exp(x)))` with the usual max shift.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
