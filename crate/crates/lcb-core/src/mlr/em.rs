//! Finite-mixture EM for mixtures of linear regressions.
//!
//! Record-level responsibilities: the E-step computes per-record component
//! posteriors, the M-step refits each component by weighted least squares.
//! The data log-likelihood is non-decreasing across iterations, which the
//! tests rely on.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{LcbError, Result};
use crate::latent::{MixtureComponent, MixtureModel};
use crate::mlr::log_sum_exp;
use crate::types::UserData;

const MIN_SIGMA2: f64 = 1e-10;
const COLLAPSE_MASS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub n_components: usize,
    pub max_iters: usize,
    pub seed: u64,
    /// Stop when the log-likelihood improves by less than this.
    pub tol: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            n_components: 1,
            max_iters: 100,
            seed: 0,
            tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmFit {
    pub model: MixtureModel,
    /// Data log-likelihood after every iteration.
    pub log_likelihood: Vec<f64>,
}

struct Component {
    pi: f64,
    beta: DVector<f64>,
    sigma2: f64,
}

fn gaussian_logpdf(r: f64, mean: f64, sigma2: f64) -> f64 {
    let d = r - mean;
    -0.5 * (2.0 * std::f64::consts::PI * sigma2).ln() - d * d / (2.0 * sigma2)
}

/// Solve the weighted least-squares system, adding a tiny jitter only if the
/// unregularized normal equations are singular.
fn weighted_ls(
    xs: &[DVector<f64>],
    rs: &[f64],
    weights: &[f64],
    dim: usize,
) -> Result<DVector<f64>> {
    let mut a = DMatrix::zeros(dim, dim);
    let mut b = DVector::zeros(dim);
    for ((x, &r), &w) in xs.iter().zip(rs).zip(weights) {
        if w > 0.0 {
            a += x * x.transpose() * w;
            b += x * (w * r);
        }
    }
    if let Some(chol) = a.clone().cholesky() {
        return Ok(chol.solve(&b));
    }
    let jitter = (a.trace() / dim as f64).max(1.0) * 1e-10;
    let aj = a + DMatrix::identity(dim, dim) * jitter;
    aj.cholesky()
        .map(|c| c.solve(&b))
        .ok_or(LcbError::NotPositiveDefinite)
}

/// Fit an N-component mixture of linear regressions by EM on the flattened
/// record set.
pub fn em_fit(data: &[UserData], cfg: &EmConfig) -> Result<EmFit> {
    if cfg.n_components == 0 {
        return Err(LcbError::InvalidParameter(
            "n_components must be at least 1".into(),
        ));
    }
    let mut xs: Vec<DVector<f64>> = Vec::new();
    let mut rs: Vec<f64> = Vec::new();
    for user in data {
        xs.extend(user.features.iter().cloned());
        rs.extend(user.rewards.iter().copied());
    }
    if xs.is_empty() {
        return Err(LcbError::EmptyInput("em training data"));
    }
    let n = xs.len();
    let dim = xs[0].len();
    let k = cfg.n_components;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    // Initialize from a random hard partition of the records.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let global_var = {
        let mean = rs.iter().sum::<f64>() / n as f64;
        (rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n as f64).max(1e-4)
    };
    let mut components: Vec<Component> = Vec::with_capacity(k);
    for h in 0..k {
        let idx: Vec<usize> = order.iter().copied().skip(h).step_by(k).collect();
        let sel_x: Vec<DVector<f64>> = idx.iter().map(|&i| xs[i].clone()).collect();
        let sel_r: Vec<f64> = idx.iter().map(|&i| rs[i]).collect();
        let w = vec![1.0; sel_x.len()];
        let beta = if sel_x.is_empty() {
            DVector::zeros(dim)
        } else {
            weighted_ls(&sel_x, &sel_r, &w, dim)?
        };
        components.push(Component {
            pi: 1.0 / k as f64,
            beta,
            sigma2: global_var,
        });
    }
    // Spread duplicated initial betas apart so components start distinct.
    for h in 1..k {
        let prev = components[h - 1].beta.clone();
        if (&components[h].beta - &prev).norm() < 1e-12 {
            for v in components[h].beta.iter_mut() {
                *v += rng.gen_range(-0.01..0.01);
            }
        }
    }

    let mut log_likelihood = Vec::with_capacity(cfg.max_iters);
    let mut resp = vec![vec![0.0f64; k]; n];
    let mut lw = vec![0.0f64; k];
    for _ in 0..cfg.max_iters {
        // E-step
        let mut ll = 0.0;
        for i in 0..n {
            for (h, c) in components.iter().enumerate() {
                lw[h] = c.pi.ln() + gaussian_logpdf(rs[i], c.beta.dot(&xs[i]), c.sigma2);
            }
            let z = log_sum_exp(&lw);
            ll += z;
            for h in 0..k {
                resp[i][h] = (lw[h] - z).exp();
            }
        }
        log_likelihood.push(ll);

        // M-step
        for h in 0..k {
            let weights: Vec<f64> = (0..n).map(|i| resp[i][h]).collect();
            let mass: f64 = weights.iter().sum();
            if mass < COLLAPSE_MASS {
                // Collapsed component: re-seed from a random record.
                let i = rng.gen_range(0..n);
                let xn = xs[i].norm_squared().max(1e-12);
                components[h].beta = &xs[i] * (rs[i] / xn);
                components[h].sigma2 = global_var;
                components[h].pi = 1.0 / n as f64;
                continue;
            }
            let beta = weighted_ls(&xs, &rs, &weights, dim)?;
            let mut sse = 0.0;
            for i in 0..n {
                let d = rs[i] - beta.dot(&xs[i]);
                sse += weights[i] * d * d;
            }
            components[h].beta = beta;
            components[h].sigma2 = (sse / mass).max(MIN_SIGMA2);
            components[h].pi = mass / n as f64;
        }
        let pi_total: f64 = components.iter().map(|c| c.pi).sum();
        for c in components.iter_mut() {
            c.pi /= pi_total;
        }

        if log_likelihood.len() >= 2 {
            let prev = log_likelihood[log_likelihood.len() - 2];
            let cur = log_likelihood[log_likelihood.len() - 1];
            if (cur - prev).abs() < cfg.tol {
                break;
            }
        }
    }

    let pi_total: f64 = components.iter().map(|c| c.pi).sum();
    let model = MixtureModel::new(
        components
            .into_iter()
            .map(|c| MixtureComponent {
                pi: c.pi / pi_total,
                beta: c.beta,
                sigma2: c.sigma2,
            })
            .collect(),
    )?;
    Ok(EmFit {
        model,
        log_likelihood,
    })
}
