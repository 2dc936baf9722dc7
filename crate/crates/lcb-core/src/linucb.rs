//! Incremental ridge-regression UCB bandit.
//!
//! Maintains `A = ridge*I + sum x x^T` and `b = sum r*x`; the inverse is kept
//! incrementally via the Sherman-Morrison rank-1 update and re-factorized
//! every [`REFACTOR_EVERY`] updates to control numerical drift.

use nalgebra::{DMatrix, DVector};

use crate::error::{LcbError, Result};
use crate::types::Context;

const REFACTOR_EVERY: usize = 1000;

#[derive(Debug, Clone)]
pub struct LinUcb {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
    b: DVector<f64>,
    alpha_ucb: f64,
    ridge: f64,
    updates_since_refactor: usize,
}

impl LinUcb {
    pub fn new(dim: usize, ridge: f64, alpha_ucb: f64) -> Result<Self> {
        if ridge <= 0.0 || !ridge.is_finite() {
            return Err(LcbError::InvalidParameter("ridge must be positive".into()));
        }
        if alpha_ucb < 0.0 || !alpha_ucb.is_finite() {
            return Err(LcbError::InvalidParameter(
                "alpha_ucb must be non-negative".into(),
            ));
        }
        Ok(Self {
            a: DMatrix::identity(dim, dim) * ridge,
            a_inv: DMatrix::identity(dim, dim) / ridge,
            b: DVector::zeros(dim),
            alpha_ucb,
            ridge,
            updates_since_refactor: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Point estimate `theta = A^-1 b`.
    pub fn theta(&self) -> DVector<f64> {
        &self.a_inv * &self.b
    }

    /// UCB score of a single feature vector.
    pub fn score(&self, x: &DVector<f64>) -> f64 {
        let mean = self.theta().dot(x);
        let var = (x.transpose() * &self.a_inv * x)[(0, 0)].max(0.0);
        mean + self.alpha_ucb * var.sqrt()
    }

    /// Pick the arm with the highest UCB score; ties go to the lowest index.
    pub fn select(&self, ctx: &Context) -> Result<(usize, Vec<f64>)> {
        if ctx.dim() != self.dim() {
            return Err(LcbError::DimensionMismatch {
                expected: self.dim(),
                got: ctx.dim(),
            });
        }
        let theta = self.theta();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        let mut scores = Vec::with_capacity(ctx.num_arms());
        for (i, x) in ctx.arms().iter().enumerate() {
            let mean = theta.dot(x);
            let var = (x.transpose() * &self.a_inv * x)[(0, 0)].max(0.0);
            let s = mean + self.alpha_ucb * var.sqrt();
            if s > best_score {
                best_score = s;
                best = i;
            }
            scores.push(s);
        }
        Ok((best, scores))
    }

    /// Fold in one observation: `A += x x^T`, `b += r*x`.
    pub fn update(&mut self, x: &DVector<f64>, r: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(LcbError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) || !r.is_finite() {
            return Err(LcbError::NonFinite("linucb update"));
        }
        self.a += x * x.transpose();
        self.b += x * r;

        self.updates_since_refactor += 1;
        if self.updates_since_refactor >= REFACTOR_EVERY {
            self.refactor()?;
        } else {
            // Sherman-Morrison: (A + xx^T)^-1 = A^-1 - (A^-1 x)(A^-1 x)^T / (1 + x^T A^-1 x)
            let ax = &self.a_inv * x;
            let denom = 1.0 + x.dot(&ax);
            self.a_inv -= &ax * ax.transpose() / denom;
        }
        Ok(())
    }

    fn refactor(&mut self) -> Result<()> {
        let chol = self
            .a
            .clone()
            .cholesky()
            .ok_or(LcbError::NotPositiveDefinite)?;
        self.a_inv = chol.inverse();
        self.updates_since_refactor = 0;
        Ok(())
    }

    pub fn ridge(&self) -> f64 {
        self.ridge
    }

    pub fn alpha_ucb(&self) -> f64 {
        self.alpha_ucb
    }
}
