//! Normal-inverse-Gamma conjugate prior for Bayesian linear regression and
//! the multivariate-t posterior predictive built on it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use statrs::function::gamma::ln_gamma;

use crate::error::{LcbError, Result};
use crate::types::UserData;

/// Sufficient statistics of a set of (feature, reward) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats {
    pub xtx: DMatrix<f64>,
    pub xtr: DVector<f64>,
    pub rtr: f64,
    pub n: usize,
}

impl SuffStats {
    pub fn zeros(dim: usize) -> Self {
        Self {
            xtx: DMatrix::zeros(dim, dim),
            xtr: DVector::zeros(dim),
            rtr: 0.0,
            n: 0,
        }
    }

    pub fn from_pairs(xs: &[DVector<f64>], rs: &[f64]) -> Self {
        assert_eq!(xs.len(), rs.len());
        let dim = xs.first().map_or(0, |x| x.len());
        let mut s = Self::zeros(dim);
        for (x, r) in xs.iter().zip(rs) {
            s.xtx += x * x.transpose();
            s.xtr += x * *r;
            s.rtr += r * r;
            s.n += 1;
        }
        s
    }

    pub fn from_user(u: &UserData) -> Self {
        Self::from_pairs(&u.features, &u.rewards)
    }

    pub fn add(&mut self, other: &SuffStats) {
        self.xtx += &other.xtx;
        self.xtr += &other.xtr;
        self.rtr += other.rtr;
        self.n += other.n;
    }

    pub fn sub(&mut self, other: &SuffStats) {
        self.xtx -= &other.xtx;
        self.xtr -= &other.xtr;
        self.rtr -= other.rtr;
        self.n -= other.n;
    }
}

/// NIG(w, V, a, b) prior (or posterior) over regression coefficients and
/// noise variance: `beta | sigma2 ~ N(w, sigma2 V)`, `sigma2 ~ IG(a, b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NigPrior {
    pub w: DVector<f64>,
    pub v: DMatrix<f64>,
    pub a: f64,
    pub b: f64,
}

impl NigPrior {
    pub fn new(w: DVector<f64>, v: DMatrix<f64>, a: f64, b: f64) -> Result<Self> {
        if a <= 0.0 || b <= 0.0 || !a.is_finite() || !b.is_finite() {
            return Err(LcbError::InvalidParameter(
                "NIG shape and rate must be positive".into(),
            ));
        }
        if v.nrows() != w.len() || v.ncols() != w.len() {
            return Err(LcbError::DimensionMismatch {
                expected: w.len(),
                got: v.nrows(),
            });
        }
        if v.clone().cholesky().is_none() {
            return Err(LcbError::NotPositiveDefinite);
        }
        Ok(Self { w, v, a, b })
    }

    /// Weakly informative default: w = 0, V = I, a = b = 1.
    pub fn standard(dim: usize) -> Self {
        Self {
            w: DVector::zeros(dim),
            v: DMatrix::identity(dim, dim),
            a: 1.0,
            b: 1.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    fn v_chol(&self) -> Result<Cholesky<f64, Dyn>> {
        self.v.clone().cholesky().ok_or(LcbError::NotPositiveDefinite)
    }

    /// Conjugate update with a batch of observations.
    pub fn posterior(&self, xs: &[DVector<f64>], rs: &[f64]) -> Result<NigPrior> {
        self.posterior_from_stats(&SuffStats::from_pairs(xs, rs))
    }

    /// Conjugate update from sufficient statistics:
    /// `Vn = (V^-1 + X'X)^-1`, `wn = Vn (V^-1 w + X'r)`,
    /// `an = a + n/2`, `bn = b + (w'V^-1 w + r'r - wn'Vn^-1 wn)/2`.
    pub fn posterior_from_stats(&self, stats: &SuffStats) -> Result<NigPrior> {
        if stats.n == 0 {
            return Ok(self.clone());
        }
        if stats.xtx.nrows() != self.dim() {
            return Err(LcbError::DimensionMismatch {
                expected: self.dim(),
                got: stats.xtx.nrows(),
            });
        }
        let v_inv = self.v_chol()?.inverse();
        let prec_n = &v_inv + &stats.xtx;
        let chol_n = prec_n.cholesky().ok_or(LcbError::NotPositiveDefinite)?;
        let rhs = &v_inv * &self.w + &stats.xtr;
        let wn = chol_n.solve(&rhs);
        let vn = chol_n.inverse();
        let an = self.a + stats.n as f64 / 2.0;
        // wn' Vn^-1 wn = wn' rhs since Vn^-1 wn = rhs
        let quad0 = (self.w.transpose() * &v_inv * &self.w)[(0, 0)];
        let bn = self.b + 0.5 * (quad0 + stats.rtr - wn.dot(&rhs));
        if bn <= 0.0 {
            return Err(LcbError::NotPositiveDefinite);
        }
        NigPrior::new(wn, vn, an, bn)
    }

    /// `ln Gamma(a) - a ln b + (ln det V)/2`, the variable part of the NIG
    /// normalizing constant.
    fn log_z(&self) -> Result<f64> {
        let chol = self.v_chol()?;
        let half_log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
        Ok(ln_gamma(self.a) - self.a * self.b.ln() + half_log_det)
    }

    /// Log marginal likelihood of the observations under this prior.
    ///
    /// This is the log density of `r` under the posterior-predictive
    /// multivariate t with `2a` degrees of freedom, location `X w`, and scale
    /// matrix `(b/a)(I + X V X')`; it is computed through the conjugate
    /// normalizer ratio, which is the same quantity in a numerically stabler
    /// form.
    pub fn predictive_loglik_stats(&self, stats: &SuffStats) -> Result<f64> {
        if stats.n == 0 {
            return Ok(0.0);
        }
        let post = self.posterior_from_stats(stats)?;
        let n = stats.n as f64;
        Ok(post.log_z()? - self.log_z()? - 0.5 * n * (2.0 * std::f64::consts::PI).ln())
    }

    pub fn predictive_loglik(&self, xs: &[DVector<f64>], rs: &[f64]) -> Result<f64> {
        self.predictive_loglik_stats(&SuffStats::from_pairs(xs, rs))
    }

    /// Posterior-mean point estimates: `(beta, E[sigma2])`. The variance
    /// expectation falls back to the mode `b/a` shape when `a <= 1`.
    pub fn point_estimates(&self) -> (DVector<f64>, f64) {
        let sigma2 = if self.a > 1.0 {
            self.b / (self.a - 1.0)
        } else {
            self.b / self.a
        };
        (self.w.clone(), sigma2)
    }
}

/// Direct multivariate-t log density with `nu` degrees of freedom, used as a
/// second algebraic route to the posterior predictive.
pub fn mvt_logpdf(x: &DVector<f64>, loc: &DVector<f64>, scale: &DMatrix<f64>, nu: f64) -> Result<f64> {
    let p = x.len() as f64;
    let chol = scale.clone().cholesky().ok_or(LcbError::NotPositiveDefinite)?;
    let half_log_det: f64 = chol.l().diagonal().iter().map(|d| d.ln()).sum();
    let diff = x - loc;
    let quad = diff.dot(&chol.solve(&diff));
    Ok(ln_gamma((nu + p) / 2.0)
        - ln_gamma(nu / 2.0)
        - 0.5 * p * (nu * std::f64::consts::PI).ln()
        - half_log_det
        - 0.5 * (nu + p) * (1.0 + quad / nu).ln())
}
