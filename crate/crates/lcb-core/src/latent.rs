//! Learned latent classes and the per-class policies built from them.

use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{LcbError, Result};
use crate::types::Context;

/// One latent class: mixing weight, reward coefficients, and response noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub pi: f64,
    pub beta: DVector<f64>,
    pub sigma2: f64,
}

/// The learned set of latent classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    components: Vec<MixtureComponent>,
}

impl MixtureModel {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(LcbError::EmptyInput("mixture components"));
        }
        let total: f64 = components.iter().map(|c| c.pi).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(LcbError::InvalidParameter(format!(
                "mixing weights sum to {total}, expected 1"
            )));
        }
        let dim = components[0].beta.len();
        for c in &components {
            if c.sigma2 <= 0.0 || !c.sigma2.is_finite() {
                return Err(LcbError::InvalidParameter(
                    "sigma2 must be positive".into(),
                ));
            }
            if c.beta.len() != dim {
                return Err(LcbError::DimensionMismatch {
                    expected: dim,
                    got: c.beta.len(),
                });
            }
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].beta.len()
    }

    /// Minimum pairwise Euclidean distance among the class coefficient
    /// vectors (the separation the problem-dependent analysis depends on).
    pub fn min_separation(&self) -> Result<f64> {
        if self.components.len() < 2 {
            return Err(LcbError::InvalidParameter(
                "min_separation needs at least 2 components".into(),
            ));
        }
        let mut best = f64::INFINITY;
        for i in 0..self.components.len() {
            for j in (i + 1)..self.components.len() {
                let d = (&self.components[i].beta - &self.components[j].beta).norm();
                best = best.min(d);
            }
        }
        Ok(best)
    }

    /// Build one policy per component.
    pub fn policies(&self, kind: PolicyKind, temperature: f64) -> Vec<Policy> {
        self.components
            .iter()
            .map(|c| Policy {
                kind,
                beta: c.beta.clone(),
                temperature,
            })
            .collect()
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let wire = WireModel::from(self);
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &wire)?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let wire: WireModel = serde_json::from_reader(std::io::BufReader::new(file))?;
        wire.into_model()
    }
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct WireModel {
    version: u32,
    components: Vec<WireComponent>,
}

#[derive(Debug, Serialize, Deserialize)]
struct WireComponent {
    pi: f64,
    beta: Vec<f64>,
    sigma2: f64,
}

impl From<&MixtureModel> for WireModel {
    fn from(m: &MixtureModel) -> Self {
        Self {
            version: MODEL_FORMAT_VERSION,
            components: m
                .components
                .iter()
                .map(|c| WireComponent {
                    pi: c.pi,
                    beta: c.beta.iter().copied().collect(),
                    sigma2: c.sigma2,
                })
                .collect(),
        }
    }
}

impl WireModel {
    fn into_model(self) -> Result<MixtureModel> {
        if self.version != MODEL_FORMAT_VERSION {
            return Err(LcbError::InvalidParameter(format!(
                "unsupported model format version {}",
                self.version
            )));
        }
        MixtureModel::new(
            self.components
                .into_iter()
                .map(|c| MixtureComponent {
                    pi: c.pi,
                    beta: DVector::from_vec(c.beta),
                    sigma2: c.sigma2,
                })
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Deterministic,
    Probabilistic,
}

/// A mapping from context to an arm (deterministic) or a distribution over
/// arms (probabilistic softmax of the per-arm scores).
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub kind: PolicyKind,
    pub beta: DVector<f64>,
    /// Softmax temperature; ignored by deterministic policies.
    pub temperature: f64,
}

impl Policy {
    pub fn deterministic(beta: DVector<f64>) -> Self {
        Self {
            kind: PolicyKind::Deterministic,
            beta,
            temperature: 1.0,
        }
    }

    pub fn probabilistic(beta: DVector<f64>, temperature: f64) -> Self {
        Self {
            kind: PolicyKind::Probabilistic,
            beta,
            temperature,
        }
    }

    /// Arm with the highest predicted reward; ties go to the lowest index.
    pub fn deterministic_action(&self, ctx: &Context) -> Result<usize> {
        if ctx.dim() != self.beta.len() {
            return Err(LcbError::DimensionMismatch {
                expected: self.beta.len(),
                got: ctx.dim(),
            });
        }
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        for (i, x) in ctx.arms().iter().enumerate() {
            let s = self.beta.dot(x);
            if s > best_score {
                best_score = s;
                best = i;
            }
        }
        Ok(best)
    }

    /// Softmax distribution over arms; scores are shifted by their maximum
    /// before exponentiation to guard against overflow.
    pub fn probabilistic_action(&self, ctx: &Context) -> Result<Vec<f64>> {
        if ctx.dim() != self.beta.len() {
            return Err(LcbError::DimensionMismatch {
                expected: self.beta.len(),
                got: ctx.dim(),
            });
        }
        let scores: Vec<f64> = ctx
            .arms()
            .iter()
            .map(|x| self.beta.dot(x) / self.temperature)
            .collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(exps.into_iter().map(|e| e / total).collect())
    }
}
