//! Shared domain types: contexts, interaction records, and the append-only
//! interaction store.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{LcbError, Result};

/// Slack allowed on the unit-norm feature constraint.
const NORM_TOL: f64 = 1e-9;

/// The set of `K` arm feature vectors presented at one interaction step.
///
/// Every vector has Euclidean norm at most 1 and all vectors share the same
/// dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    arms: Vec<DVector<f64>>,
    step_index: usize,
}

impl Context {
    pub fn new(arms: Vec<DVector<f64>>, step_index: usize) -> Result<Self> {
        if arms.is_empty() {
            return Err(LcbError::EmptyContext);
        }
        if step_index == 0 {
            return Err(LcbError::InvalidParameter(
                "step_index must be positive".into(),
            ));
        }
        let dim = arms[0].len();
        for arm in &arms {
            if arm.len() != dim {
                return Err(LcbError::DimensionMismatch {
                    expected: dim,
                    got: arm.len(),
                });
            }
            if arm.iter().any(|v| !v.is_finite()) {
                return Err(LcbError::NonFinite("arm feature vector"));
            }
            let norm = arm.norm();
            if norm > 1.0 + NORM_TOL {
                return Err(LcbError::FeatureNormTooLarge(norm));
            }
        }
        Ok(Self { arms, step_index })
    }

    pub fn num_arms(&self) -> usize {
        self.arms.len()
    }

    pub fn dim(&self) -> usize {
        self.arms[0].len()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn arm(&self, a: usize) -> &DVector<f64> {
        &self.arms[a]
    }

    pub fn arms(&self) -> &[DVector<f64>] {
        &self.arms
    }
}

/// One logged interaction: which arm a user was shown and what happened.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionRecord {
    pub user_id: u64,
    pub step: usize,
    pub context: Context,
    pub chosen_arm: usize,
    pub reward: f64,
    /// True iff the arm was chosen uniformly at random during the per-user
    /// i.i.d. collection window.
    pub iid_sample: bool,
}

impl InteractionRecord {
    pub fn new(
        user_id: u64,
        step: usize,
        context: Context,
        chosen_arm: usize,
        reward: f64,
        iid_sample: bool,
    ) -> Result<Self> {
        if chosen_arm >= context.num_arms() {
            return Err(LcbError::ArmOutOfRange {
                arm: chosen_arm,
                num_arms: context.num_arms(),
            });
        }
        if !reward.is_finite() {
            return Err(LcbError::NonFinite("reward"));
        }
        if !(0.0..=1.0).contains(&reward) {
            return Err(LcbError::RewardOutOfRange(reward));
        }
        Ok(Self {
            user_id,
            step,
            context,
            chosen_arm,
            reward,
            iid_sample,
        })
    }

    /// Feature vector of the arm that was actually pulled.
    pub fn chosen_feature(&self) -> &DVector<f64> {
        self.context.arm(self.chosen_arm)
    }
}

/// One user's training data: pulled-arm features and observed rewards, in
/// interaction order.
#[derive(Debug, Clone, PartialEq)]
pub struct UserData {
    pub user_id: u64,
    pub features: Vec<DVector<f64>>,
    pub rewards: Vec<f64>,
}

impl UserData {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Append-only store of every interaction made so far.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    records: Vec<InteractionRecord>,
    /// Index of the first phase-2 record, once phase 1 has ended.
    phase_boundary: Option<usize>,
}

impl InteractionLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn append(&mut self, rec: InteractionRecord) -> Result<()> {
        // Re-validate so that hand-constructed records cannot bypass the
        // reward and arm-index contracts.
        if rec.chosen_arm >= rec.context.num_arms() {
            return Err(LcbError::ArmOutOfRange {
                arm: rec.chosen_arm,
                num_arms: rec.context.num_arms(),
            });
        }
        if !(0.0..=1.0).contains(&rec.reward) || !rec.reward.is_finite() {
            return Err(LcbError::RewardOutOfRange(rec.reward));
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[InteractionRecord] {
        &self.records
    }

    /// Mark the current end of the log as the phase-1 / phase-2 boundary.
    pub fn mark_phase_boundary(&mut self) {
        self.phase_boundary = Some(self.records.len());
    }

    pub fn phase_boundary(&self) -> Option<usize> {
        self.phase_boundary
    }

    /// (feature, reward) pairs grouped by user, preserving user identity for
    /// the per-user cluster assignments.
    ///
    /// With `iid_only` set, only records collected by uniform-random
    /// exploration are returned.
    pub fn training_pairs(&self, iid_only: bool) -> Vec<UserData> {
        let mut grouped: Vec<UserData> = Vec::new();
        for rec in &self.records {
            if iid_only && !rec.iid_sample {
                continue;
            }
            match grouped.iter_mut().find(|g| g.user_id == rec.user_id) {
                Some(g) => {
                    g.features.push(rec.chosen_feature().clone());
                    g.rewards.push(rec.reward);
                }
                None => grouped.push(UserData {
                    user_id: rec.user_id,
                    features: vec![rec.chosen_feature().clone()],
                    rewards: vec![rec.reward],
                }),
            }
        }
        grouped
    }

    /// Write the log as one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for rec in &self.records {
            let wire = WireRecord::from(rec);
            serde_json::to_writer(&mut w, &wire)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_jsonl(std::io::BufWriter::new(file))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut log = Self::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let wire: WireRecord =
                serde_json::from_str(&line).map_err(|e| LcbError::MalformedRecord {
                    line: i + 1,
                    message: e.to_string(),
                })?;
            log.append(wire.into_record().map_err(|e| LcbError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?)?;
        }
        Ok(log)
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_jsonl(BufReader::new(file))
    }
}

/// On-disk form of one interaction record.
#[derive(Debug, Serialize, Deserialize)]
struct WireRecord {
    user_id: u64,
    step: usize,
    arms: Vec<Vec<f64>>,
    chosen_arm: usize,
    reward: f64,
    iid_sample: bool,
}

impl From<&InteractionRecord> for WireRecord {
    fn from(rec: &InteractionRecord) -> Self {
        Self {
            user_id: rec.user_id,
            step: rec.step,
            arms: rec
                .context
                .arms()
                .iter()
                .map(|a| a.iter().copied().collect())
                .collect(),
            chosen_arm: rec.chosen_arm,
            reward: rec.reward,
            iid_sample: rec.iid_sample,
        }
    }
}

impl WireRecord {
    fn into_record(self) -> Result<InteractionRecord> {
        let arms = self.arms.into_iter().map(DVector::from_vec).collect();
        let ctx = Context::new(arms, self.step)?;
        InteractionRecord::new(
            self.user_id,
            self.step,
            ctx,
            self.chosen_arm,
            self.reward,
            self.iid_sample,
        )
    }
}
