//! Offline evaluation of interactive algorithms on logged data via per-user,
//! per-category FIFO queues of click labels, plus log ingestion, the PCA
//! arm-feature projection, and a synthetic log generator with planted user
//! classes.

use std::collections::{BTreeMap, VecDeque};
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LcbError, Result};
use crate::orchestrator::InteractiveAlgorithm;
use crate::types::{Context, UserData};

/// Category count used by the news-recommendation setup.
pub const DEFAULT_NUM_CATEGORIES: usize = 21;
/// Dense arm-feature dimension after projection.
pub const DEFAULT_PROJECTED_DIM: usize = 6;
/// Interactions per user during offline evaluation.
pub const DEFAULT_T_U: usize = 20;

/// One logged line: an article shown to a user and whether they clicked.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoggedImpression {
    pub user_id: u64,
    pub article_id: u64,
    /// Category ids the article belongs to (an article can have several).
    pub categories: Vec<usize>,
    /// Click label, 0 or 1.
    pub click: u8,
    pub timestamp: u64,
}

/// Read impressions from JSON-lines, reporting the line number on failure.
pub fn read_impressions<R: BufRead>(r: R) -> Result<Vec<LoggedImpression>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let imp: LoggedImpression =
            serde_json::from_str(&line).map_err(|e| LcbError::MalformedRecord {
                line: i + 1,
                message: e.to_string(),
            })?;
        if imp.click > 1 {
            return Err(LcbError::MalformedRecord {
                line: i + 1,
                message: format!("click label {} is not 0 or 1", imp.click),
            });
        }
        if imp.categories.is_empty() {
            return Err(LcbError::MalformedRecord {
                line: i + 1,
                message: "article has no categories".into(),
            });
        }
        out.push(imp);
    }
    Ok(out)
}

pub fn write_impressions<W: Write>(mut w: W, imps: &[LoggedImpression]) -> Result<()> {
    for imp in imps {
        serde_json::to_writer(&mut w, imp)?;
        writeln!(w)?;
    }
    Ok(())
}

pub fn load_impressions<P: AsRef<Path>>(path: P) -> Result<Vec<LoggedImpression>> {
    let file = std::fs::File::open(path)?;
    read_impressions(std::io::BufReader::new(file))
}

pub fn save_impressions<P: AsRef<Path>>(path: P, imps: &[LoggedImpression]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_impressions(std::io::BufWriter::new(file), imps)
}

/// Aggregate counts from ingesting a log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogStats {
    /// Logged lines (impressions).
    pub impressions: u64,
    /// Impressions with a click.
    pub clicks: u64,
    /// Labels pushed into queues (one per article-category membership).
    pub labels_pushed: u64,
}

impl LogStats {
    /// Click-through rate of the raw log, the denominator for relative CTR.
    pub fn ctr(&self) -> f64 {
        if self.impressions == 0 {
            return 0.0;
        }
        self.clicks as f64 / self.impressions as f64
    }
}

/// Per-user, per-category FIFO queues of click labels.
///
/// Users are kept in sorted id order so evaluation is deterministic for a
/// given bank and algorithm seed.
#[derive(Debug, Clone, Default)]
pub struct QueueBank {
    num_categories: usize,
    users: BTreeMap<u64, Vec<VecDeque<u8>>>,
}

impl QueueBank {
    pub fn new(num_categories: usize) -> Self {
        Self {
            num_categories,
            users: BTreeMap::new(),
        }
    }

    pub fn num_categories(&self) -> usize {
        self.num_categories
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn user_ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.users.keys().copied()
    }

    /// Append one label to a user's category queue.
    pub fn push_label(&mut self, user_id: u64, category: usize, label: u8) -> Result<()> {
        if category >= self.num_categories {
            return Err(LcbError::UnknownCategory(category));
        }
        if label > 1 {
            return Err(LcbError::InvalidParameter(format!(
                "label {label} is not 0 or 1"
            )));
        }
        let n = self.num_categories;
        self.users
            .entry(user_id)
            .or_insert_with(|| vec![VecDeque::new(); n])[category]
            .push_back(label);
        Ok(())
    }

    pub fn queue_len(&self, user_id: u64, category: usize) -> usize {
        self.users
            .get(&user_id)
            .map_or(0, |qs| qs[category].len())
    }

    pub fn total_labels(&self) -> u64 {
        self.users
            .values()
            .flat_map(|qs| qs.iter())
            .map(|q| q.len() as u64)
            .sum()
    }

    fn pop(&mut self, user_id: u64, category: usize) -> Option<u8> {
        self.users
            .get_mut(&user_id)
            .and_then(|qs| qs[category].pop_front())
    }
}

/// Build the queue bank from a log: each impression's label is appended to
/// the queue of every category the article belongs to, in log order.
pub fn ingest_log(imps: &[LoggedImpression], num_categories: usize) -> Result<(QueueBank, LogStats)> {
    let mut bank = QueueBank::new(num_categories);
    let mut stats = LogStats::default();
    for imp in imps {
        stats.impressions += 1;
        stats.clicks += u64::from(imp.click);
        for &c in &imp.categories {
            bank.push_label(imp.user_id, c, imp.click)?;
            stats.labels_pushed += 1;
        }
    }
    Ok((bank, stats))
}

pub fn ingest_file<P: AsRef<Path>>(path: P, num_categories: usize) -> Result<(QueueBank, LogStats)> {
    let imps = load_impressions(path)?;
    ingest_log(&imps, num_categories)
}

/// Indicator vector of an article's categories.
pub fn category_vector(categories: &[usize], num_categories: usize) -> Result<DVector<f64>> {
    let mut v = DVector::zeros(num_categories);
    for &c in categories {
        if c >= num_categories {
            return Err(LcbError::UnknownCategory(c));
        }
        v[c] = 1.0;
    }
    Ok(v)
}

/// PCA projection from raw category-indicator space to a dense feature
/// space; rows of the projection matrix are orthonormal eigenvectors of the
/// sample covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmProjection {
    mean: Vec<f64>,
    /// `out_dim x raw_dim`, orthonormal rows (principal directions).
    rows: Vec<Vec<f64>>,
    /// Variance captured by each kept direction, descending.
    explained: Vec<f64>,
    /// Total variance (sum of all covariance eigenvalues).
    total_variance: f64,
    /// Upper bound on projected norms; dividing by it keeps arm features
    /// inside the unit ball required of contexts.
    norm_bound: f64,
}

impl ArmProjection {
    pub fn raw_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.rows.len()
    }

    pub fn mean(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.mean)
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.out_dim(), self.raw_dim(), |i, j| self.rows[i][j])
    }

    /// Project a centered raw vector onto the principal directions.
    pub fn apply(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        if raw.len() != self.raw_dim() {
            return Err(LcbError::DimensionMismatch {
                expected: self.raw_dim(),
                got: raw.len(),
            });
        }
        Ok(self.matrix() * (raw - self.mean()))
    }

    /// Map a projected vector back into raw space.
    pub fn reconstruct(&self, projected: &DVector<f64>) -> Result<DVector<f64>> {
        if projected.len() != self.out_dim() {
            return Err(LcbError::DimensionMismatch {
                expected: self.out_dim(),
                got: projected.len(),
            });
        }
        Ok(self.matrix().transpose() * projected + self.mean())
    }

    /// Projected feature scaled into the unit ball, as presented to bandit
    /// algorithms.
    pub fn feature(&self, raw: &DVector<f64>) -> Result<DVector<f64>> {
        let y = self.apply(raw)? / self.norm_bound;
        let n = y.norm();
        // The bound covers indicator inputs; anything more extreme is still
        // clamped onto the unit sphere rather than rejected.
        Ok(if n > 1.0 { y / n } else { y })
    }

    /// Scaled feature of the single-category arm `c`.
    pub fn category_feature(&self, c: usize) -> Result<DVector<f64>> {
        if c >= self.raw_dim() {
            return Err(LcbError::UnknownCategory(c));
        }
        let mut e = DVector::zeros(self.raw_dim());
        e[c] = 1.0;
        self.feature(&e)
    }

    /// One context presenting every category as an arm.
    pub fn category_context(&self, step: usize) -> Result<Context> {
        let arms = (0..self.raw_dim())
            .map(|c| self.category_feature(c))
            .collect::<Result<Vec<_>>>()?;
        Context::new(arms, step)
    }
}

/// Fit the projection on raw article vectors: center, eigendecompose the
/// sample covariance, keep the `out_dim` leading orthonormal directions.
pub fn pca_fit(raw: &[DVector<f64>], out_dim: usize) -> Result<ArmProjection> {
    if raw.is_empty() {
        return Err(LcbError::EmptyInput("pca training vectors"));
    }
    let n = raw.len();
    let d = raw[0].len();
    for v in raw {
        if v.len() != d {
            return Err(LcbError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
    }
    if out_dim == 0 || out_dim > d {
        return Err(LcbError::InvalidParameter(format!(
            "projection dimension {out_dim} outside 1..={d}"
        )));
    }
    let mean = raw.iter().fold(DVector::zeros(d), |acc, v| acc + v) / n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for v in raw {
        let c = v - &mean;
        cov += &c * c.transpose();
    }
    cov /= n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut idx: Vec<usize> = (0..d).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let total_variance = eig.eigenvalues.iter().sum();
    let max_ev = eig.eigenvalues[idx[0]].max(0.0);
    let rank = idx
        .iter()
        .filter(|&&i| eig.eigenvalues[i] > 1e-10 * max_ev.max(1.0))
        .count();
    if rank < out_dim {
        return Err(LcbError::RankDeficient {
            needed: out_dim,
            got: rank,
        });
    }
    let rows: Vec<Vec<f64>> = idx[..out_dim]
        .iter()
        .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
        .collect();
    let explained: Vec<f64> = idx[..out_dim].iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut proj = ArmProjection {
        mean: mean.iter().copied().collect(),
        rows,
        explained,
        total_variance,
        norm_bound: 1.0,
    };
    // Bound projected norms over the fit data and every single-category
    // indicator, so evaluation arms always satisfy the unit-norm contract.
    let mut bound = 1.0f64;
    for v in raw {
        bound = bound.max(proj.apply(v)?.norm());
    }
    for c in 0..d {
        let mut e = DVector::zeros(d);
        e[c] = 1.0;
        bound = bound.max(proj.apply(&e)?.norm());
    }
    proj.norm_bound = bound * (1.0 + 1e-12);
    Ok(proj)
}

/// Convenience: fit the projection directly from a log's article vectors.
pub fn pca_fit_from_log(
    imps: &[LoggedImpression],
    num_categories: usize,
    out_dim: usize,
) -> Result<ArmProjection> {
    let raw = imps
        .iter()
        .map(|i| category_vector(&i.categories, num_categories))
        .collect::<Result<Vec<_>>>()?;
    pca_fit(&raw, out_dim)
}

/// Per-user (features, rewards) pairs from a log: projected article
/// features against click labels, for training latent models offline.
pub fn training_pairs_from_log(
    imps: &[LoggedImpression],
    proj: &ArmProjection,
) -> Result<Vec<UserData>> {
    let mut grouped: BTreeMap<u64, UserData> = BTreeMap::new();
    for imp in imps {
        let raw = category_vector(&imp.categories, proj.raw_dim())?;
        let x = proj.feature(&raw)?;
        let entry = grouped.entry(imp.user_id).or_insert_with(|| UserData {
            user_id: imp.user_id,
            features: Vec::new(),
            rewards: Vec::new(),
        });
        entry.features.push(x);
        entry.rewards.push(f64::from(imp.click));
    }
    Ok(grouped.into_values().collect())
}

/// One evaluated user session.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UserEval {
    pub user_id: u64,
    pub pulls: u64,
    pub clicks: u64,
    /// True when the session ended because the selected queue was empty.
    pub terminated_early: bool,
}

/// Result of replaying the bank through an algorithm.
#[derive(Debug, Clone, Default)]
pub struct EvalReport {
    pub per_user: Vec<UserEval>,
}

impl EvalReport {
    pub fn users_evaluated(&self) -> u64 {
        self.per_user.len() as u64
    }

    pub fn total_pulls(&self) -> u64 {
        self.per_user.iter().map(|u| u.pulls).sum()
    }

    pub fn total_clicks(&self) -> u64 {
        self.per_user.iter().map(|u| u.clicks).sum()
    }

    pub fn terminated_sessions(&self) -> u64 {
        self.per_user.iter().filter(|u| u.terminated_early).count() as u64
    }

    /// Clicks per evaluated pull; terminated sessions' unplayed steps are
    /// not counted in the denominator.
    pub fn ctr(&self) -> f64 {
        let pulls = self.total_pulls();
        if pulls == 0 {
            return 0.0;
        }
        self.total_clicks() as f64 / pulls as f64
    }

    /// Cumulative (users evaluated, CTR so far) curve.
    pub fn ctr_curve(&self) -> Vec<(u64, f64)> {
        let mut pulls = 0u64;
        let mut clicks = 0u64;
        self.per_user
            .iter()
            .enumerate()
            .map(|(i, u)| {
                pulls += u.pulls;
                clicks += u.clicks;
                let ctr = if pulls == 0 {
                    0.0
                } else {
                    clicks as f64 / pulls as f64
                };
                (i as u64 + 1, ctr)
            })
            .collect()
    }
}

/// Replay the bank through an interactive algorithm.
///
/// Each user sees up to `t_u` steps. Every step presents one arm per
/// category; the selected category's queue front becomes the observed
/// reward. An empty selected queue ends the session early, so no label is
/// ever reused and each pull consumes exactly one queued label.
pub fn evaluate(
    bank: &mut QueueBank,
    proj: &ArmProjection,
    algo: &mut dyn InteractiveAlgorithm,
    t_u: usize,
    rng: &mut dyn RngCore,
) -> Result<EvalReport> {
    if bank.num_users() == 0 {
        return Err(LcbError::EmptyInput("queue bank"));
    }
    if proj.raw_dim() != bank.num_categories() {
        return Err(LcbError::DimensionMismatch {
            expected: bank.num_categories(),
            got: proj.raw_dim(),
        });
    }
    let user_ids: Vec<u64> = bank.user_ids().collect();
    let mut report = EvalReport::default();
    for user_id in user_ids {
        algo.begin_user(user_id);
        let mut eval = UserEval {
            user_id,
            pulls: 0,
            clicks: 0,
            terminated_early: false,
        };
        for step in 1..=t_u {
            let ctx = proj.category_context(step)?;
            let category = algo.select_arm(&ctx, rng)?;
            match bank.pop(user_id, category) {
                Some(label) => {
                    eval.pulls += 1;
                    eval.clicks += u64::from(label);
                    algo.observe(&ctx, category, f64::from(label))?;
                }
                None => {
                    eval.terminated_early = true;
                    break;
                }
            }
        }
        report.per_user.push(eval);
    }
    Ok(report)
}

/// Parameters of the synthetic planted-class log generator (a
/// schema-compatible stand-in for proprietary production logs).
#[derive(Debug, Clone)]
pub struct SyntheticLogConfig {
    pub num_users: u64,
    /// Impressions logged per user.
    pub records_per_user: usize,
    pub num_classes: usize,
    pub num_categories: usize,
    /// Click probability on a class's preferred categories.
    pub preferred_rate: f64,
    /// Click probability elsewhere.
    pub base_rate: f64,
    /// Preferred categories per class.
    pub preferred_per_class: usize,
    /// Probability an article carries a second category.
    pub two_category_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticLogConfig {
    fn default() -> Self {
        Self {
            num_users: 1000,
            records_per_user: 40,
            num_classes: 10,
            num_categories: DEFAULT_NUM_CATEGORIES,
            preferred_rate: 0.5,
            base_rate: 0.05,
            preferred_per_class: 2,
            two_category_prob: 0.3,
            seed: 0,
        }
    }
}

impl SyntheticLogConfig {
    /// Preferred categories of class `h`: a contiguous block, cycled so
    /// classes overlap as little as the category budget allows.
    pub fn preferred_categories(&self, class: usize) -> Vec<usize> {
        (0..self.preferred_per_class)
            .map(|j| (class * self.preferred_per_class + j) % self.num_categories)
            .collect()
    }

    /// Click probability for a `class` user on an article with these
    /// categories: the highest per-category rate.
    pub fn click_rate(&self, class: usize, categories: &[usize]) -> f64 {
        let preferred = self.preferred_categories(class);
        if categories.iter().any(|c| preferred.contains(c)) {
            self.preferred_rate
        } else {
            self.base_rate
        }
    }
}

/// A generated log plus the planted class of every user.
#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub impressions: Vec<LoggedImpression>,
    /// user id -> planted class.
    pub user_classes: BTreeMap<u64, usize>,
}

/// Generate a click log with planted per-class category preferences:
/// articles shown uniformly at random, labels Bernoulli at the class's rate
/// for the article's categories.
pub fn generate_synthetic_log(cfg: &SyntheticLogConfig) -> Result<SyntheticLog> {
    if cfg.num_classes == 0 || cfg.num_categories == 0 {
        return Err(LcbError::InvalidParameter(
            "num_classes and num_categories must be positive".into(),
        ));
    }
    if cfg.preferred_per_class * cfg.num_classes > cfg.num_categories * 2 {
        return Err(LcbError::InvalidParameter(
            "preferred categories would overlap more than once per category".into(),
        ));
    }
    for rate in [cfg.preferred_rate, cfg.base_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(LcbError::InvalidParameter(format!(
                "click rate {rate} outside [0, 1]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut impressions = Vec::with_capacity(cfg.num_users as usize * cfg.records_per_user);
    let mut user_classes = BTreeMap::new();
    let mut article_id = 0u64;
    let mut timestamp = 0u64;
    for user_id in 1..=cfg.num_users {
        let class = rng.gen_range(0..cfg.num_classes);
        user_classes.insert(user_id, class);
        for _ in 0..cfg.records_per_user {
            let first = rng.gen_range(0..cfg.num_categories);
            let mut categories = vec![first];
            if cfg.num_categories > 1 && rng.gen::<f64>() < cfg.two_category_prob {
                let second = loop {
                    let c = rng.gen_range(0..cfg.num_categories);
                    if c != first {
                        break c;
                    }
                };
                categories.push(second);
            }
            let rate = cfg.click_rate(class, &categories);
            let click = u8::from(rng.gen::<f64>() < rate);
            article_id += 1;
            timestamp += 1;
            impressions.push(LoggedImpression {
                user_id,
                article_id,
                categories,
                click,
                timestamp,
            });
        }
    }
    Ok(SyntheticLog {
        impressions,
        user_classes,
    })
}
