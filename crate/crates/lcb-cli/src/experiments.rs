//! Experiment execution: simulation and offline-evaluation runs over an
//! algorithm roster, CSV emission, and model/projection persistence.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use lcb_core::mlr::{em_fit, fit_gibbs, EmConfig, GibbsConfig, NigPrior};
use lcb_core::orchestrator::{
    IndividualLinUcb, InteractiveAlgorithm, LcbAgent, PopulationLinUcb, RandomAgent,
};
use lcb_core::queue::{
    evaluate, generate_synthetic_log, ingest_log, load_impressions, pca_fit_from_log,
    save_impressions, training_pairs_from_log, ArmProjection, LoggedImpression, LogStats,
    SyntheticLogConfig,
};
use lcb_core::sim::{self, SimSpec};
use lcb_core::types::UserData;
use lcb_core::MixtureModel;

use crate::config::{AlgorithmId, ExperimentConfig, LcbSection, LearnerId};

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn write_lines(path: &Path, header: &str, rows: &[String]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::io::BufWriter::new(
        std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    writeln!(f, "{header}")?;
    for row in rows {
        writeln!(f, "{row}")?;
    }
    Ok(())
}

/// Build one roster agent for a simulation run.
fn sim_agent(
    algo: AlgorithmId,
    cfg: &ExperimentConfig,
    spec: &SimSpec,
    horizon: usize,
) -> Result<Box<dyn InteractiveAlgorithm>> {
    Ok(match algo {
        AlgorithmId::Lcb => Box::new(LcbAgent::new(cfg.lcb.agent_config(Some(horizon)))),
        AlgorithmId::LcbGt => {
            let models = sim::generate_models(spec)?;
            Box::new(LcbAgent::with_true_models(
                cfg.lcb.agent_config(Some(horizon)),
                models,
            ))
        }
        AlgorithmId::PopulationLinucb => {
            Box::new(PopulationLinUcb::new(cfg.lcb.ridge, cfg.lcb.alpha_ucb))
        }
        AlgorithmId::IndividualLinucb => {
            Box::new(IndividualLinUcb::new(cfg.lcb.ridge, cfg.lcb.alpha_ucb))
        }
        AlgorithmId::Random => Box::new(RandomAgent),
    })
}

/// One curve point: averaged per-user regret after `users` users.
struct SimRow {
    algorithm: AlgorithmId,
    t_u: usize,
    seed: u64,
    users: u64,
    avg_regret: f64,
}

/// Run the simulation protocol for every horizon x algorithm x seed and
/// write the regret curves plus the across-seed summary.
pub fn run_sim(cfg: &ExperimentConfig) -> Result<()> {
    let hash = cfg.hash();
    let mut rows: Vec<SimRow> = Vec::new();
    for &t_u in &cfg.sim.horizons() {
        let spec = cfg.sim.spec(t_u);
        for &algo in &cfg.algorithms {
            for seed in 0..cfg.seeds {
                let mut agent = sim_agent(algo, cfg, &spec, t_u)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let metrics = sim::run_simulation(&spec, agent.as_mut(), cfg.sim.users, &mut rng)?;
                let mut cum = 0.0;
                for (i, r) in metrics.per_user_regret.iter().enumerate() {
                    cum += r;
                    let users = i as u64 + 1;
                    if users % cfg.sim.checkpoint_every == 0 || users == cfg.sim.users {
                        rows.push(SimRow {
                            algorithm: algo,
                            t_u,
                            seed,
                            users,
                            avg_regret: cum / users as f64,
                        });
                    }
                }
            }
        }
    }

    let curve_rows: Vec<String> = rows
        .iter()
        .map(|r| {
            format!(
                "{hash},{},{},{},{},{:.8}",
                r.algorithm, r.t_u, r.seed, r.users, r.avg_regret
            )
        })
        .collect();
    write_lines(
        &cfg.out_dir.join("sim_curves.csv"),
        "config_hash,algorithm,t_u,seed,users,avg_per_user_regret",
        &curve_rows,
    )?;

    // Across-seed aggregate at every checkpoint.
    let mut summary_rows = Vec::new();
    for &t_u in &cfg.sim.horizons() {
        for &algo in &cfg.algorithms {
            let mut checkpoints: Vec<u64> = rows
                .iter()
                .filter(|r| r.t_u == t_u && r.algorithm == algo)
                .map(|r| r.users)
                .collect();
            checkpoints.sort_unstable();
            checkpoints.dedup();
            for users in checkpoints {
                let vals: Vec<f64> = rows
                    .iter()
                    .filter(|r| {
                        r.t_u == t_u && r.algorithm == algo && r.users == users
                    })
                    .map(|r| r.avg_regret)
                    .collect();
                let (mean, std) = mean_std(&vals);
                summary_rows.push(format!(
                    "{hash},{algo},{t_u},{users},{},{mean:.8},{std:.8}",
                    vals.len()
                ));
            }
        }
    }
    write_lines(
        &cfg.out_dir.join("sim_summary.csv"),
        "config_hash,algorithm,t_u,users,seeds,mean_avg_regret,std_avg_regret",
        &summary_rows,
    )?;
    println!(
        "simulation done: {} curve rows, outputs in {}",
        rows.len(),
        cfg.out_dir.display()
    );
    Ok(())
}

/// Fit latent models from per-user training pairs with the configured
/// learner.
pub fn fit_from_pairs(pairs: &[UserData], lcb: &LcbSection, seed: u64) -> Result<MixtureModel> {
    if pairs.is_empty() {
        bail!("no training data");
    }
    match lcb.learner {
        LearnerId::Em => Ok(em_fit(
            pairs,
            &EmConfig {
                n_components: lcb.max_components,
                max_iters: lcb.em_iters,
                seed,
                tol: 1e-8,
            },
        )?
        .model),
        LearnerId::Gibbs => {
            let dim = pairs[0].features[0].len();
            let prior = NigPrior::standard(dim);
            Ok(fit_gibbs(
                pairs,
                &prior,
                &GibbsConfig {
                    burn_in: lcb.gibbs_burn_in,
                    samples: lcb.gibbs_samples,
                    seed,
                    max_components: lcb.max_components,
                    ..GibbsConfig::default()
                },
            )?
            .model)
        }
    }
}

pub fn save_projection(path: &Path, proj: &ArmProjection) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer_pretty(f, proj)?;
    Ok(())
}

pub fn load_projection(path: &Path) -> Result<ArmProjection> {
    let f = std::io::BufReader::new(
        std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    Ok(serde_json::from_reader(f)?)
}

/// Load a log from `path`, or generate (and persist) a synthetic one.
fn obtain_log(
    path: Option<&PathBuf>,
    fallback_path: &Path,
    cfg: &ExperimentConfig,
    users: u64,
    seed: u64,
) -> Result<Vec<LoggedImpression>> {
    if let Some(p) = path {
        return load_impressions(p).map_err(Into::into);
    }
    let off = &cfg.offline;
    let log = generate_synthetic_log(&SyntheticLogConfig {
        num_users: users,
        records_per_user: off.records_per_user,
        num_classes: off.num_classes,
        num_categories: off.num_categories,
        preferred_rate: off.preferred_rate,
        base_rate: off.base_rate,
        preferred_per_class: off.preferred_per_class,
        two_category_prob: off.two_category_prob,
        seed,
    })?;
    if let Some(dir) = fallback_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_impressions(fallback_path, &log.impressions)?;
    Ok(log.impressions)
}

fn offline_agent(
    algo: AlgorithmId,
    cfg: &ExperimentConfig,
    model: &MixtureModel,
    seed: u64,
) -> Result<Box<dyn InteractiveAlgorithm>> {
    Ok(match algo {
        AlgorithmId::Lcb => {
            let mut agent_cfg = cfg.lcb.agent_config(Some(cfg.offline.t_u));
            // Batch mode: the model is trained once, offline.
            agent_cfg.retrain_every = usize::MAX;
            agent_cfg.seed = cfg.lcb.seed.wrapping_add(seed);
            Box::new(LcbAgent::with_pretrained(agent_cfg, model.clone()))
        }
        AlgorithmId::LcbGt => {
            bail!("lcb_gt needs planted linear models and is only available in sim mode")
        }
        AlgorithmId::PopulationLinucb => {
            Box::new(PopulationLinUcb::new(cfg.lcb.ridge, cfg.lcb.alpha_ucb))
        }
        AlgorithmId::IndividualLinucb => {
            Box::new(IndividualLinUcb::new(cfg.lcb.ridge, cfg.lcb.alpha_ucb))
        }
        AlgorithmId::Random => Box::new(RandomAgent),
    })
}

/// Replay an evaluation log's queue bank through the roster; relative CTR is
/// each algorithm's CTR over the logging policy's.
pub fn run_offline(cfg: &ExperimentConfig) -> Result<()> {
    let hash = cfg.hash();
    let off = &cfg.offline;
    let train_imps = obtain_log(
        off.train_log.as_ref(),
        &cfg.out_dir.join("train_log.jsonl"),
        cfg,
        off.train_users,
        off.log_seed,
    )?;
    let eval_imps = obtain_log(
        off.eval_log.as_ref(),
        &cfg.out_dir.join("eval_log.jsonl"),
        cfg,
        off.eval_users,
        off.log_seed.wrapping_add(1),
    )?;

    let proj = pca_fit_from_log(&train_imps, off.num_categories, off.projected_dim)?;
    save_projection(&cfg.out_dir.join("projection.json"), &proj)?;

    let pairs = training_pairs_from_log(&train_imps, &proj)?;
    let model = fit_from_pairs(&pairs, &cfg.lcb, cfg.lcb.seed)?;
    model
        .save(cfg.out_dir.join("model.json"))
        .context("saving trained model")?;
    println!(
        "trained {} latent models on {} users",
        model.num_components(),
        pairs.len()
    );

    let (_, eval_stats) = ingest_log(&eval_imps, off.num_categories)?;
    let data_ctr = eval_stats.ctr();
    if data_ctr <= 0.0 {
        bail!("evaluation log has zero click-through rate");
    }

    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &algo in &cfg.algorithms {
        let mut rels = Vec::new();
        for seed in 0..cfg.seeds {
            let (mut bank, _) = ingest_log(&eval_imps, off.num_categories)?;
            let mut agent = offline_agent(algo, cfg, &model, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = evaluate(&mut bank, &proj, agent.as_mut(), off.t_u, &mut rng)?;
            let rel = report.ctr() / data_ctr;
            rels.push(rel);
            rows.push(format!(
                "{hash},{algo},{seed},{},{},{:.8},{rel:.8},{}",
                report.users_evaluated(),
                report.total_pulls(),
                report.ctr(),
                report.terminated_sessions()
            ));
        }
        let (mean, std) = mean_std(&rels);
        summary.push(format!("{hash},{algo},{},{mean:.8},{std:.8}", rels.len()));
        println!("{algo}: relative CTR {mean:.4} +/- {std:.4}");
    }
    write_lines(
        &cfg.out_dir.join("offline_ctr.csv"),
        "config_hash,algorithm,seed,users_evaluated,pulls,ctr,relative_ctr,terminated_sessions",
        &rows,
    )?;
    write_lines(
        &cfg.out_dir.join("offline_summary.csv"),
        "config_hash,algorithm,seeds,mean_relative_ctr,std_relative_ctr",
        &summary,
    )?;
    Ok(())
}

/// `train` verb: log -> projection + latent models on disk.
pub fn train_model(
    log_path: &Path,
    model_path: &Path,
    proj_path: &Path,
    lcb: &LcbSection,
    num_categories: usize,
    projected_dim: usize,
) -> Result<()> {
    let imps = load_impressions(log_path)?;
    if imps.is_empty() {
        bail!("log {} is empty", log_path.display());
    }
    let proj = pca_fit_from_log(&imps, num_categories, projected_dim)?;
    let pairs = training_pairs_from_log(&imps, &proj)?;
    let model = fit_from_pairs(&pairs, lcb, lcb.seed)?;
    if let Some(dir) = model_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    model.save(model_path)?;
    save_projection(proj_path, &proj)?;
    println!(
        "trained {} latent models on {} users ({} records); model -> {}, projection -> {}",
        model.num_components(),
        pairs.len(),
        imps.len(),
        model_path.display(),
        proj_path.display()
    );
    Ok(())
}

/// `eval` verb: saved model + projection + eval log -> relative-CTR CSV.
#[allow(clippy::too_many_arguments)]
pub fn eval_model(
    log_path: &Path,
    model_path: &Path,
    proj_path: &Path,
    out_path: &Path,
    cfg: &ExperimentConfig,
) -> Result<()> {
    let hash = cfg.hash();
    let imps = load_impressions(log_path)?;
    let model = MixtureModel::load(model_path)?;
    let proj = load_projection(proj_path)?;
    let off = &cfg.offline;
    let (_, stats): (_, LogStats) = ingest_log(&imps, off.num_categories)?;
    let data_ctr = stats.ctr();
    if data_ctr <= 0.0 {
        bail!("evaluation log has zero click-through rate");
    }
    let mut rows = Vec::new();
    for &algo in &cfg.algorithms {
        for seed in 0..cfg.seeds {
            let (mut bank, _) = ingest_log(&imps, off.num_categories)?;
            let mut agent = offline_agent(algo, cfg, &model, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let report = evaluate(&mut bank, &proj, agent.as_mut(), off.t_u, &mut rng)?;
            let rel = report.ctr() / data_ctr;
            println!(
                "{algo} seed {seed}: CTR {:.4}, relative {:.4} over {} users",
                report.ctr(),
                rel,
                report.users_evaluated()
            );
            rows.push(format!(
                "{hash},{algo},{seed},{},{},{:.8},{rel:.8},{}",
                report.users_evaluated(),
                report.total_pulls(),
                report.ctr(),
                report.terminated_sessions()
            ));
        }
    }
    write_lines(
        out_path,
        "config_hash,algorithm,seed,users_evaluated,pulls,ctr,relative_ctr,terminated_sessions",
        &rows,
    )?;
    Ok(())
}

/// `gen-log` verb: synthetic click log plus a sidecar with planted classes.
pub fn gen_log(out_path: &Path, classes_path: Option<&Path>, cfg: &SyntheticLogConfig) -> Result<()> {
    let log = generate_synthetic_log(cfg)?;
    if let Some(dir) = out_path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_impressions(out_path, &log.impressions)?;
    if let Some(cp) = classes_path {
        let f = std::io::BufWriter::new(std::fs::File::create(cp)?);
        serde_json::to_writer_pretty(f, &log.user_classes)?;
    }
    let clicks: u64 = log.impressions.iter().map(|i| u64::from(i.click)).sum();
    println!(
        "wrote {} impressions for {} users ({} clicks, CTR {:.4}) to {}",
        log.impressions.len(),
        cfg.num_users,
        clicks,
        clicks as f64 / log.impressions.len() as f64,
        out_path.display()
    );
    Ok(())
}
