//! `lcb`: experiment runner for the latent contextual bandit library.
//!
//! Verbs: `sim` (synthetic regret benchmark), `offline` (queue-method
//! evaluation pipeline), `train` / `eval` (batch model workflow), and
//! `gen-log` (synthetic click-log generator). All protocol constants ship
//! as defaults, so `lcb sim` and `lcb offline` run the standard setups with
//! no flags.

mod config;
mod experiments;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{AlgorithmId, ExperimentConfig, Mode};
use lcb_core::queue::SyntheticLogConfig;

#[derive(Parser)]
#[command(name = "lcb", version, about = "Latent contextual bandit experiment runner")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Debug, Default)]
struct CommonOverrides {
    /// TOML experiment config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Output directory override.
    #[arg(long)]
    out_dir: Option<PathBuf>,

    /// Number of replication seeds override.
    #[arg(long)]
    seeds: Option<u64>,

    /// Comma-separated roster override (lcb, lcb_gt, population_linucb,
    /// individual_linucb, random).
    #[arg(long, value_delimiter = ',')]
    algorithms: Option<Vec<AlgorithmId>>,
}

impl CommonOverrides {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(out) = &self.out_dir {
            cfg.out_dir = out.clone();
        }
        if let Some(seeds) = self.seeds {
            cfg.seeds = seeds;
        }
        if let Some(roster) = &self.algorithms {
            cfg.algorithms = roster.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthetic-environment regret benchmark over the algorithm roster.
    Sim {
        #[command(flatten)]
        common: CommonOverrides,

        /// Number of sequential users override.
        #[arg(long)]
        users: Option<u64>,

        /// Per-user horizon override.
        #[arg(long)]
        t_u: Option<usize>,

        /// Comma-separated horizons to sweep (overrides --t-u).
        #[arg(long, value_delimiter = ',')]
        t_u_sweep: Option<Vec<usize>>,
    },

    /// Full offline pipeline: log -> projection -> latent models ->
    /// queue-method evaluation of the roster.
    Offline {
        #[command(flatten)]
        common: CommonOverrides,

        /// Pre-existing training log (JSON lines); generated when omitted.
        #[arg(long)]
        train_log: Option<PathBuf>,

        /// Pre-existing evaluation log; generated when omitted.
        #[arg(long)]
        eval_log: Option<PathBuf>,
    },

    /// Train latent models from a logged dataset and save them.
    Train {
        #[command(flatten)]
        common: CommonOverrides,

        /// Input click log (JSON lines).
        #[arg(long)]
        log: PathBuf,

        /// Where to write the latent models.
        #[arg(long, default_value = "model.json")]
        model: PathBuf,

        /// Where to write the fitted arm-feature projection.
        #[arg(long, default_value = "projection.json")]
        projection: PathBuf,
    },

    /// Evaluate a saved model on a logged dataset via the queue method.
    Eval {
        #[command(flatten)]
        common: CommonOverrides,

        /// Evaluation click log (JSON lines).
        #[arg(long)]
        log: PathBuf,

        #[arg(long, default_value = "model.json")]
        model: PathBuf,

        #[arg(long, default_value = "projection.json")]
        projection: PathBuf,

        /// Output CSV path.
        #[arg(long, default_value = "eval_ctr.csv")]
        out: PathBuf,
    },

    /// Generate a synthetic click log with planted user classes.
    GenLog {
        #[command(flatten)]
        common: CommonOverrides,

        /// Output log path (JSON lines).
        #[arg(long, default_value = "log.jsonl")]
        out: PathBuf,

        /// Optional sidecar mapping user id to planted class.
        #[arg(long)]
        classes: Option<PathBuf>,

        /// Number of users override.
        #[arg(long)]
        users: Option<u64>,

        /// Impressions per user override.
        #[arg(long)]
        records_per_user: Option<usize>,

        /// Generator seed override.
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Sim {
            common,
            users,
            t_u,
            t_u_sweep,
        } => {
            let mut cfg = common.resolve()?;
            cfg.mode = Mode::Sim;
            if let Some(u) = users {
                cfg.sim.users = u;
            }
            if let Some(t) = t_u {
                cfg.sim.t_u = t;
                cfg.sim.t_u_sweep.clear();
            }
            if let Some(sweep) = t_u_sweep {
                cfg.sim.t_u_sweep = sweep;
            }
            cfg.validate()?;
            experiments::run_sim(&cfg)
        }
        Cmd::Offline {
            common,
            train_log,
            eval_log,
        } => {
            let mut cfg = common.resolve()?;
            cfg.mode = Mode::Offline;
            if train_log.is_some() {
                cfg.offline.train_log = train_log;
            }
            if eval_log.is_some() {
                cfg.offline.eval_log = eval_log;
            }
            // The ground-truth variant has no planted linear models offline.
            cfg.algorithms.retain(|a| *a != AlgorithmId::LcbGt);
            cfg.validate()?;
            experiments::run_offline(&cfg)
        }
        Cmd::Train {
            common,
            log,
            model,
            projection,
        } => {
            let cfg = common.resolve()?;
            experiments::train_model(
                &log,
                &model,
                &projection,
                &cfg.lcb,
                cfg.offline.num_categories,
                cfg.offline.projected_dim,
            )
        }
        Cmd::Eval {
            common,
            log,
            model,
            projection,
            out,
        } => {
            let mut cfg = common.resolve()?;
            cfg.mode = Mode::Offline;
            cfg.algorithms.retain(|a| *a != AlgorithmId::LcbGt);
            cfg.validate()?;
            experiments::eval_model(&log, &model, &projection, &out, &cfg)
        }
        Cmd::GenLog {
            common,
            out,
            classes,
            users,
            records_per_user,
            seed,
        } => {
            let cfg = common.resolve()?;
            let off = &cfg.offline;
            let gen_cfg = SyntheticLogConfig {
                num_users: users.unwrap_or(off.train_users),
                records_per_user: records_per_user.unwrap_or(off.records_per_user),
                num_classes: off.num_classes,
                num_categories: off.num_categories,
                preferred_rate: off.preferred_rate,
                base_rate: off.base_rate,
                preferred_per_class: off.preferred_per_class,
                two_category_prob: off.two_category_prob,
                seed: seed.unwrap_or(off.log_seed),
            };
            experiments::gen_log(&out, classes.as_deref(), &gen_cfg)
        }
    }
}
