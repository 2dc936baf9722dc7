//! End-to-end acceptance checks, one test per criterion. Heavy simulation
//! runs are computed once and shared between the criteria that read them.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use lcb_core::bandits::BanditAlgo;
use lcb_core::latent::Policy;
use lcb_core::linucb::LinUcb;
use lcb_core::mlr::{em_fit, fit_gibbs, EmConfig, GibbsConfig, NigPrior, SuffStats};
use lcb_core::mlr::gibbs::synth_user;
use lcb_core::orchestrator::{
    IndividualLinUcb, InteractiveAlgorithm, LcbAgent, LcbConfig, PopulationLinUcb,
};
use lcb_core::queue::{
    category_vector, evaluate, generate_synthetic_log, ingest_log, pca_fit,
    training_pairs_from_log, QueueBank, SyntheticLogConfig,
};
use lcb_core::sim::{self, SimSpec};
use lcb_core::types::{Context, UserData};
use lcb_core::MixtureModel;

const SEEDS: u64 = 20;
const HEADLINE_USERS: u64 = 1000;
const SWEEP_USERS: u64 = 400;
const PHASE1_USERS: u64 = 50;

fn spec(t_u: usize) -> SimSpec {
    SimSpec {
        t_u,
        ..SimSpec::default()
    }
}

fn lcb_cfg(t_u: usize, seed: u64) -> LcbConfig {
    LcbConfig {
        horizon_hint: Some(t_u),
        seed: seed.wrapping_mul(1000).wrapping_add(7),
        ..LcbConfig::default()
    }
}

fn run(
    agent: &mut dyn InteractiveAlgorithm,
    t_u: usize,
    users: u64,
    seed: u64,
) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sim::run_simulation(&spec(t_u), agent, users, &mut rng)
        .expect("simulation run")
        .per_user_regret
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_dev(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

/// Mean regret of users `from..` (0-based) of one run.
fn tail_mean(curve: &[f64], from: usize) -> f64 {
    mean(&curve[from..])
}

// ---------------------------------------------------------------------------
// Shared heavy runs
// ---------------------------------------------------------------------------

struct HeadlineRuns {
    /// Per seed: per-user regret over 1000 users, T_u = 20.
    lcb: Vec<Vec<f64>>,
    gt: Vec<Vec<f64>>,
    pop: Vec<Vec<f64>>,
}

fn headline() -> &'static HeadlineRuns {
    static RUNS: OnceLock<HeadlineRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let per_seed: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = (0..SEEDS)
            .into_par_iter()
            .map(|seed| {
                let t_u = 20;
                let mut lcb = LcbAgent::new(lcb_cfg(t_u, seed));
                let lcb_curve = run(&mut lcb, t_u, HEADLINE_USERS, seed);
                let models = sim::generate_models(&spec(t_u)).unwrap();
                let mut gt = LcbAgent::with_true_models(lcb_cfg(t_u, seed), models);
                let gt_curve = run(&mut gt, t_u, HEADLINE_USERS, seed);
                let mut pop = PopulationLinUcb::new(1.0, 1.0);
                let pop_curve = run(&mut pop, t_u, HEADLINE_USERS, seed);
                (lcb_curve, gt_curve, pop_curve)
            })
            .collect();
        let mut runs = HeadlineRuns {
            lcb: Vec::new(),
            gt: Vec::new(),
            pop: Vec::new(),
        };
        for (l, g, p) in per_seed {
            runs.lcb.push(l);
            runs.gt.push(g);
            runs.pop.push(p);
        }
        runs
    })
}

struct SweepRuns {
    /// Per seed, mean per-user regret at 400 users for each algorithm and
    /// horizon.
    ind: [Vec<f64>; 3], // T_u = 30, 60, 100
    pop: [Vec<f64>; 3],
    lcb100: Vec<f64>,
    /// Per seed, phase-2 (users 51..400) mean per-user regret.
    lcb20_phase2: Vec<f64>,
    lcb80_phase2: Vec<f64>,
}

fn sweep() -> &'static SweepRuns {
    static RUNS: OnceLock<SweepRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        struct PerSeed {
            ind: [f64; 3],
            pop: [f64; 3],
            lcb100: f64,
            lcb20_p2: f64,
            lcb80_p2: f64,
        }
        let horizons = [30usize, 60, 100];
        let per_seed: Vec<PerSeed> = (0..SEEDS)
            .into_par_iter()
            .map(|seed| {
                let mut ind = [0.0; 3];
                let mut pop = [0.0; 3];
                for (i, &t) in horizons.iter().enumerate() {
                    let mut a = IndividualLinUcb::new(1.0, 1.0);
                    ind[i] = mean(&run(&mut a, t, SWEEP_USERS, seed));
                    let mut p = PopulationLinUcb::new(1.0, 1.0);
                    pop[i] = mean(&run(&mut p, t, SWEEP_USERS, seed));
                }
                let mut l100 = LcbAgent::new(lcb_cfg(100, seed));
                let lcb100 = mean(&run(&mut l100, 100, SWEEP_USERS, seed));
                let mut l20 = LcbAgent::new(lcb_cfg(20, seed));
                let lcb20_p2 = tail_mean(&run(&mut l20, 20, SWEEP_USERS, seed), PHASE1_USERS as usize);
                let mut l80 = LcbAgent::new(lcb_cfg(80, seed));
                let lcb80_p2 = tail_mean(&run(&mut l80, 80, SWEEP_USERS, seed), PHASE1_USERS as usize);
                PerSeed {
                    ind,
                    pop,
                    lcb100,
                    lcb20_p2,
                    lcb80_p2,
                }
            })
            .collect();
        let mut runs = SweepRuns {
            ind: [Vec::new(), Vec::new(), Vec::new()],
            pop: [Vec::new(), Vec::new(), Vec::new()],
            lcb100: Vec::new(),
            lcb20_phase2: Vec::new(),
            lcb80_phase2: Vec::new(),
        };
        for s in per_seed {
            for i in 0..3 {
                runs.ind[i].push(s.ind[i]);
                runs.pop[i].push(s.pop[i]);
            }
            runs.lcb100.push(s.lcb100);
            runs.lcb20_phase2.push(s.lcb20_p2);
            runs.lcb80_phase2.push(s.lcb80_p2);
        }
        runs
    })
}

// ---------------------------------------------------------------------------
// Criteria
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_simulation_headline() {
    let runs = headline();
    let lcb: Vec<f64> = runs.lcb.iter().map(|c| mean(c)).collect();
    let pop: Vec<f64> = runs.pop.iter().map(|c| mean(c)).collect();
    let (m_lcb, m_pop) = (mean(&lcb), mean(&pop));
    let ratio = m_lcb / m_pop;
    let pass = ratio <= 0.65;
    println!(
        "criterion 1: {} - mean per-user regret over {SEEDS} seeds: latent agent {m_lcb:.4} vs shared-model baseline {m_pop:.4} (ratio {ratio:.3}, required <= 0.65)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ratio {ratio:.3} exceeds 0.65");
}

#[test]
fn criterion_2_interaction_length_sweep() {
    let runs = sweep();
    let (ind30, pop30) = (mean(&runs.ind[0]), mean(&runs.pop[0]));
    let (ind60, pop60) = (mean(&runs.ind[1]), mean(&runs.pop[1]));
    let (ind100, pop100) = (mean(&runs.ind[2]), mean(&runs.pop[2]));
    let lcb100 = mean(&runs.lcb100);
    let crossover = ind30 >= pop30 && ind60 <= pop60;
    let ordering = lcb100 < ind100 && ind100 < pop100;
    let pass = crossover && ordering;
    println!(
        "criterion 2: {} - horizon sweep over {SEEDS} seeds: T=30 per-user {ind30:.3}/{pop30:.3}, T=60 {ind60:.3}/{pop60:.3} (crossover inside [30,60]: {crossover}); T=100 latent {lcb100:.3} < per-user {ind100:.3} < shared {pop100:.3}: {ordering}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(crossover, "per-user/shared crossover not inside [30, 60]");
    assert!(ordering, "T_u=100 ordering violated");
}

#[test]
fn criterion_3_ground_truth_gap() {
    let runs = headline();
    let mut worst = f64::INFINITY;
    let mut worst_users = 0;
    for users in (100..=HEADLINE_USERS as usize).step_by(100) {
        // Per-seed difference of averaged regret after `users` users.
        let diffs: Vec<f64> = runs
            .lcb
            .iter()
            .zip(&runs.gt)
            .map(|(l, g)| mean(&l[..users]) - mean(&g[..users]))
            .collect();
        let se = std_dev(&diffs) / (diffs.len() as f64).sqrt();
        let margin = mean(&diffs) / se.max(1e-12);
        if margin < worst {
            worst = margin;
            worst_users = users;
        }
    }
    let pass = worst >= -2.0;
    println!(
        "criterion 3: {} - injected-model agent never above learned agent beyond 2 standard errors; tightest margin {worst:.2} SE at {worst_users} users",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ground-truth agent worse than learned beyond 2 SE");
}

#[test]
fn criterion_4_sublinear_per_user_regret() {
    let runs = sweep();
    let r20 = mean(&runs.lcb20_phase2);
    let r80 = mean(&runs.lcb80_phase2);
    let ratio = r80 / r20;
    let pass = ratio <= 2.2;
    println!(
        "criterion 4: {} - phase-2 per-user regret grows sublinearly in the horizon: T=80 {r80:.3} vs T=20 {r20:.3} (ratio {ratio:.2}, required <= 2.2; linear growth would be 4.0)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "ratio {ratio:.2} exceeds 2.2");
}

/// Best-permutation alignment error: max L2 gap over matched pairs.
fn alignment_error(learned: &MixtureModel, planted: &[DVector<f64>]) -> f64 {
    let betas: Vec<&DVector<f64>> = learned.components().iter().map(|c| &c.beta).collect();
    let k = planted.len();
    assert_eq!(betas.len(), k);
    let mut best = f64::INFINITY;
    // Exhaustive permutations (k <= 3 here).
    fn permutations(items: &[usize]) -> Vec<Vec<usize>> {
        if items.len() <= 1 {
            return vec![items.to_vec()];
        }
        let mut out = Vec::new();
        for i in 0..items.len() {
            let mut rest = items.to_vec();
            let x = rest.remove(i);
            for mut p in permutations(&rest) {
                p.insert(0, x);
                out.push(p);
            }
        }
        out
    }
    for p in permutations(&(0..k).collect::<Vec<_>>()) {
        let err = (0..k)
            .map(|i| (betas[p[i]] - &planted[i]).norm())
            .fold(0.0f64, f64::max);
        best = best.min(err);
    }
    best
}

fn planted_recovery_errors(n_users: usize, chains: u64) -> Vec<f64> {
    let planted: Vec<DVector<f64>> = (0..3)
        .map(|h| {
            let mut b = DVector::zeros(5);
            b[h] = 1.0;
            b
        })
        .collect();
    // Pairwise separation sqrt(2) >= 1.
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let data: Vec<UserData> = (0..n_users)
        .map(|u| synth_user(u as u64, &planted[u % 3], 0.1, 20, &mut rng))
        .collect();
    let prior = NigPrior::standard(5);
    (0..chains)
        .into_par_iter()
        .map(|chain| {
            let run = fit_gibbs(
                &data,
                &prior,
                &GibbsConfig {
                    burn_in: 80,
                    samples: 40,
                    seed: 9000 + chain,
                    max_components: 3,
                    ..GibbsConfig::default()
                },
            )
            .expect("gibbs run");
            alignment_error(&run.model, &planted)
        })
        .collect()
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

#[test]
fn criterion_5_learner_recovery() {
    let base = planted_recovery_errors(200, 20);
    let within = base.iter().filter(|e| **e <= 0.1).count();
    let doubled = planted_recovery_errors(400, 20);
    let (med_base, med_doubled) = (median(&base), median(&doubled));
    let pass = within >= 18 && med_doubled <= med_base;
    println!(
        "criterion 5: {} - planted 3-component recovery: {within}/20 chains within 0.1 L2 (required >= 18); median error {med_base:.4} at 200 users vs {med_doubled:.4} at 400 (must not increase)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(within >= 18, "only {within}/20 chains within 0.1");
    assert!(
        med_doubled <= med_base,
        "median error increased with more data: {med_base:.4} -> {med_doubled:.4}"
    );
}

/// Independent 2-D Simpson quadrature of the scalar-coefficient marginal
/// likelihood under the conjugate prior, over (coefficient, log variance).
fn quadrature_marginal(xs: &[f64], rs: &[f64], prior: &NigPrior) -> f64 {
    let (w0, v0, a0, b0) = (prior.w[0], prior.v[(0, 0)], prior.a, prior.b);
    let (b_lo, b_hi, nb) = (-8.0, 8.0, 1600usize);
    let (t_lo, t_hi, nt) = (-10.0, 6.0, 1600usize);
    let hb = (b_hi - b_lo) / nb as f64;
    let ht = (t_hi - t_lo) / nt as f64;
    let simpson_w = |i: usize, n: usize| -> f64 {
        if i == 0 || i == n {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        }
    };
    let ln_gamma = statrs::function::gamma::ln_gamma;
    let mut total = 0.0f64;
    for it in 0..=nt {
        let t = t_lo + it as f64 * ht;
        let s2 = t.exp();
        // Inverse-gamma density in sigma^2 times the jacobian d(sigma^2)/dt.
        let ln_ig = a0 * b0.ln() - ln_gamma(a0) - (a0 + 1.0) * s2.ln() - b0 / s2 + t;
        let mut row = 0.0;
        for ib in 0..=nb {
            let beta = b_lo + ib as f64 * hb;
            let ln_prior_beta = -0.5 * (2.0 * std::f64::consts::PI * s2 * v0).ln()
                - (beta - w0) * (beta - w0) / (2.0 * s2 * v0);
            let mut ln_lik = 0.0;
            for (x, r) in xs.iter().zip(rs) {
                let d = r - beta * x;
                ln_lik += -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - d * d / (2.0 * s2);
            }
            row += simpson_w(ib, nb) * (ln_ig + ln_prior_beta + ln_lik).exp();
        }
        total += simpson_w(it, nt) * row * hb / 3.0;
    }
    (total * ht / 3.0).ln()
}

#[test]
fn criterion_6_oracle_equivalences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);

    // (a) Conjugate posterior: sequential updates equal the batch closed form.
    let prior = NigPrior::standard(3);
    let user = synth_user(0, &DVector::from_row_slice(&[0.5, -0.2, 0.3]), 0.1, 40, &mut rng);
    let batch = prior.posterior(&user.features, &user.rewards).unwrap();
    let mut seq = prior.clone();
    for (x, r) in user.features.iter().zip(&user.rewards) {
        seq = seq.posterior(&[x.clone()], &[*r]).unwrap();
    }
    let post_err = (&batch.w - &seq.w).norm().max((&batch.v - &seq.v).norm())
        .max((batch.a - seq.a).abs())
        .max((batch.b - seq.b).abs());
    assert!(post_err <= 1e-10, "posterior mismatch {post_err:.2e}");

    // (b) Marginal likelihood vs independent quadrature on d = 1.
    let xs = [0.9, -0.4, 0.2, 0.7, -0.8];
    let rs = [0.5, -0.1, 0.15, 0.35, -0.45];
    let p1 = NigPrior::standard(1);
    let stats = SuffStats::from_pairs(
        &xs.iter().map(|x| DVector::from_row_slice(&[*x])).collect::<Vec<_>>(),
        &rs,
    );
    let analytic = p1.predictive_loglik_stats(&stats).unwrap();
    let quad = quadrature_marginal(&xs, &rs, &p1);
    let quad_err = (analytic - quad).abs();
    assert!(quad_err <= 1e-4, "quadrature gap {quad_err:.2e}");

    // (c) Incremental ridge estimate equals the batch solve.
    let d = 5;
    let mut lin = LinUcb::new(d, 2.0, 1.0).unwrap();
    let mut a = DMatrix::identity(d, d) * 2.0;
    let mut b = DVector::zeros(d);
    for _ in 0..300 {
        let mut x: DVector<f64> = DVector::from_fn(d, |_, _| rng.gen_range(-1.0..1.0));
        x /= x.norm().max(1.0);
        let r: f64 = rng.gen_range(0.0..1.0);
        lin.update(&x, r).unwrap();
        a += &x * x.transpose();
        b += &x * r;
    }
    let ridge_err = (lin.theta() - a.lu().solve(&b).unwrap()).norm();
    assert!(ridge_err <= 1e-8, "ridge estimate gap {ridge_err:.2e}");

    // (d) EM objective is non-decreasing.
    let b0 = DVector::from_row_slice(&[0.8, 0.1]);
    let b1 = DVector::from_row_slice(&[-0.1, 0.7]);
    let data: Vec<UserData> = (0..30)
        .map(|u| synth_user(u, if u % 2 == 0 { &b0 } else { &b1 }, 0.05, 15, &mut rng))
        .collect();
    let fit = em_fit(
        &data,
        &EmConfig {
            n_components: 2,
            max_iters: 60,
            seed: 3,
            tol: 0.0,
        },
    )
    .unwrap();
    let mut monotone = true;
    for w in fit.log_likelihood.windows(2) {
        if w[1] < w[0] - 1e-10 {
            monotone = false;
        }
    }
    assert!(monotone, "EM log-likelihood decreased");

    // (e) EM and the sampler agree on well-separated components.
    let gibbs = fit_gibbs(
        &data,
        &NigPrior::standard(2),
        &GibbsConfig {
            burn_in: 80,
            samples: 40,
            seed: 4,
            max_components: 2,
            ..GibbsConfig::default()
        },
    )
    .unwrap();
    let em_betas: Vec<DVector<f64>> = fit
        .model
        .components()
        .iter()
        .map(|c| c.beta.clone())
        .collect();
    let agree = alignment_error(&gibbs.model, &em_betas);
    assert!(agree <= 0.05, "EM/sampler beta gap {agree:.3}");

    println!(
        "criterion 6: PASS - posterior batch/sequential {post_err:.1e} (<=1e-10); quadrature {quad_err:.1e} (<=1e-4); ridge {ridge_err:.1e} (<=1e-8); EM objective monotone; EM-vs-sampler gap {agree:.3} (<=0.05)"
    );
}

#[test]
fn criterion_7_queue_unbiasedness() {
    let num_categories = 5;
    let rates = [0.7, 0.5, 0.3, 0.1, 0.0];
    let true_mean: f64 = rates.iter().sum::<f64>() / rates.len() as f64;
    let raw: Vec<DVector<f64>> = {
        let mut rng = ChaCha8Rng::seed_from_u64(70);
        (0..200)
            .map(|_| category_vector(&[rng.gen_range(0..num_categories)], num_categories).unwrap())
            .collect()
    };
    let proj = pca_fit(&raw, 3).unwrap();
    struct Uniform;
    impl InteractiveAlgorithm for Uniform {
        fn begin_user(&mut self, _u: u64) {}
        fn select_arm(
            &mut self,
            ctx: &Context,
            rng: &mut dyn rand::RngCore,
        ) -> lcb_core::error::Result<usize> {
            Ok(rng.gen_range(0..ctx.num_arms()))
        }
        fn observe(&mut self, _c: &Context, _a: usize, _r: f64) -> lcb_core::error::Result<()> {
            Ok(())
        }
    }
    let t_u = 10;
    let mut pooled_clicks = 0u64;
    let mut pooled_pulls = 0u64;
    let mut pops_exact = true;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let mut bank = QueueBank::new(num_categories);
        for user in 1..=25u64 {
            for (c, &rate) in rates.iter().enumerate() {
                for _ in 0..t_u {
                    bank.push_label(user, c, u8::from(rng.gen::<f64>() < rate))
                        .unwrap();
                }
            }
        }
        let before = bank.total_labels();
        let mut algo = Uniform;
        let report = evaluate(&mut bank, &proj, &mut algo, t_u, &mut rng).unwrap();
        // Exactness: every pull consumed exactly one queued label.
        if report.total_pulls() != before - bank.total_labels() {
            pops_exact = false;
        }
        pooled_clicks += report.total_clicks();
        pooled_pulls += report.total_pulls();
    }
    let est = pooled_clicks as f64 / pooled_pulls as f64;
    let se = (true_mean * (1.0 - true_mean) / pooled_pulls as f64).sqrt();
    let within = (est - true_mean).abs() <= 2.0 * se;
    let pass = within && pops_exact;
    println!(
        "criterion 7: {} - uniform-policy CTR {est:.4} vs true {true_mean:.4} over 50 seeds ({:.1} SE, required <= 2); pops exactly match rewards consumed: {pops_exact}",
        if pass { "PASS" } else { "FAIL" },
        (est - true_mean).abs() / se
    );
    assert!(within, "CTR estimate off by more than 2 SE");
    assert!(pops_exact, "label pops and consumed rewards disagree");
}

#[test]
fn criterion_8_offline_pipeline() {
    let gen = |users: u64, seed: u64| SyntheticLogConfig {
        num_users: users,
        records_per_user: 40,
        num_classes: 10,
        num_categories: 21,
        preferred_rate: 0.5,
        base_rate: 0.05,
        preferred_per_class: 2,
        two_category_prob: 0.3,
        seed,
    };
    let train = generate_synthetic_log(&gen(20_000, 80)).unwrap();
    let eval_log = generate_synthetic_log(&gen(1_000, 81)).unwrap();

    let raw: Vec<DVector<f64>> = train
        .impressions
        .iter()
        .map(|i| category_vector(&i.categories, 21).unwrap())
        .collect();
    let proj = pca_fit(&raw, 6).unwrap();
    let pairs = training_pairs_from_log(&train.impressions, &proj).unwrap();
    let model = fit_gibbs(
        &pairs,
        &NigPrior::standard(6),
        &GibbsConfig {
            burn_in: 100,
            samples: 30,
            seed: 82,
            max_components: 10,
            ..GibbsConfig::default()
        },
    )
    .unwrap()
    .model;

    let (_, stats) = ingest_log(&eval_log.impressions, 21).unwrap();
    let data_ctr = stats.ctr();
    let t_u = 20;
    let eval_seeds = 5u64;
    let rel = |make: &dyn Fn(u64) -> Box<dyn InteractiveAlgorithm>| -> f64 {
        let rels: Vec<f64> = (0..eval_seeds)
            .map(|seed| {
                let (mut bank, _) = ingest_log(&eval_log.impressions, 21).unwrap();
                let mut agent = make(seed);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let report = evaluate(&mut bank, &proj, agent.as_mut(), t_u, &mut rng).unwrap();
                report.ctr() / data_ctr
            })
            .collect();
        mean(&rels)
    };
    let model_for_agent = model.clone();
    let lcb_rel = rel(&move |seed| {
        let cfg = LcbConfig {
            retrain_every: usize::MAX,
            horizon_hint: Some(t_u),
            // Moderate likelihood weighting for binary rewards.
            bandit: BanditAlgo::Gts { eta: 5.0 },
            seed,
            ..LcbConfig::default()
        };
        Box::new(LcbAgent::with_pretrained(cfg, model_for_agent.clone()))
    });
    let pop_rel = rel(&|_seed| Box::new(PopulationLinUcb::new(1.0, 1.0)));
    let ratio = lcb_rel / pop_rel;
    let pass = ratio >= 1.05;
    println!(
        "criterion 8: {} - offline relative CTR after training on 20k users: latent agent {lcb_rel:.3} vs shared baseline {pop_rel:.3} (ratio {ratio:.3}, required >= 1.05)",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "relative-CTR ratio {ratio:.3} below 1.05");
}

#[test]
fn criterion_9_distributional_sanity() {
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let n_policies = 4;
    let num_arms = 5;
    let dim = 4;
    let det: Vec<Policy> = (0..n_policies)
        .map(|_| {
            Policy::deterministic(DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0)))
        })
        .collect();
    let prob: Vec<Policy> = det
        .iter()
        .map(|p| Policy::probabilistic(p.beta.clone(), 0.5))
        .collect();
    let algos = [
        BanditAlgo::Exp3 { gamma: None },
        BanditAlgo::Exp4P {
            p_min: None,
            delta: 0.05,
        },
        BanditAlgo::EpochGreedy,
        BanditAlgo::Gts { eta: 5.0 },
    ];
    let steps_per_algo = 250_000usize;
    let mut checked = 0u64;
    let mut worst_gap = 0.0f64;
    for algo in algos {
        let policies = if matches!(algo, BanditAlgo::Exp4P { .. }) {
            &prob
        } else {
            &det
        };
        let mut state = algo.create(n_policies, num_arms, None).unwrap();
        for step in 1..=steps_per_algo {
            let arms = (0..num_arms)
                .map(|_| {
                    let x: DVector<f64> = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                    let n = x.norm().max(1e-9);
                    x / n
                })
                .collect();
            let ctx = Context::new(arms, step).unwrap();
            let choice = state.choose(&ctx, policies, &mut rng).unwrap();
            assert!(
                choice.dist.iter().all(|p| p.is_finite() && *p >= 0.0),
                "non-finite or negative probability"
            );
            let sum: f64 = choice.dist.iter().sum();
            worst_gap = worst_gap.max((sum - 1.0).abs());
            assert!(
                (sum - 1.0).abs() <= 1e-9,
                "distribution sums to {sum} at step {step}"
            );
            let reward = rng.gen_range(0.0..1.0);
            state.learn(&ctx, policies, &choice, reward).unwrap();
            checked += 1;
        }
    }
    println!(
        "criterion 9: PASS - {checked} selection distributions checked across 4 algorithms; worst |sum-1| = {worst_gap:.2e} (required <= 1e-9)"
    );
    assert_eq!(checked, 1_000_000);
}
