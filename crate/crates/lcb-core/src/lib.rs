//! Latent contextual bandits for cold-start recommendation.
//!
//! Users are assumed to belong to one of a finite set of latent classes, each
//! with its own linear reward model. The library learns those classes from
//! logged interactions (collapsed Gibbs sampling over a Dirichlet-process
//! mixture of linear regressions, with an EM learner as a deterministic
//! alternative), turns each class into a policy, and adaptively selects among
//! the policies for every new user with an expert-advice bandit.
//!
//! The crate also ships the two evaluation harnesses used to benchmark the
//! approach: a synthetic environment with planted classes and exact regret
//! accounting ([`sim`]), and an unbiased queue-method evaluator for logged
//! click data ([`queue`]).

pub mod bandits;
pub mod error;
pub mod latent;
pub mod linucb;
pub mod mlr;
pub mod orchestrator;
pub mod queue;
pub mod sim;
pub mod types;

pub use error::LcbError;
pub use latent::{MixtureComponent, MixtureModel, Policy, PolicyKind};
pub use linucb::LinUcb;
pub use types::{Context, InteractionLog, InteractionRecord, UserData};
