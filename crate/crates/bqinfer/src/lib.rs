//! Model-evidence and posterior estimation for expensive black-box
//! likelihoods.
//!
//! A Gaussian process models the log-likelihood; exponentiating it yields a
//! log-Gaussian surrogate of the likelihood with closed-form moments, from
//! which the model evidence and the unnormalized posterior are estimated by
//! Monte Carlo quadrature. Active learning picks each new likelihood
//! evaluation by one of four acquisition functions, and a tempered variant
//! walks a ladder of fractional-exponent posteriors for sharp or distant
//! targets.
//!
//! Entry points:
//! - [`engine::run_bq`] - the plain active-learning loop,
//! - [`engine::run_tbq`] - the tempered ladder,
//! - [`oracle`] - independent reference estimators (grid, MC, tempered MCMC),
//! - [`runner`] - config-file driven experiment runner behind the `bqinfer`
//!   binary.
//!
//! See the `examples/` directory for one runnable walkthrough per capability.

pub mod acquisition;
pub mod engine;
pub mod gp;
pub mod lgp;
pub mod linalg;
pub mod math;
pub mod oracle;
pub mod optimizer;
pub mod pool;
pub mod prior;
pub mod problems;
pub mod rng;
pub mod runner;
pub mod vanilla;

pub use gp::{FitConfig, GpPosterior, KernelFamily, KernelSpec, TrainingSet};
pub use lgp::{EvidenceEstimate, MeanMode};
pub use pool::SamplePool;
pub use prior::Prior;
pub use problems::InferenceProblem;
