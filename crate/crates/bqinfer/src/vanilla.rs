//! Vanilla Bayesian quadrature over a generic integrand, kept as a
//! self-contained testbed for the prospective-gain identities.
//!
//! The posterior variance of the integral is computed in the structured form
//! of the quadrature rule: the single integrals of the kernel are pool
//! averages fed through the Gram solve, while the genuine double integral is
//! the paired average over the permuted twin. With every operator sharing
//! one pool, the gain identities hold at sample level rather than only in
//! expectation.

use thiserror::Error;

use crate::gp::GpPosterior;
use crate::pool::SamplePool;
use crate::prior::Prior;

#[derive(Debug, Error)]
pub enum VanillaError {
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Gaussian posterior of the integral under the vanilla rule.
#[derive(Debug, Clone, Copy)]
pub struct VanillaBqEstimate {
    pub mean: f64,
    pub variance: f64,
}

/// Posterior mean and variance of the integral of the GP over the prior.
pub fn vanilla_bq(gp: &GpPosterior, pool: &SamplePool) -> Result<VanillaBqEstimate, VanillaError> {
    if pool.is_empty() {
        return Err(VanillaError::Argument("sample pool is empty".into()));
    }
    if pool.dim() != gp.dim() {
        return Err(VanillaError::Argument(format!(
            "pool dim {} does not match GP dim {}",
            pool.dim(),
            gp.dim()
        )));
    }
    let proj = gp.project_pool(pool);
    let m = pool.len();
    let mean = proj.means().iter().sum::<f64>() / m as f64;
    let variance = gp.quadrature_variance(pool).max(0.0);
    Ok(VanillaBqEstimate { mean, variance })
}

/// Posterior-variance-contribution score of a candidate point:
/// the prior density times the pool average of the predictive covariance.
pub fn pvc_vanilla(gp: &GpPosterior, theta: &[f64], pool: &SamplePool, prior: &Prior) -> f64 {
    let p = prior.density(theta);
    if p == 0.0 {
        return 0.0;
    }
    p * gp.pool_average_cov(theta, pool)
}

/// Expected squared change of the quadrature mean from observing `theta_plus`
/// (equally, the prospective reduction of the quadrature variance).
pub fn gain_mu(gp: &GpPosterior, theta_plus: &[f64], pool: &SamplePool) -> f64 {
    let var_plus = gp.predict_var(theta_plus);
    if var_plus <= gp.var_floor() {
        return 0.0;
    }
    let pi_c = gp.pool_average_cov(theta_plus, pool);
    pi_c * pi_c / var_plus
}
