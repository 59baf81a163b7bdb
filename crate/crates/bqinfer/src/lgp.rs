//! Log-Gaussian-process moment algebra.
//!
//! Exponentiating the GP surrogate of the log-likelihood gives a log-normal
//! predictive law for the (tempered) likelihood. All evidence-level
//! quantities are accumulated on shifted logs: a per-pool shift is removed
//! before exponentiation and re-applied in log space, so energies of
//! magnitude 1e3 neither overflow nor underflow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gp::{GpPosterior, PoolProjection};
use crate::math::ln_exp_m1;
use crate::pool::SamplePool;
use crate::prior::Prior;

#[derive(Debug, Error)]
pub enum LgpError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("likelihood moment overflows f64 (log value {log_value:.3e}); use the log-space accessors")]
    Overflow { log_value: f64 },
}

/// Whether the likelihood mean carries the +variance/2 log-normal term.
///
/// The biased form exp(gamma * mu) drops it; early in training the full
/// term inflates the mean through unresolved GP variance, so tempered
/// weights and ratio means use the biased form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum MeanMode {
    #[default]
    Unbiased,
    Biased,
}

/// log of the likelihood mean at `theta` for tempering exponent `gamma`.
pub fn log_like_mean(gp: &GpPosterior, theta: &[f64], gamma: f64, mode: MeanMode) -> f64 {
    let mu = gp.predict_mean(theta);
    match mode {
        MeanMode::Unbiased => gamma * mu + 0.5 * gamma * gamma * gp.predict_var(theta),
        MeanMode::Biased => gamma * mu,
    }
}

/// Likelihood mean; errors once the value leaves f64 range.
pub fn like_mean(gp: &GpPosterior, theta: &[f64], gamma: f64, mode: MeanMode) -> Result<f64, LgpError> {
    check_gamma(gamma)?;
    materialize(log_like_mean(gp, theta, gamma, mode))
}

/// log of the likelihood variance at `theta` (always the unbiased-mean form).
pub fn log_like_var(gp: &GpPosterior, theta: &[f64], gamma: f64) -> f64 {
    let g2v = gamma * gamma * gp.predict_var(theta);
    if g2v == 0.0 {
        return f64::NEG_INFINITY;
    }
    ln_exp_m1(g2v) + 2.0 * log_like_mean(gp, theta, gamma, MeanMode::Unbiased)
}

pub fn like_var(gp: &GpPosterior, theta: &[f64], gamma: f64) -> Result<f64, LgpError> {
    check_gamma(gamma)?;
    materialize(log_like_var(gp, theta, gamma))
}

/// Likelihood covariance between two points; signed.
pub fn like_cov(gp: &GpPosterior, theta: &[f64], theta_p: &[f64], gamma: f64) -> Result<f64, LgpError> {
    check_gamma(gamma)?;
    let c = gamma * gamma * gp.predict_cov(theta, theta_p);
    let log_scale = log_like_mean(gp, theta, gamma, MeanMode::Unbiased)
        + log_like_mean(gp, theta_p, gamma, MeanMode::Unbiased);
    materialize_signed(log_scale, c.exp_m1())
}

/// Mean and variance of the unnormalized posterior at `theta`: the likelihood
/// moments times the prior density (and its square). Zero outside support.
pub fn post_moments(
    gp: &GpPosterior,
    theta: &[f64],
    prior: &Prior,
    gamma: f64,
) -> Result<(f64, f64), LgpError> {
    check_gamma(gamma)?;
    if !prior.contains(theta) {
        return Ok((0.0, 0.0));
    }
    let p = prior.density(theta);
    let mean = materialize(log_like_mean(gp, theta, gamma, MeanMode::Unbiased))?;
    let var = materialize(log_like_var(gp, theta, gamma))?;
    Ok((mean * p, var * p * p))
}

/// Evidence estimate with log-stored internals.
///
/// `std_upper >= std_exact` holds in expectation (Cauchy-Schwarz); at sample
/// level it can dip below by Monte Carlo noise of the paired estimator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceEstimate {
    log_mean: f64,
    log_std_exact: f64,
    log_std_upper: f64,
    pub n_calls: u64,
}

impl EvidenceEstimate {
    pub fn from_logs(log_mean: f64, log_std_exact: f64, log_std_upper: f64, n_calls: u64) -> Self {
        Self { log_mean, log_std_exact, log_std_upper, n_calls }
    }

    pub fn log_mean(&self) -> f64 {
        self.log_mean
    }

    pub fn mean(&self) -> f64 {
        self.log_mean.exp()
    }

    pub fn std_exact(&self) -> f64 {
        self.log_std_exact.exp()
    }

    pub fn std_upper(&self) -> f64 {
        self.log_std_upper.exp()
    }

    pub fn cov_exact(&self) -> f64 {
        (self.log_std_exact - self.log_mean).exp()
    }

    pub fn cov_upper(&self) -> f64 {
        (self.log_std_upper - self.log_mean).exp()
    }
}

/// Per-pool log-moment cache used by evidence and acquisition computations.
pub struct PoolMoments {
    /// log mu_like per pool row, in the requested mean mode.
    pub log_mean: Vec<f64>,
    /// log mu_like per pool row, unbiased form (variance/covariance factors).
    pub log_mean_unbiased: Vec<f64>,
    /// gamma^2 * sigma_g^2 per pool row.
    pub g2var: Vec<f64>,
}

impl PoolMoments {
    pub fn new(proj: &PoolProjection, gamma: f64, mode: MeanMode) -> Self {
        let m = proj.len();
        let mut log_mean = Vec::with_capacity(m);
        let mut log_mean_unbiased = Vec::with_capacity(m);
        let mut g2var = Vec::with_capacity(m);
        for k in 0..m {
            let lm = gamma * proj.mean(k);
            let v = gamma * gamma * proj.var(k);
            log_mean_unbiased.push(lm + 0.5 * v);
            log_mean.push(match mode {
                MeanMode::Unbiased => lm + 0.5 * v,
                MeanMode::Biased => lm,
            });
            g2var.push(v);
        }
        Self { log_mean, log_mean_unbiased, g2var }
    }
}

/// Evidence moments over a sample pool drawn from the prior.
///
/// mean: pool average of the likelihood mean; exact std: paired-pool average
/// of the likelihood covariance (clamped at zero); upper std: pool average
/// of the likelihood standard deviation.
pub fn evidence_moments(
    gp: &GpPosterior,
    pool: &SamplePool,
    _prior: &Prior,
    gamma: f64,
    mode: MeanMode,
) -> Result<EvidenceEstimate, LgpError> {
    check_gamma(gamma)?;
    if pool.is_empty() {
        return Err(LgpError::Argument("sample pool is empty".into()));
    }
    let proj = gp.project_pool(pool);
    let moments = PoolMoments::new(&proj, gamma, mode);
    Ok(evidence_from_projection(gp, pool, &proj, &moments, gamma, gp.len() as u64))
}

/// Evidence moments reusing an existing projection (engine hot path).
pub fn evidence_from_projection(
    gp: &GpPosterior,
    pool: &SamplePool,
    proj: &PoolProjection,
    moments: &PoolMoments,
    gamma: f64,
    n_calls: u64,
) -> EvidenceEstimate {
    let m = pool.len();
    let shift = moments.log_mean.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let shift_u = moments.log_mean_unbiased.iter().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut sum_mean = 0.0;
    let mut sum_std_upper = 0.0;
    let mut sum_var = 0.0;
    for k in 0..m {
        sum_mean += (moments.log_mean[k] - shift).exp();
        let lu = moments.log_mean_unbiased[k];
        if moments.g2var[k] > 0.0 {
            sum_std_upper += (0.5 * ln_exp_m1(moments.g2var[k]) + lu - shift_u).exp();
        }
        let tw = pool.twin_index(k);
        let c = gamma * gamma * gp.cov_rows(proj, k, tw);
        let scale = (lu - shift_u) + (moments.log_mean_unbiased[tw] - shift_u);
        sum_var += scale.exp() * c.exp_m1();
    }
    let log_mean = shift + (sum_mean / m as f64).ln();
    let log_std_upper = shift_u + (sum_std_upper / m as f64).ln();
    let var = (sum_var / m as f64).max(0.0);
    let log_std_exact = if var > 0.0 { shift_u + 0.5 * var.ln() } else { f64::NEG_INFINITY };
    EvidenceEstimate::from_logs(log_mean, log_std_exact, log_std_upper, n_calls)
}

fn check_gamma(gamma: f64) -> Result<(), LgpError> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(LgpError::Argument(format!("gamma must lie in [0, 1], got {gamma}")));
    }
    Ok(())
}

fn materialize(log_value: f64) -> Result<f64, LgpError> {
    if log_value > 709.0 {
        return Err(LgpError::Overflow { log_value });
    }
    Ok(log_value.exp())
}

fn materialize_signed(log_scale: f64, factor: f64) -> Result<f64, LgpError> {
    if log_scale > 709.0 {
        return Err(LgpError::Overflow { log_value: log_scale });
    }
    Ok(log_scale.exp() * factor)
}
