//! Benchmark inference problems: four 2-D energy landscapes, a 10-D
//! composite, a 3-DoF spring-mass eigenfrequency model, and the generic
//! Gaussian-noise energy builder.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use thiserror::Error;

use crate::linalg::sym_eigenvalues;
use crate::math::logsumexp2;
use crate::prior::Prior;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem name '{0}' (expected toy2d-1..4, toy10d, threedof)")]
    UnknownName(String),
    #[error("2-D energy index must be 1..=4, got {0}")]
    BadEnergyIndex(usize),
    #[error("stiffness scale parameters must be positive, got {0:?}")]
    NonPositiveStiffness(Vec<f64>),
    #[error("noise std must be positive, got {0}")]
    BadNoise(f64),
    #[error("observation list is empty")]
    NoObservations,
}

/// A Bayesian inference problem: prior box plus a log-likelihood evaluator
/// with call counting. The evaluator returns `g(theta) = -U(theta)`.
#[derive(Clone)]
pub struct InferenceProblem {
    name: String,
    prior: Prior,
    energy: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    calls: Arc<AtomicU64>,
}

impl std::fmt::Debug for InferenceProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InferenceProblem")
            .field("name", &self.name)
            .field("dim", &self.prior.dim())
            .field("calls", &self.call_count())
            .finish()
    }
}

impl InferenceProblem {
    pub fn new(
        name: impl Into<String>,
        prior: Prior,
        energy: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
    ) -> Self {
        Self { name: name.into(), prior, energy, calls: Arc::new(AtomicU64::new(0)) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn prior(&self) -> &Prior {
        &self.prior
    }

    /// log-likelihood g(theta); increments the call counter exactly once.
    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        self.calls.fetch_add(1, Ordering::Relaxed);
        -(self.energy)(theta)
    }

    /// Energy without touching the counter (used by oracles that account
    /// for their own evaluation budget via `log_likelihood`).
    pub fn energy_uncounted(&self, theta: &[f64]) -> f64 {
        (self.energy)(theta)
    }

    pub fn call_count(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::Relaxed);
    }

    /// Looks up a benchmark problem by CLI name.
    pub fn by_name(name: &str) -> Result<Self, ProblemError> {
        match name {
            "toy2d-1" => Ok(toy_2d(1).unwrap()),
            "toy2d-2" => Ok(toy_2d(2).unwrap()),
            "toy2d-3" => Ok(toy_2d(3).unwrap()),
            "toy2d-4" => Ok(toy_2d(4).unwrap()),
            "toy10d" => Ok(toy_10d()),
            "threedof" => Ok(three_dof(true)),
            other => Err(ProblemError::UnknownName(other.to_string())),
        }
    }
}

fn omega1(t: f64) -> f64 {
    (0.5 * std::f64::consts::PI * t).sin()
}

fn omega2(t: f64) -> f64 {
    3.0 * (-0.5 * (t - 1.0) * (t - 1.0) / (0.6 * 0.6)).exp()
}

fn omega3(t: f64) -> f64 {
    3.0 / (1.0 + (-(t - 1.0) / 0.2).exp())
}

/// The four 2-D benchmark energies. The mixture branches are evaluated with
/// a stable log-sum-exp so the energy stays finite over the whole box.
pub fn energy_2d(k: usize, theta: &[f64]) -> Result<f64, ProblemError> {
    if !(1..=4).contains(&k) {
        return Err(ProblemError::BadEnergyIndex(k));
    }
    let (t1, t2) = (theta[0], theta[1]);
    Ok(match k {
        1 => {
            let r = (t1 * t1 + t2 * t2).sqrt();
            let ring = 0.5 * ((r - 2.0) / 0.4).powi(2);
            let a = -0.5 * ((t1 - 2.0) / 0.6).powi(2);
            let b = -0.5 * ((t1 + 2.0) / 0.6).powi(2);
            ring - logsumexp2(a, b)
        }
        2 => 0.5 * ((t2 + omega1(t1)) / 0.4).powi(2),
        3 => {
            let a = -0.5 * ((t2 + omega1(t1)) / 0.35).powi(2);
            let b = -0.5 * ((t2 + omega1(t1) - omega2(t1)) / 0.35).powi(2);
            -logsumexp2(a, b)
        }
        4 => {
            let a = -0.5 * ((t2 + omega1(t1)) / 0.4).powi(2);
            let b = -0.5 * ((t2 + omega1(t1) - omega3(t1)) / 0.35).powi(2);
            -logsumexp2(a, b)
        }
        _ => unreachable!(),
    })
}

/// Inverse of the 2x2 covariance [[0.49, 0.56], [0.56, 1.0]] (det 0.1764).
const SIG_INV: [f64; 3] = [1.0 / 0.1764, -0.56 / 0.1764, 0.49 / 0.1764];

/// The 10-D composite energy: sharp ring plus two bumps on dims 1:2, a sine
/// ridge on dims 3:4, a correlated Gaussian on dims 5:6; dims 7-10 inert.
pub fn energy_10d(theta: &[f64]) -> f64 {
    let (t1, t2) = (theta[0], theta[1]);
    let r = (t1 * t1 + t2 * t2).sqrt();
    let ring = 0.5 * ((r - 2.0) / 0.2).powi(2);
    let bumps = logsumexp2(
        -0.5 * ((t1 - 2.0) / 0.08).powi(2),
        -0.5 * ((t2 + 2.0) / 0.08).powi(2),
    );
    let ridge = 0.5
        * ((theta[3] + (0.25 * std::f64::consts::PI * theta[2]).sin()) / 0.3).powi(2);
    let d1 = theta[4] - 0.5;
    let d2 = theta[5] - 1.0;
    let quad = 0.5 * (SIG_INV[0] * d1 * d1 + 2.0 * SIG_INV[1] * d1 * d2 + SIG_INV[2] * d2 * d2);
    ring - bumps + ridge + quad
}

/// The three 2-D factors of the 10-D energy, for the separable oracle.
pub fn energy_10d_factor(which: usize, u: &[f64]) -> f64 {
    match which {
        0 => {
            let (t1, t2) = (u[0], u[1]);
            let r = (t1 * t1 + t2 * t2).sqrt();
            0.5 * ((r - 2.0) / 0.2).powi(2)
                - logsumexp2(
                    -0.5 * ((t1 - 2.0) / 0.08).powi(2),
                    -0.5 * ((t2 + 2.0) / 0.08).powi(2),
                )
        }
        1 => 0.5 * ((u[1] + (0.25 * std::f64::consts::PI * u[0]).sin()) / 0.3).powi(2),
        2 => {
            let d1 = u[0] - 0.5;
            let d2 = u[1] - 1.0;
            0.5 * (SIG_INV[0] * d1 * d1 + 2.0 * SIG_INV[1] * d1 * d2 + SIG_INV[2] * d2 * d2)
        }
        _ => panic!("factor index must be 0..=2"),
    }
}

const MASSES: [f64; 3] = [1000.0, 1200.0, 800.0];
const K_NOMINAL: f64 = 21.6e6;

/// Natural frequencies (Hz, ascending) of the 3-DoF spring-mass chain with
/// stiffnesses `k_i = 21.6e6 * theta_i`. The generalized problem
/// `K x = lambda M x` with diagonal M is reduced symmetrically via
/// `M^{-1/2} K M^{-1/2}` and solved by Jacobi rotations.
pub fn threedof_frequencies(theta: &[f64]) -> Result<[f64; 3], ProblemError> {
    if theta.iter().any(|&t| t <= 0.0) {
        return Err(ProblemError::NonPositiveStiffness(theta.to_vec()));
    }
    let k: Vec<f64> = theta.iter().map(|&t| K_NOMINAL * t).collect();
    let km = [
        [k[0], -k[0], 0.0],
        [-k[0], k[0] + k[1], -k[1]],
        [0.0, -k[1], k[1] + k[2]],
    ];
    let inv_sqrt_m: Vec<f64> = MASSES.iter().map(|&m| 1.0 / m.sqrt()).collect();
    let mut a = [0.0f64; 9];
    for i in 0..3 {
        for j in 0..3 {
            a[i * 3 + j] = inv_sqrt_m[i] * km[i][j] * inv_sqrt_m[j];
        }
    }
    let ev = sym_eigenvalues(&a, 3).expect("3x3 Jacobi converges");
    let two_pi = 2.0 * std::f64::consts::PI;
    Ok([ev[0].max(0.0).sqrt() / two_pi, ev[1].max(0.0).sqrt() / two_pi, ev[2].max(0.0).sqrt() / two_pi])
}

/// Builds a Gaussian white-noise energy `U = c / sigma_n^2 * sum (y - model)^2`
/// with `c = 1/2` when `half_factor` is set.
pub fn gaussian_energy<M>(
    model: M,
    observations: Vec<f64>,
    sigma_n: f64,
    half_factor: bool,
) -> Result<impl Fn(&[f64]) -> f64 + Send + Sync, ProblemError>
where
    M: Fn(&[f64]) -> Vec<f64> + Send + Sync,
{
    if sigma_n <= 0.0 {
        return Err(ProblemError::BadNoise(sigma_n));
    }
    if observations.is_empty() {
        return Err(ProblemError::NoObservations);
    }
    let c = if half_factor { 0.5 } else { 1.0 };
    let inv_var = 1.0 / (sigma_n * sigma_n);
    Ok(move |theta: &[f64]| {
        let pred = model(theta);
        debug_assert_eq!(pred.len(), observations.len());
        let sse: f64 = pred.iter().zip(&observations).map(|(p, o)| (p - o) * (p - o)).sum();
        c * inv_var * sse
    })
}

/// One of the four 2-D benchmarks on the uniform box [-4, 4]^2.
pub fn toy_2d(k: usize) -> Result<InferenceProblem, ProblemError> {
    if !(1..=4).contains(&k) {
        return Err(ProblemError::BadEnergyIndex(k));
    }
    Ok(InferenceProblem::new(
        format!("toy2d-{k}"),
        Prior::symmetric(2, 4.0),
        Arc::new(move |theta: &[f64]| energy_2d(k, theta).unwrap()),
    ))
}

/// The 10-D composite benchmark on [-4, 4]^10.
pub fn toy_10d() -> InferenceProblem {
    InferenceProblem::new("toy10d", Prior::symmetric(10, 4.0), Arc::new(energy_10d))
}

/// Observed natural frequencies (Hz) for the spring-mass calibration.
pub const THREEDOF_OBSERVATIONS: [f64; 3] = [11.9191, 26.7954, 56.5167];
/// Measurement noise std for the spring-mass calibration.
pub const THREEDOF_NOISE_STD: f64 = 0.05;

/// The 3-DoF spring-mass calibration problem.
pub fn three_dof(half_factor: bool) -> InferenceProblem {
    let prior = Prior::new(vec![0.1, 0.5, 0.5], vec![1.0, 5.0, 5.0]).unwrap();
    let energy = gaussian_energy(
        |theta: &[f64]| threedof_frequencies(theta).unwrap().to_vec(),
        THREEDOF_OBSERVATIONS.to_vec(),
        THREEDOF_NOISE_STD,
        half_factor,
    )
    .unwrap();
    InferenceProblem::new(
        if half_factor { "threedof" } else { "threedof-nohalf" },
        prior,
        Arc::new(energy),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u2_vanishes_where_ridge_crosses() {
        // omega1(0) = 0 so U2(0,0) = 0; omega1(1) = 1 so U2(1,-1) = 0.
        assert!(energy_2d(2, &[0.0, 0.0]).unwrap().abs() < 1e-15);
        assert!(energy_2d(2, &[1.0, -1.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn energies_finite_over_box_corners_and_grid() {
        for k in 1..=4 {
            for i in 0..41 {
                for j in 0..41 {
                    let t = [-4.0 + 0.2 * i as f64, -4.0 + 0.2 * j as f64];
                    let u = energy_2d(k, &t).unwrap();
                    assert!(u.is_finite(), "U{k} at {t:?} = {u}");
                }
            }
        }
        // The 10-D bumps underflow without log-sum-exp at the far corner.
        let mut corner = [-4.0; 10];
        assert!(energy_10d(&corner).is_finite());
        corner[0] = 4.0;
        assert!(energy_10d(&corner).is_finite());
    }

    #[test]
    fn ten_d_inert_dimensions() {
        let a = [0.3, -1.2, 0.5, 0.1, 0.4, 1.1, -3.0, 2.0, 1.0, -1.0];
        let mut b = a;
        b[6] = 3.9;
        b[7] = -3.9;
        b[8] = 0.0;
        b[9] = 2.2;
        assert_eq!(energy_10d(&a), energy_10d(&b));
    }

    #[test]
    fn ten_d_gaussian_term_zero_at_its_mean() {
        let base = [2.0, 0.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.0, 0.0];
        let at_mean = energy_10d(&base);
        let mut off = base;
        off[4] = 1.5;
        assert!(energy_10d(&off) > at_mean);
        // Quadratic factor alone vanishes at mu.
        assert!(energy_10d_factor(2, &[0.5, 1.0]).abs() < 1e-15);
    }

    #[test]
    fn threedof_stiffness_is_positive_definite() {
        let f = threedof_frequencies(&[1.0, 1.0, 1.0]).unwrap();
        assert!(f[0] > 0.0 && f[0] < f[1] && f[1] < f[2]);
    }

    #[test]
    fn threedof_frequency_scaling() {
        // K linear in theta: theta -> 4 theta doubles every frequency.
        let f1 = threedof_frequencies(&[0.5, 1.2, 3.0]).unwrap();
        let f4 = threedof_frequencies(&[2.0, 4.8, 12.0]).unwrap();
        for (a, b) in f1.iter().zip(&f4) {
            assert!((2.0 * a - b).abs() < 1e-9 * b.abs());
        }
    }

    #[test]
    fn threedof_rejects_nonpositive() {
        assert!(threedof_frequencies(&[0.0, 1.0, 1.0]).is_err());
        assert!(threedof_frequencies(&[1.0, -0.1, 1.0]).is_err());
    }

    #[test]
    fn gaussian_energy_basics() {
        let obs = vec![1.0, 2.0];
        let e = gaussian_energy(|t: &[f64]| vec![t[0], t[0] + 1.0], obs, 0.5, true).unwrap();
        // Model matches observations exactly at theta = 1.
        assert!(e(&[1.0]).abs() < 1e-15);
        // Doubling sigma_n quarters the energy.
        let e2 = gaussian_energy(|t: &[f64]| vec![t[0], t[0] + 1.0], vec![1.0, 2.0], 1.0, true).unwrap();
        let at = [0.3];
        assert!((e(&at) - 4.0 * e2(&at)).abs() < 1e-12);
        // half_factor toggles a factor of two.
        let ef = gaussian_energy(|t: &[f64]| vec![t[0], t[0] + 1.0], vec![1.0, 2.0], 0.5, false).unwrap();
        assert!((ef(&at) - 2.0 * e(&at)).abs() < 1e-12);
    }

    #[test]
    fn call_counter_counts_exactly() {
        let p = toy_2d(1).unwrap();
        assert_eq!(p.call_count(), 0);
        for i in 0..17 {
            p.log_likelihood(&[0.1 * i as f64, 0.0]);
        }
        assert_eq!(p.call_count(), 17);
        p.energy_uncounted(&[0.0, 0.0]);
        assert_eq!(p.call_count(), 17);
    }

    #[test]
    fn registry_knows_all_names() {
        for name in ["toy2d-1", "toy2d-2", "toy2d-3", "toy2d-4", "toy10d", "threedof"] {
            assert!(InferenceProblem::by_name(name).is_ok());
        }
        assert!(InferenceProblem::by_name("nope").is_err());
    }
}
