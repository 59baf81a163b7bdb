//! Gaussian-process regression over the log-likelihood proxy.
//!
//! Inputs are scaled per-coordinate to [0, 1] by the prior box and labels are
//! centered by their mean and scaled by their standard deviation before any
//! numerics run; the scaling is invisible at the interface. The constant
//! prior mean equals the label mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Cholesky;
use crate::math::sq_dist;
use crate::prior::Prior;
use crate::rng;

/// Two rows closer than this in scaled coordinates count as duplicates.
pub const DUPLICATE_TOL: f64 = 1e-12;
/// `var_floor = VAR_FLOOR_REL * signal_variance` separates genuine candidates
/// from points that are effectively already observed.
pub const VAR_FLOOR_REL: f64 = 1e-10;

const JITTER_START_REL: f64 = 1e-10;
const JITTER_MAX_REL: f64 = 1e-4;
const LOG_LEN_BOUNDS: (f64, f64) = (-4.605170185988091, 4.605170185988092); // ln 1e-2, ln 1e2
const LOG_SF2_BOUNDS: (f64, f64) = (-9.210340371976182, 9.210340371976182); // ln 1e-4, ln 1e4

#[derive(Debug, Error)]
pub enum GpError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("Gram factorization failed after jitter ladder {attempted:?}")]
    Factorization { attempted: Vec<f64> },
    #[error("point is degenerate: predictive variance {var:.3e} <= floor {floor:.3e}")]
    DegeneratePoint { var: f64, floor: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    SquaredExponential,
    Matern52,
}

impl KernelFamily {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "se" | "sqexp" | "squared-exponential" | "rbf" => Some(Self::SquaredExponential),
            "matern52" | "matern-52" | "matern5_2" => Some(Self::Matern52),
            _ => None,
        }
    }
}

/// A stationary kernel with per-dimension lengthscales.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
}

impl KernelSpec {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, signal_variance: f64) -> Result<Self, GpError> {
        if lengthscales.iter().any(|&l| !(l > 0.0) || !l.is_finite()) {
            return Err(GpError::Argument(format!("lengthscales must be positive, got {lengthscales:?}")));
        }
        if !(signal_variance > 0.0) || !signal_variance.is_finite() {
            return Err(GpError::Argument(format!("signal variance must be positive, got {signal_variance}")));
        }
        Ok(Self { family, lengthscales, signal_variance })
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    #[inline]
    fn scaled_sq_dist(&self, a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for ((&x, &y), &l) in a.iter().zip(b).zip(&self.lengthscales) {
            let d = (x - y) / l;
            s += d * d;
        }
        s
    }

    #[inline]
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2 = self.scaled_sq_dist(a, b);
        match self.family {
            KernelFamily::SquaredExponential => self.signal_variance * (-0.5 * r2).exp(),
            KernelFamily::Matern52 => {
                let r = r2.sqrt();
                let s5r = (5.0f64).sqrt() * r;
                self.signal_variance * (1.0 + s5r + 5.0 * r2 / 3.0) * (-s5r).exp()
            }
        }
    }
}

/// Kernel evaluation with dimension checks, per the module contract.
pub fn kernel_eval(spec: &KernelSpec, a: &[f64], b: &[f64]) -> Result<f64, GpError> {
    if a.len() != spec.dim() || b.len() != spec.dim() {
        return Err(GpError::Argument(format!(
            "kernel dimension mismatch: spec is {}-d, points are {}-d and {}-d",
            spec.dim(),
            a.len(),
            b.len()
        )));
    }
    Ok(spec.eval(a, b))
}

/// Training data in natural units.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingSet {
    points: Vec<f64>,
    labels: Vec<f64>,
    dim: usize,
}

impl TrainingSet {
    pub fn new(points: Vec<f64>, labels: Vec<f64>, dim: usize) -> Result<Self, GpError> {
        if dim == 0 || points.len() != labels.len() * dim {
            return Err(GpError::Argument(format!(
                "training set shape mismatch: {} coordinates, {} labels, dim {}",
                points.len(),
                labels.len(),
                dim
            )));
        }
        if labels.is_empty() {
            return Err(GpError::Argument("training set must contain at least one point".into()));
        }
        Ok(Self { points, labels, dim })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn label(&self, i: usize) -> f64 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn push(&mut self, point: &[f64], label: f64) {
        debug_assert_eq!(point.len(), self.dim);
        self.points.extend_from_slice(point);
        self.labels.push(label);
    }
}

/// Input/label scaling derived from the prior box and the labels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scaler {
    lower: Vec<f64>,
    width: Vec<f64>,
    y_mean: f64,
    y_scale: f64,
}

impl Scaler {
    fn new(bounds: &Prior, labels: &[f64]) -> Self {
        let mean = crate::math::mean(labels);
        let std = crate::math::std_pop(labels);
        // Zero-variance labels get a microscopic scale so the de-scaled
        // predictive variance collapses instead of inheriting the kernel floor.
        let y_scale = if std > 0.0 { std } else { 1e-12 * (1.0 + mean.abs()) };
        Self {
            lower: bounds.lower().to_vec(),
            width: (0..bounds.dim()).map(|j| bounds.width(j)).collect(),
            y_mean: mean,
            y_scale,
        }
    }

    #[inline]
    pub fn scale_point(&self, theta: &[f64], out: &mut [f64]) {
        for j in 0..self.lower.len() {
            out[j] = (theta[j] - self.lower[j]) / self.width[j];
        }
    }

    pub fn scale_rows(&self, rows: &[f64]) -> Vec<f64> {
        let d = self.lower.len();
        let mut out = vec![0.0; rows.len()];
        for (i, row) in rows.chunks(d).enumerate() {
            self.scale_point(row, &mut out[i * d..(i + 1) * d]);
        }
        out
    }

    pub fn y_mean(&self) -> f64 {
        self.y_mean
    }

    pub fn y_scale(&self) -> f64 {
        self.y_scale
    }
}

/// Fit configuration: the scaling box, the multi-start budget and the seed.
#[derive(Debug, Clone)]
pub struct FitConfig {
    pub bounds: Prior,
    pub n_starts: usize,
    pub seed: u64,
    /// Optional warm start in log-hyperparameter coordinates.
    pub warm_start: Option<Vec<f64>>,
    pub max_evals: usize,
}

impl FitConfig {
    pub fn new(bounds: Prior, seed: u64) -> Self {
        Self { bounds, n_starts: 8, seed, warm_start: None, max_evals: 400 }
    }
}

/// A fitted GP posterior. Immutable; updates produce new values.
#[derive(Debug, Clone)]
pub struct GpPosterior {
    kernel: KernelSpec,
    scaler: Scaler,
    training: TrainingSet,
    train_scaled: Vec<f64>,
    alpha: Vec<f64>,
    chol: Cholesky,
    jitter_scaled: f64,
}

/// Serializable snapshot of a fitted GP (derived factors are rebuilt on load).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GpSnapshot {
    pub kernel: KernelSpec,
    pub scaler: Scaler,
    pub training: TrainingSet,
    pub jitter_scaled: f64,
}

impl GpPosterior {
    /// Fits hyperparameters by maximizing the log marginal likelihood with a
    /// multi-start bounded Nelder-Mead search over log-hyperparameters.
    pub fn fit(training: &TrainingSet, family: KernelFamily, config: &FitConfig) -> Result<Self, GpError> {
        let n = training.len();
        let d = training.dim();
        if n < 2 {
            return Err(GpError::Argument(format!("need at least 2 training points, got {n}")));
        }
        if d != config.bounds.dim() {
            return Err(GpError::Argument(format!(
                "training dim {d} does not match bounds dim {}",
                config.bounds.dim()
            )));
        }
        if training.labels().iter().any(|y| !y.is_finite()) {
            return Err(GpError::Argument("labels must be finite".into()));
        }
        let scaler = Scaler::new(&config.bounds, training.labels());
        let train_scaled = scaler.scale_rows(&training.points);
        for i in 0..n {
            for j in 0..i {
                if sq_dist(&train_scaled[i * d..(i + 1) * d], &train_scaled[j * d..(j + 1) * d])
                    < DUPLICATE_TOL * DUPLICATE_TOL
                {
                    return Err(GpError::Argument(format!("training rows {j} and {i} are duplicates")));
                }
            }
        }
        let y_scaled: Vec<f64> =
            training.labels().iter().map(|&y| (y - scaler.y_mean()) / scaler.y_scale()).collect();

        let n_params = d + 1;
        let mut starts: Vec<Vec<f64>> = Vec::new();
        if let Some(ws) = &config.warm_start {
            if ws.len() == n_params {
                starts.push(clamp_params(ws.clone()));
            }
        }
        starts.push(clamp_params(vec![0.3f64.ln(); d].into_iter().chain([0.0]).collect()));
        let mut start_rng = rng::stream(config.seed, "mle-start", n as u64);
        while starts.len() < config.n_starts.max(1) {
            let mut p = Vec::with_capacity(n_params);
            for _ in 0..d {
                let u: f64 = rand::Rng::random(&mut start_rng);
                p.push((0.05f64.ln()) + u * (2.0f64.ln() - 0.05f64.ln()));
            }
            let u: f64 = rand::Rng::random(&mut start_rng);
            p.push((0.1f64.ln()) + u * (10.0f64.ln() - 0.1f64.ln()));
            starts.push(p);
        }

        let objective = |p: &[f64]| neg_log_marginal(p, family, &train_scaled, &y_scaled, n, d);
        let results: Vec<(f64, Vec<f64>)> = starts
            .par_iter()
            .map(|p0| nelder_mead(&objective, p0.clone(), config.max_evals))
            .collect();
        let mut best: Option<(f64, &Vec<f64>)> = None;
        for (f, p) in results.iter().map(|(f, p)| (*f, p)) {
            if best.is_none() || f < best.unwrap().0 {
                best = Some((f, p));
            }
        }
        let (best_f, best_p) = best.unwrap();
        if !best_f.is_finite() {
            return Err(GpError::Factorization {
                attempted: jitter_ladder(1.0).collect(),
            });
        }
        let kernel = params_to_kernel(best_p, family, d);
        Self::assemble(kernel, scaler, training.clone(), train_scaled, y_scaled)
    }

    /// Builds the posterior for fixed hyperparameters (used by refit oracles).
    pub fn fit_fixed(
        training: &TrainingSet,
        kernel: KernelSpec,
        bounds: &Prior,
        label_moments: Option<(f64, f64)>,
    ) -> Result<Self, GpError> {
        let scaler = match label_moments {
            Some((mean, scale)) => Scaler {
                lower: bounds.lower().to_vec(),
                width: (0..bounds.dim()).map(|j| bounds.width(j)).collect(),
                y_mean: mean,
                y_scale: scale,
            },
            None => Scaler::new(bounds, training.labels()),
        };
        let train_scaled = scaler.scale_rows(&training.points);
        let y_scaled: Vec<f64> =
            training.labels().iter().map(|&y| (y - scaler.y_mean()) / scaler.y_scale()).collect();
        Self::assemble(kernel, scaler, training.clone(), train_scaled, y_scaled)
    }

    fn assemble(
        kernel: KernelSpec,
        scaler: Scaler,
        training: TrainingSet,
        train_scaled: Vec<f64>,
        y_scaled: Vec<f64>,
    ) -> Result<Self, GpError> {
        let n = training.len();
        let d = training.dim();
        let gram = build_gram(&kernel, &train_scaled, n, d);
        let mut attempted = Vec::new();
        for jitter in jitter_ladder(kernel.signal_variance) {
            attempted.push(jitter);
            let mut k = gram.clone();
            for i in 0..n {
                k[i * n + i] += jitter;
            }
            if let Ok(chol) = Cholesky::new(&k, n) {
                let alpha = chol.solve(&y_scaled);
                return Ok(Self { kernel, scaler, training, train_scaled, alpha, chol, jitter_scaled: jitter });
            }
        }
        Err(GpError::Factorization { attempted })
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn training(&self) -> &TrainingSet {
        &self.training
    }

    pub fn len(&self) -> usize {
        self.training.len()
    }

    pub fn is_empty(&self) -> bool {
        self.training.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.training.dim()
    }

    pub fn prior_mean(&self) -> f64 {
        self.scaler.y_mean()
    }

    /// Final jitter in natural label-variance units.
    pub fn jitter(&self) -> f64 {
        self.jitter_scaled * self.scaler.y_scale() * self.scaler.y_scale()
    }

    /// Degenerate-point threshold in natural label-variance units.
    pub fn var_floor(&self) -> f64 {
        VAR_FLOOR_REL * self.kernel.signal_variance * self.scaler.y_scale() * self.scaler.y_scale()
    }

    pub fn log_hyperparameters(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.kernel.lengthscales.iter().map(|l| l.ln()).collect();
        p.push(self.kernel.signal_variance.ln());
        p
    }

    fn scaled(&self, theta: &[f64]) -> Vec<f64> {
        let mut u = vec![0.0; self.dim()];
        self.scaler.scale_point(theta, &mut u);
        u
    }

    fn kernel_vec(&self, u: &[f64]) -> Vec<f64> {
        let d = self.dim();
        (0..self.len()).map(|i| self.kernel.eval(u, &self.train_scaled[i * d..(i + 1) * d])).collect()
    }

    pub fn predict_mean(&self, theta: &[f64]) -> f64 {
        let u = self.scaled(theta);
        let k = self.kernel_vec(&u);
        let s: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        self.scaler.y_mean() + self.scaler.y_scale() * s
    }

    pub fn predict_var(&self, theta: &[f64]) -> f64 {
        let u = self.scaled(theta);
        let mut k = self.kernel_vec(&u);
        self.chol.solve_lower(&mut k);
        let reduction: f64 = k.iter().map(|v| v * v).sum();
        let var_scaled = (self.kernel.signal_variance - reduction).max(0.0);
        var_scaled * self.scaler.y_scale() * self.scaler.y_scale()
    }

    pub fn predict_cov(&self, theta: &[f64], theta_p: &[f64]) -> f64 {
        let ua = self.scaled(theta);
        let ub = self.scaled(theta_p);
        let mut ka = self.kernel_vec(&ua);
        let mut kb = self.kernel_vec(&ub);
        self.chol.solve_lower(&mut ka);
        self.chol.solve_lower(&mut kb);
        let dot: f64 = ka.iter().zip(&kb).map(|(a, b)| a * b).sum();
        (self.kernel.eval(&ua, &ub) - dot) * self.scaler.y_scale() * self.scaler.y_scale()
    }

    /// Adds one observation with hyperparameters held fixed. The returned
    /// posterior equals a fixed-hyperparameter refit on the extended set.
    pub fn update_incremental(&self, theta: &[f64], label: f64) -> Result<Self, GpError> {
        let var = self.predict_var(theta);
        let floor = self.var_floor();
        if var <= floor {
            return Err(GpError::DegeneratePoint { var, floor });
        }
        let u = self.scaled(theta);
        let k = self.kernel_vec(&u);
        let chol = self
            .chol
            .extend(&k, self.kernel.eval(&u, &u))
            .map_err(|_| GpError::DegeneratePoint { var, floor })?;
        let mut training = self.training.clone();
        training.push(theta, label);
        let mut train_scaled = self.train_scaled.clone();
        train_scaled.extend_from_slice(&u);
        let y_scaled: Vec<f64> = training
            .labels()
            .iter()
            .map(|&y| (y - self.scaler.y_mean()) / self.scaler.y_scale())
            .collect();
        let alpha = chol.solve(&y_scaled);
        Ok(Self {
            kernel: self.kernel.clone(),
            scaler: self.scaler.clone(),
            training,
            train_scaled,
            alpha,
            chol,
            jitter_scaled: self.jitter_scaled,
        })
    }

    /// Posterior variance and covariance after hypothetically adding
    /// `theta_plus`, which do not depend on the unobserved label.
    pub fn prospective_moments(
        &self,
        theta_plus: &[f64],
        theta: &[f64],
        theta_p: &[f64],
    ) -> Result<(f64, f64), GpError> {
        let var_plus = self.predict_var(theta_plus);
        let floor = self.var_floor();
        if var_plus <= floor {
            return Err(GpError::DegeneratePoint { var: var_plus, floor });
        }
        let c_a = self.predict_cov(theta_plus, theta);
        let var_next = (self.predict_var(theta) - c_a * c_a / var_plus).max(0.0);
        let c_b = self.predict_cov(theta_plus, theta_p);
        let cov_next = self.predict_cov(theta, theta_p) - c_a * c_b / var_plus;
        Ok((var_next, cov_next))
    }

    /// Batched projection of a set of rows: per-row predictive mean/variance
    /// plus the whitened kernel columns needed for pairwise covariances.
    pub fn project_rows(&self, rows: &[f64], dim: usize) -> PoolProjection {
        assert_eq!(dim, self.dim());
        let m = rows.len() / dim;
        let n = self.len();
        let scaled = self.scaler.scale_rows(rows);
        let mut v = vec![0.0; m * n];
        let mut mean = vec![0.0; m];
        let mut var = vec![0.0; m];
        let ys = self.scaler.y_scale();
        let ym = self.scaler.y_mean();
        let sf2 = self.kernel.signal_variance;
        // Chunked so rayon amortizes per-task overhead.
        let chunk = 256;
        v.par_chunks_mut(chunk * n)
            .zip(mean.par_chunks_mut(chunk))
            .zip(var.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(ci, ((vc, mc), wc))| {
                let base = ci * chunk;
                for r in 0..mc.len() {
                    let k = base + r;
                    let u = &scaled[k * dim..(k + 1) * dim];
                    let kv = &mut vc[r * n..(r + 1) * n];
                    for i in 0..n {
                        kv[i] = self.kernel.eval(u, &self.train_scaled[i * dim..(i + 1) * dim]);
                    }
                    let dot: f64 = kv.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
                    mc[r] = ym + ys * dot;
                    self.chol.solve_lower(kv);
                    let red: f64 = kv.iter().map(|x| x * x).sum();
                    wc[r] = (sf2 - red).max(0.0) * ys * ys;
                }
            });
        PoolProjection { scaled, v, mean, var, n_train: n, dim }
    }

    pub fn project_pool(&self, pool: &crate::pool::SamplePool) -> PoolProjection {
        self.project_rows(pool.as_slice(), pool.dim())
    }

    /// Projection of a single point (candidate side of the covariances).
    pub fn project_point(&self, theta: &[f64]) -> PointProjection {
        let u = self.scaled(theta);
        let mut k = self.kernel_vec(&u);
        let dot: f64 = k.iter().zip(&self.alpha).map(|(a, b)| a * b).sum();
        let mean = self.scaler.y_mean() + self.scaler.y_scale() * dot;
        self.chol.solve_lower(&mut k);
        let red: f64 = k.iter().map(|x| x * x).sum();
        let ys = self.scaler.y_scale();
        let var = (self.kernel.signal_variance - red).max(0.0) * ys * ys;
        PointProjection { scaled: u, v: k, mean, var }
    }

    /// Covariance between a projected point and pool row `k`, natural units.
    #[inline]
    pub fn cov_point_row(&self, p: &PointProjection, proj: &PoolProjection, k: usize) -> f64 {
        let n = proj.n_train;
        let vk = &proj.v[k * n..(k + 1) * n];
        let dot: f64 = p.v.iter().zip(vk).map(|(a, b)| a * b).sum();
        let kk = self.kernel.eval(&p.scaled, &proj.scaled[k * proj.dim..(k + 1) * proj.dim]);
        (kk - dot) * self.scaler.y_scale() * self.scaler.y_scale()
    }

    /// Covariance between pool rows `k` and `l`, natural units.
    #[inline]
    pub fn cov_rows(&self, proj: &PoolProjection, k: usize, l: usize) -> f64 {
        let n = proj.n_train;
        let vk = &proj.v[k * n..(k + 1) * n];
        let vl = &proj.v[l * n..(l + 1) * n];
        let dot: f64 = vk.iter().zip(vl).map(|(a, b)| a * b).sum();
        let kk = self.kernel.eval(
            &proj.scaled[k * proj.dim..(k + 1) * proj.dim],
            &proj.scaled[l * proj.dim..(l + 1) * proj.dim],
        );
        (kk - dot) * self.scaler.y_scale() * self.scaler.y_scale()
    }

    /// Pool average of the predictive covariance `c(theta, theta_k)`,
    /// natural units. Linear in the pool rows, so the base and permuted
    /// averages coincide.
    pub fn pool_average_cov(&self, theta: &[f64], pool: &crate::pool::SamplePool) -> f64 {
        let d = self.dim();
        let n = self.len();
        let u = self.scaled(theta);
        let scaled_pool = self.scaler.scale_rows(pool.as_slice());
        let m = pool.len();
        let mut kbar_theta = 0.0;
        let mut ubar = vec![0.0; n];
        for k in 0..m {
            let row = &scaled_pool[k * d..(k + 1) * d];
            kbar_theta += self.kernel.eval(&u, row);
            for i in 0..n {
                ubar[i] += self.kernel.eval(row, &self.train_scaled[i * d..(i + 1) * d]);
            }
        }
        kbar_theta /= m as f64;
        for v in ubar.iter_mut() {
            *v /= m as f64;
        }
        let w = self.chol.solve(&ubar);
        let kv = self.kernel_vec(&u);
        let dot: f64 = kv.iter().zip(&w).map(|(a, b)| a * b).sum();
        (kbar_theta - dot) * self.scaler.y_scale() * self.scaler.y_scale()
    }

    /// Posterior variance of the quadrature rule over the pool, in the
    /// structured form: the kernel single-integrals enter as pool averages
    /// through the Gram solve, the double integral as the paired average.
    /// This form makes the prospective variance reduction telescope exactly
    /// against [`Self::pool_average_cov`].
    pub fn quadrature_variance(&self, pool: &crate::pool::SamplePool) -> f64 {
        let d = self.dim();
        let n = self.len();
        let scaled_pool = self.scaler.scale_rows(pool.as_slice());
        let m = pool.len();
        let mut kbar_paired = 0.0;
        let mut ubar = vec![0.0; n];
        for k in 0..m {
            let row = &scaled_pool[k * d..(k + 1) * d];
            let tw = pool.twin_index(k);
            kbar_paired += self.kernel.eval(row, &scaled_pool[tw * d..(tw + 1) * d]);
            for i in 0..n {
                ubar[i] += self.kernel.eval(row, &self.train_scaled[i * d..(i + 1) * d]);
            }
        }
        kbar_paired /= m as f64;
        for v in ubar.iter_mut() {
            *v /= m as f64;
        }
        let w = self.chol.solve(&ubar);
        let quad: f64 = ubar.iter().zip(&w).map(|(a, b)| a * b).sum();
        (kbar_paired - quad) * self.scaler.y_scale() * self.scaler.y_scale()
    }

    pub fn to_snapshot(&self) -> GpSnapshot {
        GpSnapshot {
            kernel: self.kernel.clone(),
            scaler: self.scaler.clone(),
            training: self.training.clone(),
            jitter_scaled: self.jitter_scaled,
        }
    }

    pub fn from_snapshot(snap: &GpSnapshot) -> Result<Self, GpError> {
        let train_scaled = snap.scaler.scale_rows(&snap.training.points);
        let y_scaled: Vec<f64> = snap
            .training
            .labels()
            .iter()
            .map(|&y| (y - snap.scaler.y_mean()) / snap.scaler.y_scale())
            .collect();
        let n = snap.training.len();
        let d = snap.training.dim();
        let mut k = build_gram(&snap.kernel, &train_scaled, n, d);
        for i in 0..n {
            k[i * n + i] += snap.jitter_scaled;
        }
        let chol = Cholesky::new(&k, n).map_err(|_| GpError::Factorization {
            attempted: vec![snap.jitter_scaled],
        })?;
        let alpha = chol.solve(&y_scaled);
        Ok(Self {
            kernel: snap.kernel.clone(),
            scaler: snap.scaler.clone(),
            training: snap.training.clone(),
            train_scaled,
            alpha,
            chol,
            jitter_scaled: snap.jitter_scaled,
        })
    }
}

/// Whitened projection of a row set against a fitted GP.
#[derive(Debug, Clone)]
pub struct PoolProjection {
    scaled: Vec<f64>,
    v: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    n_train: usize,
    dim: usize,
}

impl PoolProjection {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn mean(&self, k: usize) -> f64 {
        self.mean[k]
    }

    pub fn var(&self, k: usize) -> f64 {
        self.var[k]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn vars(&self) -> &[f64] {
        &self.var
    }
}

/// Whitened projection of a single point.
#[derive(Debug, Clone)]
pub struct PointProjection {
    scaled: Vec<f64>,
    v: Vec<f64>,
    pub mean: f64,
    pub var: f64,
}

fn build_gram(kernel: &KernelSpec, train_scaled: &[f64], n: usize, d: usize) -> Vec<f64> {
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel.eval(&train_scaled[i * d..(i + 1) * d], &train_scaled[j * d..(j + 1) * d]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

fn jitter_ladder(signal_variance: f64) -> impl Iterator<Item = f64> {
    (0..7).map(move |i| JITTER_START_REL * 10f64.powi(i) * signal_variance)
}

fn clamp_params(mut p: Vec<f64>) -> Vec<f64> {
    let d = p.len() - 1;
    for v in p[..d].iter_mut() {
        *v = v.clamp(LOG_LEN_BOUNDS.0, LOG_LEN_BOUNDS.1);
    }
    p[d] = p[d].clamp(LOG_SF2_BOUNDS.0, LOG_SF2_BOUNDS.1);
    p
}

fn params_to_kernel(p: &[f64], family: KernelFamily, d: usize) -> KernelSpec {
    KernelSpec {
        family,
        lengthscales: p[..d].iter().map(|v| v.exp()).collect(),
        signal_variance: p[d].exp(),
    }
}

/// Negative log marginal likelihood of scaled data under log-params `p`.
fn neg_log_marginal(
    p: &[f64],
    family: KernelFamily,
    train_scaled: &[f64],
    y_scaled: &[f64],
    n: usize,
    d: usize,
) -> f64 {
    let kernel = params_to_kernel(p, family, d);
    let gram = build_gram(&kernel, train_scaled, n, d);
    // Short ladder during search; the full ladder runs at assembly.
    for e in 0..4 {
        let jitter = JITTER_START_REL * 10f64.powi(e) * kernel.signal_variance;
        let mut k = gram.clone();
        for i in 0..n {
            k[i * n + i] += jitter;
        }
        if let Ok(chol) = Cholesky::new(&k, n) {
            let alpha = chol.solve(y_scaled);
            let data_fit: f64 = y_scaled.iter().zip(&alpha).map(|(a, b)| a * b).sum();
            let nll = 0.5 * data_fit
                + chol.log_diag_sum()
                + 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
            return if nll.is_finite() { nll } else { f64::INFINITY };
        }
    }
    f64::INFINITY
}

/// Bounded Nelder-Mead: vertices are clamped to the hyperparameter box.
fn nelder_mead(
    f: &(impl Fn(&[f64]) -> f64 + Sync),
    x0: Vec<f64>,
    max_evals: usize,
) -> (f64, Vec<f64>) {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64]| {
        evals += 1;
        f(x)
    };
    let mut simplex: Vec<(f64, Vec<f64>)> = Vec::with_capacity(n + 1);
    let fx0 = eval(&x0);
    simplex.push((fx0, x0.clone()));
    for i in 0..n {
        let mut x = x0.clone();
        x[i] += 0.35;
        let x = clamp_params(x);
        let fx = eval(&x);
        simplex.push((fx, x));
    }
    let order = |s: &mut Vec<(f64, Vec<f64>)>| {
        s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
    };
    order(&mut simplex);
    while evals < max_evals {
        let spread = simplex[n].0 - simplex[0].0;
        if spread.abs() < 1e-9 * (1.0 + simplex[0].0.abs()) {
            break;
        }
        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(_, x)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let xr = clamp_params(
            (0..n).map(|j| centroid[j] + (centroid[j] - simplex[n].1[j])).collect(),
        );
        let fr = eval(&xr);
        if fr < simplex[0].0 {
            let xe = clamp_params(
                (0..n).map(|j| centroid[j] + 2.0 * (centroid[j] - simplex[n].1[j])).collect(),
            );
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (fe, xe) } else { (fr, xr) };
        } else if fr < simplex[n - 1].0 {
            simplex[n] = (fr, xr);
        } else {
            let xc = clamp_params(
                (0..n).map(|j| centroid[j] + 0.5 * (simplex[n].1[j] - centroid[j])).collect(),
            );
            let fc = eval(&xc);
            if fc < simplex[n].0 {
                simplex[n] = (fc, xc);
            } else {
                let best = simplex[0].1.clone();
                for v in simplex.iter_mut().skip(1) {
                    let x: Vec<f64> =
                        (0..n).map(|j| best[j] + 0.5 * (v.1[j] - best[j])).collect();
                    let fx = eval(&x);
                    *v = (fx, x);
                }
            }
        }
        order(&mut simplex);
    }
    (simplex[0].0, simplex[0].1.clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use rand::Rng;

    /// Independent dense solve via Gauss elimination (no Cholesky reuse).
    fn gauss_solve(a: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
        let mut m: Vec<f64> = a.to_vec();
        let mut x = b.to_vec();
        for col in 0..n {
            let piv = (col..n)
                .max_by(|&i, &j| m[i * n + col].abs().partial_cmp(&m[j * n + col].abs()).unwrap())
                .unwrap();
            if piv != col {
                for j in 0..n {
                    m.swap(col * n + j, piv * n + j);
                }
                x.swap(col, piv);
            }
            let p = m[col * n + col];
            for i in col + 1..n {
                let f = m[i * n + col] / p;
                for j in col..n {
                    m[i * n + j] -= f * m[col * n + j];
                }
                x[i] -= f * x[col];
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= m[i * n + j] * x[j];
            }
            x[i] = s / m[i * n + i];
        }
        x
    }

    fn toy_fit_1d(xs: &[f64], ys: &[f64]) -> GpPosterior {
        let training = TrainingSet::new(xs.to_vec(), ys.to_vec(), 1).unwrap();
        let bounds = Prior::new(vec![-1.0], vec![3.0]).unwrap();
        GpPosterior::fit(&training, KernelFamily::SquaredExponential, &FitConfig::new(bounds, 11)).unwrap()
    }

    #[test]
    fn kernel_se_trivials() {
        let spec = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0, 1.0], 1.0).unwrap();
        assert!((kernel_eval(&spec, &[0.0, 0.0], &[0.0, 0.0]).unwrap() - 1.0).abs() < 1e-15);
        let v = kernel_eval(&spec, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert!((v - (-0.5f64).exp()).abs() < 1e-15);
        // symmetry
        let a = [0.3, -1.2];
        let b = [2.0, 0.7];
        assert_eq!(kernel_eval(&spec, &a, &b).unwrap(), kernel_eval(&spec, &b, &a).unwrap());
    }

    #[test]
    fn kernel_matern_frozen_value() {
        // Matern-5/2, l = 2, sf2 = 3, at r = 1; frozen from a 30-digit
        // evaluation of 3 (1 + sqrt(5) + 5/3) exp(-sqrt(5)).
        let spec = KernelSpec::new(KernelFamily::Matern52, vec![2.0], 3.0).unwrap();
        let v = kernel_eval(&spec, &[0.0], &[2.0]).unwrap();
        assert!((v - 1.5719823264954609).abs() < 1e-14, "got {v}");
    }

    #[test]
    fn kernel_rejects_dimension_mismatch() {
        let spec = KernelSpec::new(KernelFamily::SquaredExponential, vec![1.0], 1.0).unwrap();
        assert!(kernel_eval(&spec, &[0.0, 1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn predictions_match_independent_dense_solve() {
        let mut rng = stream(5, "gp-dense", 0);
        let n = 5;
        let xs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..3.0)).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| (x * 1.3).sin() + 0.2 * x).collect();
        let gp = toy_fit_1d(&xs, &ys);

        // Rebuild everything in natural+scaled space independently.
        let scaler = &gp.scaler;
        let us: Vec<f64> = scaler.scale_rows(&xs);
        let mut k = build_gram(&gp.kernel, &us, n, 1);
        for i in 0..n {
            k[i * n + i] += gp.jitter_scaled;
        }
        let y_scaled: Vec<f64> = ys.iter().map(|&y| (y - scaler.y_mean()) / scaler.y_scale()).collect();
        let alpha = gauss_solve(&k, n, &y_scaled);

        for t in 0..30 {
            let q = [-1.0 + 4.0 * (t as f64 + 0.37) / 30.0];
            let q2 = [-1.0 + 4.0 * ((t as f64) * 0.61 % 1.0)];
            let uq = scaler.scale_rows(&q);
            let uq2 = scaler.scale_rows(&q2);
            let kv: Vec<f64> = (0..n).map(|i| gp.kernel.eval(&uq, &us[i..i + 1])).collect();
            let kv2: Vec<f64> = (0..n).map(|i| gp.kernel.eval(&uq2, &us[i..i + 1])).collect();
            let mean = scaler.y_mean()
                + scaler.y_scale() * kv.iter().zip(&alpha).map(|(a, b)| a * b).sum::<f64>();
            let w = gauss_solve(&k, n, &kv);
            let var = (gp.kernel.eval(&uq, &uq)
                - kv.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
            .max(0.0)
                * scaler.y_scale()
                * scaler.y_scale();
            let cov = (gp.kernel.eval(&uq, &uq2)
                - kv2.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>())
                * scaler.y_scale()
                * scaler.y_scale();
            assert!((gp.predict_mean(&q) - mean).abs() < 1e-10);
            assert!((gp.predict_var(&q) - var).abs() < 1e-10);
            assert!((gp.predict_cov(&q, &q2) - cov).abs() < 1e-10);
        }
    }

    #[test]
    fn interpolation_and_variance_at_training_points() {
        let mut rng = stream(17, "gp-interp", 0);
        let xs: Vec<f64> = (0..7).map(|i| i as f64 * 0.5 - 1.0 + 0.05 * rng.random::<f64>()).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| -(x * x) * 3.0 + 1.0).collect();
        let gp = toy_fit_1d(&xs, &ys);
        for (i, &x) in xs.iter().enumerate() {
            let m = gp.predict_mean(&[x]);
            assert!(
                (m - ys[i]).abs() <= 1e-6 * (1.0 + ys[i].abs()),
                "interpolation at {x}: {m} vs {}",
                ys[i]
            );
            assert!(gp.predict_var(&[x]) <= gp.jitter() + 1e-8);
        }
    }

    #[test]
    fn far_point_reverts_to_prior_mean_and_variance() {
        let xs = vec![0.0, 0.1, 0.2, 0.3];
        let ys = vec![1.0, 2.0, 0.5, 1.5];
        let training = TrainingSet::new(xs, ys, 1).unwrap();
        // Wide bounds so 20 lengthscales fit inside the scaled box.
        let bounds = Prior::new(vec![-1000.0], vec![1000.0]).unwrap();
        let gp =
            GpPosterior::fit(&training, KernelFamily::SquaredExponential, &FitConfig::new(bounds, 3)).unwrap();
        let far = [900.0];
        let len_natural = gp.kernel.lengthscales[0] * 2000.0;
        assert!(900.0 / len_natural > 20.0, "test point not far enough ({len_natural})");
        let ysc = gp.scaler.y_scale();
        assert!((gp.predict_mean(&far) - gp.prior_mean()).abs() < 1e-6 * ysc.max(1.0));
        let sf2_nat = gp.kernel.signal_variance * ysc * ysc;
        assert!((gp.predict_var(&far) - sf2_nat).abs() < 1e-6 * sf2_nat.max(1.0));
    }

    #[test]
    fn fit_three_points_on_line_interpolates_linearly() {
        let xs = vec![0.0, 1.0, 2.0];
        let ys = vec![1.0, 3.0, 5.0];
        let gp = toy_fit_1d(&xs, &ys);
        let at = gp.predict_mean(&[0.5]);
        assert!((at - 2.0).abs() / 2.0 < 0.05, "midpoint {at} vs linear 2.0");
    }

    #[test]
    fn constant_labels_give_constant_mean_and_zero_variance() {
        let xs = vec![0.0, 2.0];
        let ys = vec![5.0, 5.0];
        let gp = toy_fit_1d(&xs, &ys);
        for &x in &[0.0, 0.5, 1.0, 2.0, 2.5] {
            assert!((gp.predict_mean(&[x]) - 5.0).abs() < 1e-9);
        }
        assert!(gp.predict_var(&[0.0]) < 1e-12);
        assert!(gp.predict_var(&[2.0]) < 1e-12);
    }

    #[test]
    fn duplicate_rows_rejected() {
        let xs = vec![0.0, 1.0, 1.0];
        let ys = vec![0.0, 1.0, 2.0];
        let training = TrainingSet::new(xs, ys, 1).unwrap();
        let bounds = Prior::new(vec![-1.0], vec![3.0]).unwrap();
        let err =
            GpPosterior::fit(&training, KernelFamily::SquaredExponential, &FitConfig::new(bounds, 1));
        assert!(matches!(err, Err(GpError::Argument(_))));
    }

    fn fit_2d_six_points() -> GpPosterior {
        let mut rng = stream(23, "gp-2d", 0);
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..6 {
            let x = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            pts.extend_from_slice(&x);
            ys.push((x[0] - 0.3 * x[1] * x[1]).sin());
        }
        let training = TrainingSet::new(pts, ys, 2).unwrap();
        let bounds = Prior::symmetric(2, 2.0);
        GpPosterior::fit(&training, KernelFamily::SquaredExponential, &FitConfig::new(bounds, 7)).unwrap()
    }

    #[test]
    fn incremental_update_equals_fixed_refit() {
        let gp = fit_2d_six_points();
        let new_point = [0.77, -1.21];
        let new_label = 0.4;
        let updated = gp.update_incremental(&new_point, new_label).unwrap();

        let mut training = gp.training().clone();
        training.push(&new_point, new_label);
        let bounds = Prior::symmetric(2, 2.0);
        let refit = GpPosterior::fit_fixed(
            &training,
            gp.kernel().clone(),
            &bounds,
            Some((gp.scaler.y_mean(), gp.scaler.y_scale())),
        )
        .unwrap();

        let mut rng = stream(24, "gp-2d-q", 0);
        for _ in 0..100 {
            let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let q2 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert!((updated.predict_mean(&q) - refit.predict_mean(&q)).abs() < 1e-8);
            assert!((updated.predict_var(&q) - refit.predict_var(&q)).abs() < 1e-8);
            assert!((updated.predict_cov(&q, &q2) - refit.predict_cov(&q, &q2)).abs() < 1e-8);
        }
        // Querying the added point returns its label.
        assert!((updated.predict_mean(&new_point) - new_label).abs() < 1e-8);
        assert!(updated.predict_var(&new_point) <= updated.jitter() + 1e-8);
    }

    #[test]
    fn incremental_update_rejects_existing_point() {
        let gp = fit_2d_six_points();
        let existing = gp.training().point(2).to_vec();
        assert!(matches!(
            gp.update_incremental(&existing, 0.0),
            Err(GpError::DegeneratePoint { .. })
        ));
    }

    #[test]
    fn prospective_moments_match_update_and_are_label_free() {
        let gp = fit_2d_six_points();
        let plus = [1.3, 0.4];
        let mut rng = stream(31, "gp-prosp", 0);
        for _ in 0..25 {
            let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let q2 = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let (var_next, cov_next) = gp.prospective_moments(&plus, &q, &q2).unwrap();
            assert!(var_next <= gp.predict_var(&q) + 1e-12, "variance must not grow");
            for &label in &[0.0, -3.5] {
                let updated = gp.update_incremental(&plus, label).unwrap();
                assert!((updated.predict_var(&q) - var_next).abs() < 1e-10);
                assert!((updated.predict_cov(&q, &q2) - cov_next).abs() < 1e-10);
            }
        }
        // At the hypothetical point itself the next variance vanishes.
        let (v, _) = gp.prospective_moments(&plus, &plus, &plus).unwrap();
        assert!(v.abs() < 1e-10);
    }

    #[test]
    fn pool_projection_agrees_with_pointwise_queries() {
        let gp = fit_2d_six_points();
        let prior = Prior::symmetric(2, 2.0);
        let pool = crate::pool::SamplePool::latin_hypercube(&prior, 64, 9);
        let proj = gp.project_pool(&pool);
        for k in (0..64).step_by(7) {
            let row = pool.row(k);
            assert!((proj.mean(k) - gp.predict_mean(row)).abs() < 1e-10);
            assert!((proj.var(k) - gp.predict_var(row)).abs() < 1e-10);
            let l = pool.twin_index(k);
            let c = gp.cov_rows(&proj, k, l);
            assert!((c - gp.predict_cov(row, pool.row(l))).abs() < 1e-10);
            let p = gp.project_point(row);
            assert!((gp.cov_point_row(&p, &proj, l) - c).abs() < 1e-10);
        }
    }

    #[test]
    fn covariance_matrix_is_psd_on_random_points() {
        let gp = fit_2d_six_points();
        let mut rng = stream(40, "gp-psd", 0);
        let m = 20;
        let pts: Vec<[f64; 2]> =
            (0..m).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        // Work in scaled label units so the eigenvalue tolerance is meaningful.
        let ys2 = gp.scaler.y_scale() * gp.scaler.y_scale();
        let mut c = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                c[i * m + j] = gp.predict_cov(&pts[i], &pts[j]) / ys2;
            }
        }
        let ev = crate::linalg::sym_eigenvalues(&c, m).unwrap();
        assert!(ev[0] >= -1e-8, "min eigenvalue {}", ev[0]);
        // Diagonal consistency: cov(x, x) == var(x).
        for i in 0..m {
            assert!((gp.predict_cov(&pts[i], &pts[i]) - gp.predict_var(&pts[i])).abs() < 1e-12);
        }
        // Cauchy-Schwarz bound.
        for i in 0..m {
            for j in 0..m {
                let bound = (gp.predict_var(&pts[i]) * gp.predict_var(&pts[j])).sqrt();
                assert!(gp.predict_cov(&pts[i], &pts[j]).abs() <= bound + 1e-9);
            }
        }
    }

    #[test]
    fn snapshot_roundtrip_preserves_predictions() {
        let gp = fit_2d_six_points();
        let snap = gp.to_snapshot();
        let json = serde_json::to_string(&snap).unwrap();
        let back: GpSnapshot = serde_json::from_str(&json).unwrap();
        let gp2 = GpPosterior::from_snapshot(&back).unwrap();
        let q = [0.11, -0.42];
        assert!((gp.predict_mean(&q) - gp2.predict_mean(&q)).abs() < 1e-12);
        assert!((gp.predict_var(&q) - gp2.predict_var(&q)).abs() < 1e-12);
    }
}
