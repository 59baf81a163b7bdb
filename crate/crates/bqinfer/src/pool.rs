//! Monte Carlo sample pools with a fixed permuted twin.
//!
//! Double integrals are estimated single-loop over the pairs
//! `(row k, row perm[k])`; the permutation is drawn once per pool so every
//! estimator in a run shares the same pairing.

use crate::prior::Prior;
use crate::rng;

#[derive(Debug, Clone)]
pub struct SamplePool {
    points: Vec<f64>,
    n: usize,
    dim: usize,
    perm: Vec<usize>,
}

impl SamplePool {
    /// Latin hypercube pool over the prior box.
    pub fn latin_hypercube(prior: &Prior, n: usize, seed: u64) -> Self {
        let mut rng_pts = rng::stream(seed, "pool-points", 0);
        let points = rng::latin_hypercube(n, prior.lower(), prior.upper(), &mut rng_pts);
        Self::from_rows(points, prior.dim(), seed)
    }

    /// Wraps an existing row-major matrix and draws the permuted twin.
    pub fn from_rows(points: Vec<f64>, dim: usize, seed: u64) -> Self {
        assert!(dim > 0 && points.len() % dim == 0);
        let n = points.len() / dim;
        assert!(n > 0, "sample pool must be nonempty");
        let mut rng_perm = rng::stream(seed, "pool-perm", 0);
        let perm = rng::permutation(n, &mut rng_perm);
        Self { points, n, dim, perm }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// Index of row k's partner in the permuted twin.
    #[inline]
    pub fn twin_index(&self, k: usize) -> usize {
        self.perm[k]
    }

    #[inline]
    pub fn twin_row(&self, k: usize) -> &[f64] {
        self.row(self.perm[k])
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.points.chunks(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.points
    }
}
