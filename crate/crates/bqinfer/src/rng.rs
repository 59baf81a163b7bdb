//! Deterministic RNG streams and space-filling designs.
//!
//! Every stochastic component draws from a ChaCha stream derived from the
//! run seed and a label, so that identical configurations reproduce
//! identical outputs regardless of thread scheduling.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mixes a label and index into a seed (splitmix64 finalizer).
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives an independent stream from `(seed, label, index)`.
pub fn stream(seed: u64, label: &str, index: u64) -> ChaCha8Rng {
    let mut h = seed;
    for &b in label.as_bytes() {
        h = mix(h ^ b as u64);
    }
    ChaCha8Rng::seed_from_u64(mix(h ^ index))
}

/// Latin hypercube sample of `n` points in the box `[lower, upper]^d`.
///
/// Each dimension is stratified into `n` cells, jittered within the cell and
/// permuted independently.
pub fn latin_hypercube(n: usize, lower: &[f64], upper: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = lower.len();
    let mut out = vec![0.0; n * d];
    let mut order: Vec<usize> = (0..n).collect();
    for j in 0..d {
        shuffle(&mut order, rng);
        for (i, &cell) in order.iter().enumerate() {
            let u: f64 = rng.random();
            let frac = (cell as f64 + u) / n as f64;
            out[i * d + j] = lower[j] + frac * (upper[j] - lower[j]);
        }
    }
    out
}

/// Uniform sample of `n` points in the box.
pub fn uniform_box(n: usize, lower: &[f64], upper: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let d = lower.len();
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        for j in 0..d {
            let u: f64 = rng.random();
            out[i * d + j] = lower[j] + u * (upper[j] - lower[j]);
        }
    }
    out
}

/// Fisher-Yates shuffle.
pub fn shuffle<T>(items: &mut [T], rng: &mut ChaCha8Rng) {
    for i in (1..items.len()).rev() {
        let j = rng.random_range(0..=i);
        items.swap(i, j);
    }
}

/// A random permutation of `0..n`.
pub fn permutation(n: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    shuffle(&mut p, rng);
    p
}

/// Standard normal draw (Box-Muller; one value per call keeps streams simple).
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.random();
        if u1 <= f64::MIN_POSITIVE {
            continue;
        }
        let u2: f64 = rng.random();
        return (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
    }
}
