//! Small numeric helpers shared across the crate.

/// Stable log(exp(a) + exp(b)).
#[inline]
pub fn logsumexp2(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Stable log of the mean of exp(values).
pub fn log_mean_exp(values: &[f64]) -> f64 {
    assert!(!values.is_empty());
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = values.iter().map(|&v| (v - m).exp()).sum();
    m + (s / values.len() as f64).ln()
}

/// Stable log(exp(x) - 1) for x > 0.
///
/// Feeding exp_m1 directly overflows once x exceeds ~709; for large x the
/// answer is x + log(1 - exp(-x)) which never does.
#[inline]
pub fn ln_exp_m1(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x == 0.0 {
        f64::NEG_INFINITY
    } else if x < 1e-8 {
        // exp(x) - 1 ~ x (1 + x/2)
        x.ln() + (0.5 * x).ln_1p()
    } else if x > 33.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Population standard deviation.
pub fn std_pop(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Standard error of the mean of `values`.
pub fn standard_error(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let var = values.iter().map(|&v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64;
    (var / values.len() as f64).sqrt()
}

/// Squared Euclidean distance between scaled coordinates.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// One-sample Kolmogorov-Smirnov statistic against Uniform(lo, hi).
pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let mut xs: Vec<f64> = samples.iter().map(|&x| (x - lo) / (hi - lo)).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let cdf = x.clamp(0.0, 1.0);
        let lo_ecdf = i as f64 / n;
        let hi_ecdf = (i + 1) as f64 / n;
        d = d.max((cdf - lo_ecdf).abs()).max((hi_ecdf - cdf).abs());
    }
    d
}
