//! Sample statistics and bootstrap standard errors over replications.

use crate::rng::{GaussianStream, SeedSpec};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let m = mean(xs);
    let n = xs.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    central_moments(xs).0 * n / (n - 1.0)
}

/// Moment skewness `m3 / m2^{3/2}`.
pub fn skewness(xs: &[f64]) -> f64 {
    let (m2, m3, _) = central_moments(xs);
    m3 / m2.powf(1.5)
}

/// Moment excess kurtosis `m4 / m2^2 - 3`.
pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let (m2, _, m4) = central_moments(xs);
    m4 / (m2 * m2) - 3.0
}

pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Linear-interpolated quantile of the sorted sample (type 7).
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

pub fn median(xs: &[f64]) -> f64 {
    quantile(xs, 0.5)
}

/// Bootstrap standard error of a sample mean in the limit of infinitely
/// many resamples: the plug-in `sqrt(sum (x - mean)^2) / N`.
pub fn mean_se(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    (central_moments(xs).0 / n).sqrt()
}

/// Replicates of a statistic over `resamples` bootstrap draws of `n`
/// indices. The closure receives the resampled index list.
pub fn bootstrap<F>(n: usize, resamples: usize, seed: SeedSpec, stat: F) -> Vec<f64>
where
    F: Fn(&[usize]) -> f64,
{
    let mut rng = GaussianStream::new(seed);
    let mut idx = vec![0usize; n];
    (0..resamples)
        .map(|_| {
            for i in idx.iter_mut() {
                *i = rng.next_index(n);
            }
            stat(&idx)
        })
        .collect()
}

/// Standard deviation of bootstrap replicates.
pub fn bootstrap_se(replicates: &[f64]) -> f64 {
    variance(replicates).sqrt()
}

pub fn gather(xs: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| xs[i]).collect()
}
