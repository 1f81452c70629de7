//! Small numerical kernels shared across modules: compensated and pairwise
//! summation, the Hurwitz zeta function, and Gauss–Hermite nodes.

use std::f64::consts::PI;

/// Neumaier-compensated accumulator.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl std::iter::FromIterator<f64> for KahanSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = KahanSum::new();
        for x in iter {
            acc.add(x);
        }
        acc
    }
}

/// In-place inclusive prefix sums where every partial sum is assembled from
/// at most `log2(n)+1` pairwise-summed dyadic blocks.
pub fn pairwise_prefix_sums(line: &mut [f64]) {
    let n = line.len();
    if n < 2 {
        return;
    }
    // levels[k][b] = sum of line[b * 2^k .. (b + 1) * 2^k], each built pairwise
    let mut levels: Vec<Vec<f64>> = vec![line.to_vec()];
    while levels.last().map_or(0, Vec::len) >= 2 {
        let prev = levels.last().unwrap();
        let next: Vec<f64> = prev.chunks_exact(2).map(|c| c[0] + c[1]).collect();
        levels.push(next);
    }
    for (i, out) in line.iter_mut().enumerate() {
        let count = i + 1;
        let mut start = 0usize;
        let mut acc = 0.0;
        for k in (0..levels.len()).rev() {
            let block = 1usize << k;
            if count & block != 0 {
                acc += levels[k][start >> k];
                start += block;
            }
        }
        *out = acc;
    }
}

/// Hurwitz zeta `sum_{n>=0} (a + n)^{-s}` for `s > 1`, `a > 0`, by
/// Euler–Maclaurin summation.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    debug_assert!(s > 1.0 && a > 0.0);
    // B_2, B_4, ..., B_14
    const BERNOULLI: [f64; 7] = [
        1.0 / 6.0,
        -1.0 / 30.0,
        1.0 / 42.0,
        -1.0 / 30.0,
        5.0 / 66.0,
        -691.0 / 2730.0,
        7.0 / 6.0,
    ];
    let shift = (15.0f64.max(s) - a).ceil().max(0.0) as usize;
    let mut head = KahanSum::new();
    for k in 0..shift {
        head.add((a + k as f64).powf(-s));
    }
    let b = a + shift as f64;
    let mut tail = b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
    // rising factorial (s)_{2j-1} / (2j)!
    let mut rising = s;
    let mut fact = 2.0;
    let mut power = b.powf(-s - 1.0);
    for (j, bern) in BERNOULLI.iter().enumerate() {
        let term = bern / fact * rising * power;
        tail += term;
        let twoj = 2.0 * (j as f64 + 1.0);
        rising *= (s + twoj - 1.0) * (s + twoj);
        fact *= (twoj + 1.0) * (twoj + 2.0);
        power /= b * b;
    }
    head.value() + tail
}

/// Gauss–Hermite rule for the standard Gaussian measure: nodes and weights
/// with `sum w_i g(x_i) ~ int g dgamma`. Weights sum to one.
pub fn gauss_hermite_probabilists(n: usize) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_hermite_physicists(n);
    let sqrt2 = std::f64::consts::SQRT_2;
    let norm = PI.sqrt();
    (
        x.iter().map(|v| v * sqrt2).collect(),
        w.iter().map(|v| v / norm).collect(),
    )
}

/// Nodes and weights for `int g(x) exp(-x^2) dx`, ordered from largest node
/// to smallest. Eigenvalues of the Jacobi matrix seed a Newton polish on the
/// orthonormal recurrence, tracked in log scale so that outer nodes of large
/// rules neither overflow nor lose relative accuracy in their weights.
fn gauss_hermite_physicists(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^{-1/4}
    let nf = n as f64;
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut x = tridiagonal_eigenvalues(vec![0.0; n], off);
    x.sort_by(|a, b| b.total_cmp(a));
    let mut w = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 0..half {
        let mut z = x[i];
        let mut log_pp = 0.0;
        for _ in 0..50 {
            let (p1, p2, log_scale) = orthonormal_hermite_pair(n, z, PIM4);
            let pp = (2.0 * nf).sqrt() * p2;
            log_pp = pp.abs().ln() + log_scale;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z1.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = (std::f64::consts::LN_2 - 2.0 * log_pp).exp();
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Eigenvalues of a symmetric tridiagonal matrix by implicit QL with
/// Wilkinson shifts. `off[i]` couples rows `i` and `i + 1`.
fn tridiagonal_eigenvalues(mut d: Vec<f64>, off: Vec<f64>) -> Vec<f64> {
    let n = d.len();
    let mut e = off;
    e.push(0.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter < 100, "tridiagonal QL failed to converge");
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut i = m;
            let mut early = false;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    early = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
            }
            if early {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    d
}

/// Returns `(h_n(z), h_{n-1}(z), log_scale)` for the orthonormal Hermite
/// polynomials (physicists' weight), with both values divided by
/// `exp(log_scale)`.
fn orthonormal_hermite_pair(n: usize, z: f64, start: f64) -> (f64, f64, f64) {
    let mut p1 = start;
    let mut p2 = 0.0;
    let mut log_scale = 0.0;
    for j in 0..n {
        let jf = j as f64;
        let p3 = p2;
        p2 = p1;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        let mag = p1.abs();
        if mag > 1e100 {
            p1 /= mag;
            p2 /= mag;
            log_scale += mag.ln();
        }
    }
    (p1, p2, log_scale)
}

/// `ln(k!)` via summation; exact enough for the small arguments used here.
pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}

pub fn factorial(k: usize) -> f64 {
    (2..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Generalized binomial coefficient `C(a, k)` for real `a`.
pub fn binomial_real(a: f64, k: usize) -> f64 {
    let mut c = 1.0;
    for i in 0..k {
        c *= (a - i as f64) / (i as f64 + 1.0);
    }
    c
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_prefix_matches_naive() {
        for n in [1usize, 2, 3, 7, 8, 33] {
            let data: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
            let mut fast = data.clone();
            pairwise_prefix_sums(&mut fast);
            let mut acc = 0.0;
            for (i, v) in data.iter().enumerate() {
                acc += v;
                assert!((fast[i] - acc).abs() < 1e-13, "n={n} i={i}");
            }
        }
    }

    #[test]
    fn hurwitz_zeta_known_values() {
        let z2 = hurwitz_zeta(2.0, 1.0);
        assert!((z2 - PI * PI / 6.0).abs() < 1e-14);
        let z4 = hurwitz_zeta(4.0, 1.0);
        assert!((z4 - PI.powi(4) / 90.0).abs() < 1e-14);
        // zeta(s, a) - zeta(s, a + 1) = a^{-s}
        for (s, a) in [(1.3, 2.5), (3.7, 0.2), (1.05, 40.0), (20.0, 3.0)] {
            let d = hurwitz_zeta(s, a) - hurwitz_zeta(s, a + 1.0);
            let expect = a.powf(-s);
            assert!((d - expect).abs() <= 1e-12 * expect.max(1e-300) + 1e-15, "s={s} a={a}");
        }
    }

    #[test]
    fn hurwitz_zeta_against_direct_sum() {
        // direct sum of 10^6 terms plus integral tail estimate
        let (s, a) = (2.5, 7.0);
        let n = 1_000_000;
        let direct: KahanSum = (0..n).map(|k| (a + k as f64).powf(-s)).collect();
        let b = a + n as f64;
        let tail = b.powf(1.0 - s) / (s - 1.0) + 0.5 * b.powf(-s);
        assert!((direct.value() + tail - hurwitz_zeta(s, a)).abs() < 1e-14);
    }

    #[test]
    fn gauss_hermite_integrates_moments() {
        for n in [5usize, 200, 400, 800, 1600] {
            let (x, w) = gauss_hermite_probabilists(n);
            let total: f64 = w.iter().sum();
            assert!((total - 1.0).abs() < 1e-13, "n={n} total={total}");
            let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
            assert!((m4 - 3.0).abs() < 1e-12, "n={n} m4={m4}");
            if n >= 20 {
                let m10: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(10)).sum();
                assert!((m10 / 945.0 - 1.0).abs() < 1e-12, "n={n} m10={m10}");
            }
        }
    }

    #[test]
    fn binomial_real_integer_case() {
        assert_eq!(binomial_real(5.0, 2), 10.0);
        assert!((binomial_real(1.5, 2) - 0.375).abs() < 1e-15);
    }
}
