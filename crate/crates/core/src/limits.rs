//! Limit-theorem constants: regime classification, the shifted Hurst
//! vector, rescaling factors, per-axis `b` coefficients and the limiting
//! variance constant `Lambda`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgn::{fbs_covariance, fgn_acf, HurstVector};
use crate::hermite::{assumption_value, HermiteExpansion, Summability};
use crate::lattice::LatticeShape;
use crate::numerics::{binomial_real, factorial, hurwitz_zeta, KahanSum};

pub const BOUNDARY_TOL: f64 = 1e-12;
pub const TAIL_TOL: f64 = 1e-10;
const INITIAL_CUTOFF: u64 = 10_000;
const MAX_CUTOFF: u64 = 10_000 * (1 << 12);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AxisClass {
    SubBoundary,
    Boundary,
    SuperBoundary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "CLT")]
    Clt,
    #[serde(rename = "NCLT")]
    Nclt,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub axes: Vec<AxisClass>,
    pub rank: usize,
}

/// The critical exponent `1 - 1/(2k)`.
pub fn boundary_value(rank: usize) -> f64 {
    1.0 - 1.0 / (2.0 * rank as f64)
}

pub fn classify_axis(h: f64, rank: usize, tol: f64) -> AxisClass {
    let b = boundary_value(rank);
    if (h - b).abs() <= tol {
        AxisClass::Boundary
    } else if h > b {
        AxisClass::SuperBoundary
    } else {
        AxisClass::SubBoundary
    }
}

fn check_rank(rank: usize) -> Result<()> {
    if rank == 0 {
        Err(Error::Branch("Hermite rank must be >= 1".into()))
    } else {
        Ok(())
    }
}

/// NCLT exactly when every axis lies strictly above the boundary; a
/// boundary axis counts on the CLT side.
pub fn classify_regime(hurst: &HurstVector, rank: usize, tol: f64) -> Result<RegimeReport> {
    check_rank(rank)?;
    let axes: Vec<AxisClass> = hurst.iter().map(|h| classify_axis(h, rank, tol)).collect();
    let regime = if axes.iter().all(|&c| c == AxisClass::SuperBoundary) {
        Regime::Nclt
    } else {
        Regime::Clt
    };
    Ok(RegimeReport { regime, axes, rank })
}

/// `1 - rank (1 - H_nu)` on super-boundary axes, `1/2` elsewhere.
pub fn hurst_shift(hurst: &HurstVector, rank: usize, tol: f64) -> Result<Vec<f64>> {
    check_rank(rank)?;
    Ok(hurst
        .iter()
        .map(|h| match classify_axis(h, rank, tol) {
            AxisClass::SuperBoundary => 1.0 - rank as f64 * (1.0 - h),
            _ => 0.5,
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScalingFactor {
    pub per_axis: Vec<f64>,
    pub product: f64,
}

/// Per-axis `c_nu`: `m^{2 - 2 rank (1 - H)}` above the boundary, `m ln m` on
/// it and `m` below.
pub fn scaling_factor(hurst: &HurstVector, rank: usize, m: &LatticeShape, tol: f64) -> Result<ScalingFactor> {
    check_rank(rank)?;
    if hurst.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: hurst.dim(),
        });
    }
    let per_axis = hurst
        .iter()
        .zip(m.extents())
        .enumerate()
        .map(|(axis, (h, &mn))| {
            let x = mn as f64;
            match classify_axis(h, rank, tol) {
                AxisClass::SuperBoundary => Ok(x.powf(2.0 - 2.0 * rank as f64 * (1.0 - h))),
                AxisClass::Boundary if mn < 2 => Err(Error::Branch(format!(
                    "boundary axis {axis} needs m >= 2 for the logarithmic rescaling, got {mn}"
                ))),
                AxisClass::Boundary => Ok(x * x.ln()),
                AxisClass::SubBoundary => Ok(x),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    let product = per_axis.iter().product();
    Ok(ScalingFactor { per_axis, product })
}

/// Boundary constant `iota(k) = 2 ((2k-1)(k-1) / (2k^2))^k`.
pub fn iota(rank: usize) -> f64 {
    let k = rank as f64;
    2.0 * ((2.0 * k - 1.0) * (k - 1.0) / (2.0 * k * k)).powi(rank as i32)
}

/// Super-boundary constant
/// `kappa = H^k (2H-1)^k / ((1 - k(1-H)) (1 - 2k(1-H)))`.
pub fn kappa(h: f64, rank: usize) -> f64 {
    let k = rank as f64;
    let ki = rank as i32;
    h.powi(ki) * (2.0 * h - 1.0).powi(ki) / ((1.0 - k * (1.0 - h)) * (1.0 - 2.0 * k * (1.0 - h)))
}

/// A series value with a bound on its truncation error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeriesValue {
    pub value: f64,
    pub error_bound: f64,
    pub cutoff: u64,
}

/// `sum_{j in Z} r_H(j)^k` for `H < 1 - 1/(2k)`.
///
/// Lags up to the cut-off `J` are summed directly; the remainder uses the
/// far-lag expansion `r(j)^k = sum_q e_q j^{-k(2-2H) - 2q}`, so each tail
/// piece is a Hurwitz zeta value at `J + 1`. The cut-off doubles until the
/// bound on the neglected part drops below `tail_tol`.
pub fn correlation_power_series(h: f64, k: usize, tail_tol: f64) -> Result<SeriesValue> {
    if k == 0 {
        return Err(Error::Branch("series power must be >= 1".into()));
    }
    let exponent = k as f64 * (2.0 - 2.0 * h);
    if exponent <= 1.0 {
        return Err(Error::Branch(format!(
            "sum of r^{k} diverges for H = {h}"
        )));
    }
    if h == 0.5 {
        return Ok(SeriesValue {
            value: 1.0,
            error_bound: 0.0,
            cutoff: 0,
        });
    }
    let series = power_series_coeffs(h, k, 6);
    let mut cutoff = INITIAL_CUTOFF;
    let mut partial = KahanSum::new();
    let mut summed_to = 0u64;
    loop {
        for j in summed_to + 1..=cutoff {
            partial.add(fgn_acf(h, j as i64).powi(k as i32));
        }
        summed_to = cutoff;
        let a = cutoff as f64 + 1.0;
        let terms: Vec<f64> = series
            .iter()
            .enumerate()
            .map(|(q, e)| e * hurwitz_zeta(exponent + 2.0 * q as f64, a))
            .collect();
        let used = &terms[..terms.len() - 1];
        let tail: f64 = used.iter().sum();
        let abs_sum: f64 = used.iter().map(|t| t.abs()).sum::<f64>() + partial.value().abs();
        let bound = 2.0 * terms[terms.len() - 1].abs() + 64.0 * f64::EPSILON * abs_sum;
        let value = 1.0 + 2.0 * (partial.value() + tail);
        let error_bound = 2.0 * bound;
        if error_bound <= tail_tol || cutoff >= MAX_CUTOFF {
            if error_bound > tail_tol {
                log::warn!("series for H={h}, k={k} stopped at bound {error_bound:e}");
            }
            return Ok(SeriesValue {
                value,
                error_bound,
                cutoff,
            });
        }
        cutoff *= 2;
    }
}

/// Coefficients `e_0..e_{n-1}` of `g(y)^k` where
/// `g(y) = sum_q C(2H, 2q+2) y^q`, so that `r(j) = j^{2H-2} g(j^{-2})`.
fn power_series_coeffs(h: f64, k: usize, n: usize) -> Vec<f64> {
    let g: Vec<f64> = (0..n).map(|q| binomial_real(2.0 * h, 2 * q + 2)).collect();
    let mut acc = vec![0.0; n];
    acc[0] = 1.0;
    for _ in 0..k {
        let mut next = vec![0.0; n];
        for (i, &a) in acc.iter().enumerate() {
            for (j, &b) in g.iter().enumerate().take(n - i) {
                next[i + j] += a * b;
            }
        }
        acc = next;
    }
    acc
}

/// Per-axis `b^{(k)}` coefficient.
pub fn b_coefficient(h: f64, k: usize, rank: usize, tail_tol: f64) -> Result<f64> {
    b_coefficient_with_tol(h, k, rank, tail_tol, BOUNDARY_TOL)
}

pub fn b_coefficient_with_tol(h: f64, k: usize, rank: usize, tail_tol: f64, boundary_tol: f64) -> Result<f64> {
    check_rank(rank)?;
    if k < rank {
        return Err(Error::Branch(format!(
            "b coefficient undefined for k = {k} below rank {rank}"
        )));
    }
    match classify_axis(h, rank, boundary_tol) {
        AxisClass::SubBoundary => Ok(correlation_power_series(h, k, tail_tol)?.value),
        AxisClass::Boundary if k == rank => Ok(iota(rank)),
        AxisClass::SuperBoundary if k == rank => Ok(kappa(h, rank)),
        _ => Ok(0.0),
    }
}

/// `Lambda = sum_k k! a_k^2 prod_nu b^{(k)}(H_nu)`, the sum running from
/// `max(rank, 2)` in the central regime and reducing to
/// `rank! a_rank^2 prod kappa` in the non-central one.
pub fn lambda_constant(hurst: &HurstVector, e: &HermiteExpansion, tail_tol: f64) -> Result<f64> {
    Ok(lambda_terms(hurst, e, tail_tol, BOUNDARY_TOL)?
        .iter()
        .map(|t| t.contribution)
        .sum())
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LambdaTerm {
    pub k: usize,
    pub b: Vec<f64>,
    pub contribution: f64,
}

pub fn lambda_terms(
    hurst: &HurstVector,
    e: &HermiteExpansion,
    tail_tol: f64,
    boundary_tol: f64,
) -> Result<Vec<LambdaTerm>> {
    let rank = e.rank();
    let report = classify_regime(hurst, rank, boundary_tol)?;
    let start = match report.regime {
        Regime::Nclt => rank,
        Regime::Clt => rank.max(2),
    };
    e.coeffs()
        .range(start..)
        .map(|(&k, &a)| {
            let b = hurst
                .iter()
                .map(|h| b_coefficient_with_tol(h, k, rank, tail_tol, boundary_tol))
                .collect::<Result<Vec<f64>>>()?;
            let contribution = factorial(k) * a * a * b.iter().product::<f64>();
            Ok(LambdaTerm { k, b, contribution })
        })
        .collect()
}

/// Covariance kernel of the limit field, `R_{H~}(s, t)`.
pub fn limit_covariance(h_tilde: &[f64], s: &[f64], t: &[f64]) -> f64 {
    fbs_covariance(h_tilde, s, t)
}

/// Everything the `constants` command reports for one `(H, f)` pair.
#[derive(Clone, Debug, Serialize)]
pub struct LimitConstants {
    pub regime: Regime,
    pub axes: Vec<AxisClass>,
    pub rank: usize,
    #[serde(rename = "H_tilde")]
    pub h_tilde: Vec<f64>,
    #[serde(rename = "c")]
    pub scaling: Option<ScalingFactor>,
    pub b: Vec<LambdaTerm>,
    #[serde(rename = "Lambda")]
    pub lambda: f64,
    pub assumption_value: Summability,
    pub standard_sum: f64,
}

pub fn limit_constants(
    hurst: &HurstVector,
    e: &HermiteExpansion,
    m: Option<&LatticeShape>,
    tail_tol: f64,
    boundary_tol: f64,
) -> Result<LimitConstants> {
    let rank = e.rank();
    let report = classify_regime(hurst, rank, boundary_tol)?;
    let scaling = m.map(|m| scaling_factor(hurst, rank, m, boundary_tol)).transpose()?;
    let b = lambda_terms(hurst, e, tail_tol, boundary_tol)?;
    Ok(LimitConstants {
        regime: report.regime,
        axes: report.axes,
        rank,
        h_tilde: hurst_shift(hurst, rank, boundary_tol)?,
        scaling,
        lambda: b.iter().map(|t| t.contribution).sum(),
        b,
        assumption_value: assumption_value(e),
        standard_sum: e.standard_sum(),
    })
}
