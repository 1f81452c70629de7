//! Exact sampling of standardized fractional Brownian sheet increments.
//!
//! The increments of an anisotropic sheet over the unit cells of a lattice,
//! rescaled to unit variance, form a stationary Gaussian field whose
//! correlation is the product over axes of fractional Gaussian noise
//! autocovariances. A draw is produced by filling a white-noise array and
//! applying one exact square root of the per-axis Toeplitz covariance along
//! each axis in turn, which realizes the Kronecker-factorized square root
//! without ever forming the dense covariance.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{cumulative_field, Anchor, LatticeField, LatticeShape};
use crate::numerics::binomial_real;
use crate::rng::{GaussianStream, SeedSpec};

/// Per-axis Hurst exponents, each strictly inside `(0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(transparent)]
pub struct HurstVector(Vec<f64>);

impl HurstVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidShape("Hurst vector needs d >= 1".into()));
        }
        for (axis, &value) in components.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(Error::InvalidHurst { axis, value });
            }
        }
        Ok(Self(components))
    }

    pub fn isotropic(d: usize, h: f64) -> Result<Self> {
        Self::new(vec![h; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().copied()
    }
}

impl<'de> Deserialize<'de> for HurstVector {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<f64>::deserialize(d)?;
        HurstVector::new(raw).map_err(serde::de::Error::custom)
    }
}

const SERIES_CUTOFF: u64 = 64;

/// Autocovariance of unit-variance fractional Gaussian noise,
/// `(|j+1|^{2H} - 2|j|^{2H} + |j-1|^{2H}) / 2`.
pub fn fgn_autocovariance(hurst: f64, lag: i64) -> Result<f64> {
    if !(hurst > 0.0 && hurst < 1.0) {
        return Err(Error::InvalidHurst {
            axis: 0,
            value: hurst,
        });
    }
    Ok(fgn_acf(hurst, lag))
}

/// Unchecked autocovariance. Far lags use the binomial expansion
/// `sum_{m>=1} C(2H, 2m) j^{2H-2m}`, which avoids the cancellation of the
/// second difference.
pub(crate) fn fgn_acf(h: f64, lag: i64) -> f64 {
    let j = lag.unsigned_abs();
    if j == 0 {
        return 1.0;
    }
    let two_h = 2.0 * h;
    if j < SERIES_CUTOFF {
        let x = j as f64;
        return 0.5 * ((x + 1.0).powf(two_h) - 2.0 * x.powf(two_h) + (x - 1.0).powf(two_h));
    }
    acf_series(h, j as f64)
}

fn acf_series(h: f64, x: f64) -> f64 {
    let two_h = 2.0 * h;
    let inv_x2 = 1.0 / (x * x);
    let mut power = x.powf(two_h - 2.0);
    let mut sum = 0.0;
    for m in 1..=16usize {
        let term = binomial_real(two_h, 2 * m) * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        power *= inv_x2;
    }
    sum
}

/// Covariance of the sheet, `prod_nu (|s|^{2H} + |t|^{2H} - |s-t|^{2H}) / 2`.
///
/// Panics if the three slices differ in length.
pub fn fbs_covariance(hurst: &[f64], s: &[f64], t: &[f64]) -> f64 {
    assert!(hurst.len() == s.len() && s.len() == t.len(), "dimension mismatch");
    hurst
        .iter()
        .zip(s.iter().zip(t))
        .map(|(&h, (&a, &b))| {
            let e = 2.0 * h;
            0.5 * (a.abs().powf(e) + b.abs().powf(e) - (a - b).abs().powf(e))
        })
        .product()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum FactorMethod {
    Circulant,
    Cholesky,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct SamplerOptions {
    #[serde(default = "default_method")]
    pub method: FactorMethod,
    /// Negative circulant eigenvalues down to `-eps_clip` are clipped to 0.
    #[serde(default = "default_eps_clip")]
    pub eps_clip: f64,
    /// Use a Cholesky factor when the embedding is not nonnegative definite.
    #[serde(default = "default_fallback")]
    pub fallback_to_cholesky: bool,
}

fn default_method() -> FactorMethod {
    FactorMethod::Circulant
}
fn default_eps_clip() -> f64 {
    1e-9
}
fn default_fallback() -> bool {
    true
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            method: default_method(),
            eps_clip: default_eps_clip(),
            fallback_to_cholesky: default_fallback(),
        }
    }
}

#[derive(Clone)]
enum FactorKind {
    Identity,
    Circulant {
        embed: usize,
        eigenvalues: Vec<f64>,
        scaled_sqrt: Vec<f64>,
        forward: Arc<dyn Fft<f64>>,
        inverse: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        lower: Vec<f64>,
    },
}

/// Linear map from white noise to a length-`m` fGn vector.
#[derive(Clone)]
pub struct FgnFactor {
    hurst: f64,
    len: usize,
    method: FactorMethod,
    kind: FactorKind,
}

impl std::fmt::Debug for FgnFactor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FgnFactor")
            .field("hurst", &self.hurst)
            .field("len", &self.len)
            .field("method", &self.method)
            .field("noise_len", &self.noise_len())
            .finish()
    }
}

impl FgnFactor {
    pub fn new(hurst: f64, len: usize, method: FactorMethod, eps_clip: f64) -> Result<Self> {
        if !(hurst > 0.0 && hurst < 1.0) {
            return Err(Error::InvalidHurst {
                axis: 0,
                value: hurst,
            });
        }
        if len == 0 {
            return Err(Error::InvalidShape("fGn length must be >= 1".into()));
        }
        if !(eps_clip >= 0.0) {
            return Err(Error::OutOfRange(format!("eps_clip = {eps_clip}")));
        }
        // white noise is already fGn when H = 1/2 or when there is one site
        let kind = if hurst == 0.5 || len == 1 {
            FactorKind::Identity
        } else {
            match method {
                FactorMethod::Circulant => circulant(hurst, len, eps_clip)?,
                FactorMethod::Cholesky => cholesky(hurst, len)?,
            }
        };
        Ok(Self {
            hurst,
            len,
            method,
            kind,
        })
    }

    /// Build with the requested method, retrying with Cholesky when the
    /// circulant embedding fails and the options allow it.
    pub fn with_options(hurst: f64, len: usize, opts: &SamplerOptions) -> Result<Self> {
        match Self::new(hurst, len, opts.method, opts.eps_clip) {
            Err(Error::Embedding { .. }) if opts.fallback_to_cholesky => {
                log::warn!("circulant embedding failed for H={hurst}, m={len}; using Cholesky");
                Self::new(hurst, len, FactorMethod::Cholesky, opts.eps_clip)
            }
            other => other,
        }
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn method(&self) -> FactorMethod {
        match self.kind {
            FactorKind::Cholesky { .. } => FactorMethod::Cholesky,
            _ => self.method,
        }
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, FactorKind::Identity)
    }

    /// Number of white-noise inputs consumed per output vector.
    pub fn noise_len(&self) -> usize {
        match &self.kind {
            FactorKind::Circulant { embed, .. } => *embed,
            _ => self.len,
        }
    }

    /// Unclipped circulant eigenvalues, if this is a circulant factor.
    pub fn spectrum(&self) -> Option<&[f64]> {
        match &self.kind {
            FactorKind::Circulant { eigenvalues, .. } => Some(eigenvalues),
            _ => None,
        }
    }

    pub fn apply(&self, noise: &[f64], out: &mut [f64]) {
        debug_assert_eq!(noise.len(), self.noise_len());
        debug_assert_eq!(out.len(), self.len);
        match &self.kind {
            FactorKind::Identity => out.copy_from_slice(noise),
            FactorKind::Circulant { .. } => {
                let mut scratch = vec![0.0; self.len];
                self.apply_pair(noise, noise, out, &mut scratch);
            }
            FactorKind::Cholesky { lower } => {
                let m = self.len;
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &lower[i * m..i * m + i + 1];
                    *o = row.iter().zip(noise).map(|(l, e)| l * e).sum();
                }
            }
        }
    }

    /// Apply to two noise vectors at once. The circulant square root is a
    /// real matrix, so both can ride one complex transform.
    pub fn apply_pair(&self, a: &[f64], b: &[f64], out_a: &mut [f64], out_b: &mut [f64]) {
        match &self.kind {
            FactorKind::Circulant {
                embed,
                scaled_sqrt,
                forward,
                inverse,
                ..
            } => {
                let mut buf: Vec<Complex<f64>> =
                    a.iter().zip(b).map(|(&x, &y)| Complex::new(x, y)).collect();
                debug_assert_eq!(buf.len(), *embed);
                forward.process(&mut buf);
                for (z, s) in buf.iter_mut().zip(scaled_sqrt) {
                    *z *= *s;
                }
                inverse.process(&mut buf);
                for k in 0..self.len {
                    out_a[k] = buf[k].re;
                    out_b[k] = buf[k].im;
                }
            }
            _ => {
                self.apply(a, out_a);
                self.apply(b, out_b);
            }
        }
    }

    /// Covariance matrix (row-major `m x m`) realized by this factor,
    /// assembled column by column from basis inputs.
    pub fn implied_covariance(&self) -> Vec<f64> {
        let m = self.len;
        let q = self.noise_len();
        let mut cov = vec![0.0; m * m];
        let mut basis = vec![0.0; q];
        let mut col = vec![0.0; m];
        for k in 0..q {
            basis.iter_mut().for_each(|v| *v = 0.0);
            basis[k] = 1.0;
            self.apply(&basis, &mut col);
            for i in 0..m {
                for j in 0..m {
                    cov[i * m + j] += col[i] * col[j];
                }
            }
        }
        cov
    }
}

fn circulant(hurst: f64, len: usize, eps_clip: f64) -> Result<FactorKind> {
    let embed = (2 * (len - 1)).next_power_of_two().max(2);
    let half = embed / 2;
    let row: Vec<Complex<f64>> = (0..embed)
        .map(|j| {
            let lag = if j <= half { j } else { embed - j };
            Complex::new(fgn_acf(hurst, lag as i64), 0.0)
        })
        .collect();
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(embed);
    let inverse = planner.plan_fft_inverse(embed);
    let mut spec = row;
    forward.process(&mut spec);
    let eigenvalues: Vec<f64> = spec.iter().map(|z| z.re).collect();
    let min = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -eps_clip {
        return Err(Error::Embedding {
            len: embed,
            min_eigenvalue: min,
            eps_clip,
        });
    }
    let scaled_sqrt = eigenvalues
        .iter()
        .map(|&l| l.max(0.0).sqrt() / embed as f64)
        .collect();
    Ok(FactorKind::Circulant {
        embed,
        eigenvalues,
        scaled_sqrt,
        forward,
        inverse,
    })
}

fn cholesky(hurst: f64, len: usize) -> Result<FactorKind> {
    let acf: Vec<f64> = (0..len).map(|j| fgn_acf(hurst, j as i64)).collect();
    let m = len;
    let mut lower = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..=i {
            let mut sum = acf[i - j];
            for k in 0..j {
                sum -= lower[i * m + k] * lower[j * m + k];
            }
            if i == j {
                if !(sum > 0.0) {
                    return Err(Error::Cholesky { row: i, pivot: sum });
                }
                lower[i * m + i] = sum.sqrt();
            } else {
                lower[i * m + j] = sum / lower[j * m + j];
            }
        }
    }
    Ok(FactorKind::Cholesky { lower })
}

/// Reusable sampler for one `(H, m)` pair; immutable and shareable across
/// threads once built.
#[derive(Clone, Debug)]
pub struct FieldSampler {
    hurst: HurstVector,
    cells: LatticeShape,
    factors: Vec<FgnFactor>,
    noise_shape: Vec<usize>,
}

impl FieldSampler {
    pub fn new(hurst: &HurstVector, cells: &LatticeShape, opts: &SamplerOptions) -> Result<Self> {
        if hurst.dim() != cells.dim() {
            return Err(Error::DimensionMismatch {
                expected: cells.dim(),
                got: hurst.dim(),
            });
        }
        let factors = hurst
            .iter()
            .zip(cells.extents())
            .map(|(h, &m)| FgnFactor::with_options(h, m, opts))
            .collect::<Result<Vec<_>>>()?;
        let noise_shape: Vec<usize> = factors.iter().map(FgnFactor::noise_len).collect();
        LatticeShape::new(noise_shape.clone())?;
        Ok(Self {
            hurst: hurst.clone(),
            cells: cells.clone(),
            factors,
            noise_shape,
        })
    }

    pub fn hurst(&self) -> &HurstVector {
        &self.hurst
    }

    pub fn cells(&self) -> &LatticeShape {
        &self.cells
    }

    pub fn factors(&self) -> &[FgnFactor] {
        &self.factors
    }

    /// One draw of the standardized increment field `Z_i^{(n)}`.
    pub fn sample_increments(&self, seed: SeedSpec) -> LatticeField {
        let mut stream = GaussianStream::new(seed);
        self.sample_increments_from(&mut stream)
    }

    pub fn sample_increments_from(&self, stream: &mut GaussianStream) -> LatticeField {
        let total: usize = self.noise_shape.iter().product();
        let mut data = vec![0.0; total];
        stream.fill_gaussian(&mut data);
        let mut extents = self.noise_shape.clone();
        for (axis, factor) in self.factors.iter().enumerate() {
            if factor.is_identity() {
                continue;
            }
            data = apply_along_axis(&data, &mut extents, axis, factor);
        }
        debug_assert_eq!(extents, self.cells.extents());
        LatticeField::from_parts(self.cells.clone(), Anchor::Cells, data)
    }

    /// One draw of sheet values `Z(i/m)` on the `(m+1)^d` point grid.
    pub fn sample_fbs(&self, seed: SeedSpec) -> Result<LatticeField> {
        self.fbs_from_increments(&self.sample_increments(seed))
    }

    /// Undo the `<m^H>` standardization and sum cells into sheet values.
    pub fn fbs_from_increments(&self, incr: &LatticeField) -> Result<LatticeField> {
        let scale = standardization(&self.hurst, &self.cells).recip();
        cumulative_field(&incr.map(|v| v * scale)?)
    }
}

/// `<m^H> = prod_nu m_nu^{H_nu}`.
pub fn standardization(hurst: &HurstVector, cells: &LatticeShape) -> f64 {
    hurst
        .iter()
        .zip(cells.extents())
        .map(|(h, &m)| (m as f64).powf(h))
        .product()
}

fn apply_along_axis(data: &[f64], extents: &mut [usize], axis: usize, factor: &FgnFactor) -> Vec<f64> {
    let q = extents[axis];
    let m = factor.len();
    let inner: usize = extents[axis + 1..].iter().product();
    let outer: usize = extents[..axis].iter().product();
    let mut out = vec![0.0; outer * m * inner];
    let lines = outer * inner;
    let mut a = vec![0.0; q];
    let mut b = vec![0.0; q];
    let mut ya = vec![0.0; m];
    let mut yb = vec![0.0; m];
    let gather = |line: usize, buf: &mut [f64]| {
        let (o, i) = (line / inner, line % inner);
        let base = o * q * inner + i;
        for (k, v) in buf.iter_mut().enumerate() {
            *v = data[base + k * inner];
        }
    };
    let scatter = |out: &mut [f64], line: usize, buf: &[f64]| {
        let (o, i) = (line / inner, line % inner);
        let base = o * m * inner + i;
        for (k, v) in buf.iter().enumerate() {
            out[base + k * inner] = *v;
        }
    };
    let mut line = 0;
    while line < lines {
        gather(line, &mut a);
        if line + 1 < lines {
            gather(line + 1, &mut b);
            factor.apply_pair(&a, &b, &mut ya, &mut yb);
            scatter(&mut out, line, &ya);
            scatter(&mut out, line + 1, &yb);
            line += 2;
        } else {
            factor.apply(&a, &mut ya);
            scatter(&mut out, line, &ya);
            line += 1;
        }
    }
    extents[axis] = m;
    out
}

/// One draw of the standardized increment field.
pub fn sample_increment_field(
    hurst: &HurstVector,
    cells: &LatticeShape,
    seed: SeedSpec,
) -> Result<LatticeField> {
    Ok(FieldSampler::new(hurst, cells, &SamplerOptions::default())?.sample_increments(seed))
}

/// One draw of the sheet on the lattice points `i/m`.
pub fn sample_fbs_lattice(hurst: &HurstVector, cells: &LatticeShape, seed: SeedSpec) -> Result<LatticeField> {
    FieldSampler::new(hurst, cells, &SamplerOptions::default())?.sample_fbs(seed)
}

/// Sum blocks of `block` fine cells into coarse cells and restore unit
/// variance by dividing by `<block^H>`.
pub fn aggregate_increments(field: &LatticeField, block: &[usize], hurst: &HurstVector) -> Result<LatticeField> {
    if field.anchor() != Anchor::Cells {
        return Err(Error::InvalidShape("aggregation expects a cell field".into()));
    }
    let fine = field.shape();
    if block.len() != fine.dim() || hurst.dim() != fine.dim() {
        return Err(Error::DimensionMismatch {
            expected: fine.dim(),
            got: block.len(),
        });
    }
    let mut coarse_ext = Vec::with_capacity(block.len());
    for (axis, (&e, &b)) in fine.extents().iter().zip(block).enumerate() {
        if b == 0 || e % b != 0 {
            return Err(Error::InvalidShape(format!(
                "axis {axis}: extent {e} not divisible by block {b}"
            )));
        }
        coarse_ext.push(e / b);
    }
    let coarse = LatticeShape::new(coarse_ext)?;
    let mut sums = vec![0.0; coarse.len()];
    let mut target = vec![0usize; fine.dim()];
    for (flat, &v) in field.values().iter().enumerate() {
        let idx = fine.unravel(flat);
        for nu in 0..idx.len() {
            target[nu] = idx[nu] / block[nu];
        }
        sums[coarse.flat_index(&target)] += v;
    }
    let scale: f64 = hurst
        .iter()
        .zip(block)
        .map(|(h, &b)| (b as f64).powf(h))
        .product();
    for v in &mut sums {
        *v /= scale;
    }
    Ok(LatticeField::from_parts(coarse, Anchor::Cells, sums))
}
