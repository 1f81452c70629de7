//! Generalized, rescaled and power variations on the lattice, the
//! fluctuation decomposition of even power variations, and multilinear
//! interpolation.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgn::HurstVector;
use crate::hermite::{gaussian_moment, power_expansion, HermiteExpansion};
use crate::lattice::{cumulative_field, floor_scale, format_f64, Anchor, LatticeField, LatticeShape};
use crate::limits::scaling_factor;

/// The function `f` applied to each standardized increment.
#[derive(Clone)]
pub enum Functional {
    Hermite(HermiteExpansion),
    /// `rho_p(y) = y^p - gamma_p`.
    CenteredPower(usize),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Functional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Functional::Hermite(e) => f.debug_tuple("Hermite").field(e).finish(),
            Functional::CenteredPower(p) => f.debug_tuple("CenteredPower").field(p).finish(),
            Functional::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl Functional {
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Functional::Hermite(e) => e.eval(u),
            Functional::CenteredPower(p) => u.powi(*p as i32) - gaussian_moment(*p),
            Functional::Custom(f) => f(u),
        }
    }

    /// Hermite expansion, when one is known exactly.
    pub fn expansion(&self) -> Result<Option<HermiteExpansion>> {
        match self {
            Functional::Hermite(e) => Ok(Some(e.clone())),
            Functional::CenteredPower(p) => power_expansion(*p).map(Some),
            Functional::Custom(_) => Ok(None),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationKind {
    RawU,
    RescaledU,
    PowerV,
    Fluctuation,
}

/// How to evaluate a lattice process at a point that need not be on the
/// lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    /// Value at `floor(m t) / m`.
    Piecewise,
    /// Multilinear interpolation of the lattice values.
    Multilinear,
}

/// A variation process sampled on the `(m+1)^d` point grid `i/m`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationProcess {
    values: LatticeField,
    kind: VariationKind,
    // unnormalized sums of Z^p, kept for power variations
    power_sums: Option<(usize, LatticeField)>,
}

impl VariationProcess {
    pub fn values(&self) -> &LatticeField {
        &self.values
    }

    pub fn kind(&self) -> VariationKind {
        self.kind
    }

    /// Number of unit cells per axis.
    pub fn cells(&self) -> LatticeShape {
        LatticeShape::new(self.values.cells()).expect("point grid has extents >= 1")
    }

    pub fn at_index(&self, index: &[usize]) -> Result<f64> {
        self.values.get(index)
    }

    pub fn eval(&self, t: &[f64], mode: EvalMode) -> Result<f64> {
        match mode {
            EvalMode::Piecewise => piecewise_lookup(&self.values, t),
            EvalMode::Multilinear => multilinear_interpolate(&self.values, t),
        }
    }
}

fn expect_cells(incr: &LatticeField) -> Result<()> {
    if incr.anchor() != Anchor::Cells {
        return Err(Error::InvalidShape("variations expect an increment field on unit cells".into()));
    }
    Ok(())
}

/// `U_f(i/m) = sum_{1 <= i' <= i} f(Z_{i'})` on the point grid.
pub fn generalized_variation(incr: &LatticeField, f: &Functional) -> Result<VariationProcess> {
    expect_cells(incr)?;
    let mut mapped = Vec::with_capacity(incr.values().len());
    for (flat, &z) in incr.values().iter().enumerate() {
        let v = f.eval(z);
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "f({z}) = {v} at cell {:?}",
                incr.shape().unravel(flat)
            )));
        }
        mapped.push(v);
    }
    let cells = LatticeField::from_parts(incr.shape().clone(), Anchor::Cells, mapped);
    Ok(VariationProcess {
        values: cumulative_field(&cells)?,
        kind: VariationKind::RawU,
        power_sums: None,
    })
}

/// `U / <c>^{1/2}` with the rescaling for Hermite rank `rank`.
pub fn rescaled_variation(
    u: &VariationProcess,
    hurst: &HurstVector,
    rank: usize,
    boundary_tol: f64,
) -> Result<VariationProcess> {
    if u.kind != VariationKind::RawU {
        return Err(Error::OutOfRange(format!("expected a raw-U process, got {:?}", u.kind)));
    }
    let c = scaling_factor(hurst, rank, &u.cells(), boundary_tol)?;
    let root = c.product.sqrt();
    Ok(VariationProcess {
        values: u.values.map(|v| v / root)?,
        kind: VariationKind::RescaledU,
        power_sums: None,
    })
}

/// `V_p(i/m) = <m>^{-1} sum_{1 <= i' <= i} Z_{i'}^p`.
pub fn power_variation(incr: &LatticeField, p: usize) -> Result<VariationProcess> {
    expect_cells(incr)?;
    if p == 0 {
        return Err(Error::OutOfRange("power must be >= 1".into()));
    }
    let powered = incr.map(|z| z.powi(p as i32))?;
    let sums = cumulative_field(&powered)?;
    let total = incr.shape().len() as f64;
    Ok(VariationProcess {
        values: sums.map(|v| v / total)?,
        kind: VariationKind::PowerV,
        power_sums: Some((p, sums)),
    })
}

/// `v_p(t) = gamma_p <t>`.
pub fn power_limit(p: usize, t: &[f64]) -> f64 {
    gaussian_moment(p) * t.iter().product::<f64>()
}

/// Rescaled fluctuation `<m>/<c>^{1/2} (V_p - v_p)` of a power variation.
#[derive(Clone, Debug, PartialEq)]
pub struct Fluctuation {
    lattice: VariationProcess,
    cells: LatticeShape,
    power: usize,
    gamma: f64,
    scale: f64,
}

/// Build the fluctuation from a power variation. At lattice points it
/// equals `(sum Z^p - gamma_p <i>) / <c>^{1/2}`, which is the rescaled
/// variation of `rho_p`; for odd `p` the two agree bit for bit.
pub fn fluctuation(v: &VariationProcess, hurst: &HurstVector, boundary_tol: f64) -> Result<Fluctuation> {
    let (p, sums) = match (&v.kind, &v.power_sums) {
        (VariationKind::PowerV, Some((p, sums))) => (*p, sums),
        _ => return Err(Error::OutOfRange(format!("expected a power-V process, got {:?}", v.kind))),
    };
    let rank = power_expansion(p)?.rank();
    let cells = v.cells();
    let c = scaling_factor(hurst, rank, &cells, boundary_tol)?;
    let root = c.product.sqrt();
    let gamma = gaussian_moment(p);
    let points = sums.shape();
    let values: Vec<f64> = sums
        .values()
        .iter()
        .enumerate()
        .map(|(flat, &s)| {
            let count: usize = points.unravel(flat).iter().product();
            (s - gamma * count as f64) / root
        })
        .collect();
    let lattice = VariationProcess {
        values: LatticeField::new(points.clone(), Anchor::Points, values)?,
        kind: VariationKind::Fluctuation,
        power_sums: None,
    };
    Ok(Fluctuation {
        lattice,
        scale: cells.len() as f64 / root,
        cells,
        power: p,
        gamma,
    })
}

impl Fluctuation {
    pub fn power(&self) -> usize {
        self.power
    }

    /// `<m> / <c>^{1/2}`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Lattice values, which coincide with the rescaled variation of
    /// `rho_p` since the remainder vanishes on the lattice.
    pub fn lattice(&self) -> &VariationProcess {
        &self.lattice
    }

    /// Remainder `beta_p(t) = <m>/<c>^{1/2} gamma_p (<t> - <floor(m t)/m>)`.
    pub fn beta(&self, t: &[f64]) -> Result<f64> {
        if self.gamma == 0.0 {
            floor_scale(t, &self.cells)?;
            return Ok(0.0);
        }
        let idx = floor_scale(t, &self.cells)?;
        let snapped: f64 = idx
            .components()
            .iter()
            .zip(self.cells.extents())
            .map(|(&i, &m)| i as f64 / m as f64)
            .product();
        let tp: f64 = t.iter().product();
        Ok(self.scale * self.gamma * (tp - snapped))
    }

    /// Piecewise mode gives the paper's cadlag fluctuation
    /// `U_rho(floor(m t)) - beta(t)`; multilinear mode gives the
    /// interpolated fluctuation `scale (L_n V - v_p)`.
    pub fn eval(&self, t: &[f64], mode: EvalMode) -> Result<f64> {
        match mode {
            EvalMode::Piecewise => Ok(piecewise_lookup(self.lattice.values(), t)? - self.beta(t)?),
            EvalMode::Multilinear => multilinear_interpolate(self.lattice.values(), t),
        }
    }
}

fn check_point_grid(g: &LatticeField, t: &[f64]) -> Result<LatticeShape> {
    if g.anchor() != Anchor::Points {
        return Err(Error::InvalidShape("evaluation needs values on lattice points".into()));
    }
    if t.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: t.len(),
        });
    }
    LatticeShape::new(g.cells())
}

/// `g(floor(m t) / m)`.
pub fn piecewise_lookup(g: &LatticeField, t: &[f64]) -> Result<f64> {
    let cells = check_point_grid(g, t)?;
    let idx = floor_scale(t, &cells)?;
    let idx: Vec<usize> = idx.components().iter().map(|&i| i as usize).collect();
    Ok(g.point(&idx))
}

/// `alpha_i(t) = prod_nu {m t}^{i_nu} (1 - {m t})^{1 - i_nu}` for a corner
/// `i` in `{0,1}^d`.
pub fn interpolation_weights(t: &[f64], m: &LatticeShape, corner: &[u8]) -> Result<f64> {
    if corner.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: corner.len(),
        });
    }
    if let Some(bad) = corner.iter().find(|&&c| c > 1) {
        return Err(Error::OutOfRange(format!("corner bit {bad} not in {{0, 1}}")));
    }
    let base = floor_scale(t, m)?;
    Ok(corner
        .iter()
        .zip(t)
        .zip(m.extents().iter().zip(base.components()))
        .map(|((&c, &tv), (&mv, &b))| {
            let frac = mv as f64 * tv - b as f64;
            if c == 1 {
                frac
            } else {
                1.0 - frac
            }
        })
        .product())
}

/// `L_n g(t) = sum_{i in {0,1}^d} g((floor(m t) + i)/m) alpha_i(t)`.
/// Corners with zero weight are skipped, which covers the out-of-range
/// corners at `t_nu = 1`.
pub fn multilinear_interpolate(g: &LatticeField, t: &[f64]) -> Result<f64> {
    let cells = check_point_grid(g, t)?;
    let base = floor_scale(t, &cells)?;
    let d = t.len();
    let mut frac = Vec::with_capacity(d);
    let mut lo = Vec::with_capacity(d);
    for ((&tv, &mv), &b) in t.iter().zip(cells.extents()).zip(base.components()) {
        frac.push(mv as f64 * tv - b as f64);
        lo.push(b as usize);
    }
    let mut acc = 0.0;
    let mut idx = vec![0usize; d];
    'corners: for mask in 0..(1usize << d) {
        let mut w = 1.0;
        for nu in 0..d {
            let bit = (mask >> nu) & 1;
            let f = if bit == 1 { frac[nu] } else { 1.0 - frac[nu] };
            if f == 0.0 {
                continue 'corners;
            }
            w *= f;
            idx[nu] = lo[nu] + bit;
        }
        acc += w * g.point(&idx);
    }
    Ok(acc)
}

/// CSV of `(t_1, ..., t_d, value)` rows.
pub fn write_trace<W: Write>(ts: &[Vec<f64>], values: &[f64], mut w: W) -> Result<()> {
    if ts.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: ts.len(),
            got: values.len(),
        });
    }
    let d = ts.first().map_or(0, Vec::len);
    let header: Vec<String> = (1..=d).map(|i| format!("t{i}")).chain(["value".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (t, v) in ts.iter().zip(values) {
        let cols: Vec<String> = t.iter().map(|x| format_f64(*x)).collect();
        writeln!(w, "{},{}", cols.join(","), format_f64(*v))?;
    }
    Ok(())
}
