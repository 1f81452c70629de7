//! Multi-index algebra on rectangular lattices, the `2^d`-corner
//! rectangular increment, and the lattice field container with its binary
//! and CSV encodings.
//!
//! Storage is row-major (last axis fastest) and every iteration over a
//! lattice visits multi-indices in lexicographic order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::pairwise_prefix_sums;

/// A point of `Z^d`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<i64>);

impl MultiIndex {
    pub fn new(components: Vec<i64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidShape("multi-index must have d >= 1".into()));
        }
        Ok(Self(components))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }
}

/// Extents of a rectangular lattice with precomputed row-major strides.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LatticeShape {
    extents: Vec<usize>,
    strides: Vec<usize>,
    len: usize,
}

impl LatticeShape {
    pub fn new(extents: Vec<usize>) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidShape("lattice needs at least one axis".into()));
        }
        if let Some(axis) = extents.iter().position(|&e| e == 0) {
            return Err(Error::InvalidShape(format!("extent on axis {axis} is zero")));
        }
        let len = extents
            .iter()
            .try_fold(1usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| Error::InvalidShape(format!("product of extents {extents:?} overflows")))?;
        let mut strides = vec![1usize; extents.len()];
        for axis in (0..extents.len().saturating_sub(1)).rev() {
            strides[axis] = strides[axis + 1] * extents[axis + 1];
        }
        Ok(Self {
            extents,
            strides,
            len,
        })
    }

    /// Square lattice `(n, ..., n)`.
    pub fn cube(d: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; d])
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    /// Number of sites, `<extents>`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Shape of the point grid `{0, ..., m}^d` spanned by these cells.
    pub fn points(&self) -> Result<Self> {
        let ext = self
            .extents
            .iter()
            .map(|&e| e.checked_add(1))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::InvalidShape("extent overflow".into()))?;
        Self::new(ext)
    }

    pub fn flat_index(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.dim());
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn checked_flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: index.len(),
            });
        }
        for (axis, (&i, &e)) in index.iter().zip(&self.extents).enumerate() {
            if i >= e {
                return Err(Error::OutOfRange(format!(
                    "index {i} on axis {axis} exceeds extent {e}"
                )));
            }
        }
        Ok(self.flat_index(index))
    }

    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for (axis, &s) in self.strides.iter().enumerate() {
            out[axis] = flat / s;
            flat %= s;
        }
        out
    }

    /// Lexicographic iterator over all multi-indices.
    pub fn indices(&self) -> impl Iterator<Item = Vec<usize>> + '_ {
        (0..self.len).map(move |f| self.unravel(f))
    }
}

/// Placement of field values relative to the lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Anchor {
    /// One value per unit cell `[(i-1)/m, i/m)`, `1 <= i <= m`.
    #[serde(rename = "increments-on-unit-cells")]
    Cells,
    /// One value per lattice point `i/m`, `0 <= i <= m`.
    #[serde(rename = "values-on-lattice-points")]
    Points,
}

/// Half-open hyperrectangle `[s, t)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Rect {
    s: Vec<f64>,
    t: Vec<f64>,
}

impl Rect {
    pub fn new(s: Vec<f64>, t: Vec<f64>) -> Result<Self> {
        if s.len() != t.len() {
            return Err(Error::DimensionMismatch {
                expected: s.len(),
                got: t.len(),
            });
        }
        if s.is_empty() {
            return Err(Error::InvalidShape("rectangle needs d >= 1".into()));
        }
        if s.iter().zip(&t).any(|(a, b)| !(a <= b)) {
            return Err(Error::OutOfRange(format!("rectangle corners {s:?} !<= {t:?}")));
        }
        Ok(Self { s, t })
    }

    pub fn dim(&self) -> usize {
        self.s.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.s
    }

    pub fn upper(&self) -> &[f64] {
        &self.t
    }

    /// Corner `(1 - i) s + i t` for the bit pattern `bits` (bit `nu` = `i_nu`).
    fn corner(&self, bits: usize) -> Vec<f64> {
        (0..self.dim())
            .map(|nu| if bits >> nu & 1 == 1 { self.t[nu] } else { self.s[nu] })
            .collect()
    }
}

/// Alternating `2^d`-corner sum of a point-evaluable function over `[s, t)`.
pub fn rect_increment<F>(h: F, rect: &Rect) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let d = rect.dim();
    let mut acc = 0.0;
    for bits in 0..(1usize << d) {
        let corner = rect.corner(bits);
        let value = h(&corner);
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("h({corner:?}) = {value}")));
        }
        let ones = bits.count_ones() as usize;
        if (d - ones) % 2 == 0 {
            acc += value;
        } else {
            acc -= value;
        }
    }
    Ok(acc)
}

/// Componentwise `floor(m t)` for `t` in `[0, 1]^d`. Exact IEEE floor, no
/// snapping of values close to an integer.
pub fn floor_scale(t: &[f64], m: &LatticeShape) -> Result<MultiIndex> {
    if t.len() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: t.len(),
        });
    }
    let mut out = Vec::with_capacity(t.len());
    for (axis, (&tv, &mv)) in t.iter().zip(m.extents()).enumerate() {
        if !(0.0..=1.0).contains(&tv) {
            return Err(Error::OutOfRange(format!("t[{axis}] = {tv} outside [0, 1]")));
        }
        out.push((mv as f64 * tv).floor() as i64);
    }
    Ok(MultiIndex(out))
}

/// A real field on a rectangular lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeField {
    shape: LatticeShape,
    anchor: Anchor,
    values: Vec<f64>,
}

impl LatticeField {
    pub fn new(shape: LatticeShape, anchor: Anchor, values: Vec<f64>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::InvalidShape(format!(
                "{} values for a lattice of {} sites",
                values.len(),
                shape.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "entry {:?} is {}",
                shape.unravel(pos),
                values[pos]
            )));
        }
        Ok(Self {
            shape,
            anchor,
            values,
        })
    }

    /// Crate-internal constructor for values already known to be finite.
    pub(crate) fn from_parts(shape: LatticeShape, anchor: Anchor, values: Vec<f64>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        Self {
            shape,
            anchor,
            values,
        }
    }

    pub fn zeros(shape: LatticeShape, anchor: Anchor) -> Self {
        let values = vec![0.0; shape.len()];
        Self {
            shape,
            anchor,
            values,
        }
    }

    pub fn shape(&self) -> &LatticeShape {
        &self.shape
    }

    pub fn anchor(&self) -> Anchor {
        self.anchor
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    /// Number of unit cells per axis (`m`), whichever the anchor.
    pub fn cells(&self) -> Vec<usize> {
        match self.anchor {
            Anchor::Cells => self.shape.extents().to_vec(),
            Anchor::Points => self.shape.extents().iter().map(|e| e - 1).collect(),
        }
    }

    pub fn get(&self, index: &[usize]) -> Result<f64> {
        Ok(self.values[self.shape.checked_flat_index(index)?])
    }

    /// Value at lattice point `index` (entries `0..=m`), points anchor only.
    pub(crate) fn point(&self, index: &[usize]) -> f64 {
        self.values[self.shape.flat_index(index)]
    }

    /// Rectangular increment over `[lo/m, hi/m)` given by lattice indices.
    pub fn rect_increment_indices(&self, lo: &[usize], hi: &[usize]) -> Result<f64> {
        self.require_points()?;
        let d = self.dim();
        if lo.len() != d || hi.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: lo.len().min(hi.len()),
            });
        }
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return Err(Error::OutOfRange(format!("lower corner {lo:?} !<= {hi:?}")));
        }
        self.shape.checked_flat_index(hi)?;
        let mut corner = vec![0usize; d];
        let mut acc = 0.0;
        for bits in 0..(1usize << d) {
            for nu in 0..d {
                corner[nu] = if bits >> nu & 1 == 1 { hi[nu] } else { lo[nu] };
            }
            let v = self.point(&corner);
            if (d - bits.count_ones() as usize) % 2 == 0 {
                acc += v;
            } else {
                acc -= v;
            }
        }
        Ok(acc)
    }

    /// Rectangular increment over a real rectangle whose corners must be
    /// lattice points `i/m`.
    pub fn rect_increment(&self, rect: &Rect) -> Result<f64> {
        self.require_points()?;
        let m = self.cells();
        let to_index = |x: &[f64]| -> Result<Vec<usize>> {
            if x.len() != m.len() {
                return Err(Error::DimensionMismatch {
                    expected: m.len(),
                    got: x.len(),
                });
            }
            x.iter()
                .zip(&m)
                .map(|(&v, &mv)| {
                    let scaled = v * mv as f64;
                    let rounded = scaled.round();
                    if (scaled - rounded).abs() > 1e-9 * (mv as f64).max(1.0)
                        || rounded < 0.0
                        || rounded > mv as f64
                    {
                        Err(Error::OffLattice(x.to_vec()))
                    } else {
                        Ok(rounded as usize)
                    }
                })
                .collect()
        };
        let lo = to_index(rect.lower())?;
        let hi = to_index(rect.upper())?;
        self.rect_increment_indices(&lo, &hi)
    }

    /// Per-cell rectangular increments of a points-anchored field.
    pub fn cell_increments(&self) -> Result<LatticeField> {
        self.require_points()?;
        let cells = LatticeShape::new(self.cells())?;
        let d = self.dim();
        let mut values = Vec::with_capacity(cells.len());
        let mut lo = vec![0usize; d];
        for idx in cells.indices() {
            lo.copy_from_slice(&idx);
            let hi: Vec<usize> = idx.iter().map(|i| i + 1).collect();
            values.push(self.rect_increment_indices(&lo, &hi)?);
        }
        Ok(LatticeField::from_parts(cells, Anchor::Cells, values))
    }

    fn require_points(&self) -> Result<()> {
        match self.anchor {
            Anchor::Points => Ok(()),
            Anchor::Cells => Err(Error::InvalidShape(
                "operation requires values on lattice points".into(),
            )),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<LatticeField> {
        LatticeField::new(
            self.shape.clone(),
            self.anchor,
            self.values.iter().map(|&v| f(v)).collect(),
        )
    }
}

/// Apply an in-place routine to every line of `data` along `axis`.
pub(crate) fn for_each_line(
    data: &mut [f64],
    extents: &[usize],
    axis: usize,
    mut f: impl FnMut(&mut [f64]),
) {
    let len = extents[axis];
    let inner: usize = extents[axis + 1..].iter().product();
    let outer: usize = extents[..axis].iter().product();
    let mut buf = vec![0.0; len];
    for o in 0..outer {
        let base = o * len * inner;
        for i in 0..inner {
            for (k, b) in buf.iter_mut().enumerate() {
                *b = data[base + k * inner + i];
            }
            f(&mut buf);
            for (k, b) in buf.iter().enumerate() {
                data[base + k * inner + i] = *b;
            }
        }
    }
}

/// d-dimensional prefix sum of a cell field onto the `(m+1)^d` point grid;
/// zero on every face with a zero coordinate.
pub fn cumulative_field(incr: &LatticeField) -> Result<LatticeField> {
    if incr.anchor() != Anchor::Cells {
        return Err(Error::InvalidShape(
            "cumulative_field expects increments on unit cells".into(),
        ));
    }
    let cells = incr.shape();
    let points = cells.points()?;
    let mut out = vec![0.0; points.len()];
    let d = cells.dim();
    // odometer over cell indices; point offset of cell i is at i + 1
    let ext = cells.extents();
    let pstr = points.strides();
    let mut idx = vec![0usize; d];
    let mut pos: usize = pstr.iter().sum();
    for &v in incr.values() {
        out[pos] = v;
        for nu in (0..d).rev() {
            idx[nu] += 1;
            pos += pstr[nu];
            if idx[nu] < ext[nu] {
                break;
            }
            pos -= idx[nu] * pstr[nu];
            idx[nu] = 0;
        }
    }
    for axis in 0..d {
        for_each_line(&mut out, points.extents(), axis, pairwise_prefix_sums);
    }
    if let Some(pos) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!(
            "prefix sum at {:?} is {}",
            points.unravel(pos),
            out[pos]
        )));
    }
    Ok(LatticeField::from_parts(points, Anchor::Points, out))
}

const MAGIC: u64 = u64::from_le_bytes(*b"FBSHEET\0");
const FORMAT_VERSION: u64 = 1;
const MAX_BINARY_DIM: usize = 4;

/// Binary encoding: eight little-endian `u64` header words
/// `[magic, version, d, anchor, e_1, e_2, e_3, e_4]` (unused extents zero)
/// followed by the row-major values as little-endian `f64`.
pub fn write_binary<W: Write>(field: &LatticeField, mut w: W) -> Result<()> {
    let d = field.dim();
    if d > MAX_BINARY_DIM {
        return Err(Error::Format(format!(
            "binary format holds at most {MAX_BINARY_DIM} axes, field has {d}"
        )));
    }
    let mut header = [0u64; 8];
    header[0] = MAGIC;
    header[1] = FORMAT_VERSION;
    header[2] = d as u64;
    header[3] = match field.anchor() {
        Anchor::Cells => 0,
        Anchor::Points => 1,
    };
    for (slot, &e) in header[4..].iter_mut().zip(field.shape().extents()) {
        *slot = e as u64;
    }
    let mut bytes = Vec::with_capacity(64 + 8 * field.values().len());
    for h in header {
        bytes.extend_from_slice(&h.to_le_bytes());
    }
    for v in field.values() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&bytes)?;
    Ok(())
}

pub fn read_binary<R: Read>(mut r: R) -> Result<LatticeField> {
    let mut head = [0u8; 64];
    r.read_exact(&mut head)?;
    let word = |i: usize| u64::from_le_bytes(head[8 * i..8 * i + 8].try_into().unwrap());
    if word(0) != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if word(1) != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported version {}", word(1))));
    }
    let d = word(2) as usize;
    if d == 0 || d > MAX_BINARY_DIM {
        return Err(Error::Format(format!("bad dimension {d}")));
    }
    let anchor = match word(3) {
        0 => Anchor::Cells,
        1 => Anchor::Points,
        other => return Err(Error::Format(format!("bad anchor tag {other}"))),
    };
    let extents: Vec<usize> = (0..d).map(|i| word(4 + i) as usize).collect();
    let shape = LatticeShape::new(extents)?;
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    if body.len() != 8 * shape.len() {
        return Err(Error::Format(format!(
            "expected {} value bytes, found {}",
            8 * shape.len(),
            body.len()
        )));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    LatticeField::new(shape, anchor, values)
}

/// Full round-trip decimal rendering with 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV export: header `i1,...,id,value`, one row per multi-index in
/// lexicographic order.
pub fn write_csv<W: Write>(field: &LatticeField, mut w: W) -> Result<()> {
    let d = field.dim();
    let header: Vec<String> = (1..=d).map(|i| format!("i{i}")).chain(["value".into()]).collect();
    writeln!(w, "{}", header.join(","))?;
    for (idx, v) in field.shape().indices().zip(field.values()) {
        let cols: Vec<String> = idx.iter().map(|i| i.to_string()).collect();
        writeln!(w, "{},{}", cols.join(","), format_f64(*v))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rect_increment_examples() {
        let r = Rect::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(rect_increment(|t| t[0] * t[1], &r).unwrap(), 1.0);
        let r = Rect::new(vec![1.0], vec![2.0]).unwrap();
        assert_eq!(rect_increment(|t| t[0] * t[0], &r).unwrap(), 3.0);
        let r = Rect::new(vec![0.3, -1.2], vec![0.9, 2.5]).unwrap();
        assert!(rect_increment(|t| t[0] + t[1], &r).unwrap().abs() < 1e-15);
    }

    #[test]
    fn rect_increment_rejects_non_finite() {
        let r = Rect::new(vec![0.0], vec![1.0]).unwrap();
        assert!(matches!(
            rect_increment(|t| 1.0 / t[0], &r),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn rect_rejects_inverted_corners() {
        assert!(Rect::new(vec![1.0, 0.0], vec![0.5, 1.0]).is_err());
    }

    #[test]
    fn floor_scale_examples() {
        let m = LatticeShape::new(vec![5, 5, 5]).unwrap();
        assert_eq!(floor_scale(&[1.0, 1.0, 1.0], &m).unwrap().0, vec![5, 5, 5]);
        let m = LatticeShape::new(vec![10]).unwrap();
        assert_eq!(floor_scale(&[0.25], &m).unwrap().0, vec![2]);
        let m = LatticeShape::new(vec![8, 4]).unwrap();
        assert_eq!(floor_scale(&[0.999, 0.5], &m).unwrap().0, vec![7, 2]);
        assert!(floor_scale(&[1.1, 0.5], &m).is_err());
        assert!(floor_scale(&[-0.1, 0.5], &m).is_err());
    }

    #[test]
    fn shape_overflow_is_an_error() {
        assert!(LatticeShape::new(vec![usize::MAX, 2]).is_err());
        assert!(LatticeShape::new(vec![3, 0]).is_err());
        assert!(LatticeShape::new(vec![]).is_err());
    }

    #[test]
    fn cumulative_all_ones() {
        let cells = LatticeShape::new(vec![2, 2]).unwrap();
        let f = LatticeField::new(cells, Anchor::Cells, vec![1.0; 4]).unwrap();
        let z = cumulative_field(&f).unwrap();
        assert_eq!(z.shape().extents(), &[3, 3]);
        for idx in z.shape().indices() {
            assert_eq!(z.get(&idx).unwrap(), (idx[0] * idx[1]) as f64);
        }
    }

    #[test]
    fn cumulative_single_cell() {
        let f = LatticeField::new(LatticeShape::new(vec![1]).unwrap(), Anchor::Cells, vec![2.5]).unwrap();
        assert_eq!(cumulative_field(&f).unwrap().values(), &[0.0, 2.5]);
    }

    #[test]
    fn off_lattice_corner_is_rejected() {
        let f = LatticeField::new(LatticeShape::new(vec![2]).unwrap(), Anchor::Cells, vec![1.0, 2.0]).unwrap();
        let z = cumulative_field(&f).unwrap();
        let r = Rect::new(vec![0.0], vec![0.75]).unwrap();
        assert!(matches!(z.rect_increment(&r), Err(Error::OffLattice(_))));
        let r = Rect::new(vec![0.5], vec![1.0]).unwrap();
        assert_eq!(z.rect_increment(&r).unwrap(), 2.0);
    }

    #[test]
    fn binary_round_trip_and_header() {
        let shape = LatticeShape::new(vec![2, 3]).unwrap();
        let f = LatticeField::new(shape, Anchor::Cells, (0..6).map(|i| i as f64 * 0.1).collect()).unwrap();
        let mut buf = Vec::new();
        write_binary(&f, &mut buf).unwrap();
        assert_eq!(buf.len(), 64 + 48);
        assert_eq!(&buf[..8], b"FBSHEET\0");
        assert_eq!(read_binary(&buf[..]).unwrap(), f);
        buf[0] = b'X';
        assert!(read_binary(&buf[..]).is_err());
    }

    #[test]
    fn csv_layout() {
        let f = LatticeField::new(LatticeShape::new(vec![1, 2]).unwrap(), Anchor::Cells, vec![1.0, -0.5]).unwrap();
        let mut buf = Vec::new();
        write_csv(&f, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "i1,i2,value\n0,0,1.0000000000000000e0\n0,1,-5.0000000000000000e-1\n"
        );
    }

    proptest! {
        #[test]
        fn cumulative_round_trip(values in prop::collection::vec(-10.0f64..10.0, 9)) {
            let f = LatticeField::new(LatticeShape::new(vec![3, 3]).unwrap(), Anchor::Cells, values).unwrap();
            let back = cumulative_field(&f).unwrap().cell_increments().unwrap();
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn cumulative_round_trip_3d(values in prop::collection::vec(-1.0f64..1.0, 2 * 3 * 4)) {
            let f = LatticeField::new(LatticeShape::new(vec![2, 3, 4]).unwrap(), Anchor::Cells, values).unwrap();
            let back = cumulative_field(&f).unwrap().cell_increments().unwrap();
            for (a, b) in back.values().iter().zip(f.values()) {
                prop_assert!((a - b).abs() <= 1e-12 * 24.0);
            }
        }

        #[test]
        fn increments_are_additive(
            s in prop::collection::vec(-2.0f64..0.0, 2),
            t in prop::collection::vec(0.1f64..2.0, 2),
            cut in prop::collection::vec(0.0f64..1.0, 2),
        ) {
            // arbitrary smooth non-separable function
            let h = |x: &[f64]| (x[0] * x[1]).sin() + x[0].powi(3) * x[1].exp();
            let whole = rect_increment(h, &Rect::new(s.clone(), t.clone()).unwrap()).unwrap();
            let mid: Vec<f64> = (0..2).map(|nu| s[nu] + cut[nu] * (t[nu] - s[nu])).collect();
            let mut parts = 0.0;
            let mut scale = 0.0;
            for bits in 0..4usize {
                let lo: Vec<f64> = (0..2).map(|nu| if bits >> nu & 1 == 1 { mid[nu] } else { s[nu] }).collect();
                let hi: Vec<f64> = (0..2).map(|nu| if bits >> nu & 1 == 1 { t[nu] } else { mid[nu] }).collect();
                let v = rect_increment(h, &Rect::new(lo, hi).unwrap()).unwrap();
                parts += v;
                scale += v.abs();
            }
            prop_assert!((whole - parts).abs() <= 1e-10 * scale.max(1.0));
        }

        #[test]
        fn tensor_factorization(
            s in prop::collection::vec(-1.0f64..0.0, 3),
            t in prop::collection::vec(0.0f64..1.0, 3),
        ) {
            let fs: [fn(f64) -> f64; 3] = [f64::sin, f64::exp, |x| x * x];
            let h = |x: &[f64]| fs[0](x[0]) * fs[1](x[1]) * fs[2](x[2]);
            let got = rect_increment(h, &Rect::new(s.clone(), t.clone()).unwrap()).unwrap();
            let want: f64 = (0..3).map(|nu| fs[nu](t[nu]) - fs[nu](s[nu])).product();
            prop_assert!((got - want).abs() <= 1e-14);
        }
    }
}
