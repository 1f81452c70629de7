//! Exact moments of Hermite functionals of Gaussian lattices by the diagram
//! formula, and the right-hand side of the moment bound.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fgn::{fgn_acf, HurstVector};
use crate::hermite::HermiteExpansion;
use crate::lattice::LatticeShape;
use crate::numerics::{factorial, ln_factorial, KahanSum};

pub const DEFAULT_GUARD_CAP: f64 = 1e7;

/// Perfect matching of the vertices `(level, slot)` with no edge inside a
/// level. Edges are stored with the smaller vertex first, in increasing
/// order of that vertex.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagram {
    pub orders: Vec<usize>,
    pub edges: Vec<((usize, usize), (usize, usize))>,
}

impl Diagram {
    /// Number of edges joining levels `a` and `b`.
    pub fn multiplicity(&self, a: usize, b: usize) -> usize {
        self.edges
            .iter()
            .filter(|((x, _), (y, _))| (*x == a && *y == b) || (*x == b && *y == a))
            .count()
    }
}

/// Size estimate `(p-1)^{sum k / 2} sqrt(prod k!)` for the number of
/// diagrams.
pub fn diagram_count_bound(orders: &[usize]) -> f64 {
    let p = orders.len() as f64;
    let total: usize = orders.iter().sum();
    let log = 0.5 * total as f64 * (p - 1.0).ln() + 0.5 * orders.iter().map(|&k| ln_factorial(k)).sum::<f64>();
    log.exp()
}

/// All diagrams of the given orders, each once, in lexicographic order of
/// partner choices.
pub fn enumerate_diagrams(orders: &[usize], cap: f64) -> Result<Vec<Diagram>> {
    if orders.len() < 2 {
        return Err(Error::OutOfRange("diagrams need at least two levels".into()));
    }
    let total: usize = orders.iter().sum();
    if total % 2 == 1 {
        return Ok(Vec::new());
    }
    let estimate = diagram_count_bound(orders);
    if estimate > cap {
        return Err(Error::GuardCap { estimate, cap });
    }
    let vertices: Vec<(usize, usize)> = orders
        .iter()
        .enumerate()
        .flat_map(|(j, &k)| (0..k).map(move |a| (j, a)))
        .collect();
    let mut used = vec![false; vertices.len()];
    let mut edges = Vec::with_capacity(total / 2);
    let mut out = Vec::new();
    match_lowest(&vertices, &mut used, &mut edges, &mut |e| {
        out.push(Diagram {
            orders: orders.to_vec(),
            edges: e.to_vec(),
        })
    });
    Ok(out)
}

type Edge = ((usize, usize), (usize, usize));

fn match_lowest(
    vertices: &[(usize, usize)],
    used: &mut [bool],
    edges: &mut Vec<Edge>,
    emit: &mut dyn FnMut(&[Edge]),
) {
    let Some(first) = used.iter().position(|u| !u) else {
        emit(edges);
        return;
    };
    used[first] = true;
    let level = vertices[first].0;
    for partner in first + 1..vertices.len() {
        if used[partner] || vertices[partner].0 == level {
            continue;
        }
        used[partner] = true;
        edges.push((vertices[first], vertices[partner]));
        match_lowest(vertices, used, edges, emit);
        edges.pop();
        used[partner] = false;
    }
    used[first] = false;
}

/// Edge counts `(a, b, n_ab)` of one diagram class.
type EdgeCounts = Vec<(usize, usize, i32)>;

/// Diagrams grouped by their level-pair edge counts `n_{ab}`; each class
/// holds `prod k_j! / prod n_{ab}!` diagrams contributing
/// `prod rho_{ab}^{n_{ab}}` apiece.
#[derive(Clone, Debug)]
pub struct DiagramClasses {
    p: usize,
    classes: Vec<(f64, EdgeCounts)>,
}

impl DiagramClasses {
    pub fn new(orders: &[usize]) -> Result<Self> {
        let p = orders.len();
        if p < 2 {
            return Err(Error::OutOfRange("diagrams need at least two levels".into()));
        }
        let mut classes = Vec::new();
        if orders.iter().sum::<usize>() % 2 == 0 {
            let pairs: Vec<(usize, usize)> = (0..p).flat_map(|a| (a + 1..p).map(move |b| (a, b))).collect();
            let mut remaining = orders.to_vec();
            let mut counts = vec![0usize; pairs.len()];
            let numerator: f64 = orders.iter().map(|&k| factorial(k)).product();
            fill_counts(&pairs, 0, &mut remaining, &mut counts, &mut |counts| {
                let denom: f64 = counts.iter().map(|&n| factorial(n)).product();
                let factors = pairs
                    .iter()
                    .zip(counts)
                    .filter(|(_, &n)| n > 0)
                    .map(|(&(a, b), &n)| (a, b, n as i32))
                    .collect();
                classes.push((numerator / denom, factors));
            });
        }
        Ok(Self { p, classes })
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Total number of diagrams across classes.
    pub fn diagram_count(&self) -> f64 {
        self.classes.iter().map(|(c, _)| c).sum()
    }

    /// `sum_G prod_{e in G} rho_e` for a row-major `p x p` matrix.
    pub fn evaluate(&self, corr: &[f64]) -> f64 {
        let p = self.p;
        self.classes
            .iter()
            .map(|(coef, factors)| {
                coef * factors
                    .iter()
                    .map(|&(a, b, n)| corr[a * p + b].powi(n))
                    .product::<f64>()
            })
            .sum()
    }
}

fn fill_counts(
    pairs: &[(usize, usize)],
    at: usize,
    remaining: &mut [usize],
    counts: &mut [usize],
    emit: &mut dyn FnMut(&[usize]),
) {
    if at == pairs.len() {
        if remaining.iter().all(|&r| r == 0) {
            emit(counts);
        }
        return;
    }
    let (a, b) = pairs[at];
    // the last pair touching level a must use up its remaining capacity
    let last_for_a = pairs[at + 1..].iter().all(|&(x, y)| x != a && y != a);
    let max = remaining[a].min(remaining[b]);
    let lo = if last_for_a { remaining[a] } else { 0 };
    if lo > max {
        return;
    }
    for n in lo..=max {
        counts[at] = n;
        remaining[a] -= n;
        remaining[b] -= n;
        fill_counts(pairs, at + 1, remaining, counts, emit);
        remaining[a] += n;
        remaining[b] += n;
    }
    counts[at] = 0;
}

fn validate_corr(p: usize, corr: &[f64]) -> Result<()> {
    if corr.len() != p * p {
        return Err(Error::InvalidCorrelation(format!(
            "expected {p}x{p} entries, got {}",
            corr.len()
        )));
    }
    for a in 0..p {
        if (corr[a * p + a] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCorrelation(format!("diagonal entry {a} is {}", corr[a * p + a])));
        }
        for b in 0..p {
            let v = corr[a * p + b];
            if !v.is_finite() || v.abs() > 1.0 + 1e-12 {
                return Err(Error::InvalidCorrelation(format!("entry ({a},{b}) = {v}")));
            }
            if (v - corr[b * p + a]).abs() > 1e-12 {
                return Err(Error::InvalidCorrelation(format!("asymmetric at ({a},{b})")));
            }
        }
    }
    Ok(())
}

/// `E[prod_j P_{k_j}(Y_j)]` for unit-variance jointly Gaussian `Y` with
/// row-major correlation matrix `corr`.
pub fn diagram_moment(orders: &[usize], corr: &[f64]) -> Result<f64> {
    validate_corr(orders.len(), corr)?;
    Ok(DiagramClasses::new(orders)?.evaluate(corr))
}

/// Same quantity summed diagram by diagram.
pub fn diagram_moment_by_enumeration(orders: &[usize], corr: &[f64], cap: f64) -> Result<f64> {
    let p = orders.len();
    validate_corr(p, corr)?;
    Ok(enumerate_diagrams(orders, cap)?
        .iter()
        .map(|g| {
            g.edges
                .iter()
                .map(|((a, _), (b, _))| corr[a * p + b])
                .product::<f64>()
        })
        .collect::<KahanSum>()
        .value())
}

fn require_exact(e: &HermiteExpansion) -> Result<()> {
    if !e.is_exact() {
        return Err(Error::OutOfRange(
            "exact moments need a finite polynomial expansion".into(),
        ));
    }
    Ok(())
}

fn site_corr(hurst: &HurstVector, a: &[usize], b: &[usize]) -> f64 {
    hurst
        .iter()
        .zip(a.iter().zip(b))
        .map(|(h, (&x, &y))| fgn_acf(h, x as i64 - y as i64))
        .product()
}

/// Nondecreasing `p`-tuples of site indices below `n`.
fn multisets(n: usize, p: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; p];
    fn rec(n: usize, at: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if at == cur.len() {
            out.push(cur.clone());
            return;
        }
        for s in start..n {
            cur[at] = s;
            rec(n, at + 1, s, cur, out);
        }
    }
    rec(n, 0, 0, &mut cur, &mut out);
    out
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Every order tuple over the support of `e` with its coefficient product
/// and class table, plus the class count per site tuple.
fn tuple_classes(e: &HermiteExpansion, p: usize) -> Result<(Vec<(f64, DiagramClasses)>, f64)> {
    let support: Vec<(usize, f64)> = e.coeffs().iter().map(|(&k, &a)| (k, a)).collect();
    let mut tuples: Vec<(f64, DiagramClasses)> = Vec::new();
    let mut work_per_site = 0.0;
    let mut idx = vec![0usize; p];
    loop {
        let orders: Vec<usize> = idx.iter().map(|&i| support[i].0).collect();
        let coef: f64 = idx.iter().map(|&i| support[i].1).product();
        let classes = DiagramClasses::new(&orders)?;
        work_per_site += classes.len().max(1) as f64;
        if !classes.is_empty() {
            tuples.push((coef, classes));
        }
        let mut pos = 0;
        while pos < p {
            idx[pos] += 1;
            if idx[pos] < support.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
        if pos == p {
            break;
        }
    }
    Ok((tuples, work_per_site))
}

/// Number of diagrams behind the `p`-th moment of a sum of `f(Z_i)`,
/// summed over the order tuples drawn from the expansion.
pub fn variation_diagram_count(e: &HermiteExpansion, p: usize) -> Result<f64> {
    require_exact(e)?;
    Ok(tuple_classes(e, p)?.0.iter().map(|(_, cl)| cl.diagram_count()).sum())
}

/// Exact `E[(<l>^{-1/2} sum_{1 <= i <= l} f(Z_i))^p]` for the standardized
/// increment field with Hurst vector `H`.
pub fn exact_variation_moment(
    hurst: &HurstVector,
    l: &LatticeShape,
    e: &HermiteExpansion,
    p: usize,
    cap: f64,
) -> Result<f64> {
    require_exact(e)?;
    if hurst.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            got: hurst.dim(),
        });
    }
    if p == 0 {
        return Ok(1.0);
    }
    let sites = l.len();
    if p == 1 {
        return Ok(0.0);
    }
    let (tuples, work_per_site) = tuple_classes(e, p)?;
    let estimate = binomial(sites + p - 1, p) * work_per_site;
    if estimate > cap {
        return Err(Error::GuardCap { estimate, cap });
    }
    let coords: Vec<Vec<usize>> = (0..sites).map(|s| l.unravel(s)).collect();
    let pf = factorial(p);
    let terms: Vec<f64> = multisets(sites, p)
        .par_iter()
        .map(|ms| {
            let mut corr = vec![0.0; p * p];
            for a in 0..p {
                for b in 0..p {
                    corr[a * p + b] = if a == b {
                        1.0
                    } else {
                        site_corr(hurst, &coords[ms[a]], &coords[ms[b]])
                    };
                }
            }
            let mut mult = pf;
            let mut run = 1;
            for w in 1..=p {
                if w < p && ms[w] == ms[w - 1] {
                    run += 1;
                } else {
                    mult /= factorial(run);
                    run = 1;
                }
            }
            let inner: KahanSum = tuples.iter().map(|(c, cl)| c * cl.evaluate(&corr)).collect();
            mult * inner.value()
        })
        .collect();
    let total: KahanSum = terms.into_iter().collect();
    Ok(total.value() / (sites as f64).powf(p as f64 / 2.0))
}

/// `sum_{|j| < m} (m - |j|) r_H(j)^k`, the number of ordered site pairs on
/// one axis weighted by their correlation power.
fn weighted_lag_sum(h: f64, m: usize, k: usize) -> f64 {
    let mut acc = KahanSum::new();
    acc.add(m as f64);
    for j in 1..m {
        acc.add(2.0 * (m - j) as f64 * fgn_acf(h, j as i64).powi(k as i32));
    }
    acc.value()
}

/// Exact `Var(sum_{1 <= i <= m} f(Z_i)) = sum_k k! a_k^2 prod_nu
/// sum_{|j|<m_nu} (m_nu - |j|) r(j)^k`.
pub fn exact_variance(hurst: &HurstVector, m: &LatticeShape, e: &HermiteExpansion) -> Result<f64> {
    require_exact(e)?;
    if hurst.dim() != m.dim() {
        return Err(Error::DimensionMismatch {
            expected: m.dim(),
            got: hurst.dim(),
        });
    }
    Ok(e.coeffs()
        .iter()
        .map(|(&k, &a)| {
            factorial(k)
                * a
                * a
                * hurst
                    .iter()
                    .zip(m.extents())
                    .map(|(h, &mm)| weighted_lag_sum(h, mm, k))
                    .product::<f64>()
        })
        .collect::<KahanSum>()
        .value())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MomentBound {
    pub value: f64,
    /// Set when the expansion is truncated, so `C(f, p)` is only a partial
    /// sum.
    pub partial: bool,
}

/// `(2^d C(f,p)^2 prod_nu sum_{|j| < l_nu} |r(j)|^rank)^{p/2}` with
/// `C(f,p) = sum (p-1)^{k/2} sqrt(k!) |a_k|`.
pub fn moment_bound_rhs(hurst: &HurstVector, e: &HermiteExpansion, p: usize, l: &LatticeShape) -> Result<MomentBound> {
    if p < 2 {
        return Err(Error::OutOfRange("moment bound needs p >= 2".into()));
    }
    if hurst.dim() != l.dim() {
        return Err(Error::DimensionMismatch {
            expected: l.dim(),
            got: hurst.dim(),
        });
    }
    let c = e.weighted_sum((p - 1) as f64);
    let rank = e.rank() as i32;
    let lattice_sum: f64 = hurst
        .iter()
        .zip(l.extents())
        .map(|(h, &ln)| {
            1.0 + 2.0 * (1..ln).map(|j| fgn_acf(h, j as i64).abs().powi(rank)).sum::<f64>()
        })
        .product();
    let base = 2f64.powi(l.dim() as i32) * c * c * lattice_sum;
    Ok(MomentBound {
        value: base.powf(p as f64 / 2.0),
        partial: !e.is_exact(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{expand, gaussian_moment, hermite_values, power_expansion};
    use crate::numerics::gauss_hermite_probabilists;

    fn ident(p: usize) -> Vec<f64> {
        let mut c = vec![0.0; p * p];
        for a in 0..p {
            c[a * p + a] = 1.0;
        }
        c
    }

    #[test]
    fn enumeration_examples() {
        let cap = DEFAULT_GUARD_CAP;
        assert_eq!(enumerate_diagrams(&[1, 1], cap).unwrap().len(), 1);
        assert_eq!(enumerate_diagrams(&[2, 2], cap).unwrap().len(), 2);
        assert_eq!(enumerate_diagrams(&[1, 2], cap).unwrap().len(), 0);
        assert_eq!(enumerate_diagrams(&[1, 1, 1, 1], cap).unwrap().len(), 3);
        assert!(enumerate_diagrams(&[2], cap).is_err());
        assert!(matches!(enumerate_diagrams(&[10, 10, 10, 10], 1e3), Err(Error::GuardCap { .. })));
    }

    #[test]
    fn enumeration_is_deterministic_and_valid() {
        let a = enumerate_diagrams(&[2, 1, 3], DEFAULT_GUARD_CAP).unwrap();
        let b = enumerate_diagrams(&[2, 1, 3], DEFAULT_GUARD_CAP).unwrap();
        assert_eq!(a, b);
        for g in &a {
            let mut degree = [vec![0; 2], vec![0; 1], vec![0; 3]];
            for &((j, x), (k, y)) in &g.edges {
                assert_ne!(j, k);
                degree[j][x] += 1;
                degree[k][y] += 1;
            }
            assert!(degree.iter().flatten().all(|&d| d == 1));
        }
        let mut sorted = a.clone();
        sorted.dedup();
        assert_eq!(sorted.len(), a.len());
    }

    #[test]
    fn pair_counts_are_factorials() {
        for k in 0..=6 {
            let n = if k == 0 { 1 } else { enumerate_diagrams(&[k, k], DEFAULT_GUARD_CAP).unwrap().len() };
            assert_eq!(n as f64, factorial(k));
            assert_eq!(DiagramClasses::new(&[k, k]).unwrap().diagram_count(), factorial(k));
        }
    }

    #[test]
    fn moment_examples() {
        let rho = 0.37;
        let c = [1.0, rho, rho, 1.0];
        assert!((diagram_moment(&[1, 1], &c).unwrap() - rho).abs() < 1e-15);
        assert!((diagram_moment(&[2, 2], &c).unwrap() - 2.0 * rho * rho).abs() < 1e-15);
        assert_eq!(diagram_moment(&[2, 2, 2, 2], &ident(4)).unwrap(), 0.0);
        assert!(diagram_moment(&[1, 1], &[1.0, 0.5, 0.4, 1.0]).is_err());
        assert!(diagram_moment(&[1, 1], &[1.0, 1.5, 1.5, 1.0]).is_err());
        assert!(diagram_moment(&[1, 1], &[0.9, 0.5, 0.5, 1.0]).is_err());
    }

    #[test]
    fn classes_agree_with_enumeration() {
        let corr = [
            1.0, 0.3, -0.2, 0.1, //
            0.3, 1.0, 0.5, -0.4, //
            -0.2, 0.5, 1.0, 0.25, //
            0.1, -0.4, 0.25, 1.0,
        ];
        for orders in [[1, 1, 1, 1], [2, 2, 2, 2], [4, 2, 3, 1], [3, 3, 2, 4], [4, 4, 4, 4]] {
            let a = diagram_moment(&orders, &corr).unwrap();
            let b = diagram_moment_by_enumeration(&orders, &corr, DEFAULT_GUARD_CAP).unwrap();
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0), "{orders:?}: {a} vs {b}");
        }
    }

    #[test]
    fn all_ones_matches_single_variable_quadrature() {
        let (x, w) = gauss_hermite_probabilists(200);
        for orders in [vec![2, 2, 2], vec![1, 3, 4], vec![3, 3, 3, 3], vec![2, 4, 6], vec![1, 1, 5, 5]] {
            let p = orders.len();
            let ones = vec![1.0; p * p];
            let exact = diagram_moment(&orders, &ones).unwrap();
            let kmax = *orders.iter().max().unwrap();
            let quad: f64 = x
                .iter()
                .zip(&w)
                .map(|(&u, &wi)| {
                    let h = hermite_values(kmax, u);
                    wi * orders.iter().map(|&k| h[k]).product::<f64>()
                })
                .sum();
            assert!((exact - quad).abs() <= 1e-8 * quad.abs().max(1.0), "{orders:?}: {exact} vs {quad}");
        }
    }

    #[test]
    fn variation_moment_examples() {
        let h1 = HurstVector::new(vec![0.5]).unwrap();
        let one = LatticeShape::new(vec![1]).unwrap();
        let p2 = HermiteExpansion::hermite(2).unwrap();
        let cap = DEFAULT_GUARD_CAP;
        assert!((exact_variation_moment(&h1, &one, &p2, 2, cap).unwrap() - 2.0).abs() < 1e-12);
        assert!((exact_variation_moment(&h1, &one, &p2, 4, cap).unwrap() - 60.0).abs() < 1e-10);
        let four = LatticeShape::new(vec![4]).unwrap();
        assert!((exact_variation_moment(&h1, &four, &p2, 2, cap).unwrap() - 2.0).abs() < 1e-12);
        let approx = expand(|u| u * u - 1.0, 4, 200).unwrap();
        assert!(exact_variation_moment(&h1, &one, &approx, 2, cap).is_err());
    }

    #[test]
    fn variance_matches_second_moment() {
        for h in [0.3, 0.75, 0.9] {
            let hv = HurstVector::new(vec![h, 0.6]).unwrap();
            let l = LatticeShape::new(vec![3, 2]).unwrap();
            let e = power_expansion(4).unwrap();
            let m2 = exact_variation_moment(&hv, &l, &e, 2, DEFAULT_GUARD_CAP).unwrap();
            let var = exact_variance(&hv, &l, &e).unwrap() / l.len() as f64;
            assert!((m2 - var).abs() <= 1e-10 * var, "h={h}: {m2} vs {var}");
        }
    }

    #[test]
    fn single_site_moments_of_rho() {
        // E[rho_2(Y)^3] = E[(Y^2-1)^3] = 15 - 9 + 3 - 1 = 8
        let h = HurstVector::new(vec![0.7]).unwrap();
        let one = LatticeShape::new(vec![1]).unwrap();
        let e = power_expansion(2).unwrap();
        assert!((exact_variation_moment(&h, &one, &e, 3, DEFAULT_GUARD_CAP).unwrap() - 8.0).abs() < 1e-10);
        let e = power_expansion(4).unwrap();
        let var = gaussian_moment(8) - 9.0;
        assert!((exact_variation_moment(&h, &one, &e, 2, DEFAULT_GUARD_CAP).unwrap() - var).abs() < 1e-9);
    }

    #[test]
    fn bound_examples() {
        let h = HurstVector::new(vec![0.5]).unwrap();
        let one = LatticeShape::new(vec![1]).unwrap();
        let p2 = HermiteExpansion::hermite(2).unwrap();
        let b = moment_bound_rhs(&h, &p2, 4, &one).unwrap();
        assert!((b.value - 1296.0).abs() < 1e-9);
        assert!(!b.partial);
        let p1 = HermiteExpansion::hermite(1).unwrap();
        for d in 1..=3 {
            let h = HurstVector::isotropic(d, 0.5).unwrap();
            let l = LatticeShape::cube(d, 3).unwrap();
            let rhs = moment_bound_rhs(&h, &p1, 2, &l).unwrap().value;
            assert!((rhs - 2f64.powi(d as i32)).abs() < 1e-12);
            let lhs = exact_variation_moment(&h, &l, &p1, 2, DEFAULT_GUARD_CAP).unwrap();
            assert!((lhs - 1.0).abs() < 1e-12 && lhs <= rhs);
        }
    }

    #[test]
    fn guard_cap_is_a_hard_error() {
        let h = HurstVector::new(vec![0.3, 0.3]).unwrap();
        let l = LatticeShape::cube(2, 30).unwrap();
        let e = power_expansion(4).unwrap();
        assert!(matches!(
            exact_variation_moment(&h, &l, &e, 4, DEFAULT_GUARD_CAP),
            Err(Error::GuardCap { .. })
        ));
    }
}
