//! Monte Carlo experiments checking the limit theorems at desk scale.
//!
//! Replication `r` of an experiment draws from stream
//! `stream_id("<name>/<label>", r)` of the configured seed, and per
//! replication results are gathered by index before any reduction, so a
//! report depends only on the configuration and never on the thread count.

pub mod config;
pub mod report;
pub mod stats;

use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fgn::{aggregate_increments, fbs_covariance, fgn_acf, FieldSampler, HurstVector};
use crate::hermite::{gaussian_moment, HermiteExpansion};
use crate::lattice::{Anchor, LatticeField, LatticeShape};
use crate::limits::{classify_regime, hurst_shift, lambda_constant, limit_covariance, scaling_factor, Regime};
use crate::moments::{exact_variation_moment, moment_bound_rhs};
use crate::rng::{stream_id, GaussianStream, SeedSpec};
use crate::variations::{
    fluctuation, generalized_variation, multilinear_interpolate, piecewise_lookup, power_limit, power_variation,
    rescaled_variation, EvalMode, Functional,
};

pub use config::{config_schema, parse_config, ExperimentConfig, ExperimentKind, FunctionalSpec, Suite, Tolerances};
pub use report::{ExperimentReport, Provenance, Rule, StatRecord, Verdict};

use stats::{bootstrap, bootstrap_se, correlation, excess_kurtosis, gather, mean, mean_se, median, quantile, skewness};

/// Run one experiment on a pool of `threads` workers.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> Result<ExperimentReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::OutOfRange(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let ctx = Ctx { cfg, pool: &pool };
    let records = pool.install(|| match cfg.kind {
        ExperimentKind::Covariance => ctx.covariance(),
        ExperimentKind::Clt => ctx.clt(),
        ExperimentKind::Nclt => ctx.nclt(),
        ExperimentKind::Flln => ctx.flln(),
        ExperimentKind::MomentBound => ctx.moment_bound(),
        ExperimentKind::OracleAgreement => ctx.oracle_agreement(),
        ExperimentKind::BetaExplosion => ctx.beta_explosion(),
        ExperimentKind::Interpolation => ctx.interpolation(),
    })?;
    let wall_time_s = start.elapsed().as_secs_f64();
    Ok(ExperimentReport {
        name: cfg.name.clone(),
        kind: cfg.kind.as_str().to_string(),
        passed: records.iter().all(StatRecord::passed),
        records,
        note: report::ENGINEERING_NOTE.to_string(),
        provenance: Provenance {
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
            git_describe: None,
            wall_time_s,
        },
    })
}

pub fn run_suite(suite: &Suite, threads: usize) -> Result<Vec<ExperimentReport>> {
    suite.experiments.iter().map(|cfg| run_experiment(cfg, threads)).collect()
}

/// Hex SHA-256 of the canonical JSON serialization of a configuration.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let canonical = serde_json::to_string(cfg)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    pool: &'a rayon::ThreadPool,
}

fn fmt_point(t: &[f64]) -> String {
    let parts: Vec<String> = t.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(","))
}

fn fmt_shape(m: &LatticeShape) -> String {
    let parts: Vec<String> = m.extents().iter().map(|v| v.to_string()).collect();
    format!("[{}]", parts.join("x"))
}

/// Lattice index of a point that must sit on the grid `i/m`.
fn lattice_index(t: &[f64], m: &LatticeShape) -> Result<Vec<usize>> {
    t.iter()
        .zip(m.extents())
        .map(|(&tv, &mv)| {
            let x = tv * mv as f64;
            let i = x.round();
            if (x - i).abs() > 1e-9 || !(0.0..=1.0).contains(&tv) {
                Err(Error::OffLattice(t.to_vec()))
            } else {
                Ok(i as usize)
            }
        })
        .collect()
}

fn column(rows: &[Vec<f64>], j: usize) -> Vec<f64> {
    rows.iter().map(|r| r[j]).collect()
}

impl Ctx<'_> {
    fn tol(&self) -> &Tolerances {
        &self.cfg.tolerances
    }

    fn seed(&self, label: &str, index: u64) -> SeedSpec {
        SeedSpec::new(self.cfg.seed, stream_id(&format!("{}/{}", self.cfg.name, label), index))
    }

    /// Evaluate `f` for every replication in parallel, keeping index order.
    fn replicate<T, F>(&self, label: &str, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(SeedSpec) -> Result<T> + Sync,
    {
        let n = self.cfg.replications;
        self.pool.install(|| {
            (0..n)
                .into_par_iter()
                .map(|r| {
                    log::debug!("{}/{label}: replication {r}", self.cfg.name);
                    f(self.seed(label, r as u64))
                })
                .collect()
        })
    }

    fn sampler(&self, hurst: &HurstVector, m: &LatticeShape) -> Result<FieldSampler> {
        FieldSampler::new(hurst, m, &self.cfg.sampler)
    }

    fn t_points(&self) -> Vec<Vec<f64>> {
        if self.cfg.t_points.is_empty() {
            vec![vec![1.0; self.cfg.hurst.len()]]
        } else {
            self.cfg.t_points.clone()
        }
    }

    fn boot_seed(&self, stat: &str) -> SeedSpec {
        self.seed(&format!("bootstrap/{stat}"), 0)
    }

    /// Bootstrap replicates of a one-sample statistic.
    fn boot(&self, stat: &str, xs: &[f64], f: fn(&[f64]) -> f64) -> Vec<f64> {
        bootstrap(xs.len(), self.tol().bootstrap_resamples, self.boot_seed(stat), |idx| f(&gather(xs, idx)))
    }

    fn normality_records(&self, label: &str, xs: &[f64], out: &mut Vec<StatRecord>) {
        let z = self.tol().z_threshold;
        let name = format!("skewness {label}");
        let se = bootstrap_se(&self.boot(&name, xs, skewness));
        out.push(StatRecord::z_test(name, skewness(xs), 0.0, se, z));
        let name = format!("excess kurtosis {label}");
        let se = bootstrap_se(&self.boot(&name, xs, excess_kurtosis));
        out.push(StatRecord::z_test(name, excess_kurtosis(xs), 0.0, se, z));
    }

    fn covariance(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let hurst = cfg.hurst_vector()?;
        let m = &cfg.lattice_shapes()?[0];
        let sampler = self.sampler(&hurst, m)?;
        let idx: Vec<Vec<usize>> = cfg.t_points.iter().map(|t| lattice_index(t, m)).collect::<Result<_>>()?;
        let pairs: Vec<(usize, usize)> = (0..idx.len()).flat_map(|a| (a..idx.len()).map(move |b| (a, b))).collect();
        let ext = m.extents();
        let rows = self.replicate("sample", |seed| {
            let incr = sampler.sample_increments(seed);
            let sheet = sampler.fbs_from_increments(&incr)?;
            let vals: Vec<f64> = idx.iter().map(|i| sheet.get(i)).collect::<Result<_>>()?;
            let mut row: Vec<f64> = pairs.iter().map(|&(a, b)| vals[a] * vals[b]).collect();
            for lag in &cfg.lags {
                let mut acc = 0.0;
                let mut count = 0usize;
                let mut other = vec![0usize; ext.len()];
                'sites: for (flat, &z) in incr.values().iter().enumerate() {
                    let site = m.unravel(flat);
                    for nu in 0..ext.len() {
                        let j = site[nu] as i64 + lag[nu];
                        if j < 0 || j >= ext[nu] as i64 {
                            continue 'sites;
                        }
                        other[nu] = j as usize;
                    }
                    acc += z * incr.values()[m.flat_index(&other)];
                    count += 1;
                }
                row.push(if count > 0 { acc / count as f64 } else { f64::NAN });
            }
            Ok(row)
        })?;
        let z = self.tol().z_threshold;
        let mut out = Vec::new();
        for (j, &(a, b)) in pairs.iter().enumerate() {
            let xs = column(&rows, j);
            let (s, t) = (&cfg.t_points[a], &cfg.t_points[b]);
            out.push(StatRecord::z_test(
                format!("E[Z{} Z{}]", fmt_point(s), fmt_point(t)),
                mean(&xs),
                fbs_covariance(hurst.as_slice(), s, t),
                mean_se(&xs),
                z,
            ));
        }
        for (j, lag) in cfg.lags.iter().enumerate() {
            let xs = column(&rows, pairs.len() + j);
            if xs[0].is_nan() {
                return Err(Error::config(format!("/lags/{j}"), "lag exceeds the lattice"));
            }
            let target: f64 = hurst.iter().zip(lag).map(|(h, &l)| fgn_acf(h, l)).product();
            let lag_f: Vec<f64> = lag.iter().map(|&l| l as f64).collect();
            out.push(StatRecord::z_test(
                format!("increment correlation at lag {}", fmt_point(&lag_f)),
                mean(&xs),
                target,
                mean_se(&xs),
                z,
            ));
        }
        Ok(out)
    }

    fn clt(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let tol = self.tol();
        let hurst = cfg.hurst_vector()?;
        let spec = cfg.functional_spec()?;
        let e = spec.expansion()?;
        let report = classify_regime(&hurst, e.rank(), tol.boundary_tol)?;
        if report.regime != Regime::Clt {
            return Err(Error::RegimeMismatch(format!(
                "H = {:?} with rank {} is in the non-central regime",
                cfg.hurst,
                e.rank()
            )));
        }
        let lambda = lambda_constant(&hurst, &e, tol.tail_tol)?;
        let h_tilde = hurst_shift(&hurst, e.rank(), tol.boundary_tol)?;
        let m = &cfg.lattice_shapes()?[0];
        let sampler = self.sampler(&hurst, m)?;
        let f = spec.functional();
        let ts = self.t_points();
        let rows = self.replicate("sample", |seed| {
            let incr = sampler.sample_increments(seed);
            let ub = rescaled_variation(&generalized_variation(&incr, &f)?, &hurst, e.rank(), tol.boundary_tol)?;
            let sheet = sampler.fbs_from_increments(&incr)?;
            let mut row = Vec::with_capacity(2 * ts.len());
            for t in &ts {
                row.push(ub.eval(t, EvalMode::Piecewise)?);
            }
            for t in &ts {
                row.push(piecewise_lookup(&sheet, t)?);
            }
            Ok(row)
        })?;
        let n = cfg.replications as f64;
        let mut out = vec![StatRecord::info("Lambda", lambda, None)];
        self.second_moment_records(&rows, &ts, lambda, &h_tilde, true, &mut out);
        for (j, t) in ts.iter().enumerate() {
            let u = column(&rows, j);
            let z = column(&rows, ts.len() + j);
            let label = format!("U{}", fmt_point(t));
            self.normality_records(&label, &u, &mut out);
            out.push(StatRecord::compare(
                format!("corr(Z{0}, U{0})", fmt_point(t)),
                correlation(&z, &u),
                tol.z_threshold / n.sqrt(),
                Rule::AbsAtMost,
            ));
        }
        Ok(out)
    }

    /// Variances (relative rule) and cross-covariances (z rule) of the
    /// rescaled variation against `Lambda R(s, t)`.
    fn second_moment_records(
        &self,
        rows: &[Vec<f64>],
        ts: &[Vec<f64>],
        lambda: f64,
        h_tilde: &[f64],
        relative_variance: bool,
        out: &mut Vec<StatRecord>,
    ) {
        let tol = self.tol();
        for a in 0..ts.len() {
            for b in a..ts.len() {
                let (ua, ub) = (column(rows, a), column(rows, b));
                let prod: Vec<f64> = ua.iter().zip(&ub).map(|(x, y)| x * y).collect();
                let target = lambda * limit_covariance(h_tilde, &ts[a], &ts[b]);
                let (emp, se) = (mean(&prod), mean_se(&prod));
                let rec = if a == b {
                    let name = format!("Var U{}", fmt_point(&ts[a]));
                    if relative_variance {
                        StatRecord::with_se(name, emp, target, se, Rule::RelativeWithin { tol: tol.rel_tol })
                    } else {
                        StatRecord::z_test(name, emp, target, se, tol.z_threshold)
                    }
                } else {
                    StatRecord::z_test(
                        format!("Cov(U{}, U{})", fmt_point(&ts[a]), fmt_point(&ts[b])),
                        emp,
                        target,
                        se,
                        tol.z_threshold,
                    )
                };
                out.push(rec);
            }
        }
    }

    /// Rescaled variation at `t` on the coarse lattice with `n` cells per
    /// axis, built from the fine field by block aggregation.
    fn coarse_value(
        incr: &LatticeField,
        hurst: &HurstVector,
        n: usize,
        f: &Functional,
        rank: usize,
        boundary_tol: f64,
        t: &[f64],
    ) -> Result<f64> {
        let block: Vec<usize> = incr.shape().extents().iter().map(|&e| e / n).collect();
        let coarse = if block.iter().all(|&b| b == 1) {
            incr.clone()
        } else {
            aggregate_increments(incr, &block, hurst)?
        };
        let ub = rescaled_variation(&generalized_variation(&coarse, f)?, hurst, rank, boundary_tol)?;
        ub.eval(t, EvalMode::Piecewise)
    }

    /// Per-replication squared differences `(U^{(2n)}(t) - U^{(n)}(t))^2`
    /// over the coupling levels.
    fn coupling_rows(&self, label: &str, hurst: &HurstVector, m: &LatticeShape, f: &Functional, rank: usize, t: &[f64]) -> Result<Vec<Vec<f64>>> {
        let sampler = self.sampler(hurst, m)?;
        let levels = &self.cfg.coupling_levels;
        let bt = self.tol().boundary_tol;
        self.replicate(label, |seed| {
            let incr = sampler.sample_increments(seed);
            levels
                .iter()
                .map(|&n| {
                    let a = Self::coarse_value(&incr, hurst, n, f, rank, bt, t)?;
                    let b = Self::coarse_value(&incr, hurst, 2 * n, f, rank, bt, t)?;
                    Ok((b - a) * (b - a))
                })
                .collect()
        })
    }

    fn nclt(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let tol = self.tol();
        let hurst = cfg.hurst_vector()?;
        let spec = cfg.functional_spec()?;
        let e = spec.expansion()?;
        let rank = e.rank();
        let report = classify_regime(&hurst, rank, tol.boundary_tol)?;
        if report.regime != Regime::Nclt {
            return Err(Error::RegimeMismatch(format!(
                "H = {:?} with rank {rank} is in the central regime",
                cfg.hurst
            )));
        }
        let lambda = lambda_constant(&hurst, &e, tol.tail_tol)?;
        let h_tilde = hurst_shift(&hurst, rank, tol.boundary_tol)?;
        let m = &cfg.lattice_shapes()?[0];
        let sampler = self.sampler(&hurst, m)?;
        let f = spec.functional();
        let ts = self.t_points();
        let rows = self.replicate("sample", |seed| {
            let incr = sampler.sample_increments(seed);
            let ub = rescaled_variation(&generalized_variation(&incr, &f)?, &hurst, rank, tol.boundary_tol)?;
            let sheet = sampler.fbs_from_increments(&incr)?;
            let mut row = Vec::with_capacity(2 * ts.len());
            for t in &ts {
                row.push(ub.eval(t, EvalMode::Piecewise)?);
            }
            for t in &ts {
                row.push(piecewise_lookup(&sheet, t)?);
            }
            Ok(row)
        })?;
        let mut out = vec![StatRecord::info("Lambda", lambda, None)];
        self.second_moment_records(&rows, &ts, lambda, &h_tilde, true, &mut out);
        let t0 = &ts[0];
        let u0 = column(&rows, 0);
        let label = format!("U{}", fmt_point(t0));
        if rank >= 2 {
            let name = format!("excess kurtosis {label}");
            let reps = self.boot(&name, &u0, excess_kurtosis);
            let k = excess_kurtosis(&u0);
            out.push(StatRecord::with_se(name, k, tol.kurtosis_min, bootstrap_se(&reps), Rule::GreaterThan));
            out.push(StatRecord::compare(
                format!("excess kurtosis {label} bootstrap lower bound"),
                quantile(&reps, tol.lcb_quantile),
                0.0,
                Rule::GreaterThan,
            ));
        } else {
            let z0 = column(&rows, ts.len());
            out.push(StatRecord::compare(
                format!("corr(Z{0}, U{0})", fmt_point(t0)),
                correlation(&z0, &u0),
                1.0 - tol.rel_tol,
                Rule::AtLeast,
            ));
        }
        if let Some(l) = &cfg.oracle_lattice {
            out.extend(self.oracle_moments(&hurst, &e, &f, l)?);
        }
        if !cfg.coupling_levels.is_empty() {
            let d = self.coupling_rows("coupling", &hurst, m, &f, rank, t0)?;
            let means: Vec<f64> = (0..cfg.coupling_levels.len()).map(|j| mean(&column(&d, j))).collect();
            for (j, &n) in cfg.coupling_levels.iter().enumerate() {
                out.push(StatRecord::info(
                    format!("coupling E[(U_{}-U_{})^2]{}", 2 * n, n, fmt_point(t0)),
                    means[j],
                    Some(mean_se(&column(&d, j))),
                ));
            }
            out.push(StatRecord::sequence(
                format!("coupling E[(U_2n-U_n)^2]{} over n", fmt_point(t0)),
                means,
                Rule::StrictlyDecreasing,
            ));
            if let Some(hc) = &cfg.control_hurst {
                out.extend(self.control_records(hc, &e, &f, m, t0)?);
            }
        }
        Ok(out)
    }

    fn control_records(
        &self,
        hc: &[f64],
        e: &HermiteExpansion,
        f: &Functional,
        m: &LatticeShape,
        t0: &[f64],
    ) -> Result<Vec<StatRecord>> {
        let tol = self.tol();
        let hurst = HurstVector::new(hc.to_vec())?;
        let report = classify_regime(&hurst, e.rank(), tol.boundary_tol)?;
        if report.regime != Regime::Clt {
            return Err(Error::RegimeMismatch("control Hurst vector must be in the central regime".into()));
        }
        let d = self.coupling_rows("control", &hurst, m, f, e.rank(), t0)?;
        let k = self.cfg.coupling_levels.len();
        let means: Vec<f64> = (0..k).map(|j| mean(&column(&d, j))).collect();
        let last = column(&d, k - 1);
        Ok(vec![
            StatRecord::sequence(format!("control coupling E[(U_2n-U_n)^2]{} over n", fmt_point(t0)), means.clone(), Rule::Info),
            StatRecord::compare("control coupling ratio last/first", means[k - 1] / means[0], tol.control_ratio_min, Rule::AtLeast),
            StatRecord::with_se(
                "control coupling at finest level",
                mean(&last),
                0.0,
                mean_se(&last),
                Rule::ZGreater { threshold: tol.z_threshold },
            ),
        ])
    }

    /// Second and fourth moments of the normalized sum on a small lattice
    /// against the exact diagram-formula values. Sample kurtosis itself is
    /// badly biased for near-chi-square laws, so it is reported only.
    fn oracle_moments(&self, hurst: &HurstVector, e: &HermiteExpansion, f: &Functional, l: &[usize]) -> Result<Vec<StatRecord>> {
        let tol = self.tol();
        let shape = LatticeShape::new(l.to_vec())?;
        let m2 = exact_variation_moment(hurst, &shape, e, 2, tol.guard_cap)?;
        let m4 = exact_variation_moment(hurst, &shape, e, 4, tol.guard_cap)?;
        let sampler = self.sampler(hurst, &shape)?;
        let norm = (shape.len() as f64).sqrt();
        let sums = self.replicate("oracle", |seed| {
            let incr = sampler.sample_increments(seed);
            Ok(incr.values().iter().map(|&z| f.eval(z)).sum::<f64>() / norm)
        })?;
        let tag = fmt_shape(&shape);
        let mut out = Vec::new();
        for (p, exact) in [(2, m2), (4, m4)] {
            let pw: Vec<f64> = sums.iter().map(|s| s.powi(p)).collect();
            out.push(StatRecord::z_test(format!("E[S^{p}] on {tag} vs exact"), mean(&pw), exact, mean_se(&pw), tol.z_threshold));
        }
        out.push(StatRecord::info(format!("exact excess kurtosis on {tag}"), m4 / (m2 * m2) - 3.0, None));
        out.push(StatRecord::info(format!("sample excess kurtosis on {tag}"), excess_kurtosis(&sums), None));
        Ok(out)
    }

    fn flln(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let hurst = cfg.hurst_vector()?;
        let p = match cfg.functional_spec()? {
            FunctionalSpec::Power(p) => *p,
            FunctionalSpec::Hermite(_) => unreachable!("validated"),
        };
        let mut medians = Vec::new();
        let mut out = Vec::new();
        for (si, m) in cfg.lattice_shapes()?.iter().enumerate() {
            let sampler = self.sampler(&hurst, m)?;
            let sups = self.replicate(&format!("shape{si}"), |seed| {
                let v = power_variation(&sampler.sample_increments(seed), p)?;
                let vals = v.values();
                let mut sup = 0.0f64;
                for (idx, &x) in vals.shape().indices().zip(vals.values()) {
                    let t: Vec<f64> = idx.iter().zip(m.extents()).map(|(&i, &mm)| i as f64 / mm as f64).collect();
                    sup = sup.max((x - power_limit(p, &t)).abs());
                }
                Ok(sup)
            })?;
            let med = median(&sups);
            medians.push(med);
            let name = format!("median sup|V-v| on {}", fmt_shape(m));
            match &self.tol().flln {
                Some(bounds) => out.push(StatRecord::compare(name, med, bounds[si], Rule::AtMost)),
                None => out.push(StatRecord::info(name, med, None)),
            }
        }
        out.push(StatRecord::sequence("median sup|V-v| over shapes", medians, Rule::StrictlyDecreasing));
        Ok(out)
    }

    fn bound_record(&self, hurst: &HurstVector, e: &HermiteExpansion, l: &LatticeShape, p: usize, exact: f64) -> Result<StatRecord> {
        let rhs = moment_bound_rhs(hurst, e, p, l)?;
        Ok(StatRecord::compare(
            format!("E[S^{p}] <= bound on {}", fmt_shape(l)),
            exact,
            rhs.value,
            Rule::AtMost,
        ))
    }

    fn moment_bound(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let hurst = cfg.hurst_vector()?;
        let e = cfg.functional_spec()?.expansion()?;
        let mut out = Vec::new();
        for l in cfg.lattice_shapes()? {
            for &p in &cfg.moment_orders {
                let exact = exact_variation_moment(&hurst, &l, &e, p, self.tol().guard_cap)?;
                out.push(self.bound_record(&hurst, &e, &l, p, exact)?);
            }
        }
        Ok(out)
    }

    fn oracle_agreement(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let tol = self.tol();
        let hurst = cfg.hurst_vector()?;
        let spec = cfg.functional_spec()?;
        let e = spec.expansion()?;
        let f = spec.functional();
        let mut out = Vec::new();
        for (si, l) in cfg.lattice_shapes()?.iter().enumerate() {
            let sampler = self.sampler(&hurst, l)?;
            let norm = (l.len() as f64).sqrt();
            let sums = self.replicate(&format!("shape{si}"), |seed| {
                let incr = sampler.sample_increments(seed);
                Ok(incr.values().iter().map(|&z| f.eval(z)).sum::<f64>() / norm)
            })?;
            for &p in &cfg.moment_orders {
                let exact = exact_variation_moment(&hurst, l, &e, p, tol.guard_cap)?;
                let pw: Vec<f64> = sums.iter().map(|s| s.powi(p as i32)).collect();
                out.push(StatRecord::z_test(
                    format!("E[S^{p}] on {}", fmt_shape(l)),
                    mean(&pw),
                    exact,
                    mean_se(&pw),
                    tol.z_threshold,
                ));
                out.push(self.bound_record(&hurst, &e, l, p, exact)?);
            }
        }
        Ok(out)
    }

    fn beta_explosion(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let tol = self.tol();
        let hurst = cfg.hurst_vector()?;
        let d = hurst.dim();
        let p = match cfg.functional_spec()? {
            FunctionalSpec::Power(p) => *p,
            FunctionalSpec::Hermite(_) => unreachable!("validated"),
        };
        let mut out = Vec::new();
        let mut sups = Vec::new();
        for (si, m) in cfg.lattice_shapes()?.iter().enumerate() {
            let n = m.extents()[0];
            let sampler = self.sampler(&hurst, m)?;
            let incr = sampler.sample_increments(self.seed(&format!("shape{si}"), 0));
            let v = power_variation(&incr, p)?;
            let fl = fluctuation(&v, &hurst, tol.boundary_tol)?;
            let tag = fmt_shape(m);

            // axis grid: lattice points i/n in [2/3, 1] and points just below them
            let first = (2 * n).div_ceil(3);
            let on: Vec<f64> = (first..=n).map(|i| i as f64 / n as f64).collect();
            let below: Vec<f64> = (first.max(1)..=n)
                .map(|i| (i as f64 - 1e-9) / n as f64)
                .filter(|&t| t >= 2.0 / 3.0)
                .collect();
            let on_grid = product_grid(&on, d);
            let below_grid = product_grid(&below, d);

            let mut sup = f64::NEG_INFINITY;
            for t in on_grid.iter().chain(&below_grid) {
                sup = sup.max(fl.beta(t)?);
            }
            let mut lattice_max = 0.0f64;
            for t in &on_grid {
                lattice_max = lattice_max.max(fl.beta(t)?.abs());
            }
            let envelope = (n as f64).powf(d as f64 / 2.0 - 1.0) / 2f64.powi(d as i32 - 1);
            out.push(StatRecord::compare(
                format!("sup beta on {tag}"),
                sup,
                tol.beta_lower_factor * envelope,
                Rule::AtLeast,
            ));
            out.push(StatRecord::compare(format!("max |beta| at lattice points on {tag}"), lattice_max, 0.0, Rule::Equal));
            if d == 1 {
                let rank = crate::hermite::power_expansion(p)?.rank();
                let c = scaling_factor(&hurst, rank, m, tol.boundary_tol)?.product;
                out.push(StatRecord::compare(
                    format!("sup beta vs gamma_p c^(-1/2) on {tag}"),
                    sup,
                    gaussian_moment(p) / c.sqrt(),
                    Rule::LessThan,
                ));
            }
            sups.push(sup);

            // the interpolated fluctuation carries no remainder term
            let points = m.points()?;
            let beta_lattice: Vec<f64> = points
                .indices()
                .map(|idx| {
                    let t: Vec<f64> = idx.iter().map(|&i| i as f64 / n as f64).collect();
                    fl.beta(&t)
                })
                .collect::<Result<_>>()?;
            let beta_field = LatticeField::new(points, Anchor::Points, beta_lattice)?;
            let mut lnb = 0.0f64;
            let mut gap = 0.0f64;
            for t in &below_grid {
                lnb = lnb.max(multilinear_interpolate(&beta_field, t)?.abs());
                let interp = fl.eval(t, EvalMode::Multilinear)?;
                let direct = fl.scale() * (multilinear_interpolate(v.values(), t)? - power_limit(p, t));
                gap = gap.max((interp - direct).abs() / (fl.scale() * (1.0 + direct.abs() / fl.scale())));
            }
            out.push(StatRecord::compare(format!("max |L_n beta| on {tag}"), lnb, tol.fixed_point_tol, Rule::AbsAtMost));
            out.push(StatRecord::compare(
                format!("max |L_n fluct - scale (L_n V - v_p)| / scale on {tag}"),
                gap,
                tol.fixed_point_tol,
                Rule::AbsAtMost,
            ));

            // fixed point of the interpolation on the limit v_p
            let vp_field = {
                let points = m.points()?;
                let vals: Vec<f64> = points
                    .indices()
                    .map(|idx| {
                        let t: Vec<f64> = idx.iter().map(|&i| i as f64 / n as f64).collect();
                        power_limit(p, &t)
                    })
                    .collect();
                LatticeField::new(points, Anchor::Points, vals)?
            };
            let mut rng = GaussianStream::new(self.seed(&format!("fixed-point{si}"), 0));
            let mut worst = 0.0f64;
            for _ in 0..cfg.fixed_point_samples {
                let t: Vec<f64> = (0..d).map(|_| rng.next_uniform()).collect();
                worst = worst.max((multilinear_interpolate(&vp_field, &t)? - power_limit(p, &t)).abs());
            }
            out.push(StatRecord::compare(format!("max |L_n v_p - v_p| on {tag}"), worst, tol.fixed_point_tol, Rule::AtMost));
        }
        out.push(StatRecord::sequence("sup beta over shapes", sups, Rule::StrictlyIncreasing));
        Ok(out)
    }

    fn interpolation(&self) -> Result<Vec<StatRecord>> {
        let cfg = self.cfg;
        let tol = self.tol();
        let hurst = cfg.hurst_vector()?;
        let e = cfg.functional_spec()?.expansion()?;
        let p = match cfg.functional_spec()? {
            FunctionalSpec::Power(p) => *p,
            FunctionalSpec::Hermite(_) => unreachable!("validated"),
        };
        let rank = e.rank();
        let regime = classify_regime(&hurst, rank, tol.boundary_tol)?.regime;
        let lambda = lambda_constant(&hurst, &e, tol.tail_tol)?;
        let h_tilde = hurst_shift(&hurst, rank, tol.boundary_tol)?;
        let m = &cfg.lattice_shapes()?[0];
        let sampler = self.sampler(&hurst, m)?;
        let ts = self.t_points();
        let rows = self.replicate("sample", |seed| {
            let v = power_variation(&sampler.sample_increments(seed), p)?;
            let fl = fluctuation(&v, &hurst, tol.boundary_tol)?;
            ts.iter().map(|t| fl.eval(t, EvalMode::Multilinear)).collect()
        })?;
        let mut out = vec![StatRecord::info("Lambda", lambda, None)];
        self.second_moment_records(&rows, &ts, lambda, &h_tilde, false, &mut out);
        for (j, t) in ts.iter().enumerate() {
            let u = column(&rows, j);
            let label = format!("L_n fluct{}", fmt_point(t));
            match regime {
                Regime::Clt => self.normality_records(&label, &u, &mut out),
                Regime::Nclt => out.push(StatRecord::info(format!("excess kurtosis {label}"), excess_kurtosis(&u), None)),
            }
        }
        // on the lattice both evaluation modes coincide
        let v = power_variation(&sampler.sample_increments(self.seed("lattice-check", 0)), p)?;
        let fl = fluctuation(&v, &hurst, tol.boundary_tol)?;
        let mut gap = 0.0f64;
        for idx in v.values().shape().indices() {
            let t: Vec<f64> = idx.iter().zip(m.extents()).map(|(&i, &mm)| i as f64 / mm as f64).collect();
            gap = gap.max((fl.eval(&t, EvalMode::Multilinear)? - fl.eval(&t, EvalMode::Piecewise)?).abs());
        }
        out.push(StatRecord::compare("max |interpolated - piecewise| at lattice points", gap, 0.0, Rule::Equal));
        Ok(out)
    }
}

fn product_grid(axis: &[f64], d: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |&x| {
                    let mut v = prefix.clone();
                    v.push(x);
                    v
                })
            })
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        parse_config(json).unwrap().experiments.remove(0)
    }

    #[test]
    fn covariance_smoke_is_thread_independent() {
        let c = cfg(r#"{"name":"cov","kind":"covariance","hurst":[0.3,0.7],"shapes":[[4,4]],
            "replications":400,"seed":5,"t_points":[[1,1],[0.5,0.75]],"lags":[[1,0],[1,1]]}"#);
        let a = run_experiment(&c, 1).unwrap();
        let b = run_experiment(&c, 3).unwrap();
        assert_eq!(a.to_json_without_timing().unwrap(), b.to_json_without_timing().unwrap());
        assert!(a.passed, "{:#?}", a.failures().collect::<Vec<_>>());
        assert_eq!(a.records.len(), 3 + 2);
    }

    #[test]
    fn regime_mismatch_is_reported() {
        let c = cfg(r#"{"name":"x","kind":"clt","hurst":[0.9],"shapes":[[16]],
            "functional":{"power":2},"replications":4,"seed":1}"#);
        assert!(matches!(run_experiment(&c, 1), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn off_lattice_points_are_rejected() {
        let c = cfg(r#"{"name":"x","kind":"covariance","hurst":[0.3],"shapes":[[4]],
            "replications":4,"seed":1,"t_points":[[0.3]]}"#);
        assert!(matches!(run_experiment(&c, 1), Err(Error::OffLattice(_))));
    }

    #[test]
    fn moment_bound_holds_on_small_grid() {
        let c = cfg(r#"{"name":"mb","kind":"moment-bound","hurst":[0.75,0.3],"shapes":[[2,2],[3,1]],
            "functional":{"power":4},"seed":0,"moment_orders":[2,4]}"#);
        let r = run_experiment(&c, 2).unwrap();
        assert!(r.passed);
        assert_eq!(r.records.len(), 4);
    }

    #[test]
    fn beta_explosion_small() {
        let c = cfg(r#"{"name":"beta","kind":"beta-explosion","hurst":[0.6,0.6],"shapes":[[4,4],[8,8]],
            "functional":{"power":2},"seed":3,"fixed_point_samples":100}"#);
        let r = run_experiment(&c, 1).unwrap();
        assert!(r.passed, "{:#?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn grid_product() {
        assert_eq!(product_grid(&[1.0, 2.0], 2).len(), 4);
        assert_eq!(product_grid(&[1.0, 2.0], 1), vec![vec![1.0], vec![2.0]]);
    }
}
