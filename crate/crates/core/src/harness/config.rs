//! Experiment configuration files and their validation.

use std::collections::BTreeMap;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fgn::{HurstVector, SamplerOptions};
use crate::hermite::{power_expansion, HermiteExpansion};
use crate::lattice::LatticeShape;
use crate::variations::Functional;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Empirical covariances of sampled sheets and increment fields.
    Covariance,
    Clt,
    Nclt,
    Flln,
    MomentBound,
    OracleAgreement,
    BetaExplosion,
    Interpolation,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::Covariance => "covariance",
            ExperimentKind::Clt => "clt",
            ExperimentKind::Nclt => "nclt",
            ExperimentKind::Flln => "flln",
            ExperimentKind::MomentBound => "moment-bound",
            ExperimentKind::OracleAgreement => "oracle-agreement",
            ExperimentKind::BetaExplosion => "beta-explosion",
            ExperimentKind::Interpolation => "interpolation",
        }
    }

    fn stochastic(self) -> bool {
        !matches!(self, ExperimentKind::MomentBound | ExperimentKind::BetaExplosion)
    }
}

/// Schema stand-in for a Hermite expansion object.
#[derive(JsonSchema)]
#[allow(dead_code)]
#[serde(deny_unknown_fields)]
struct ExpansionSchema {
    /// Map from Hermite index (as a decimal string) to coefficient.
    coeffs: BTreeMap<String, f64>,
    rank: Option<usize>,
    truncation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum FunctionalSpec {
    /// Finite Hermite expansion `sum a_k P_k`.
    Hermite(#[schemars(with = "ExpansionSchema")] HermiteExpansion),
    /// Centered power `y^p - E[Y^p]`.
    Power(usize),
}

impl FunctionalSpec {
    pub fn expansion(&self) -> Result<HermiteExpansion> {
        match self {
            FunctionalSpec::Hermite(e) => Ok(e.clone()),
            FunctionalSpec::Power(p) => power_expansion(*p),
        }
    }

    pub fn functional(&self) -> Functional {
        match self {
            FunctionalSpec::Hermite(e) => Functional::Hermite(e.clone()),
            FunctionalSpec::Power(p) => Functional::CenteredPower(*p),
        }
    }

    pub fn label(&self) -> String {
        match self {
            FunctionalSpec::Hermite(e) => {
                let terms: Vec<String> = e.coeffs().iter().map(|(k, a)| format!("{a}*P{k}")).collect();
                terms.join("+")
            }
            FunctionalSpec::Power(p) => format!("rho{p}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Two-sided z threshold for agreement tests.
    #[serde(default = "d_z")]
    pub z_threshold: f64,
    /// Relative tolerance for variance-versus-limit checks.
    #[serde(default = "d_rel")]
    pub rel_tol: f64,
    /// Lower bound on excess kurtosis in the non-central regime.
    #[serde(default = "d_kurt")]
    pub kurtosis_min: f64,
    /// Lower quantile used for the bootstrap confidence bound.
    #[serde(default = "d_lcb")]
    pub lcb_quantile: f64,
    #[serde(default = "d_boot")]
    pub bootstrap_resamples: usize,
    /// Ratio between the measured and the predicted lower envelope of the
    /// remainder sup.
    #[serde(default = "d_beta")]
    pub beta_lower_factor: f64,
    #[serde(default = "d_fixed")]
    pub fixed_point_tol: f64,
    /// Minimum ratio last/first of the control coupling statistic.
    #[serde(default = "d_ratio")]
    pub control_ratio_min: f64,
    /// Work cap for the exact moment oracle.
    #[serde(default = "d_cap")]
    pub guard_cap: f64,
    /// Truncation tolerance for the correlation-power series.
    #[serde(default = "d_tail")]
    pub tail_tol: f64,
    #[serde(default = "d_boundary")]
    pub boundary_tol: f64,
    /// Optional per-shape upper bounds on the median sup-distance of the
    /// law of large numbers experiment.
    #[serde(default)]
    pub flln: Option<Vec<f64>>,
}

fn d_z() -> f64 {
    4.0
}
fn d_rel() -> f64 {
    0.1
}
fn d_kurt() -> f64 {
    0.5
}
fn d_lcb() -> f64 {
    0.025
}
fn d_boot() -> usize {
    1000
}
fn d_beta() -> f64 {
    0.25
}
fn d_fixed() -> f64 {
    1e-12
}
fn d_ratio() -> f64 {
    0.5
}
fn d_cap() -> f64 {
    1e7
}
fn d_tail() -> f64 {
    1e-10
}
fn d_boundary() -> f64 {
    1e-12
}
fn d_reps() -> usize {
    2
}
fn d_fixed_samples() -> usize {
    1000
}

impl Default for Tolerances {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

/// One experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Label; also keys the random streams of the experiment.
    pub name: String,
    pub kind: ExperimentKind,
    /// Hurst exponent per axis.
    pub hurst: Vec<f64>,
    /// Lattice sequence: cells per axis for each level.
    #[serde(default)]
    pub shapes: Vec<Vec<usize>>,
    #[serde(default)]
    pub functional: Option<FunctionalSpec>,
    #[serde(default = "d_reps")]
    pub replications: usize,
    pub seed: u64,
    /// Evaluation points in `[0, 1]^d`.
    #[serde(default)]
    pub t_points: Vec<Vec<f64>>,
    #[serde(default)]
    pub tolerances: Tolerances,
    /// Moment orders for oracle experiments.
    #[serde(default)]
    pub moment_orders: Vec<usize>,
    /// Lags of the increment covariance checks.
    #[serde(default)]
    pub lags: Vec<Vec<i64>>,
    /// Coarse levels `n` of the nested coupling statistic; each `2n` must
    /// divide the first shape.
    #[serde(default)]
    pub coupling_levels: Vec<usize>,
    /// Hurst vector of the central-regime control run.
    #[serde(default)]
    pub control_hurst: Option<Vec<f64>>,
    /// Small lattice on which the exact finite-size kurtosis is compared
    /// with simulation.
    #[serde(default)]
    pub oracle_lattice: Option<Vec<usize>>,
    #[serde(default = "d_fixed_samples")]
    pub fixed_point_samples: usize,
    #[serde(default)]
    pub sampler: SamplerOptions,
}

/// A named list of experiments run together.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct Suite {
    pub name: String,
    pub experiments: Vec<ExperimentConfig>,
}

/// Either a single experiment or a suite.
#[derive(JsonSchema)]
#[serde(untagged)]
#[allow(dead_code)]
enum ConfigFile {
    Single(Box<ExperimentConfig>),
    Suite(Suite),
}

/// JSON schema accepted by [`parse_config`].
pub fn config_schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(ConfigFile)).expect("schema serializes")
}

/// Parse a single experiment or a suite, reporting the JSON pointer of the
/// first offending field.
pub fn parse_config(text: &str) -> Result<Suite> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::config("", format!("invalid JSON: {e}")))?;
    let is_suite = value.get("experiments").is_some();
    let suite = if is_suite {
        deserialize_at::<Suite>(value, "")?
    } else {
        let single = deserialize_at::<ExperimentConfig>(value, "")?;
        Suite {
            name: single.name.clone(),
            experiments: vec![single],
        }
    };
    for (i, cfg) in suite.experiments.iter().enumerate() {
        let prefix = if is_suite {
            format!("/experiments/{i}")
        } else {
            String::new()
        };
        cfg.validate().map_err(|e| match e {
            Error::Config { pointer, message } => Error::config(format!("{prefix}{pointer}"), message),
            other => other,
        })?;
    }
    Ok(suite)
}

fn deserialize_at<T: serde::de::DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let pointer = path_to_pointer(e.path());
        Error::config(format!("{prefix}{pointer}"), e.inner().to_string())
    })
}

fn path_to_pointer(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut out = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => out.push_str(&format!("/{index}")),
            Segment::Map { key } => out.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => out.push_str(&format!("/{variant}")),
            Segment::Unknown => {}
        }
    }
    out
}

impl ExperimentConfig {
    pub fn hurst_vector(&self) -> Result<HurstVector> {
        HurstVector::new(self.hurst.clone()).map_err(|e| match e {
            Error::InvalidHurst { axis, value } => {
                Error::config(format!("/hurst/{axis}"), format!("{value} is outside (0, 1)"))
            }
            other => Error::config("/hurst", other.to_string()),
        })
    }

    pub fn lattice_shapes(&self) -> Result<Vec<LatticeShape>> {
        self.shapes
            .iter()
            .enumerate()
            .map(|(i, s)| LatticeShape::new(s.clone()).map_err(|e| Error::config(format!("/shapes/{i}"), e.to_string())))
            .collect()
    }

    pub fn functional_spec(&self) -> Result<&FunctionalSpec> {
        self.functional
            .as_ref()
            .ok_or_else(|| Error::config("/functional", format!("required for kind {}", self.kind.as_str())))
    }

    pub fn validate(&self) -> Result<()> {
        let hurst = self.hurst_vector()?;
        let d = hurst.dim();
        let shapes = self.lattice_shapes()?;
        if shapes.is_empty() {
            return Err(Error::config("/shapes", "at least one lattice shape is required"));
        }
        for (i, s) in shapes.iter().enumerate() {
            if s.dim() != d {
                return Err(Error::config(format!("/shapes/{i}"), format!("expected {d} axes, got {}", s.dim())));
            }
        }
        if self.kind.stochastic() && self.replications < 2 {
            return Err(Error::config("/replications", "need at least 2 replications"));
        }
        for (i, t) in self.t_points.iter().enumerate() {
            if t.len() != d {
                return Err(Error::config(format!("/t_points/{i}"), format!("expected {d} coordinates")));
            }
            if let Some(j) = t.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::config(format!("/t_points/{i}/{j}"), "coordinate outside [0, 1]"));
            }
        }
        let tol = &self.tolerances;
        if !(tol.z_threshold > 0.0) {
            return Err(Error::config("/tolerances/z_threshold", "must be positive"));
        }
        if !(tol.rel_tol > 0.0) {
            return Err(Error::config("/tolerances/rel_tol", "must be positive"));
        }
        if !(tol.lcb_quantile > 0.0 && tol.lcb_quantile < 0.5) {
            return Err(Error::config("/tolerances/lcb_quantile", "must lie in (0, 0.5)"));
        }
        if tol.bootstrap_resamples < 2 {
            return Err(Error::config("/tolerances/bootstrap_resamples", "need at least 2 resamples"));
        }
        if let Some(f) = &tol.flln {
            if f.len() != shapes.len() {
                return Err(Error::config("/tolerances/flln", "one bound per shape is required"));
            }
        }
        match self.kind {
            ExperimentKind::Covariance => {
                if self.t_points.is_empty() && self.lags.is_empty() {
                    return Err(Error::config("/t_points", "covariance needs t_points or lags"));
                }
                for (i, l) in self.lags.iter().enumerate() {
                    if l.len() != d {
                        return Err(Error::config(format!("/lags/{i}"), format!("expected {d} components")));
                    }
                }
            }
            ExperimentKind::Clt | ExperimentKind::Nclt | ExperimentKind::Interpolation => {
                let spec = self.functional_spec()?;
                spec.expansion().map_err(|e| Error::config("/functional", e.to_string()))?;
                if self.kind == ExperimentKind::Interpolation && !matches!(spec, FunctionalSpec::Power(_)) {
                    return Err(Error::config("/functional", "interpolation needs a power functional"));
                }
                if self.kind == ExperimentKind::Nclt {
                    let m = &shapes[0];
                    for (i, &n) in self.coupling_levels.iter().enumerate() {
                        if n == 0 || m.extents().iter().any(|&e| e % (2 * n) != 0) {
                            return Err(Error::config(
                                format!("/coupling_levels/{i}"),
                                format!("2*{n} must divide every extent of the first shape"),
                            ));
                        }
                    }
                    if let Some(h) = &self.control_hurst {
                        if h.len() != d {
                            return Err(Error::config("/control_hurst", format!("expected {d} components")));
                        }
                        HurstVector::new(h.clone()).map_err(|e| Error::config("/control_hurst", e.to_string()))?;
                    }
                    if let Some(l) = &self.oracle_lattice {
                        if l.len() != d {
                            return Err(Error::config("/oracle_lattice", format!("expected {d} components")));
                        }
                    }
                }
            }
            ExperimentKind::Flln => {
                if !matches!(self.functional_spec()?, FunctionalSpec::Power(p) if *p >= 1) {
                    return Err(Error::config("/functional", "flln needs a power functional"));
                }
            }
            ExperimentKind::MomentBound | ExperimentKind::OracleAgreement => {
                let e = self
                    .functional_spec()?
                    .expansion()
                    .map_err(|e| Error::config("/functional", e.to_string()))?;
                if !e.is_exact() {
                    return Err(Error::config("/functional", "oracle needs a finite expansion"));
                }
                if self.moment_orders.is_empty() {
                    return Err(Error::config("/moment_orders", "at least one order is required"));
                }
                if let Some(i) = self.moment_orders.iter().position(|&p| p < 2) {
                    return Err(Error::config(format!("/moment_orders/{i}"), "orders must be >= 2"));
                }
            }
            ExperimentKind::BetaExplosion => {
                match self.functional_spec()? {
                    FunctionalSpec::Power(p) if p % 2 == 0 => {}
                    _ => return Err(Error::config("/functional", "beta explosion needs an even power")),
                }
                for (i, s) in shapes.iter().enumerate() {
                    if s.extents().windows(2).any(|w| w[0] != w[1]) {
                        return Err(Error::config(format!("/shapes/{i}"), "shape must be a cube (n, ..., n)"));
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"name":"x","kind":"clt","hurst":[0.3,0.6],"shapes":[[8,8]],
        "functional":{"hermite":{"coeffs":{"2":1.0}}},"replications":10,"seed":1}"#;

    #[test]
    fn parses_single_and_suite() {
        let s = parse_config(MINIMAL).unwrap();
        assert_eq!(s.experiments.len(), 1);
        assert_eq!(s.experiments[0].tolerances.z_threshold, 4.0);
        assert_eq!(s.experiments[0].tolerances.bootstrap_resamples, 1000);
        let suite = format!(r#"{{"name":"s","experiments":[{MINIMAL},{MINIMAL}]}}"#);
        assert_eq!(parse_config(&suite).unwrap().experiments.len(), 2);
    }

    #[test]
    fn errors_carry_json_pointers() {
        let bad = MINIMAL.replace("\"replications\":10", "\"replications\":\"ten\"");
        match parse_config(&bad) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/replications"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("[0.3,0.6]", "[0.3,1.2]");
        match parse_config(&bad) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/hurst/1"),
            other => panic!("{other:?}"),
        }
        let bad = MINIMAL.replace("\"seed\":1", "\"seed\":1,\"extra\":2");
        assert!(matches!(parse_config(&bad), Err(Error::Config { .. })));
        let suite = format!(
            r#"{{"name":"s","experiments":[{MINIMAL},{}]}}"#,
            MINIMAL.replace("[[8,8]]", "[[8]]")
        );
        match parse_config(&suite) {
            Err(Error::Config { pointer, .. }) => assert_eq!(pointer, "/experiments/1/shapes/0"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_mentions_every_kind() {
        let schema = config_schema().to_string();
        for k in ["covariance", "clt", "nclt", "flln", "moment-bound", "oracle-agreement", "beta-explosion", "interpolation"] {
            assert!(schema.contains(k), "{k}");
        }
    }
}
