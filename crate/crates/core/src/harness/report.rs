//! Experiment reports: one record per statistic with its target, standard
//! error, decision rule and verdict.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::format_f64;

/// Decision rule applied to a record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum Rule {
    /// `|z| <= threshold`.
    ZTwoSided { threshold: f64 },
    /// `z > threshold`.
    ZGreater { threshold: f64 },
    /// `|empirical / target - 1| <= tol`.
    RelativeWithin { tol: f64 },
    /// `empirical <= target`.
    AtMost,
    /// `empirical >= target`.
    AtLeast,
    /// `empirical > target`.
    GreaterThan,
    /// `empirical < target`.
    LessThan,
    /// `|empirical| <= target`.
    AbsAtMost,
    /// `empirical == target` exactly.
    Equal,
    /// The `values` sequence is strictly decreasing.
    StrictlyDecreasing,
    /// The `values` sequence is strictly increasing.
    StrictlyIncreasing,
    /// Reported for reference only.
    Info,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRecord {
    pub name: String,
    pub empirical: f64,
    pub target: Option<f64>,
    pub se: Option<f64>,
    pub z: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
    #[serde(flatten)]
    pub rule: Rule,
    pub verdict: Verdict,
}

impl StatRecord {
    fn decide(mut self) -> Self {
        let e = self.empirical;
        let t = self.target.unwrap_or(f64::NAN);
        let ok = match &self.rule {
            Rule::ZTwoSided { threshold } => self.z.is_some_and(|z| z.abs() <= *threshold),
            Rule::ZGreater { threshold } => self.z.is_some_and(|z| z > *threshold),
            Rule::RelativeWithin { tol } => (e / t - 1.0).abs() <= *tol,
            Rule::AtMost => e <= t,
            Rule::AtLeast => e >= t,
            Rule::GreaterThan => e > t,
            Rule::LessThan => e < t,
            Rule::AbsAtMost => e.abs() <= t,
            Rule::Equal => e == t,
            Rule::StrictlyDecreasing => self.values.windows(2).all(|w| w[1] < w[0]),
            Rule::StrictlyIncreasing => self.values.windows(2).all(|w| w[1] > w[0]),
            Rule::Info => {
                self.verdict = Verdict::Info;
                return self;
            }
        };
        self.verdict = if ok { Verdict::Pass } else { Verdict::Fail };
        self
    }

    /// Two-sided z-test of an estimate against a target.
    pub fn z_test(name: impl Into<String>, empirical: f64, target: f64, se: f64, threshold: f64) -> Self {
        Self::with_se(name, empirical, target, se, Rule::ZTwoSided { threshold })
    }

    pub fn with_se(name: impl Into<String>, empirical: f64, target: f64, se: f64, rule: Rule) -> Self {
        let z = if se > 0.0 {
            (empirical - target) / se
        } else if empirical == target {
            0.0
        } else {
            f64::INFINITY.copysign(empirical - target)
        };
        Self {
            name: name.into(),
            empirical,
            target: Some(target),
            se: Some(se),
            z: Some(z),
            values: Vec::new(),
            rule,
            verdict: Verdict::Info,
        }
        .decide()
    }

    /// Deterministic comparison with no sampling error.
    pub fn compare(name: impl Into<String>, empirical: f64, target: f64, rule: Rule) -> Self {
        Self {
            name: name.into(),
            empirical,
            target: Some(target),
            se: None,
            z: None,
            values: Vec::new(),
            rule,
            verdict: Verdict::Info,
        }
        .decide()
    }

    /// Monotonicity check over a sequence; `empirical` holds its last entry.
    pub fn sequence(name: impl Into<String>, values: Vec<f64>, rule: Rule) -> Self {
        Self {
            name: name.into(),
            empirical: values.last().copied().unwrap_or(f64::NAN),
            target: None,
            se: None,
            z: None,
            values,
            rule,
            verdict: Verdict::Info,
        }
        .decide()
    }

    pub fn info(name: impl Into<String>, empirical: f64, se: Option<f64>) -> Self {
        Self {
            name: name.into(),
            empirical,
            target: None,
            se,
            z: None,
            values: Vec::new(),
            rule: Rule::Info,
            verdict: Verdict::Info,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict != Verdict::Fail
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical JSON of the configuration.
    pub config_hash: String,
    pub seed: u64,
    pub git_describe: Option<String>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: String,
    pub passed: bool,
    pub records: Vec<StatRecord>,
    pub note: String,
    pub provenance: Provenance,
}

pub(crate) const ENGINEERING_NOTE: &str =
    "replication counts, lattice sizes and tolerances are engineering choices; the limit theorems give no rates";

impl ExperimentReport {
    pub fn failures(&self) -> impl Iterator<Item = &StatRecord> {
        self.records.iter().filter(|r| !r.passed())
    }

    pub fn record(&self, name: &str) -> Option<&StatRecord> {
        self.records.iter().find(|r| r.name == name)
    }

    /// JSON with the wall-time field zeroed, for reproducibility checks.
    pub fn to_json_without_timing(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.provenance.wall_time_s = 0.0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }

    /// Flat CSV, one row per statistic.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "experiment,name,empirical,target,se,z,rule,verdict")?;
        let opt = |v: Option<f64>| v.map(format_f64).unwrap_or_default();
        for r in &self.records {
            let rule = serde_json::to_value(&r.rule)?;
            let rule = rule["rule"].as_str().unwrap_or_default().to_string();
            let verdict = serde_json::to_value(r.verdict)?;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                csv_field(&self.name),
                csv_field(&r.name),
                format_f64(r.empirical),
                opt(r.target),
                opt(r.se),
                opt(r.z),
                rule,
                verdict.as_str().unwrap_or_default()
            )?;
        }
        Ok(())
    }
}

/// Quote a CSV field when it holds a separator, quote or line break.
fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rules_decide_verdicts() {
        assert_eq!(StatRecord::z_test("a", 1.0, 0.0, 0.5, 4.0).verdict, Verdict::Pass);
        assert_eq!(StatRecord::z_test("a", 3.0, 0.0, 0.5, 4.0).verdict, Verdict::Fail);
        assert_eq!(StatRecord::compare("b", 1.05, 1.0, Rule::RelativeWithin { tol: 0.1 }).verdict, Verdict::Pass);
        assert_eq!(StatRecord::compare("b", 0.0, 0.0, Rule::Equal).verdict, Verdict::Pass);
        assert_eq!(StatRecord::sequence("c", vec![3.0, 2.0, 1.0], Rule::StrictlyDecreasing).verdict, Verdict::Pass);
        assert_eq!(StatRecord::sequence("c", vec![3.0, 3.0], Rule::StrictlyDecreasing).verdict, Verdict::Fail);
        assert_eq!(StatRecord::info("d", 1.0, None).verdict, Verdict::Info);
        assert_eq!(StatRecord::z_test("e", 1.0, 1.0, 0.0, 4.0).z, Some(0.0));
        assert_eq!(StatRecord::with_se("f", 2.0, 0.0, 0.1, Rule::ZGreater { threshold: 4.0 }).verdict, Verdict::Pass);
    }

    #[test]
    fn csv_quotes_names_with_commas() {
        assert_eq!(csv_field("Var U(1,1)"), "\"Var U(1,1)\"");
        assert_eq!(csv_field("plain"), "plain");
        assert_eq!(csv_field("a\"b,"), "\"a\"\"b,\"");
    }

    #[test]
    fn record_json_is_flat() {
        let r = StatRecord::z_test("var", 1.0, 1.0, 0.1, 4.0);
        let v = serde_json::to_value(&r).unwrap();
        assert_eq!(v["rule"], "z-two-sided");
        assert_eq!(v["threshold"], 4.0);
        assert_eq!(v["verdict"], "pass");
        let back: StatRecord = serde_json::from_value(v).unwrap();
        assert_eq!(back, r);
    }
}
