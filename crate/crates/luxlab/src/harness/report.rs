//! Experiment reports: trial records, aggregate summaries, verdicts, and
//! byte-stable JSON/CSV rendering with a validating re-parser.

use crate::{Error, Result};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::BTreeMap;
use std::path::Path;

/// Serializes every float, including the non-finite ones JSON has no
/// literal for, by falling back to the strings `"inf"`, `"-inf"`, `"nan"`.
fn ser_f64<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else if *v > 0.0 {
        s.serialize_str("inf")
    } else {
        s.serialize_str("-inf")
    }
}

fn de_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(v) => Ok(v),
        Raw::Text(t) => match t.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(D::Error::custom(format!("bad float `{other}`"))),
        },
    }
}

fn ser_opt_f64<S: Serializer>(v: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match v {
        None => s.serialize_none(),
        Some(x) => ser_f64(x, s),
    }
}

fn de_opt_f64<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<f64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Null,
        Num(f64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None | Some(Raw::Null) => Ok(None),
        Some(Raw::Num(v)) => Ok(Some(v)),
        Some(Raw::Text(t)) => match t.as_str() {
            "inf" => Ok(Some(f64::INFINITY)),
            "-inf" => Ok(Some(f64::NEG_INFINITY)),
            "nan" => Ok(Some(f64::NAN)),
            other => Err(D::Error::custom(format!("bad float `{other}`"))),
        },
    }
}

/// One trial's measured sides of the inequality under test.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub lhs: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub rhs: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub ratio: f64,
    /// Worst lower-bound ratio from indicator test functions; present only
    /// for two-sided experiments.
    #[serde(
        serialize_with = "ser_opt_f64",
        deserialize_with = "de_opt_f64",
        default
    )]
    pub lower_ratio: Option<f64>,
}

/// Comparison of the worst upper ratio across the two mesh levels.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Refinement {
    pub coarse_level: u32,
    pub fine_level: u32,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub coarse_max: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub fine_max: f64,
    /// `fine_max / coarse_max`.
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub factor: f64,
    /// Set when the factor exceeds 2: the constant is growing under mesh
    /// refinement, signalling a discretization artifact or a genuinely
    /// unbounded instance.
    pub flagged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub max_ratio: f64,
    #[serde(serialize_with = "ser_f64", deserialize_with = "de_f64")]
    pub median_ratio: f64,
    #[serde(
        serialize_with = "ser_opt_f64",
        deserialize_with = "de_opt_f64",
        default
    )]
    pub min_lower_ratio: Option<f64>,
    pub refinement: Refinement,
    /// Hypothesis estimates and other context recorded while gating.
    pub notes: Vec<String>,
}

/// Final report: coarse-level trials plus the cross-level summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub theorem_id: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub trials: Vec<TrialRecord>,
    pub summary: Summary,
    /// `bounded` or `violated(trial=<k>)`.
    pub verdict: String,
    pub version: String,
}

impl ExperimentReport {
    pub fn is_bounded(&self) -> bool {
        self.verdict == "bounded"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl ReportFormat {
    pub fn parse(text: &str) -> Result<Self> {
        match text.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(Error::Config(format!(
                "unknown report format `{other}`; expected json or csv"
            ))),
        }
    }

    pub fn extension(&self) -> &'static str {
        match self {
            Self::Json => "json",
            Self::Csv => "csv",
        }
    }
}

fn csv_float(v: f64) -> String {
    if v.is_finite() {
        v.to_string()
    } else if v.is_nan() {
        "nan".into()
    } else if v > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// Renders the report to its serialized bytes. The output depends only on
/// the report contents: JSON uses fixed field order and a sorted config
/// echo, CSV uses the shortest round-trip float form.
pub fn render_report(report: &ExperimentReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => {
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| Error::Parse(format!("report serialization failed: {e}")))?;
            text.push('\n');
            Ok(text)
        }
        ReportFormat::Csv => {
            let mut out = String::from("trial,lhs,rhs,ratio,lower_ratio\n");
            for t in &report.trials {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    t.trial,
                    csv_float(t.lhs),
                    csv_float(t.rhs),
                    csv_float(t.ratio),
                    t.lower_ratio.map(csv_float).unwrap_or_default()
                ));
            }
            Ok(out)
        }
    }
}

/// Writes the rendered report to `path`.
pub fn write_report(report: &ExperimentReport, format: ReportFormat, path: &Path) -> Result<()> {
    let text = render_report(report, format)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Re-parses a serialized report, checking structural validity. JSON
/// round-trips into the full report type; CSV checks the header and that
/// every row carries numeric fields.
pub fn validate_report(text: &str, format: ReportFormat) -> Result<usize> {
    match format {
        ReportFormat::Json => {
            let report: ExperimentReport = serde_json::from_str(text)
                .map_err(|e| Error::Parse(format!("invalid report JSON: {e}")))?;
            if report.theorem_id.is_empty() {
                return Err(Error::Parse("report has an empty theorem id".into()));
            }
            Ok(report.trials.len())
        }
        ReportFormat::Csv => {
            let mut lines = text.lines();
            let header = lines
                .next()
                .ok_or_else(|| Error::Parse("empty CSV report".into()))?;
            if header != "trial,lhs,rhs,ratio,lower_ratio" {
                return Err(Error::Parse(format!("unexpected CSV header `{header}`")));
            }
            let parse_float = |s: &str| -> Result<f64> {
                match s {
                    "inf" => Ok(f64::INFINITY),
                    "-inf" => Ok(f64::NEG_INFINITY),
                    "nan" => Ok(f64::NAN),
                    other => other
                        .parse()
                        .map_err(|_| Error::Parse(format!("bad CSV float `{other}`"))),
                }
            };
            let mut rows = 0usize;
            for line in lines {
                if line.is_empty() {
                    continue;
                }
                let parts: Vec<&str> = line.split(',').collect();
                if parts.len() != 5 {
                    return Err(Error::Parse(format!(
                        "CSV row has {} fields, expected 5",
                        parts.len()
                    )));
                }
                parts[0]
                    .parse::<usize>()
                    .map_err(|_| Error::Parse(format!("bad trial index `{}`", parts[0])))?;
                for part in &parts[1..4] {
                    parse_float(part)?;
                }
                if !parts[4].is_empty() {
                    parse_float(parts[4])?;
                }
                rows += 1;
            }
            Ok(rows)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_report(trials: usize) -> ExperimentReport {
        let records: Vec<TrialRecord> = (0..trials)
            .map(|t| TrialRecord {
                trial: t,
                lhs: 0.5 + t as f64,
                rhs: 1.0,
                ratio: 0.5 + t as f64,
                lower_ratio: if t % 2 == 0 { Some(1.0) } else { None },
            })
            .collect();
        let max = records
            .iter()
            .map(|r| r.ratio)
            .fold(f64::NEG_INFINITY, f64::max)
            .max(0.0);
        ExperimentReport {
            theorem_id: "WEAK_TYPE".into(),
            seed: 7,
            config: [("experiment.seed".to_string(), "7".to_string())]
                .into_iter()
                .collect(),
            trials: records,
            summary: Summary {
                max_ratio: max,
                median_ratio: max,
                min_lower_ratio: Some(1.0),
                refinement: Refinement {
                    coarse_level: 6,
                    fine_level: 8,
                    coarse_max: max,
                    fine_max: max,
                    factor: 1.0,
                    flagged: false,
                },
                notes: vec![],
            },
            verdict: "bounded".into(),
            version: "0.1.0".into(),
        }
    }

    #[test]
    fn json_round_trips_including_empty_trials() {
        for trials in [0usize, 3] {
            let report = sample_report(trials);
            let text = render_report(&report, ReportFormat::Json).unwrap();
            assert_eq!(validate_report(&text, ReportFormat::Json).unwrap(), trials);
        }
    }

    #[test]
    fn csv_has_header_plus_one_row_per_trial() {
        let report = sample_report(3);
        let text = render_report(&report, ReportFormat::Csv).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert_eq!(validate_report(&text, ReportFormat::Csv).unwrap(), 3);
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = render_report(&sample_report(3), ReportFormat::Json).unwrap();
        let b = render_report(&sample_report(3), ReportFormat::Json).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn nonfinite_values_survive_the_round_trip() {
        let mut report = sample_report(1);
        report.trials[0].ratio = f64::INFINITY;
        report.verdict = "violated(trial=0)".into();
        let text = render_report(&report, ReportFormat::Json).unwrap();
        assert_eq!(validate_report(&text, ReportFormat::Json).unwrap(), 1);
        let back: ExperimentReport = serde_json::from_str(&text).unwrap();
        assert!(back.trials[0].ratio.is_infinite());
        assert!(!back.is_bounded());
    }

    #[test]
    fn malformed_csv_is_rejected() {
        assert!(validate_report("bad,header\n", ReportFormat::Csv).is_err());
        assert!(
            validate_report("trial,lhs,rhs,ratio,lower_ratio\n0,x,1,1,\n", ReportFormat::Csv)
                .is_err()
        );
    }
}
