use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::bias::PropositionReport;

use super::config::{ExperimentConfig, OutputFormat};
use super::RunnerError;

/// JSON schema every serialized [`RunReport`] validates against.
pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

pub const CSV_HEADER: [&str; 10] = [
    "scenario",
    "coef",
    "true_diff",
    "measured_diff",
    "mc_se_diff",
    "bias_b",
    "bias_a",
    "gap",
    "gap_mc_se",
    "verdict",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub name: String,
    /// Derived from the master seed and the scenario name.
    pub seed: u64,
    /// Rank-deficient replications skipped across all four estimates.
    pub skipped_replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<PropositionReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScenarioOutcome {
    /// An error or an identity-residual breach.
    pub fn is_failure(&self) -> bool {
        self.result.as_ref().is_none_or(|r| !r.identity_holds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub config: ExperimentConfig,
    /// Sorted by scenario name.
    pub scenarios: Vec<ScenarioOutcome>,
    /// Wall-clock seconds. Left out of report files unless explicitly
    /// requested, since it breaks byte-for-byte reproducibility.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl RunReport {
    pub fn failures(&self) -> usize {
        self.scenarios.iter().filter(|s| s.is_failure()).count()
    }

    pub fn without_timing(mut self) -> Self {
        self.wall_clock_seconds = None;
        self
    }
}

/// Pretty JSON with every float written to 17 significant digits.
pub struct SigDigitFormatter<'a>(PrettyFormatter<'a>);

impl Default for SigDigitFormatter<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::with_indent(b"  "))
    }
}

pub fn format_f64(value: f64) -> String {
    format!("{value:.16e}")
}

impl Formatter for SigDigitFormatter<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn begin_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }

    fn end_array<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }

    fn end_object<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serializes any value with [`SigDigitFormatter`].
pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigitFormatter::default());
    value
        .serialize(&mut ser)
        .expect("in-memory JSON serialization cannot fail");
    out.push(b'\n');
    out
}

pub fn parse_report(text: &str) -> Result<RunReport, serde_json::Error> {
    serde_json::from_str(text)
}

pub fn to_csv_bytes(report: &RunReport) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER).expect("in-memory csv");
    for s in &report.scenarios {
        match &s.result {
            Some(r) => {
                for j in 0..r.true_diff.len() {
                    let row = [
                        s.name.clone(),
                        j.to_string(),
                        format_f64(r.true_diff[j]),
                        format_f64(r.measured_diff[j]),
                        format_f64(r.mc_se_diff[j]),
                        format_f64(r.bias_b.finite_sample[j]),
                        format_f64(r.bias_a.finite_sample[j]),
                        format_f64(r.criterion_gap[j]),
                        format_f64(r.gap_mc_se[j]),
                        r.verdict.to_string(),
                    ];
                    w.write_record(&row).expect("in-memory csv");
                }
            }
            None => {
                let mut row = vec![String::new(); CSV_HEADER.len()];
                row[0] = s.name.clone();
                row[9] = "error".into();
                w.write_record(&row).expect("in-memory csv");
            }
        }
    }
    w.into_inner().expect("in-memory csv")
}

pub fn render_report(report: &RunReport, format: OutputFormat) -> Vec<u8> {
    match format {
        OutputFormat::Json => to_json_bytes(report),
        OutputFormat::Csv => to_csv_bytes(report),
    }
}

/// Writes `report` to `path`, or to stdout when `path` is `None`.
pub fn write_report(report: &RunReport, format: OutputFormat, path: Option<&Path>) -> Result<(), RunnerError> {
    let bytes = render_report(report, format);
    match path {
        Some(p) => std::fs::write(p, bytes).map_err(|e| RunnerError::Io(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .lock()
            .write_all(&bytes)
            .map_err(|e| RunnerError::Io(e.to_string())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::runner::config::parse_config;

    fn empty_report() -> RunReport {
        RunReport {
            version: "test".into(),
            config: parse_config(r#"{"scenarios": []}"#).unwrap(),
            scenarios: vec![],
            wall_clock_seconds: None,
        }
    }

    #[test]
    fn float_format_has_17_significant_digits() {
        assert_eq!(format_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(format_f64(0.1), "1.0000000000000001e-1");
        let v = 1.0 / 3.0;
        assert_eq!(format_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }

    #[test]
    fn empty_csv_has_header_only() {
        let text = String::from_utf8(to_csv_bytes(&empty_report())).unwrap();
        assert_eq!(text, format!("{}\n", CSV_HEADER.join(",")));
    }

    #[test]
    fn empty_json_round_trips() {
        let r = empty_report();
        let bytes = to_json_bytes(&r);
        assert_eq!(parse_report(std::str::from_utf8(&bytes).unwrap()).unwrap(), r);
    }

    #[test]
    fn error_rows() {
        let mut r = empty_report();
        r.scenarios.push(ScenarioOutcome {
            name: "broken".into(),
            seed: 1,
            skipped_replications: 0,
            result: None,
            error: Some("boom".into()),
        });
        assert_eq!(r.failures(), 1);
        let text = String::from_utf8(to_csv_bytes(&r)).unwrap();
        assert_eq!(text.lines().nth(1).unwrap(), "broken,,,,,,,,,error");
    }
}
