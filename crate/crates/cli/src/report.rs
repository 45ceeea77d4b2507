use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Serialize, Serializer};

use crate::config::ScenarioConfig;
use crate::error::AppError;

/// Report floats are rounded to 12 significant digits before serialization,
/// so identical runs serialize to identical bytes regardless of how the
/// last few ulps of a parallel reduction land.
pub fn round12(x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if !x.is_finite() {
        return x;
    }
    format!("{x:.11e}").parse().expect("scientific notation round-trips")
}

/// f64 wrapper that serializes (and displays) its rounded value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct R12(pub f64);

impl Serialize for R12 {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(round12(self.0))
    }
}

impl fmt::Display for R12 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", round12(self.0))
    }
}

/// Mean with an optional spread.  The spread is absent exactly when the run
/// had a single repeat, so consumers can tell "no error bar" from "zero".
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Stat {
    pub mean: R12,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<R12>,
}

impl Stat {
    pub fn exact(mean: f64) -> Self {
        Stat { mean: R12(mean), std: None }
    }

    pub fn sampled(mean: f64, std: f64, repeats: usize) -> Self {
        Stat { mean: R12(mean), std: (repeats > 1).then_some(R12(std)) }
    }
}

#[derive(Debug, Serialize)]
pub struct PhiResult {
    pub phi: R12,
    pub metrics: BTreeMap<String, Stat>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth_table: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub artifacts: Vec<String>,
}

/// Full run report: the scenario echo plus per-phase results.  Every
/// stochastic quantity in `results` inherits the `seed`/`repeats` provenance
/// recorded here.
#[derive(Debug, Serialize)]
pub struct Report {
    pub command: String,
    pub scenario: ScenarioConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub repeats: usize,
    pub results: Vec<PhiResult>,
}

#[derive(Debug, Serialize)]
pub struct DecomposeReport {
    pub command: String,
    pub scenario: ScenarioConfig,
    pub dims: (usize, usize),
    pub coefficients: Vec<R12>,
    pub schmidt_number: usize,
    pub unitary: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Flat key/value rows for the CSV report format.
pub trait CsvRows {
    fn csv_rows(&self) -> Vec<(String, String)>;
}

impl CsvRows for Report {
    fn csv_rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("command".into(), self.command.clone()),
            ("scenario".into(), self.scenario.name.clone()),
            ("repeats".into(), self.repeats.to_string()),
        ];
        if let Some(seed) = self.seed {
            rows.push(("seed".into(), seed.to_string()));
        }
        for (i, r) in self.results.iter().enumerate() {
            rows.push((format!("phi{i}"), r.phi.to_string()));
            for (name, stat) in &r.metrics {
                rows.push((format!("phi{i}.{name}.mean"), stat.mean.to_string()));
                if let Some(std) = stat.std {
                    rows.push((format!("phi{i}.{name}.std"), std.to_string()));
                }
            }
            if let Some(table) = &r.truth_table {
                rows.push((format!("phi{i}.truthTable"), table.join(" ")));
            }
            for (k, artifact) in r.artifacts.iter().enumerate() {
                rows.push((format!("phi{i}.artifact{k}"), artifact.clone()));
            }
        }
        rows
    }
}

impl CsvRows for DecomposeReport {
    fn csv_rows(&self) -> Vec<(String, String)> {
        let mut rows = vec![
            ("command".into(), self.command.clone()),
            ("scenario".into(), self.scenario.name.clone()),
            ("dims".into(), format!("{}x{}", self.dims.0, self.dims.1)),
            ("schmidtNumber".into(), self.schmidt_number.to_string()),
            ("unitary".into(), self.unitary.to_string()),
        ];
        for (i, c) in self.coefficients.iter().enumerate() {
            rows.push((format!("coefficient{i}"), c.to_string()));
        }
        rows
    }
}

/// Writes `<name>.report.json` or `<name>.report.csv` under `dir` and
/// returns the path.  JSON is pretty-printed with a trailing newline so the
/// files diff cleanly.
pub fn write_report<T: Serialize + CsvRows>(
    dir: &Path,
    name: &str,
    format: ReportFormat,
    report: &T,
) -> Result<PathBuf, AppError> {
    fs::create_dir_all(dir)?;
    let path = match format {
        ReportFormat::Json => {
            let path = dir.join(format!("{name}.report.json"));
            let mut text = serde_json::to_string_pretty(report)
                .map_err(|e| AppError::Numerical(format!("report serialization: {e}")))?;
            text.push('\n');
            fs::write(&path, text)?;
            path
        }
        ReportFormat::Csv => {
            let path = dir.join(format!("{name}.report.csv"));
            let mut text = String::from("key,value\n");
            for (k, v) in report.csv_rows() {
                text.push_str(&format!("{k},{v}\n"));
            }
            fs::write(&path, text)?;
            path
        }
    };
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounding_keeps_twelve_significant_digits() {
        assert_eq!(round12(0.0), 0.0);
        assert_eq!(round12(-0.0), 0.0);
        assert_eq!(round12(1.0), 1.0);
        assert_eq!(round12(0.123456789012345), 0.123456789012);
        assert_eq!(round12(-9.87654321098765e-7), -9.87654321099e-7);
        // Values already shorter than 12 digits are untouched.
        assert_eq!(round12(0.25), 0.25);
    }

    #[test]
    fn stat_spread_tracks_repeat_count() {
        assert!(Stat::sampled(0.5, 0.01, 1).std.is_none());
        assert_eq!(Stat::sampled(0.5, 0.01, 2).std, Some(R12(0.01)));
        assert!(Stat::exact(1.0).std.is_none());
    }

    #[test]
    fn serialized_stat_omits_absent_std() {
        let json = serde_json::to_string(&Stat::exact(0.9400000000001234)).unwrap();
        assert_eq!(json, r#"{"mean":0.94}"#);
        let json = serde_json::to_string(&Stat::sampled(0.5, 0.25, 3)).unwrap();
        assert_eq!(json, r#"{"mean":0.5,"std":0.25}"#);
    }
}
