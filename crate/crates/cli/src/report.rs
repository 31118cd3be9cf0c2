//! JSON report, TSV sidecars and the run metadata file.

use std::fmt::Write as _;
use std::path::Path;

use ilc_core::one_stage::{ObservationSignal, SignalThresholds};
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
pub const METADATA_FILE: &str = "metadata.json";
pub const POSTERIOR_FILE: &str = "posterior_A.tsv";
pub const U_SAMPLES_FILE: &str = "u_samples.tsv";
pub const HISTOGRAM_FILE: &str = "selection_histogram.tsv";
pub const GAMMA_FILE: &str = "gamma_samples.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tool {
    pub name: String,
    pub version: String,
}

impl Tool {
    pub fn current() -> Self {
        Tool {
            name: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSize {
    pub id: String,
    pub operators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub universe_size: usize,
    pub subset_size: usize,
    pub observations: usize,
    /// Empty for pooled data.
    pub labs: Vec<LabSize>,
    /// SHA-256 of the data in canonical CSV form.
    pub hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenterRow {
    /// 1-based items, e.g. `{1, 2, 3}`.
    pub set: String,
    pub probability: f64,
    pub std_dev: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSection {
    pub source: String,
    pub method: String,
    pub centers: Vec<CenterRow>,
    pub samples: usize,
    pub samples_file: String,
    pub table_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quantile {
    pub level: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct USummary {
    pub source: String,
    pub mean: f64,
    pub quantiles: Vec<Quantile>,
    pub samples_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSection {
    pub source: String,
    pub thresholds: SignalThresholds,
    pub observations: Vec<ObservationSignal>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabRow {
    pub lab_id: String,
    pub gamma_mean: f64,
    pub gamma_median: f64,
    pub u_median: f64,
    pub mean_deviations: f64,
    pub deviations_at_median_u: f64,
    /// Draws with `k_i = 0, 1, ..., n`.
    pub k_histogram: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabSection {
    pub source: String,
    pub labs: Vec<LabRow>,
    pub samples_file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceSection {
    pub source: String,
    pub log_evidence: Option<f64>,
    pub log_evidence_pooled: Option<f64>,
    pub log_bayes_factor: Option<f64>,
    pub interpretation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramSection {
    pub source: String,
    pub counts: Vec<usize>,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub tool: Tool,
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub config: AnalysisConfig,
    pub data: DataSummary,
    pub selection_histogram: HistogramSection,
    pub posterior: Option<PosteriorSection>,
    pub u: Option<USummary>,
    pub signals: Option<SignalSection>,
    pub labs: Option<LabSection>,
    pub evidence: Option<EvidenceSection>,
    pub diagnostics: Option<serde_json::Value>,
}

impl AnalysisReport {
    pub fn to_json(&self) -> Result<String, CliError> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let report: AnalysisReport = serde_json::from_str(text)?;
        if report.schema_version != SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "report schema version {} is not supported (expected {SCHEMA_VERSION})",
                report.schema_version
            )));
        }
        Ok(report)
    }
}

/// Everything an analysis writes, held in memory until written.
#[derive(Debug, Clone, PartialEq)]
pub struct Outputs {
    pub report: AnalysisReport,
    /// `(file name, contents)`.
    pub sidecars: Vec<(String, String)>,
}

impl Outputs {
    pub fn sidecar(&self, name: &str) -> Option<&str> {
        self.sidecars
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c.as_str())
    }
}

/// Run facts that change between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub tool: Tool,
    pub command_line: Vec<String>,
    pub started_unix_seconds: u64,
    pub elapsed_seconds: f64,
    pub threads: usize,
}

pub fn write_outputs(dir: &Path, outputs: &Outputs, metadata: &Metadata) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(REPORT_FILE), outputs.report.to_json()?)?;
    for (name, contents) in &outputs.sidecars {
        std::fs::write(dir.join(name), contents)?;
    }
    let mut meta = serde_json::to_string_pretty(metadata)?;
    meta.push('\n');
    std::fs::write(dir.join(METADATA_FILE), meta)?;
    Ok(())
}

/// Tab-separated table with a header row.
pub(crate) fn tsv<R, I>(header: &[&str], rows: I) -> String
where
    R: IntoIterator,
    R::Item: std::fmt::Display,
    I: IntoIterator<Item = R>,
{
    let mut out = header.join("\t");
    out.push('\n');
    for row in rows {
        let mut first = true;
        for cell in row {
            if !first {
                out.push('\t');
            }
            first = false;
            let _ = write!(out, "{cell}");
        }
        out.push('\n');
    }
    out
}

/// Quantile by linear interpolation between order statistics.
pub(crate) fn quantile(sorted: &[f64], level: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = level * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

pub(crate) fn u_summary(source: &str, mut us: Vec<f64>) -> Option<USummary> {
    if us.is_empty() {
        return None;
    }
    us.sort_by(f64::total_cmp);
    let mean = us.iter().sum::<f64>() / us.len() as f64;
    Some(USummary {
        source: source.into(),
        mean,
        quantiles: [0.025, 0.25, 0.5, 0.75, 0.975]
            .iter()
            .map(|&level| Quantile {
                level,
                value: quantile(&us, level),
            })
            .collect(),
        samples_file: U_SAMPLES_FILE.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(quantile(&v, 0.0), 0.0);
        assert_eq!(quantile(&v, 1.0), 3.0);
        assert_eq!(quantile(&v, 0.5), 1.5);
    }

    #[test]
    fn tsv_layout() {
        let t = tsv(&["a", "b"], vec![vec![1, 2], vec![3, 4]]);
        assert_eq!(t, "a\tb\n1\t2\n3\t4\n");
    }
}
