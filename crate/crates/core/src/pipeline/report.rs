use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataio::{read_records, render_rows, write_text};
use crate::error::{Error, Result};
use crate::metrics::{median_iqr, wilcoxon_rank_sum};
use crate::models::{ArchitectureConfig, TrainConfig};

use super::nan_as_null;

/// Column set of the results table, in order.
pub const TABLE_COLUMNS: [&str; 11] = [
    "Model",
    "schedule",
    "space",
    "classifier",
    "#Param",
    "Test MSE",
    "Accuracy",
    "Precision",
    "Recall",
    "F1",
    "ROC AUC",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MetricName {
    TestMse,
    Accuracy,
    Precision,
    Recall,
    F1,
    RocAuc,
}

impl MetricName {
    pub const ALL: [MetricName; 6] = [
        MetricName::TestMse,
        MetricName::Accuracy,
        MetricName::Precision,
        MetricName::Recall,
        MetricName::F1,
        MetricName::RocAuc,
    ];

    pub fn column(self) -> &'static str {
        match self {
            MetricName::TestMse => "Test MSE",
            MetricName::Accuracy => "Accuracy",
            MetricName::Precision => "Precision",
            MetricName::Recall => "Recall",
            MetricName::F1 => "F1",
            MetricName::RocAuc => "ROC AUC",
        }
    }

    /// Larger is better for every metric except reconstruction error.
    pub fn higher_is_better(self) -> bool {
        self != MetricName::TestMse
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.column())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    /// Accepts the column title or its snake_case form (`roc_auc`).
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace([' ', '-'], "_");
        MetricName::ALL
            .into_iter()
            .find(|m| m.column().to_ascii_lowercase().replace(' ', "_") == key)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric `{s}`")))
    }
}

/// Held-out metrics of one repeat.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(with = "nan_as_null")]
    pub test_mse: f64,
    #[serde(with = "nan_as_null")]
    pub accuracy: f64,
    #[serde(with = "nan_as_null")]
    pub precision: f64,
    #[serde(with = "nan_as_null")]
    pub recall: f64,
    #[serde(with = "nan_as_null")]
    pub f1: f64,
    #[serde(with = "nan_as_null")]
    pub roc_auc: f64,
}

impl MetricsReport {
    pub fn failed() -> Self {
        Self {
            test_mse: f64::NAN,
            accuracy: f64::NAN,
            precision: f64::NAN,
            recall: f64::NAN,
            f1: f64::NAN,
            roc_auc: f64::NAN,
        }
    }

    pub fn get(&self, m: MetricName) -> f64 {
        match m {
            MetricName::TestMse => self.test_mse,
            MetricName::Accuracy => self.accuracy,
            MetricName::Precision => self.precision,
            MetricName::Recall => self.recall,
            MetricName::F1 => self.f1,
            MetricName::RocAuc => self.roc_auc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    pub diverged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub metrics: MetricsReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MedianIqr {
    #[serde(with = "nan_as_null")]
    pub median: f64,
    #[serde(with = "nan_as_null")]
    pub iqr: f64,
}

impl MedianIqr {
    /// Over the finite values only; NaN when there are none.
    pub fn of(values: &[f64]) -> Self {
        let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        match median_iqr(&finite) {
            Ok((median, iqr)) => Self { median, iqr },
            Err(_) => Self { median: f64::NAN, iqr: f64::NAN },
        }
    }
}

impl fmt::Display for MedianIqr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.median, self.iqr)
    }
}

impl FromStr for MedianIqr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("expected `median (iqr)`, found `{s}`"));
        let (m, rest) = s.trim().split_once(" (").ok_or_else(bad)?;
        let iqr = rest.strip_suffix(')').ok_or_else(bad)?;
        Ok(Self { median: m.parse().map_err(|_| bad())?, iqr: iqr.parse().map_err(|_| bad())? })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub test_mse: MedianIqr,
    pub accuracy: MedianIqr,
    pub precision: MedianIqr,
    pub recall: MedianIqr,
    pub f1: MedianIqr,
    pub roc_auc: MedianIqr,
    pub completed: usize,
    pub failed: usize,
}

impl Summary {
    pub fn from_repeats(repeats: &[RepeatResult]) -> Self {
        let ok: Vec<&RepeatResult> = repeats.iter().filter(|r| !r.diverged).collect();
        let agg = |m: MetricName| MedianIqr::of(&ok.iter().map(|r| r.metrics.get(m)).collect::<Vec<_>>());
        Self {
            test_mse: agg(MetricName::TestMse),
            accuracy: agg(MetricName::Accuracy),
            precision: agg(MetricName::Precision),
            recall: agg(MetricName::Recall),
            f1: agg(MetricName::F1),
            roc_auc: agg(MetricName::RocAuc),
            completed: ok.len(),
            failed: repeats.len() - ok.len(),
        }
    }

    pub fn get(&self, m: MetricName) -> MedianIqr {
        match m {
            MetricName::TestMse => self.test_mse,
            MetricName::Accuracy => self.accuracy,
            MetricName::Precision => self.precision,
            MetricName::Recall => self.recall,
            MetricName::F1 => self.f1,
            MetricName::RocAuc => self.roc_auc,
        }
    }
}

/// Outcome of repeated external validation of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub model: String,
    pub schedule: String,
    pub space: String,
    pub classifier: String,
    pub param_count: usize,
    pub architecture: ArchitectureConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub repeats: Vec<RepeatResult>,
    pub summary: Summary,
}

impl RunReport {
    /// Per-repeat values of `metric` from repeats that completed.
    pub fn values(&self, metric: MetricName) -> Vec<f64> {
        self.repeats.iter().filter(|r| !r.diverged).map(|r| r.metrics.get(metric)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        write_text(path, &self.to_json()?)
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// One line of the results table.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub model: String,
    pub schedule: String,
    pub space: String,
    pub classifier: String,
    pub param_count: usize,
    /// In [`MetricName::ALL`] order.
    pub metrics: [MedianIqr; 6],
}

impl From<&RunReport> for ReportRow {
    fn from(r: &RunReport) -> Self {
        Self {
            model: r.model.clone(),
            schedule: r.schedule.clone(),
            space: r.space.clone(),
            classifier: r.classifier.clone(),
            param_count: r.param_count,
            metrics: MetricName::ALL.map(|m| r.summary.get(m)),
        }
    }
}

pub fn report_rows_csv(rows: &[ReportRow], path: &Path) -> Result<String> {
    let mut table = vec![TABLE_COLUMNS.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    for r in rows {
        let mut line =
            vec![r.model.clone(), r.schedule.clone(), r.space.clone(), r.classifier.clone(), r.param_count.to_string()];
        line.extend(r.metrics.iter().map(MedianIqr::to_string));
        table.push(line);
    }
    render_rows(path, &table)
}

/// Results table with one row per report; cells read `median (IQR)`.
pub fn write_report_csv(reports: &[RunReport], path: &Path) -> Result<()> {
    let rows: Vec<ReportRow> = reports.iter().map(ReportRow::from).collect();
    write_text(path, &report_rows_csv(&rows, path)?)
}

pub fn parse_report_csv(path: &Path) -> Result<Vec<ReportRow>> {
    let records = read_records(path)?;
    let Some(((_, header), body)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty report"));
    };
    if header.iter().map(String::as_str).ne(TABLE_COLUMNS) {
        return Err(Error::parse(path, 1, format!("expected columns {}", TABLE_COLUMNS.join(", "))));
    }
    body.iter()
        .map(|(line, rec)| {
            if rec.len() != TABLE_COLUMNS.len() {
                return Err(Error::parse(
                    path,
                    *line,
                    format!("expected {} fields, found {}", TABLE_COLUMNS.len(), rec.len()),
                ));
            }
            let cell = |i: usize| rec[i + 5].parse::<MedianIqr>().map_err(|e| Error::parse(path, *line, e.to_string()));
            Ok(ReportRow {
                model: rec[0].clone(),
                schedule: rec[1].clone(),
                space: rec[2].clone(),
                classifier: rec[3].clone(),
                param_count: rec[4]
                    .parse()
                    .map_err(|_| Error::parse(path, *line, format!("bad #Param `{}`", rec[4])))?,
                metrics: [cell(0)?, cell(1)?, cell(2)?, cell(3)?, cell(4)?, cell(5)?],
            })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Direction {
    /// The first report has the better median.
    FirstBetter,
    SecondBetter,
    Tied,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Comparison {
    pub p_value: f64,
    pub direction: Direction,
    pub median_first: f64,
    pub median_second: f64,
}

/// Two-sided rank-sum test on the per-repeat values of `metric`.
pub fn compare_runs(first: &RunReport, second: &RunReport, metric: &str) -> Result<Comparison> {
    let metric: MetricName = metric.parse()?;
    let (a, b) = (first.values(metric), second.values(metric));
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "comparison needs at least 2 completed repeats per report, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let test = wilcoxon_rank_sum(&a, &b)?;
    let (ma, mb) = (MedianIqr::of(&a).median, MedianIqr::of(&b).median);
    let direction = if ma == mb {
        Direction::Tied
    } else if (ma > mb) == metric.higher_is_better() {
        Direction::FirstBetter
    } else {
        Direction::SecondBetter
    };
    Ok(Comparison { p_value: test.p_value, direction, median_first: ma, median_second: mb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    fn report(aucs: &[f64]) -> RunReport {
        let repeats: Vec<RepeatResult> = aucs
            .iter()
            .enumerate()
            .map(|(i, &auc)| RepeatResult {
                repeat: i,
                seed: i as u64,
                diverged: auc.is_nan(),
                error: None,
                metrics: MetricsReport {
                    roc_auc: auc,
                    test_mse: 0.5,
                    accuracy: 0.8,
                    precision: 0.7,
                    recall: 0.6,
                    f1: 0.65,
                },
            })
            .collect();
        RunReport {
            model: "PAAE(KEGG)".into(),
            schedule: "-".into(),
            space: "z".into(),
            classifier: "LR".into(),
            param_count: 123,
            architecture: ArchitectureConfig::new(ModelKind::Paae, vec![4]),
            train: TrainConfig::default(),
            seeds: (0..aucs.len() as u64).collect(),
            summary: Summary::from_repeats(&repeats),
            repeats,
        }
    }

    #[test]
    fn aggregation_skips_failed_repeats() {
        let r = report(&[0.9, f64::NAN, 0.7, 0.8]);
        assert_eq!(r.summary.failed, 1);
        assert_eq!(r.summary.completed, 3);
        assert_eq!(r.summary.roc_auc.median, 0.8);
        assert_eq!(report(&[0.9]).summary.roc_auc.iqr, 0.0);
        let json = r.to_json().unwrap();
        assert!(json.contains("\"diverged\": true"));
        assert!(json.contains("null"));
        let back = RunReport::from_json(&json).unwrap();
        assert!(back.repeats[1].metrics.roc_auc.is_nan());
        assert_eq!(back.summary, r.summary);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("table.csv");
        let reports = vec![report(&[0.9, 0.85, 0.95]), report(&[f64::NAN])];
        write_report_csv(&reports, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TABLE_COLUMNS.join(","));
        let rows = parse_report_csv(&path).unwrap();
        assert_eq!(rows[0], ReportRow::from(&reports[0]));
        assert!(rows[1].metrics[5].median.is_nan());
        std::fs::write(&path, "Model,schedule\nX,y\n").unwrap();
        assert!(parse_report_csv(&path).is_err());
    }

    #[test]
    fn comparisons() {
        let a = report(&[0.8, 0.82, 0.85, 0.81]);
        let same = compare_runs(&a, &a, "ROC AUC").unwrap();
        assert_eq!(same.p_value, 1.0);
        assert_eq!(same.direction, Direction::Tied);
        let lo: Vec<f64> = (0..16).map(|i| 0.5 + i as f64 * 0.001).collect();
        let hi: Vec<f64> = (0..16).map(|i| 0.9 + i as f64 * 0.001).collect();
        let (lo, hi) = (report(&lo), report(&hi));
        let c = compare_runs(&hi, &lo, "roc_auc").unwrap();
        assert!(c.p_value < 1e-3);
        assert_eq!(c.direction, Direction::FirstBetter);
        let d = compare_runs(&lo, &hi, "roc_auc").unwrap();
        assert_eq!(d.direction, Direction::SecondBetter);
        assert_eq!(c.p_value, d.p_value);
        assert!(compare_runs(&a, &a, "kappa").is_err());
        assert!(compare_runs(&report(&[0.5]), &a, "F1").is_err());
        assert_eq!("Test MSE".parse::<MetricName>().unwrap(), MetricName::TestMse);
    }
}
