use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::delimited::{read_records, render_rows, write_text};
use super::ExpressionTable;

/// Sample id to class label, with a sorted class vocabulary.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub entries: Vec<(String, String)>,
    pub vocabulary: Vec<String>,
}

impl LabelTable {
    pub fn from_entries(entries: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (s, l) in &entries {
            if l.is_empty() {
                return Err(Error::Data(format!("sample `{s}` has an empty label")));
            }
            if !seen.insert(s.as_str()) {
                return Err(Error::Data(format!("sample `{s}` labelled twice")));
            }
        }
        let vocabulary = entries.iter().map(|(_, l)| l.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        Ok(Self { entries, vocabulary })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, sample: &str) -> Option<&str> {
        self.entries.iter().find(|(s, _)| s == sample).map(|(_, l)| l.as_str())
    }

    pub fn write(&self, path: &Path, column: &str) -> Result<()> {
        let mut rows = vec![vec!["sample".to_string(), column.to_string()]];
        rows.extend(self.entries.iter().map(|(s, l)| vec![s.clone(), l.clone()]));
        write_text(path, &render_rows(path, &rows)?)
    }
}

fn header_index(path: &Path, header: &[String], column: &str) -> Result<usize> {
    header
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| Error::parse(path, 1, format!("column `{column}` not found; available: {}", header.join(", "))))
}

/// Reads `column` from a delimited clinical file whose first column holds
/// sample ids. Empty labels and labels in `drop_values` are removed.
pub fn load_labels(path: &Path, column: &str, drop_values: &[String]) -> Result<LabelTable> {
    let records = read_records(path)?;
    let Some(((_, header), body)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty file"));
    };
    let col = header_index(path, header, column)?;
    let drop: HashSet<&str> = drop_values.iter().map(String::as_str).collect();
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (line, rec) in body {
        let sample = rec.first().cloned().unwrap_or_default();
        if sample.is_empty() {
            return Err(Error::parse(path, *line, "missing sample id"));
        }
        if !seen.insert(sample.clone()) {
            return Err(Error::parse(path, *line, format!("duplicate sample id `{sample}`")));
        }
        let label = rec.get(col).cloned().unwrap_or_default();
        if label.is_empty() || drop.contains(label.as_str()) {
            continue;
        }
        entries.push((sample, label));
    }
    LabelTable::from_entries(entries)
}

/// Keeps the samples of `table` that carry a label in `vocabulary`, returning
/// the reduced table and class indices into `vocabulary`.
pub fn align_labels(
    table: &ExpressionTable,
    labels: &LabelTable,
    vocabulary: &[String],
) -> Result<(ExpressionTable, Vec<usize>)> {
    let by_sample: HashMap<&str, &str> = labels.entries.iter().map(|(s, l)| (s.as_str(), l.as_str())).collect();
    let class_of: HashMap<&str, usize> = vocabulary.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut unknown = 0usize;
    for (r, s) in table.sample_ids.iter().enumerate() {
        if let Some(label) = by_sample.get(s.as_str()) {
            match class_of.get(label) {
                Some(&c) => {
                    rows.push(r);
                    y.push(c);
                }
                None => unknown += 1,
            }
        }
    }
    if unknown > 0 {
        log::warn!("{unknown} samples carry labels outside the class vocabulary; skipped");
    }
    if rows.is_empty() {
        return Err(Error::Data("no sample in the expression table has a usable label".into()));
    }
    Ok((table.select_samples(&rows)?, y))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalRecord {
    pub sample: String,
    /// Days.
    pub time: f64,
    /// `true` when death was observed.
    pub event: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SurvivalTable {
    pub records: Vec<SurvivalRecord>,
}

impl SurvivalTable {
    pub fn new(records: Vec<SurvivalRecord>) -> Result<Self> {
        if let Some(r) = records.iter().find(|r| !(r.time >= 0.0) || !r.time.is_finite()) {
            return Err(Error::Data(format!("sample `{}` has invalid survival time {}", r.sample, r.time)));
        }
        Ok(Self { records })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    pub fn events(&self) -> Vec<bool> {
        self.records.iter().map(|r| r.event).collect()
    }

    pub fn get(&self, sample: &str) -> Option<&SurvivalRecord> {
        self.records.iter().find(|r| r.sample == sample)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut rows = vec![vec!["sample".to_string(), "time".to_string(), "event".to_string()]];
        rows.extend(
            self.records.iter().map(|r| vec![r.sample.clone(), r.time.to_string(), u8::from(r.event).to_string()]),
        );
        write_text(path, &render_rows(path, &rows)?)
    }
}

fn parse_event(cell: &str) -> Option<bool> {
    let c = cell.trim().to_ascii_lowercase();
    // cBioPortal style "1:DECEASED" / "0:LIVING"
    let head = c.split(':').next().unwrap_or("");
    match head {
        "1" | "true" | "dead" | "deceased" | "yes" => Some(true),
        "0" | "false" | "alive" | "living" | "no" => Some(false),
        _ => None,
    }
}

/// Reads `time_column` (days) and `event_column` from a clinical file keyed by
/// its first column. Rows with an empty time or event are skipped.
pub fn load_survival(path: &Path, time_column: &str, event_column: &str) -> Result<SurvivalTable> {
    let records = read_records(path)?;
    let Some(((_, header), body)) = records.split_first() else {
        return Err(Error::parse(path, 1, "empty file"));
    };
    let tc = header_index(path, header, time_column)?;
    let ec = header_index(path, header, event_column)?;
    let mut out = Vec::new();
    let mut skipped = 0usize;
    for (line, rec) in body {
        let sample = rec.first().cloned().unwrap_or_default();
        let time = rec.get(tc).map(String::as_str).unwrap_or("");
        let event = rec.get(ec).map(String::as_str).unwrap_or("");
        if time.is_empty() || event.is_empty() {
            skipped += 1;
            continue;
        }
        let time: f64 =
            time.parse().map_err(|_| Error::parse(path, *line, format!("non-numeric survival time `{time}`")))?;
        if !(time >= 0.0) {
            return Err(Error::parse(path, *line, format!("negative survival time {time}")));
        }
        let event = parse_event(event)
            .ok_or_else(|| Error::parse(path, *line, format!("unrecognised event value `{event}`")))?;
        out.push(SurvivalRecord { sample, time, event });
    }
    if skipped > 0 {
        log::info!("{skipped} samples lack survival data");
    }
    SurvivalTable::new(out)
}
