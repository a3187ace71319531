//! Confusion matrices, accuracy / macro recall, and comparison reports.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{Image, ImageError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{truth} true labels but {pred} predictions")]
    LengthMismatch { truth: usize, pred: usize },
    #[error("label {0:?} is not in the class list")]
    UnknownLabel(String),
    #[error("confusion matrix has no samples")]
    EmptyMatrix,
    #[error("malformed confusion matrix: {0}")]
    BadMatrix(String),
    #[error("report line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

/// Counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

pub fn confusion_matrix(
    truth: &[String],
    pred: &[String],
    class_list: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    if truth.len() != pred.len() {
        return Err(EvalError::LengthMismatch {
            truth: truth.len(),
            pred: pred.len(),
        });
    }
    let index: BTreeMap<&str, usize> = class_list
        .iter()
        .enumerate()
        .map(|(i, c)| (c.as_str(), i))
        .collect();
    let lookup = |l: &String| {
        index
            .get(l.as_str())
            .copied()
            .ok_or_else(|| EvalError::UnknownLabel(l.clone()))
    };
    let c = class_list.len();
    let mut counts = vec![vec![0u64; c]; c];
    for (t, p) in truth.iter().zip(pred) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        classes: class_list.to_vec(),
        counts,
    })
}

impl ConfusionMatrix {
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        if counts.len() != classes.len() || counts.iter().any(|r| r.len() != classes.len()) {
            return Err(EvalError::BadMatrix(format!(
                "{} classes but counts are not square",
                classes.len()
            )));
        }
        Ok(Self { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Ground-truth count per class.
    pub fn support(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// Each row divided by its sum; all-zero rows stay zero.
    pub fn row_normalized(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|r| {
                let s: u64 = r.iter().sum();
                r.iter()
                    .map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// CSV with a `true\pred` corner cell, class names on both axes.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true\\pred");
        for c in &self.classes {
            write!(out, ",{c}").unwrap();
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.counts) {
            out.push_str(c);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    /// Row-normalized heatmap, `cell` pixels per entry: white is 0, dark
    /// blue is 1.
    pub fn heatmap(&self, cell: u32) -> Result<Image, EvalError> {
        let c = self.classes.len() as u32;
        if c == 0 || cell == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        let norm = self.row_normalized();
        let side = c * cell;
        let mut data = Vec::with_capacity((side * side * 3) as usize);
        for y in 0..side {
            for x in 0..side {
                let v = norm[(y / cell) as usize][(x / cell) as usize];
                let fade = (255.0 * (1.0 - v)).round() as u8;
                let blue = (255.0 - 115.0 * v).round() as u8;
                data.extend([fade, fade, blue]);
            }
        }
        Ok(Image::new(side, side, 3, data)?)
    }

    pub fn save_heatmap(&self, path: impl AsRef<Path>, cell: u32) -> Result<(), EvalError> {
        Ok(self.heatmap(cell)?.save_png(path)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub accuracy: f64,
    /// Unweighted mean recall over classes with at least one true sample
    /// (avgT).
    pub mean_class_accuracy: f64,
    /// `None` for classes without true samples.
    pub per_class_recall: Vec<Option<f64>>,
    pub support: Vec<u64>,
    pub total: u64,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsRecord, EvalError> {
    let total = cm.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let support = cm.support();
    let per_class_recall: Vec<Option<f64>> = support
        .iter()
        .enumerate()
        .map(|(i, &s)| (s > 0).then(|| cm.counts[i][i] as f64 / s as f64))
        .collect();
    let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
    Ok(MetricsRecord {
        accuracy: cm.trace() as f64 / total as f64,
        mean_class_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        per_class_recall,
        support,
        total,
    })
}

#[derive(
    Debug,
    Clone,
    Copy,
    PartialEq,
    Eq,
    Hash,
    PartialOrd,
    Ord,
    Serialize,
    Deserialize,
    clap::ValueEnum,
)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    /// k-fold cross-validation over individual frames.
    FrameCv,
    /// Train/val/test partition of whole videos.
    VideoSplit,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::FrameCv => "frame-cv",
            Protocol::VideoSplit => "video-split",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "frame-cv" => Ok(Protocol::FrameCv),
            "video-split" => Ok(Protocol::VideoSplit),
            _ => Err(format!("unknown protocol {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "Tr.")]
    Train,
    #[serde(rename = "Val.")]
    Val,
    #[serde(rename = "T.")]
    Test,
    #[serde(rename = "avgT")]
    AvgT,
    /// Mean fold accuracy of a cross-validation run.
    #[serde(rename = "CV")]
    Cv,
}

impl Metric {
    pub const SPLIT_COLUMNS: [Metric; 4] = [Metric::Train, Metric::Val, Metric::Test, Metric::AvgT];
    const ALL: [Metric; 5] = [
        Metric::Train,
        Metric::Val,
        Metric::Test,
        Metric::AvgT,
        Metric::Cv,
    ];
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Train => "Tr.",
            Metric::Val => "Val.",
            Metric::Test => "T.",
            Metric::AvgT => "avgT",
            Metric::Cv => "CV",
        })
    }
}

impl FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| format!("unknown metric {s:?}"))
    }
}

/// One number in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub model: String,
    /// Model type used for best-value flags, e.g. `classic` or `neural`.
    pub family: String,
    pub dataset: String,
    pub protocol: Protocol,
    pub metric: Metric,
    pub value: f64,
}

/// Result artifact written by `fit`, `cross-validate`, `train-nn` and `eval`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultFile {
    pub model: String,
    pub family: String,
    pub dataset: String,
    pub protocol: Protocol,
    /// Full configuration of the run that produced the numbers.
    pub spec: serde_json::Value,
    pub seed: u64,
    pub metrics: BTreeMap<Metric, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fold_accuracies: Vec<f64>,
}

impl ResultFile {
    pub fn entries(&self) -> Vec<ReportEntry> {
        self.metrics
            .iter()
            .map(|(&metric, &value)| ReportEntry {
                model: self.model.clone(),
                family: self.family.clone(),
                dataset: self.dataset.clone(),
                protocol: self.protocol,
                metric,
                value,
            })
            .collect()
    }
}

fn render_at(v: f64, digits: usize) -> String {
    if v == 1.0 {
        return "1".into();
    }
    if v == 0.0 {
        return "0".into();
    }
    let s = format!("{v:.digits$}");
    match s.strip_prefix("0.") {
        Some(rest) => format!(".{rest}"),
        None => s,
    }
}

/// Shortest precision >= 3 at which distinct values render distinctly and no
/// value below 1 renders as a whole number.
fn column_digits(values: &[f64]) -> usize {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    (3..=17)
        .find(|&d| {
            let shown: Vec<String> = distinct.iter().map(|&v| render_at(v, d)).collect();
            let unique = shown.windows(2).all(|w| w[0] != w[1]);
            let honest = distinct
                .iter()
                .zip(&shown)
                .all(|(&v, s)| v == 1.0 || v.abs() >= 1.0 || !s.starts_with('1'));
            unique && honest
        })
        .unwrap_or(17)
}

/// Rendered report: aligned text tables plus a long-format CSV that
/// [`parse_report_csv`] reads back.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub csv: String,
}

fn first_seen<'a>(it: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in it {
        if !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

struct Table {
    title: String,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn render(&self, out: &mut String) {
        let cols = self.header.len();
        let mut widths = vec![0; cols];
        for r in std::iter::once(&self.header).chain(&self.rows) {
            for (w, cell) in widths.iter_mut().zip(r) {
                *w = (*w).max(cell.chars().count());
            }
        }
        writeln!(out, "{}", self.title).unwrap();
        let line = |r: &Vec<String>| {
            r.iter()
                .enumerate()
                .map(|(i, c)| {
                    if i == 0 {
                        format!("{c:<w$}", w = widths[i])
                    } else {
                        format!("{c:>w$}", w = widths[i])
                    }
                })
                .collect::<Vec<_>>()
                .join("  ")
        };
        writeln!(out, "{}", line(&self.header).trim_end()).unwrap();
        let rule: usize = widths.iter().sum::<usize>() + 2 * (cols - 1);
        writeln!(out, "{}", "-".repeat(rule)).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", line(r).trim_end()).unwrap();
        }
        out.push('\n');
    }
}

/// Grid of models × (dataset, metric) for one protocol. Best non-train value
/// per (family, dataset, metric) is marked with `*`.
fn protocol_table(
    entries: &[ReportEntry],
    protocol: Protocol,
    metrics: &[Metric],
    title: &str,
) -> Option<Table> {
    let rows: Vec<&ReportEntry> = entries.iter().filter(|e| e.protocol == protocol).collect();
    if rows.is_empty() {
        return None;
    }
    let models = first_seen(rows.iter().map(|e| e.model.as_str()));
    let datasets = first_seen(rows.iter().map(|e| e.dataset.as_str()));
    let columns: Vec<(&str, Metric)> = datasets
        .iter()
        .flat_map(|&d| metrics.iter().map(move |&m| (d, m)))
        .filter(|&(d, m)| rows.iter().any(|e| e.dataset == d && e.metric == m))
        .collect();
    let cell = |model: &str, d: &str, m: Metric| {
        rows.iter()
            .rev()
            .find(|e| e.model == model && e.dataset == d && e.metric == m)
            .copied()
    };

    let mut header = vec!["Model".to_string()];
    header.extend(columns.iter().map(|(d, m)| format!("{d} {m}")));
    let mut body: Vec<Vec<String>> = models.iter().map(|m| vec![m.to_string()]).collect();
    for &(d, m) in &columns {
        let present: Vec<&ReportEntry> = models
            .iter()
            .filter_map(|&model| cell(model, d, m))
            .collect();
        let digits = column_digits(&present.iter().map(|e| e.value).collect::<Vec<_>>());
        let mut best: BTreeMap<&str, f64> = BTreeMap::new();
        if m != Metric::Train {
            for e in &present {
                let b = best.entry(e.family.as_str()).or_insert(f64::NEG_INFINITY);
                *b = b.max(e.value);
            }
        }
        for (row, &model) in body.iter_mut().zip(&models) {
            row.push(match cell(model, d, m) {
                None => "-".into(),
                Some(e) => {
                    let flag = best.get(e.family.as_str()) == Some(&e.value);
                    format!(
                        "{}{}",
                        render_at(e.value, digits),
                        if flag { "*" } else { "" }
                    )
                }
            });
        }
    }
    Some(Table {
        title: title.to_string(),
        header,
        rows: body,
    })
}

pub fn render_report(entries: &[ReportEntry]) -> Report {
    let mut text = String::new();
    let tables = [
        protocol_table(
            entries,
            Protocol::FrameCv,
            &[Metric::Cv],
            "Frame-level cross-validation (mean accuracy)",
        ),
        protocol_table(
            entries,
            Protocol::VideoSplit,
            &Metric::SPLIT_COLUMNS,
            "Video-level split",
        ),
    ];
    for t in tables.iter().flatten() {
        t.render(&mut text);
    }

    // CV minus held-out test accuracy for every (model, dataset) with both.
    let mut gaps = Vec::new();
    for cv in entries.iter().filter(|e| e.metric == Metric::Cv) {
        if let Some(t) = entries
            .iter()
            .rev()
            .find(|e| e.metric == Metric::Test && e.model == cv.model && e.dataset == cv.dataset)
        {
            gaps.push(vec![
                cv.model.clone(),
                cv.dataset.clone(),
                render_at(cv.value, 3),
                render_at(t.value, 3),
                format!("{:.3}", cv.value - t.value),
            ]);
        }
    }
    if !gaps.is_empty() {
        Table {
            title: "Leakage gap (CV minus video-split test accuracy)".into(),
            header: ["Model", "Dataset", "CV", "T.", "Gap"]
                .map(String::from)
                .to_vec(),
            rows: gaps,
        }
        .render(&mut text);
    }
    if text.is_empty() {
        text.push_str("no results\n");
    }

    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["model", "family", "dataset", "protocol", "metric", "value"])
        .expect("in-memory write");
    for e in entries {
        wtr.write_record([
            e.model.as_str(),
            &e.family,
            &e.dataset,
            &e.protocol.to_string(),
            &e.metric.to_string(),
            &e.value.to_string(),
        ])
        .expect("in-memory write");
    }
    let csv = String::from_utf8(wtr.into_inner().expect("in-memory flush")).expect("utf-8 input");
    Report { text, csv }
}

pub fn parse_report_csv(text: &str) -> Result<Vec<ReportEntry>, EvalError> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let bad = |reason: String| EvalError::Parse { line, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 6 {
            return Err(bad(format!("expected 6 fields, got {}", rec.len())));
        }
        out.push(ReportEntry {
            model: rec[0].to_string(),
            family: rec[1].to_string(),
            dataset: rec[2].to_string(),
            protocol: rec[3].parse().map_err(bad)?,
            metric: rec[4].parse().map_err(bad)?,
            value: rec[5]
                .parse()
                .map_err(|e: std::num::ParseFloatError| bad(e.to_string()))?,
        });
    }
    Ok(out)
}
