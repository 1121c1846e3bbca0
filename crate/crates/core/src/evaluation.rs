//! Chord comparison at five granularities and frame-weighted scoring.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{ChordLabel, ThirdClass};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("estimate has {estimated} frames, reference has {reference}")]
    LengthMismatch { estimated: usize, reference: usize },
    #[error("{metric}: every frame is excluded, score is undefined")]
    Undefined { metric: Metric },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("no annotators to report")]
    Empty,
}

/// Comparison granularities, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "root")]
    Root,
    #[serde(rename = "majmin")]
    MajMin,
    #[serde(rename = "mirex")]
    Mirex,
    #[serde(rename = "thirds")]
    Thirds,
    #[serde(rename = "7ths")]
    Sevenths,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Metric::Root, Metric::MajMin, Metric::Mirex, Metric::Thirds, Metric::Sevenths];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Root => "root",
            Metric::MajMin => "majmin",
            Metric::Mirex => "mirex",
            Metric::Thirds => "thirds",
            Metric::Sevenths => "7ths",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Metric {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| EvalError::UnknownMetric(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Correct,
    Incorrect,
    Excluded,
}

impl From<bool> for Outcome {
    fn from(ok: bool) -> Self {
        if ok {
            Outcome::Correct
        } else {
            Outcome::Incorrect
        }
    }
}

pub fn compare(metric: Metric, estimated: &ChordLabel, reference: &ChordLabel) -> Outcome {
    let same_root = estimated.root() == reference.root();
    let same_third = estimated.third_class() == reference.third_class();
    match metric {
        Metric::Root => same_root.into(),
        Metric::MajMin => {
            if !reference.is_no_chord() && reference.third_class() == ThirdClass::Absent {
                Outcome::Excluded
            } else {
                (same_root && same_third).into()
            }
        }
        Metric::Mirex => match (estimated.is_no_chord(), reference.is_no_chord()) {
            (true, true) => Outcome::Correct,
            (true, false) | (false, true) => Outcome::Incorrect,
            (false, false) => {
                let shared = estimated.pitch_classes().intersection(&reference.pitch_classes()).count();
                (shared >= 3).into()
            }
        },
        Metric::Thirds => (same_root && same_third).into(),
        Metric::Sevenths => {
            (same_root && same_third && estimated.seventh_class() == reference.seventh_class()).into()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tally {
    pub correct: usize,
    pub incorrect: usize,
    pub excluded: usize,
}

impl Tally {
    pub fn evaluated(&self) -> usize {
        self.correct + self.incorrect
    }

    pub fn accuracy(&self) -> Option<f64> {
        (self.evaluated() > 0).then(|| self.correct as f64 / self.evaluated() as f64)
    }
}

pub fn tally(metric: Metric, estimated: &[ChordLabel], reference: &[ChordLabel]) -> Result<Tally, EvalError> {
    if estimated.len() != reference.len() {
        return Err(EvalError::LengthMismatch { estimated: estimated.len(), reference: reference.len() });
    }
    let mut t = Tally::default();
    for (e, r) in estimated.iter().zip(reference) {
        match compare(metric, e, r) {
            Outcome::Correct => t.correct += 1,
            Outcome::Incorrect => t.incorrect += 1,
            Outcome::Excluded => t.excluded += 1,
        }
    }
    Ok(t)
}

/// Fraction of non-excluded frames judged correct.
pub fn score_sequence(metric: Metric, estimated: &[ChordLabel], reference: &[ChordLabel]) -> Result<f64, EvalError> {
    tally(metric, estimated, reference)?
        .accuracy()
        .ok_or(EvalError::Undefined { metric })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub metric: Metric,
    pub accuracy: f64,
    pub evaluated: usize,
    pub excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub annotator: String,
    pub system: String,
    pub scores: Vec<MetricScore>,
}

impl ReportRow {
    pub fn score(&self, metric: Metric) -> Option<&MetricScore> {
        self.scores.iter().find(|s| s.metric == metric)
    }

    pub fn accuracy(&self, metric: Metric) -> Option<f64> {
        self.score(metric).map(|s| s.accuracy)
    }
}

pub fn evaluate_row(
    annotator: &str,
    system: &str,
    estimated: &[ChordLabel],
    reference: &[ChordLabel],
    metrics: &[Metric],
) -> Result<ReportRow, EvalError> {
    let scores = metrics
        .iter()
        .map(|&metric| {
            let t = tally(metric, estimated, reference)?;
            let accuracy = t.accuracy().ok_or(EvalError::Undefined { metric })?;
            Ok(MetricScore { metric, accuracy, evaluated: t.evaluated(), excluded: t.excluded })
        })
        .collect::<Result<_, EvalError>>()?;
    Ok(ReportRow { annotator: annotator.to_string(), system: system.to_string(), scores })
}

/// `scores[i][j]`: annotator `i`'s labels scored against annotator `j` as reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementMatrix {
    pub annotators: Vec<String>,
    pub metrics: Vec<Metric>,
    pub scores: Vec<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub metrics: Vec<Metric>,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub agreement: Option<AgreementMatrix>,
}

/// One row per annotator: their estimates against their own reference.
pub fn build_report(
    system: &str,
    estimates: &[(String, Vec<ChordLabel>)],
    references: &[(String, Vec<ChordLabel>)],
    metrics: &[Metric],
) -> Result<EvalReport, EvalError> {
    if estimates.is_empty() {
        return Err(EvalError::Empty);
    }
    let rows = estimates
        .iter()
        .map(|(annotator, est)| {
            let reference = references
                .iter()
                .find(|(a, _)| a == annotator)
                .map(|(_, r)| r)
                .ok_or(EvalError::Empty)?;
            evaluate_row(annotator, system, est, reference, metrics)
        })
        .collect::<Result<_, _>>()?;
    Ok(EvalReport { metrics: metrics.to_vec(), rows, agreement: None })
}

pub fn agreement_matrix(labels: &[(String, Vec<ChordLabel>)], metrics: &[Metric]) -> Result<AgreementMatrix, EvalError> {
    let scores = labels
        .iter()
        .map(|(_, est)| {
            labels
                .iter()
                .map(|(_, reference)| {
                    metrics
                        .iter()
                        .map(|&m| score_sequence(m, est, reference))
                        .collect::<Result<Vec<_>, _>>()
                })
                .collect::<Result<Vec<_>, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok(AgreementMatrix {
        annotators: labels.iter().map(|(a, _)| a.clone()).collect(),
        metrics: metrics.to_vec(),
        scores,
    })
}

impl EvalReport {
    pub fn row(&self, annotator: &str, system: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.annotator == annotator && r.system == system)
    }

    /// Tab-separated `annotator system <metric...>` table.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("annotator\tsystem");
        for m in &self.metrics {
            write!(out, "\t{m}").unwrap();
        }
        out.push('\n');
        for row in &self.rows {
            write!(out, "{}\t{}", row.annotator, row.system).unwrap();
            for s in &row.scores {
                write!(out, "\t{:.4}", s.accuracy).unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
