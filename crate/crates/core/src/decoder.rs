//! Personalized label decoding.
//!
//! Every vocabulary label selects three entries of a predicted shared
//! profile (its root, third and seventh bins). Their product is the label's
//! combined probability; normalizing over the vocabulary gives a
//! distribution whose argmax is the annotator-specific label.

use thiserror::Error;

use crate::annotation::{Segment, Vocabulary};
use crate::chord::ChordLabel;
use crate::hip::{Hip, Ship};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DecodeError {
    #[error("vocabulary is empty")]
    EmptyVocabulary,
    #[error("{ships} profiles but {times} frame times")]
    LengthMismatch { ships: usize, times: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub label: ChordLabel,
    pub combined: f64,
    pub probability: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// Descending probability, ties in canonical text order.
    pub ranked: Vec<Candidate>,
    /// Set when every combined probability was zero and the distribution
    /// fell back to uniform.
    pub fallback: bool,
}

impl DecodeResult {
    pub fn chosen(&self) -> &ChordLabel {
        &self.ranked[0].label
    }

    pub fn probability_of(&self, label: &ChordLabel) -> Option<f64> {
        self.ranked.iter().find(|c| &c.label == label).map(|c| c.probability)
    }
}

/// Product of the profile entries selected by the label's HIP.
pub fn combined_probability(label: &ChordLabel, ship: &Ship) -> f64 {
    Hip::encode(label)
        .active_indices()
        .iter()
        .map(|&i| ship.values()[i])
        .product()
}

pub fn decode(ship: &Ship, vocabulary: &Vocabulary) -> Result<DecodeResult, DecodeError> {
    decode_labels(ship, vocabulary.labels())
}

/// Decodes over any label collection given in canonical order.
pub fn decode_labels<'a>(
    ship: &Ship,
    labels: impl IntoIterator<Item = &'a ChordLabel>,
) -> Result<DecodeResult, DecodeError> {
    let mut ranked: Vec<Candidate> = labels
        .into_iter()
        .map(|label| Candidate {
            label: label.clone(),
            combined: combined_probability(label, ship),
            probability: 0.0,
        })
        .collect();
    if ranked.is_empty() {
        return Err(DecodeError::EmptyVocabulary);
    }
    ranked.sort_by(|a, b| a.label.cmp(&b.label));
    let total: f64 = ranked.iter().map(|c| c.combined).sum();
    let fallback = total <= 0.0;
    let uniform = 1.0 / ranked.len() as f64;
    for c in &mut ranked {
        c.probability = if fallback { uniform } else { c.combined / total };
    }
    // stable sort keeps canonical order among equal probabilities
    ranked.sort_by(|a, b| b.probability.total_cmp(&a.probability));
    Ok(DecodeResult { ranked, fallback })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersonalizedSequence {
    pub labels: Vec<ChordLabel>,
    pub segments: Vec<Segment>,
    /// Indices of frames decoded through the uniform fallback.
    pub flagged: Vec<usize>,
}

/// Decodes each frame and merges runs of equal labels into timed segments.
///
/// Frame `n` covers `[t_n - hop/2, t_n + hop/2)` clipped at zero, so
/// boundaries between consecutive frames fall on their midpoints. Frames
/// further apart than one hop leave a gap between their cells.
pub fn personalize_sequence(
    ships: &[Ship],
    vocabulary: &Vocabulary,
    frame_times: &[f64],
    hop_seconds: f64,
) -> Result<PersonalizedSequence, DecodeError> {
    if ships.len() != frame_times.len() {
        return Err(DecodeError::LengthMismatch { ships: ships.len(), times: frame_times.len() });
    }
    let mut labels = Vec::with_capacity(ships.len());
    let mut flagged = Vec::new();
    for (i, ship) in ships.iter().enumerate() {
        let result = decode(ship, vocabulary)?;
        if result.fallback {
            flagged.push(i);
        }
        labels.push(result.chosen().clone());
    }

    let half = hop_seconds / 2.0;
    let adjacent = |a: f64, b: f64| ((b - a) - hop_seconds).abs() <= hop_seconds * 1e-6;
    let mut segments: Vec<Segment> = Vec::new();
    for (i, (label, &t)) in labels.iter().zip(frame_times).enumerate() {
        let joined = i > 0 && adjacent(frame_times[i - 1], t);
        let start = if joined { (frame_times[i - 1] + t) / 2.0 } else { (t - half).max(0.0) };
        let end = match frame_times.get(i + 1) {
            Some(&next) if adjacent(t, next) => (t + next) / 2.0,
            _ => t + half,
        };
        match segments.last_mut() {
            Some(last) if joined && last.label == *label => last.end = end,
            _ => segments.push(Segment { start, end, label: label.clone() }),
        }
    }
    Ok(PersonalizedSequence { labels, segments, flagged })
}
