//! Harmonic interval profiles.
//!
//! A profile has 19 entries in three segments: 13 root bins (C..B, then N),
//! three third bins (major, minor, none) and three seventh bins (major,
//! minor, none). A [`Hip`] is one-hot per segment; a [`Ship`] holds a
//! probability distribution per segment, usually the mean of several HIPs.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::ChordLabel;

pub const PROFILE_LEN: usize = 19;
pub const NO_CHORD_INDEX: usize = 12;

/// Column headers in profile order.
pub const PROFILE_COLUMNS: [&str; PROFILE_LEN] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B", "N", "#3", "b3", "*3", "#7",
    "b7", "*7",
];

/// Tolerance on per-segment sums.
pub const SEGMENT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Segment {
    Root,
    Third,
    Seventh,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Root, Segment::Third, Segment::Seventh];

    pub fn range(self) -> Range<usize> {
        match self {
            Segment::Root => 0..13,
            Segment::Third => 13..16,
            Segment::Seventh => 16..19,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProfileError {
    #[error("cannot build a shared profile from zero labels")]
    NoLabels,
    #[error("profile entry {index} = {value} outside [0, 1]")]
    OutOfRange { index: usize, value: f64 },
    #[error("{segment:?} segment sums to {sum}, expected 1")]
    BadSegmentSum { segment: Segment, sum: f64 },
    #[error("expected {PROFILE_LEN} profile values, got {0}")]
    WrongLength(usize),
}

/// One-hot interval profile of a single chord label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hip {
    root: usize,
    third: usize,
    seventh: usize,
}

impl Hip {
    pub fn encode(label: &ChordLabel) -> Self {
        let root = label.root().map_or(NO_CHORD_INDEX, |r| r.index());
        Hip {
            root,
            third: Segment::Third.range().start + label.third_class().index(),
            seventh: Segment::Seventh.range().start + label.seventh_class().index(),
        }
    }

    /// The three indices holding ones, in segment order.
    pub fn active_indices(&self) -> [usize; 3] {
        [self.root, self.third, self.seventh]
    }

    pub fn values(&self) -> [f64; PROFILE_LEN] {
        let mut values = [0.0; PROFILE_LEN];
        for i in self.active_indices() {
            values[i] = 1.0;
        }
        values
    }
}

/// Per-segment distribution over the 19 profile bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Ship([f64; PROFILE_LEN]);

impl Ship {
    /// Validates entries in `[0, 1]` and per-segment sums of one.
    pub fn new(values: [f64; PROFILE_LEN]) -> Result<Self, ProfileError> {
        for (index, &value) in values.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ProfileError::OutOfRange { index, value });
            }
        }
        for segment in Segment::ALL {
            let sum: f64 = values[segment.range()].iter().sum();
            if (sum - 1.0).abs() > SEGMENT_SUM_TOLERANCE {
                return Err(ProfileError::BadSegmentSum { segment, sum });
            }
        }
        Ok(Ship(values))
    }

    /// Skips validation; callers guarantee the invariant (softmax outputs).
    pub(crate) fn from_raw(values: [f64; PROFILE_LEN]) -> Self {
        Ship(values)
    }

    /// Equal-weight mean of the labels' HIPs.
    pub fn encode<'a>(labels: impl IntoIterator<Item = &'a ChordLabel>) -> Result<Self, ProfileError> {
        let mut counts = [0usize; PROFILE_LEN];
        let mut n = 0usize;
        for label in labels {
            for i in Hip::encode(label).active_indices() {
                counts[i] += 1;
            }
            n += 1;
        }
        if n == 0 {
            return Err(ProfileError::NoLabels);
        }
        // dividing integer counts keeps k/k exactly 1
        Ok(Ship(counts.map(|c| c as f64 / n as f64)))
    }

    pub fn uniform() -> Self {
        let mut values = [0.0; PROFILE_LEN];
        for segment in Segment::ALL {
            let r = segment.range();
            let p = 1.0 / r.len() as f64;
            values[r].fill(p);
        }
        Ship(values)
    }

    pub fn values(&self) -> &[f64; PROFILE_LEN] {
        &self.0
    }

    pub fn segment(&self, segment: Segment) -> &[f64] {
        &self.0[segment.range()]
    }

    /// Index of the largest entry per segment, lowest index on ties.
    pub fn argmax(&self, segment: Segment) -> usize {
        let values = self.segment(segment);
        let mut best = 0;
        for (i, &v) in values.iter().enumerate() {
            if v > values[best] {
                best = i;
            }
        }
        best
    }
}

impl From<Hip> for Ship {
    fn from(hip: Hip) -> Self {
        Ship(hip.values())
    }
}

impl TryFrom<Vec<f64>> for Ship {
    type Error = ProfileError;

    fn try_from(values: Vec<f64>) -> Result<Self, Self::Error> {
        let array: [f64; PROFILE_LEN] = values
            .try_into()
            .map_err(|v: Vec<f64>| ProfileError::WrongLength(v.len()))?;
        Ship::new(array)
    }
}

impl From<Ship> for Vec<f64> {
    fn from(ship: Ship) -> Self {
        ship.0.to_vec()
    }
}

/// Space-separated values in profile column order.
impl fmt::Display for Ship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

impl fmt::Display for Hip {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        Ship::from(*self).fmt(f)
    }
}
