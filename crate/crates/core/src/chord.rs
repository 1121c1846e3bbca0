//! Chord label syntax.
//!
//! Labels follow the `ROOT[:QUALITY][(EXT{,EXT})][/BASS]` shape used by LAB
//! annotation files, e.g. `G:maj7`, `C#:min/b3`, `A:7(b9)` or `N`. Bass notes
//! are validated and dropped, enharmonic spellings collapse onto one pitch
//! class, and the quality vocabulary is closed.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors produced while parsing a chord label.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChordParseError {
    #[error("empty chord label")]
    Empty,
    #[error("malformed root `{0}`")]
    InvalidRoot(String),
    #[error("empty quality in `{0}`")]
    EmptyQuality(String),
    #[error("unknown quality `{0}`")]
    UnknownQuality(String),
    #[error("malformed extension `{0}`")]
    InvalidExtension(String),
    #[error("malformed bass `{0}`")]
    InvalidBass(String),
    #[error("no-chord label cannot carry `{0}`")]
    DecoratedNoChord(String),
}

/// A chromatic pitch class, `C = 0` up to `B = 11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PitchClass(u8);

const SHARP_NAMES: [&str; 12] = [
    "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#", "A", "A#", "B",
];

impl PitchClass {
    pub const C: PitchClass = PitchClass(0);

    /// Wraps any integer onto the 12 pitch classes.
    pub fn new(value: i32) -> Self {
        PitchClass(value.rem_euclid(12) as u8)
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn transpose(self, semitones: i32) -> Self {
        Self::new(self.0 as i32 + semitones)
    }

    pub fn name(self) -> &'static str {
        SHARP_NAMES[self.index()]
    }

    /// Parses a note name: a letter A-G followed by any number of `#`/`b`.
    pub fn parse_name(text: &str) -> Option<Self> {
        let mut chars = text.chars();
        let natural = match chars.next()? {
            'C' => 0,
            'D' => 2,
            'E' => 4,
            'F' => 5,
            'G' => 7,
            'A' => 9,
            'B' => 11,
            _ => return None,
        };
        let mut offset = 0i32;
        for c in chars {
            match c {
                '#' => offset += 1,
                'b' => offset -= 1,
                _ => return None,
            }
        }
        Some(Self::new(natural + offset))
    }
}

impl fmt::Display for PitchClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The closed set of chord qualities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Quality {
    Maj,
    Min,
    Maj7,
    Min7,
    Dom7,
    MinMaj7,
    Dim,
    Aug,
    Sus2,
    Sus4,
    Dim7,
    HalfDim7,
    Maj6,
    Min6,
}

impl Quality {
    pub const ALL: [Quality; 14] = [
        Quality::Maj,
        Quality::Min,
        Quality::Maj7,
        Quality::Min7,
        Quality::Dom7,
        Quality::MinMaj7,
        Quality::Dim,
        Quality::Aug,
        Quality::Sus2,
        Quality::Sus4,
        Quality::Dim7,
        Quality::HalfDim7,
        Quality::Maj6,
        Quality::Min6,
    ];

    pub fn token(self) -> &'static str {
        match self {
            Quality::Maj => "maj",
            Quality::Min => "min",
            Quality::Maj7 => "maj7",
            Quality::Min7 => "min7",
            Quality::Dom7 => "7",
            Quality::MinMaj7 => "minmaj7",
            Quality::Dim => "dim",
            Quality::Aug => "aug",
            Quality::Sus2 => "sus2",
            Quality::Sus4 => "sus4",
            Quality::Dim7 => "dim7",
            Quality::HalfDim7 => "hdim7",
            Quality::Maj6 => "maj6",
            Quality::Min6 => "min6",
        }
    }

    pub fn from_token(token: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|q| q.token() == token)
    }

    /// Semitone offsets above the root, root included.
    pub fn template(self) -> &'static [u8] {
        match self {
            Quality::Maj => &[0, 4, 7],
            Quality::Min => &[0, 3, 7],
            Quality::Maj7 => &[0, 4, 7, 11],
            Quality::Min7 => &[0, 3, 7, 10],
            Quality::Dom7 => &[0, 4, 7, 10],
            Quality::MinMaj7 => &[0, 3, 7, 11],
            Quality::Dim => &[0, 3, 6],
            Quality::Aug => &[0, 4, 8],
            Quality::Sus2 => &[0, 2, 7],
            Quality::Sus4 => &[0, 5, 7],
            Quality::Dim7 => &[0, 3, 6, 9],
            Quality::HalfDim7 => &[0, 3, 6, 10],
            Quality::Maj6 => &[0, 4, 7, 9],
            Quality::Min6 => &[0, 3, 7, 9],
        }
    }

    fn third(self) -> ThirdClass {
        match self {
            Quality::Maj | Quality::Maj7 | Quality::Dom7 | Quality::Aug | Quality::Maj6 => {
                ThirdClass::Major
            }
            Quality::Min
            | Quality::Min7
            | Quality::MinMaj7
            | Quality::Dim
            | Quality::Dim7
            | Quality::HalfDim7
            | Quality::Min6 => ThirdClass::Minor,
            Quality::Sus2 | Quality::Sus4 => ThirdClass::Absent,
        }
    }

    fn seventh(self) -> SeventhClass {
        match self {
            Quality::Maj7 | Quality::MinMaj7 => SeventhClass::Major,
            Quality::Dom7 | Quality::Min7 | Quality::HalfDim7 => SeventhClass::Minor,
            // the diminished seventh is neither a major nor a minor seventh
            _ => SeventhClass::Absent,
        }
    }
}

/// Which third a chord contains: major, minor, or none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ThirdClass {
    Major,
    Minor,
    Absent,
}

impl ThirdClass {
    /// Position inside the 3-wide third segment of a profile.
    pub fn index(self) -> usize {
        self as usize
    }
}

/// Which seventh a chord contains: major, minor, or none.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SeventhClass {
    Major,
    Minor,
    Absent,
}

impl SeventhClass {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// An added scale degree such as `9`, `b13` or `#11`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Extension {
    degree: u8,
    alteration: i8,
}

impl Extension {
    /// Degrees 1 through 13, shifted by `alteration` semitones.
    pub fn new(degree: u8, alteration: i8) -> Option<Self> {
        (1..=13).contains(&degree).then_some(Extension { degree, alteration })
    }

    /// Semitones above the root, before reduction modulo 12.
    pub fn semitones(self) -> i32 {
        const MAJOR_SCALE: [i32; 7] = [0, 2, 4, 5, 7, 9, 11];
        let d = self.degree as usize - 1;
        MAJOR_SCALE[d % 7] + 12 * (d / 7) as i32 + self.alteration as i32
    }

    fn parse(token: &str) -> Option<Self> {
        let body = token.strip_prefix("add").unwrap_or(token);
        let digits_at = body.find(|c: char| c.is_ascii_digit())?;
        let (accidentals, digits) = body.split_at(digits_at);
        let mut alteration = 0i8;
        for c in accidentals.chars() {
            match c {
                '#' => alteration += 1,
                'b' => alteration -= 1,
                _ => return None,
            }
        }
        if !digits.chars().all(|c| c.is_ascii_digit()) {
            return None;
        }
        Self::new(digits.parse().ok()?, alteration)
    }

    /// Seventh class forced by an explicit `7` or `b7` extension.
    fn seventh(self) -> Option<SeventhClass> {
        match (self.degree, self.alteration) {
            (7, 0) => Some(SeventhClass::Major),
            (7, -1) => Some(SeventhClass::Minor),
            _ => None,
        }
    }
}

impl fmt::Display for Extension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let symbol = if self.alteration < 0 { "b" } else { "#" };
        for _ in 0..self.alteration.unsigned_abs() {
            f.write_str(symbol)?;
        }
        write!(f, "{}", self.degree)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
struct Harmony {
    root: PitchClass,
    quality: Quality,
    extensions: BTreeSet<Extension>,
}

/// A parsed chord label, or the distinguished no-chord label `N`.
///
/// Labels order by their canonical text.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChordLabel(Option<Harmony>);

impl ChordLabel {
    pub fn no_chord() -> Self {
        ChordLabel(None)
    }

    pub fn new(root: PitchClass, quality: Quality) -> Self {
        ChordLabel(Some(Harmony {
            root,
            quality,
            extensions: BTreeSet::new(),
        }))
    }

    /// Adds extensions; a no-chord label stays unchanged.
    pub fn with_extensions(mut self, extensions: impl IntoIterator<Item = Extension>) -> Self {
        if let Some(h) = self.0.as_mut() {
            h.extensions.extend(extensions);
        }
        self
    }

    pub fn parse(text: &str) -> Result<Self, ChordParseError> {
        text.parse()
    }

    pub fn is_no_chord(&self) -> bool {
        self.0.is_none()
    }

    pub fn root(&self) -> Option<PitchClass> {
        self.0.as_ref().map(|h| h.root)
    }

    pub fn quality(&self) -> Option<Quality> {
        self.0.as_ref().map(|h| h.quality)
    }

    pub fn extensions(&self) -> impl Iterator<Item = Extension> + '_ {
        self.0.iter().flat_map(|h| h.extensions.iter().copied())
    }

    pub fn third_class(&self) -> ThirdClass {
        self.quality().map_or(ThirdClass::Absent, Quality::third)
    }

    pub fn seventh_class(&self) -> SeventhClass {
        let Some(quality) = self.quality() else {
            return SeventhClass::Absent;
        };
        match quality.seventh() {
            SeventhClass::Absent => self
                .extensions()
                .filter_map(Extension::seventh)
                .min()
                .unwrap_or(SeventhClass::Absent),
            class => class,
        }
    }

    /// Sorted pitch classes sounded by the chord; empty for no-chord.
    pub fn pitch_classes(&self) -> BTreeSet<PitchClass> {
        let Some(h) = &self.0 else {
            return BTreeSet::new();
        };
        let base = h.root.index() as i32;
        h.quality
            .template()
            .iter()
            .map(|&s| s as i32)
            .chain(h.extensions.iter().map(|e| e.semitones()))
            .map(|s| PitchClass::new(base + s))
            .collect()
    }

    /// Shifts the root; quality and extensions are unchanged.
    pub fn transpose(&self, semitones: i32) -> Self {
        let mut out = self.clone();
        if let Some(h) = out.0.as_mut() {
            h.root = h.root.transpose(semitones);
        }
        out
    }

    /// Same root and quality, without extensions.
    pub fn without_extensions(&self) -> Self {
        match self.0.as_ref() {
            Some(h) => Self::new(h.root, h.quality),
            None => Self::no_chord(),
        }
    }

    pub fn canonical(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ChordLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Some(h) = &self.0 else {
            return f.write_str("N");
        };
        write!(f, "{}:{}", h.root, h.quality.token())?;
        if !h.extensions.is_empty() {
            f.write_str("(")?;
            for (i, e) in h.extensions.iter().enumerate() {
                if i > 0 {
                    f.write_str(",")?;
                }
                write!(f, "{e}")?;
            }
            f.write_str(")")?;
        }
        Ok(())
    }
}

impl PartialOrd for ChordLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ChordLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.canonical().cmp(&other.canonical())
    }
}

impl FromStr for ChordLabel {
    type Err = ChordParseError;

    fn from_str(text: &str) -> Result<Self, Self::Err> {
        if text.is_empty() {
            return Err(ChordParseError::Empty);
        }
        let (body, bass) = match text.split_once('/') {
            Some((body, bass)) => (body, Some(bass)),
            None => (text, None),
        };
        if let Some(bass) = bass {
            let is_degree = Extension::parse(bass).is_some() && !bass.starts_with("add");
            if !is_degree && PitchClass::parse_name(bass).is_none() {
                return Err(ChordParseError::InvalidBass(bass.to_string()));
            }
        }

        let (head, extensions) = match body.find('(') {
            Some(open) => {
                let inner = body[open + 1..]
                    .strip_suffix(')')
                    .ok_or_else(|| ChordParseError::InvalidExtension(body[open..].to_string()))?;
                (&body[..open], Some(inner))
            }
            None => (body, None),
        };
        let (root_text, quality_text) = match head.split_once(':') {
            Some((root, quality)) => (root, Some(quality)),
            None => (head, None),
        };

        if root_text == "N" || root_text == "X" {
            if quality_text.is_some() || extensions.is_some() || bass.is_some() {
                return Err(ChordParseError::DecoratedNoChord(text.to_string()));
            }
            return Ok(Self::no_chord());
        }
        let root = PitchClass::parse_name(root_text)
            .ok_or_else(|| ChordParseError::InvalidRoot(root_text.to_string()))?;
        let quality = match quality_text {
            None => Quality::Maj,
            Some("") => return Err(ChordParseError::EmptyQuality(text.to_string())),
            Some(q) => {
                Quality::from_token(q).ok_or_else(|| ChordParseError::UnknownQuality(q.to_string()))?
            }
        };
        let mut label = Self::new(root, quality);
        if let Some(inner) = extensions {
            let parsed = inner
                .split(',')
                .map(|t| {
                    let t = t.trim();
                    Extension::parse(t).ok_or_else(|| ChordParseError::InvalidExtension(t.to_string()))
                })
                .collect::<Result<Vec<_>, _>>()?;
            label = label.with_extensions(parsed);
        }
        Ok(label)
    }
}

impl Serialize for ChordLabel {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ChordLabel {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pcs(label: &str) -> Vec<usize> {
        ChordLabel::parse(label)
            .unwrap()
            .pitch_classes()
            .into_iter()
            .map(PitchClass::index)
            .collect()
    }

    #[test]
    fn parses_table_labels() {
        let label = ChordLabel::parse("G:maj7").unwrap();
        assert_eq!(label.root(), Some(PitchClass::new(7)));
        assert_eq!(label.quality(), Some(Quality::Maj7));
        assert!(ChordLabel::parse("N").unwrap().is_no_chord());
        assert!(ChordLabel::parse("X").unwrap().is_no_chord());
    }

    #[test]
    fn inversion_is_discarded() {
        let label = ChordLabel::parse("C#:min/b3").unwrap();
        assert_eq!(label.root(), Some(PitchClass::new(1)));
        assert_eq!(label.quality(), Some(Quality::Min));
        assert_eq!(label, ChordLabel::parse("Db:min/E").unwrap());
    }

    #[test]
    fn bare_root_is_major() {
        assert_eq!(ChordLabel::parse("C").unwrap().to_string(), "C:maj");
        assert_eq!(ChordLabel::parse("Bb(9)").unwrap().to_string(), "A#:maj(9)");
    }

    #[test]
    fn parse_errors_name_the_culprit() {
        assert_eq!(
            ChordLabel::parse("H:maj"),
            Err(ChordParseError::InvalidRoot("H".into()))
        );
        assert_eq!(
            ChordLabel::parse("C:foo"),
            Err(ChordParseError::UnknownQuality("foo".into()))
        );
        assert!(matches!(ChordLabel::parse("C:"), Err(ChordParseError::EmptyQuality(_))));
        assert!(matches!(ChordLabel::parse("C:maj(x)"), Err(ChordParseError::InvalidExtension(_))));
        assert!(matches!(ChordLabel::parse("C:maj(9"), Err(ChordParseError::InvalidExtension(_))));
        assert!(matches!(ChordLabel::parse("C:maj/"), Err(ChordParseError::InvalidBass(_))));
        assert!(matches!(ChordLabel::parse("N:maj"), Err(ChordParseError::DecoratedNoChord(_))));
        assert_eq!(ChordLabel::parse(""), Err(ChordParseError::Empty));
    }

    #[test]
    fn interval_classes() {
        let class = |s: &str| {
            let l = ChordLabel::parse(s).unwrap();
            (l.third_class(), l.seventh_class())
        };
        assert_eq!(class("G:maj7"), (ThirdClass::Major, SeventhClass::Major));
        assert_eq!(class("G:minmaj7"), (ThirdClass::Minor, SeventhClass::Major));
        assert_eq!(class("G:maj"), (ThirdClass::Major, SeventhClass::Absent));
        assert_eq!(class("A:7"), (ThirdClass::Major, SeventhClass::Minor));
        assert_eq!(class("C:sus4"), (ThirdClass::Absent, SeventhClass::Absent));
        assert_eq!(class("B:dim7"), (ThirdClass::Minor, SeventhClass::Absent));
        assert_eq!(class("B:hdim7"), (ThirdClass::Minor, SeventhClass::Minor));
        assert_eq!(class("N"), (ThirdClass::Absent, SeventhClass::Absent));
    }

    #[test]
    fn seventh_extensions_override_absent_seventh() {
        let class = |s: &str| ChordLabel::parse(s).unwrap().seventh_class();
        assert_eq!(class("C:sus4(b7)"), SeventhClass::Minor);
        assert_eq!(class("C:maj(7)"), SeventhClass::Major);
        assert_eq!(class("C:maj(9)"), SeventhClass::Absent);
        assert_eq!(class("C:min7(7)"), SeventhClass::Minor);
        assert_eq!(ChordLabel::parse("C:maj(b3)").unwrap().third_class(), ThirdClass::Major);
    }

    #[test]
    fn pitch_class_sets() {
        assert_eq!(pcs("C:maj"), vec![0, 4, 7]);
        // {7, 11, 2, 6} sorted
        assert_eq!(pcs("G:maj7"), vec![2, 6, 7, 11]);
        assert!(pcs("N").is_empty());
        assert_eq!(pcs("C:maj(9)"), vec![0, 2, 4, 7]);
        assert_eq!(pcs("C:7(b13)"), vec![0, 4, 7, 8, 10]);
    }

    #[test]
    fn extension_normalization() {
        let label = ChordLabel::parse("C:maj(add9,b13, #11)").unwrap();
        assert_eq!(label.to_string(), "C:maj(9,#11,b13)");
    }

    fn any_label() -> impl Strategy<Value = ChordLabel> {
        let ext = (1u8..=13, -1i8..=1).prop_map(|(d, a)| Extension::new(d, a).unwrap());
        prop_oneof![
            1 => Just(ChordLabel::no_chord()),
            12 => (0i32..12, 0usize..14, proptest::collection::vec(ext, 0..3)).prop_map(
                |(r, q, e)| ChordLabel::new(PitchClass::new(r), Quality::ALL[q]).with_extensions(e)
            ),
        ]
    }

    proptest! {
        #[test]
        fn render_parse_round_trip(label in any_label()) {
            let text = label.to_string();
            let back = ChordLabel::parse(&text).unwrap();
            prop_assert_eq!(&back, &label);
            prop_assert_eq!(back.to_string(), text);
        }

        #[test]
        fn root_is_sounded(label in any_label()) {
            if let Some(root) = label.root() {
                prop_assert!(label.pitch_classes().contains(&root));
            }
        }

        #[test]
        fn thirds_match_pitch_content(r in 0i32..12, q in 0usize..14) {
            let label = ChordLabel::new(PitchClass::new(r), Quality::ALL[q]);
            let pcs = label.pitch_classes();
            let root = PitchClass::new(r);
            prop_assert_eq!(
                pcs.contains(&root.transpose(4)),
                label.third_class() == ThirdClass::Major
            );
            prop_assert_eq!(
                pcs.contains(&root.transpose(3)),
                label.third_class() == ThirdClass::Minor
            );
        }

        #[test]
        fn transposition_preserves_classes(label in any_label(), k in -24i32..24) {
            let moved = label.transpose(k);
            prop_assert_eq!(moved.third_class(), label.third_class());
            prop_assert_eq!(moved.seventh_class(), label.seventh_class());
            let shifted: BTreeSet<_> = label.pitch_classes().into_iter().map(|p| p.transpose(k)).collect();
            prop_assert_eq!(moved.pitch_classes(), shifted);
        }
    }
}
