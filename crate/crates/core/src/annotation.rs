//! Timed chord annotations, per-annotator vocabularies, and the frame corpus
//! that pairs CQT frames with shared-profile targets.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chord::{ChordLabel, ChordParseError};
use crate::cqt::CqtMatrix;
use crate::hip::Ship;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnnotationError {
    #[error("line {line}: expected `start end label`")]
    Syntax { line: usize },
    #[error("line {line}: bad time `{text}`")]
    Time { line: usize, text: String },
    #[error("line {line}: segment ends at {end} before it starts at {start}")]
    Reversed { line: usize, start: f64, end: f64 },
    #[error("line {line}: segment starting at {start} overlaps the previous one ending at {prev_end}")]
    Overlap { line: usize, start: f64, prev_end: f64 },
    #[error("line {line}: {source}")]
    Label { line: usize, source: ChordParseError },
    #[error("song `{song}` has no track for annotator `{annotator}`")]
    MissingTrack { song: String, annotator: String },
    #[error("song `{song}` has an unexpected or duplicate track for annotator `{annotator}`")]
    UnexpectedTrack { song: String, annotator: String },
    #[error("corpus has no songs or no annotators")]
    EmptyCorpus,
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("split ratios {0:?} must be positive and sum to 1")]
    BadRatios([f64; 3]),
    #[error("vocabulary would be empty")]
    EmptyVocabulary,
    #[error("corpus has not been split")]
    NotSplit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: f64,
    pub end: f64,
    pub label: ChordLabel,
}

/// One annotator's timed labels for one song.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationTrack {
    pub annotator_id: String,
    pub song_id: String,
    segments: Vec<Segment>,
}

impl AnnotationTrack {
    /// Validates ordering: every segment has `start < end` and starts at or
    /// after the previous end.
    pub fn new(
        annotator_id: impl Into<String>,
        song_id: impl Into<String>,
        segments: Vec<Segment>,
    ) -> Result<Self, AnnotationError> {
        let mut prev_end = f64::NEG_INFINITY;
        for (i, s) in segments.iter().enumerate() {
            let line = i + 1;
            if !(s.start.is_finite() && s.end.is_finite()) || s.start < 0.0 {
                return Err(AnnotationError::Time { line, text: format!("{} {}", s.start, s.end) });
            }
            if s.end <= s.start {
                return Err(AnnotationError::Reversed { line, start: s.start, end: s.end });
            }
            if s.start < prev_end {
                return Err(AnnotationError::Overlap { line, start: s.start, prev_end });
            }
            prev_end = s.end;
        }
        Ok(AnnotationTrack {
            annotator_id: annotator_id.into(),
            song_id: song_id.into(),
            segments,
        })
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Label sounding at `time`; gaps and times past the end are no-chord.
    pub fn label_at(&self, time: f64) -> ChordLabel {
        let idx = self.segments.partition_point(|s| s.start <= time);
        match idx.checked_sub(1).map(|i| &self.segments[i]) {
            Some(s) if time < s.end => s.label.clone(),
            _ => ChordLabel::no_chord(),
        }
    }

    pub fn labels(&self) -> impl Iterator<Item = &ChordLabel> {
        self.segments.iter().map(|s| &s.label)
    }

    /// Applies `f` to every label, keeping the timing.
    pub fn relabel(&self, annotator_id: &str, f: impl Fn(&ChordLabel) -> ChordLabel) -> Self {
        AnnotationTrack {
            annotator_id: annotator_id.to_string(),
            song_id: self.song_id.clone(),
            segments: self
                .segments
                .iter()
                .map(|s| Segment { start: s.start, end: s.end, label: f(&s.label) })
                .collect(),
        }
    }

    pub fn to_lab(&self) -> String {
        render_lab(&self.segments)
    }
}

/// Parses `start end label` lines; blank lines are skipped.
pub fn parse_lab(text: &str, annotator_id: &str, song_id: &str) -> Result<AnnotationTrack, AnnotationError> {
    let mut segments = Vec::new();
    let mut prev_end = f64::NEG_INFINITY;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let [start, end, label] = fields[..] else {
            return Err(AnnotationError::Syntax { line });
        };
        let time = |t: &str| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| AnnotationError::Time { line, text: t.to_string() })
        };
        let (start, end) = (time(start)?, time(end)?);
        if end <= start {
            return Err(AnnotationError::Reversed { line, start, end });
        }
        if start < prev_end {
            return Err(AnnotationError::Overlap { line, start, prev_end });
        }
        let label = ChordLabel::parse(label).map_err(|source| AnnotationError::Label { line, source })?;
        prev_end = end;
        segments.push(Segment { start, end, label });
    }
    Ok(AnnotationTrack {
        annotator_id: annotator_id.to_string(),
        song_id: song_id.to_string(),
        segments,
    })
}

pub fn render_lab(segments: &[Segment]) -> String {
    let mut out = String::new();
    for s in segments {
        writeln!(out, "{} {} {}", s.start, s.end, s.label).unwrap();
    }
    out
}

/// Deduplicated label set in canonical text order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    labels: BTreeSet<ChordLabel>,
}

impl Vocabulary {
    pub fn from_labels<'a>(labels: impl IntoIterator<Item = &'a ChordLabel>) -> Result<Self, AnnotationError> {
        let labels: BTreeSet<ChordLabel> = labels.into_iter().cloned().collect();
        if labels.is_empty() {
            return Err(AnnotationError::EmptyVocabulary);
        }
        Ok(Vocabulary { labels })
    }

    /// All labels used across one annotator's tracks.
    pub fn from_tracks<'a>(tracks: impl IntoIterator<Item = &'a AnnotationTrack>) -> Result<Self, AnnotationError> {
        Self::from_labels(tracks.into_iter().flat_map(|t| t.labels()))
    }

    pub fn labels(&self) -> impl Iterator<Item = &ChordLabel> {
        self.labels.iter()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn contains(&self, label: &ChordLabel) -> bool {
        self.labels.contains(label)
    }

    pub fn insert(&mut self, label: ChordLabel) -> bool {
        self.labels.insert(label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Frames are shuffled individually across all songs.
    #[default]
    Frame,
    /// Whole songs go to one split.
    Song,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub ratios: [f64; 3],
    pub seed: u64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig { ratios: DEFAULT_RATIOS, seed: 0, mode: SplitMode::Frame }
    }
}

pub const DEFAULT_RATIOS: [f64; 3] = [0.65, 0.10, 0.25];

/// Frame counts for a frame-wise split of `total` frames.
pub fn split_counts(total: usize, ratios: [f64; 3]) -> Result<[usize; 3], AnnotationError> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !(r.is_finite() && *r > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(AnnotationError::BadRatios(ratios));
    }
    let train = ((ratios[0] * total as f64).round() as usize).min(total);
    let val = ((ratios[1] * total as f64).round() as usize).min(total - train);
    Ok([train, val, total - train - val])
}

/// Input to [`build_corpus`]: one song's features and all of its tracks.
#[derive(Debug, Clone)]
pub struct SongInput {
    pub song_id: String,
    pub cqt: CqtMatrix,
    pub tracks: Vec<AnnotationTrack>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongFrames {
    pub song_id: String,
    pub cqt: CqtMatrix,
    /// `labels[annotator][frame]`
    pub labels: Vec<Vec<ChordLabel>>,
    pub targets: Vec<Ship>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FrameRef {
    pub song: usize,
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    annotators: Vec<String>,
    songs: Vec<SongFrames>,
    splits: Option<Vec<Split>>,
}

/// Samples every annotator's label at each frame center and averages them
/// into shared-profile targets. Annotators are taken from the first song and
/// every song must carry exactly one track per annotator.
pub fn build_corpus(songs: Vec<SongInput>) -> Result<Corpus, AnnotationError> {
    let first = songs.first().ok_or(AnnotationError::EmptyCorpus)?;
    let annotators: Vec<String> = first.tracks.iter().map(|t| t.annotator_id.clone()).collect();
    if annotators.is_empty() {
        return Err(AnnotationError::EmptyCorpus);
    }
    let mut out = Vec::with_capacity(songs.len());
    for song in songs {
        let mut ordered: Vec<Option<&AnnotationTrack>> = vec![None; annotators.len()];
        for track in &song.tracks {
            let slot = annotators.iter().position(|a| *a == track.annotator_id);
            match slot.map(|i| &mut ordered[i]) {
                Some(s @ None) => *s = Some(track),
                _ => {
                    return Err(AnnotationError::UnexpectedTrack {
                        song: song.song_id.clone(),
                        annotator: track.annotator_id.clone(),
                    })
                }
            }
        }
        let tracks = ordered
            .into_iter()
            .zip(&annotators)
            .map(|(t, a)| {
                t.ok_or_else(|| AnnotationError::MissingTrack {
                    song: song.song_id.clone(),
                    annotator: a.clone(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let times = song.cqt.frame_times();
        let labels: Vec<Vec<ChordLabel>> = tracks
            .iter()
            .map(|t| times.iter().map(|&time| t.label_at(time)).collect())
            .collect();
        let targets = (0..times.len())
            .map(|n| Ship::encode(labels.iter().map(|per_frame| &per_frame[n])))
            .collect::<Result<Vec<_>, _>>()
            .expect("at least one annotator");
        out.push(SongFrames { song_id: song.song_id, cqt: song.cqt, labels, targets });
    }
    Ok(Corpus { annotators, songs: out, splits: None })
}

impl Corpus {
    pub fn annotators(&self) -> &[String] {
        &self.annotators
    }

    pub fn songs(&self) -> &[SongFrames] {
        &self.songs
    }

    pub fn n_frames(&self) -> usize {
        self.songs.iter().map(|s| s.targets.len()).sum()
    }

    /// Every frame in enumeration order: songs in order, frames in order.
    pub fn frame_refs(&self) -> Vec<FrameRef> {
        self.songs
            .iter()
            .enumerate()
            .flat_map(|(song, s)| (0..s.targets.len()).map(move |frame| FrameRef { song, frame }))
            .collect()
    }

    pub fn target(&self, at: FrameRef) -> &Ship {
        &self.songs[at.song].targets[at.frame]
    }

    pub fn annotator_index(&self, annotator: &str) -> Result<usize, AnnotationError> {
        self.annotators
            .iter()
            .position(|a| a == annotator)
            .ok_or_else(|| AnnotationError::UnknownAnnotator(annotator.to_string()))
    }

    pub fn label(&self, annotator: usize, at: FrameRef) -> &ChordLabel {
        &self.songs[at.song].labels[annotator][at.frame]
    }

    pub fn splits(&self) -> Option<&[Split]> {
        self.splits.as_deref()
    }

    /// Frames assigned to `split`, in enumeration order.
    pub fn frames_in(&self, split: Split) -> Result<Vec<FrameRef>, AnnotationError> {
        let splits = self.splits.as_ref().ok_or(AnnotationError::NotSplit)?;
        Ok(self
            .frame_refs()
            .into_iter()
            .zip(splits)
            .filter(|(_, s)| **s == split)
            .map(|(f, _)| f)
            .collect())
    }

    /// Assigns every frame to a split as a pure function of the seed and the
    /// frame enumeration order.
    pub fn split(mut self, config: &SplitConfig) -> Result<Self, AnnotationError> {
        let total = self.n_frames();
        let counts = split_counts(total, config.ratios)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut assignment = vec![Split::Train; total];
        match config.mode {
            SplitMode::Frame => {
                let mut order: Vec<usize> = (0..total).collect();
                order.shuffle(&mut rng);
                for &i in &order[counts[0]..counts[0] + counts[1]] {
                    assignment[i] = Split::Val;
                }
                for &i in &order[counts[0] + counts[1]..] {
                    assignment[i] = Split::Test;
                }
            }
            SplitMode::Song => {
                let mut offsets = Vec::with_capacity(self.songs.len());
                let mut acc = 0;
                for s in &self.songs {
                    offsets.push(acc);
                    acc += s.targets.len();
                }
                let mut order: Vec<usize> = (0..self.songs.len()).collect();
                order.shuffle(&mut rng);
                let mut filled = 0;
                for song in order {
                    let split = if filled < counts[0] {
                        Split::Train
                    } else if filled < counts[0] + counts[1] {
                        Split::Val
                    } else {
                        Split::Test
                    };
                    let len = self.songs[song].targets.len();
                    assignment[offsets[song]..offsets[song] + len].fill(split);
                    filled += len;
                }
            }
        }
        self.splits = Some(assignment);
        Ok(self)
    }

    /// Keeps only the named annotators and recomputes the targets; splits are
    /// preserved.
    pub fn restricted_to(&self, annotators: &[String]) -> Result<Self, AnnotationError> {
        if annotators.is_empty() {
            return Err(AnnotationError::EmptyCorpus);
        }
        let idx = annotators
            .iter()
            .map(|a| self.annotator_index(a))
            .collect::<Result<Vec<_>, _>>()?;
        let songs = self
            .songs
            .iter()
            .map(|s| {
                let labels: Vec<Vec<ChordLabel>> = idx.iter().map(|&i| s.labels[i].clone()).collect();
                let targets = (0..s.targets.len())
                    .map(|n| Ship::encode(labels.iter().map(|l| &l[n])).expect("non-empty"))
                    .collect();
                SongFrames { song_id: s.song_id.clone(), cqt: s.cqt.clone(), labels, targets }
            })
            .collect();
        Ok(Corpus { annotators: annotators.to_vec(), songs, splits: self.splits.clone() })
    }

    /// Vocabulary of one annotator's labels over the frames of `split`.
    pub fn vocabulary(&self, annotator: usize, split: Split) -> Result<Vocabulary, AnnotationError> {
        let frames = self.frames_in(split)?;
        Vocabulary::from_labels(frames.iter().map(|&f| self.label(annotator, f)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hip::Hip;

    const TWO: &str = "0.0 2.5 G:maj7\n2.5 4.0 C:maj";

    fn label(s: &str) -> ChordLabel {
        ChordLabel::parse(s).unwrap()
    }

    fn matrix(n_frames: usize) -> CqtMatrix {
        CqtMatrix::from_rows(vec![0.0; n_frames * 4], 4, 4096, 22050)
    }

    fn constant_track(annotator: &str, chord: &str) -> AnnotationTrack {
        parse_lab(&format!("0 1000 {chord}"), annotator, "s").unwrap()
    }

    #[test]
    fn parses_lab_lines() {
        let t = parse_lab(TWO, "a", "s").unwrap();
        assert_eq!(t.segments().len(), 2);
        assert_eq!(t.segments()[0].label, label("G:maj7"));
        let t = parse_lab("0.0 2.0 N\n\n", "a", "s").unwrap();
        assert_eq!(t.segments().len(), 1);
        assert!(t.segments()[0].label.is_no_chord());
    }

    #[test]
    fn lab_errors_carry_line_numbers() {
        assert!(matches!(
            parse_lab("2.0 1.0 C:maj", "a", "s"),
            Err(AnnotationError::Reversed { line: 1, .. })
        ));
        assert!(matches!(
            parse_lab("0 2 C\n1 3 D", "a", "s"),
            Err(AnnotationError::Overlap { line: 2, .. })
        ));
        assert!(matches!(
            parse_lab("0 2 C\n2 3 H:maj", "a", "s"),
            Err(AnnotationError::Label { line: 2, .. })
        ));
        assert!(matches!(parse_lab("0 2", "a", "s"), Err(AnnotationError::Syntax { line: 1 })));
        assert!(matches!(parse_lab("x 2 C", "a", "s"), Err(AnnotationError::Time { line: 1, .. })));
    }

    #[test]
    fn label_lookup_is_half_open() {
        let t = parse_lab("0.0 2.5 G:maj7\n2.5 4.0 C:maj\n5.0 6.0 A:min", "a", "s").unwrap();
        assert_eq!(t.label_at(1.0), label("G:maj7"));
        assert_eq!(t.label_at(2.5), label("C:maj"));
        assert!(t.label_at(4.5).is_no_chord());
        assert_eq!(t.label_at(5.0), label("A:min"));
        assert!(t.label_at(100.0).is_no_chord());
    }

    #[test]
    fn lab_render_round_trip() {
        let t = parse_lab("0 0.1 C:maj(9)\n0.1 0.30000000000000004 N\n0.5 1.25 Db:min7/b7", "a", "s").unwrap();
        let back = parse_lab(&t.to_lab(), "a", "s").unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn table_labels_give_table_ship() {
        let tracks = ["G:maj7", "G:maj", "G:maj7", "G:minmaj7"]
            .iter()
            .enumerate()
            .map(|(i, c)| constant_track(&format!("a{i}"), c))
            .collect();
        let corpus = build_corpus(vec![SongInput { song_id: "s".into(), cqt: matrix(5), tracks }]).unwrap();
        let mut expected = [0.0; 19];
        expected[7] = 1.0;
        expected[13] = 0.75;
        expected[14] = 0.25;
        expected[16] = 0.75;
        expected[18] = 0.25;
        for ship in &corpus.songs()[0].targets {
            assert_eq!(ship.values(), &expected);
        }
    }

    #[test]
    fn single_annotator_targets_are_hips() {
        let t = parse_lab(TWO, "a", "s").unwrap();
        let corpus = build_corpus(vec![SongInput { song_id: "s".into(), cqt: matrix(30), tracks: vec![t.clone()] }]).unwrap();
        for (n, ship) in corpus.songs()[0].targets.iter().enumerate() {
            let time = corpus.songs()[0].cqt.frame_time(n);
            assert_eq!(*ship, Ship::from(Hip::encode(&t.label_at(time))));
        }
    }

    #[test]
    fn agreeing_annotators_give_one_hot_targets() {
        let a = parse_lab(TWO, "a", "s").unwrap();
        let b = parse_lab(TWO, "b", "s").unwrap();
        let corpus = build_corpus(vec![SongInput { song_id: "s".into(), cqt: matrix(30), tracks: vec![a, b] }]).unwrap();
        for ship in &corpus.songs()[0].targets {
            assert!(ship.values().iter().all(|&v| v == 0.0 || v == 1.0));
        }
    }

    #[test]
    fn missing_annotator_is_an_error() {
        let songs = vec![
            SongInput {
                song_id: "s1".into(),
                cqt: matrix(3),
                tracks: vec![constant_track("a", "C"), constant_track("b", "C")],
            },
            SongInput { song_id: "s2".into(), cqt: matrix(3), tracks: vec![constant_track("a", "C")] },
        ];
        assert!(matches!(build_corpus(songs), Err(AnnotationError::MissingTrack { .. })));
    }

    #[test]
    fn split_arithmetic() {
        assert_eq!(split_counts(100, DEFAULT_RATIOS).unwrap(), [65, 10, 25]);
        assert_eq!(split_counts(43320, DEFAULT_RATIOS).unwrap(), [28158, 4332, 10830]);
        assert!(split_counts(10, [0.5, 0.5, 0.1]).is_err());
        assert!(split_counts(10, [1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn split_is_seeded_and_exhaustive() {
        let corpus = build_corpus(vec![SongInput {
            song_id: "s".into(),
            cqt: matrix(100),
            tracks: vec![constant_track("a", "C")],
        }])
        .unwrap();
        let config = SplitConfig { seed: 11, ..Default::default() };
        let a = corpus.clone().split(&config).unwrap();
        let b = corpus.clone().split(&config).unwrap();
        assert_eq!(a.splits(), b.splits());
        let counts: Vec<usize> = [Split::Train, Split::Val, Split::Test]
            .iter()
            .map(|&s| a.frames_in(s).unwrap().len())
            .collect();
        assert_eq!(counts, vec![65, 10, 25]);
        let other = corpus.split(&SplitConfig { seed: 12, ..Default::default() }).unwrap();
        assert_ne!(a.splits(), other.splits());
    }

    #[test]
    fn song_split_keeps_songs_whole() {
        let songs = (0..6)
            .map(|i| SongInput {
                song_id: format!("s{i}"),
                cqt: matrix(10),
                tracks: vec![constant_track("a", "C")],
            })
            .collect();
        let corpus = build_corpus(songs)
            .unwrap()
            .split(&SplitConfig { mode: SplitMode::Song, seed: 3, ..Default::default() })
            .unwrap();
        for chunk in corpus.splits().unwrap().chunks(10) {
            assert!(chunk.iter().all(|s| *s == chunk[0]));
        }
    }

    #[test]
    fn vocabulary_deduplicates() {
        let t1 = parse_lab("0 1 C:maj\n1 2 G:maj7\n2 3 N\n3 4 C:maj", "a", "s1").unwrap();
        let t2 = parse_lab("0 1 C:maj\n1 2 G:maj7\n2 3 N", "a", "s2").unwrap();
        let v = Vocabulary::from_tracks([&t1]).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(Vocabulary::from_tracks([&t1, &t2]).unwrap(), v);
        let texts: Vec<String> = v.labels().map(|l| l.to_string()).collect();
        assert_eq!(texts, vec!["C:maj", "G:maj7", "N"]);
        let empty = parse_lab("", "a", "s").unwrap();
        assert_eq!(Vocabulary::from_tracks([&empty]), Err(AnnotationError::EmptyVocabulary));
    }
}
