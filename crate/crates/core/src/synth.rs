//! Deterministic synthetic songs with several simulated annotators.
//!
//! Each chord segment is a sum of sinusoids on the chord's pitch classes in
//! octaves 3 to 5, each with a second harmonic 6 dB down. Segments cross-fade
//! over 5 ms and every song is normalized to a peak of 0.5.

use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotation::{AnnotationTrack, Segment};
use crate::audio::AudioBuffer;
use crate::chord::{ChordLabel, PitchClass, Quality};

pub const PEAK: f64 = 0.5;
const CROSSFADE_SECONDS: f64 = 0.005;
const OCTAVES: std::ops::RangeInclusive<i32> = 3..=5;
/// -6 dB
const HARMONIC_GAIN: f64 = 0.501_187_233_627_272_2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("chord pool is empty")]
    EmptyPool,
    #[error("invalid segment duration range {0:?}")]
    Durations((f64, f64)),
    #[error("song length must be positive")]
    SongLength,
    #[error("sample rate must be positive")]
    SampleRate,
    #[error("duplicate annotator id `{0}`")]
    DuplicateAnnotator(String),
}

/// How a simulated annotator rewrites the ground-truth labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RelabelRule {
    Identity,
    /// Every chord becomes its underlying tertian triad; suspensions resolve
    /// to major.
    TriadReducer,
    /// Major triads on the listed roots are heard as major sevenths.
    SeventhEnthusiast { roots: Vec<PitchClass> },
    /// Roots are heard with the seventh above a minor chord: minor triads
    /// become minor sevenths.
    RootBiased,
    /// Only major and minor triads.
    MajMinOnly,
}

impl RelabelRule {
    pub fn apply(&self, label: &ChordLabel) -> ChordLabel {
        let (Some(root), Some(quality)) = (label.root(), label.quality()) else {
            return ChordLabel::no_chord();
        };
        use Quality::*;
        let q = match self {
            RelabelRule::Identity => return label.clone(),
            RelabelRule::TriadReducer => match quality {
                Maj | Maj7 | Dom7 | Maj6 | Sus2 | Sus4 => Maj,
                Min | Min7 | MinMaj7 | Min6 => Min,
                Dim | Dim7 | HalfDim7 => Dim,
                Aug => Aug,
            },
            RelabelRule::SeventhEnthusiast { roots } => match quality {
                Maj if roots.contains(&root) => Maj7,
                _ => return label.clone(),
            },
            RelabelRule::RootBiased => match quality {
                Min => Min7,
                _ => return label.clone(),
            },
            RelabelRule::MajMinOnly => match quality {
                Maj | Maj7 | Dom7 | Maj6 | Sus2 | Sus4 | Aug => Maj,
                Min | Min7 | MinMaj7 | Min6 | Dim | Dim7 | HalfDim7 => Min,
            },
        };
        ChordLabel::new(root, q)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub id: String,
    #[serde(flatten)]
    pub rule: RelabelRule,
}

impl AnnotatorProfile {
    pub fn new(id: &str, rule: RelabelRule) -> Self {
        AnnotatorProfile { id: id.to_string(), rule }
    }

    pub fn relabel(&self, label: &ChordLabel) -> ChordLabel {
        self.rule.apply(label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_songs: usize,
    pub song_length: f64,
    pub chord_pool: Vec<ChordLabel>,
    pub segment_duration: (f64, f64),
    pub sample_rate: u32,
    pub annotator_profiles: Vec<AnnotatorProfile>,
}

/// Twelve roots of maj, min, maj7, min7, 7 and sus4, plus no-chord.
pub fn default_pool() -> Vec<ChordLabel> {
    let qualities = [Quality::Maj, Quality::Min, Quality::Maj7, Quality::Min7, Quality::Dom7, Quality::Sus4];
    let mut pool: Vec<ChordLabel> = (0..12)
        .flat_map(|r| qualities.iter().map(move |&q| ChordLabel::new(PitchClass::new(r), q)))
        .collect();
    pool.push(ChordLabel::no_chord());
    pool
}

/// Roots on which the default seventh enthusiast hears major sevenths.
pub const ENTHUSIAST_ROOTS: usize = 9;

/// The five default annotators; the enthusiast's roots are a seeded subset.
pub fn default_profiles(seed: u64) -> Vec<AnnotatorProfile> {
    let mut roots: Vec<PitchClass> = (0..12).map(PitchClass::new).collect();
    roots.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x7e7e));
    let mut roots = roots[..ENTHUSIAST_ROOTS].to_vec();
    roots.sort();
    vec![
        AnnotatorProfile::new("identity", RelabelRule::Identity),
        AnnotatorProfile::new("triad_reducer", RelabelRule::TriadReducer),
        AnnotatorProfile::new("seventh_enthusiast", RelabelRule::SeventhEnthusiast { roots }),
        AnnotatorProfile::new("root_biased", RelabelRule::RootBiased),
        AnnotatorProfile::new("majmin_only", RelabelRule::MajMinOnly),
    ]
}

impl Default for SynthSpec {
    fn default() -> Self {
        let seed = 7;
        SynthSpec {
            seed,
            n_songs: 20,
            song_length: 60.0,
            chord_pool: default_pool(),
            segment_duration: (4.0, 8.0),
            sample_rate: 22050,
            annotator_profiles: default_profiles(seed),
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.chord_pool.is_empty() {
            return Err(SynthError::EmptyPool);
        }
        let (lo, hi) = self.segment_duration;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return Err(SynthError::Durations(self.segment_duration));
        }
        if !(self.song_length.is_finite() && self.song_length > 0.0) {
            return Err(SynthError::SongLength);
        }
        if self.sample_rate == 0 {
            return Err(SynthError::SampleRate);
        }
        for (i, p) in self.annotator_profiles.iter().enumerate() {
            if self.annotator_profiles[..i].iter().any(|q| q.id == p.id) {
                return Err(SynthError::DuplicateAnnotator(p.id.clone()));
            }
        }
        Ok(())
    }

    pub fn song_id(&self, index: usize) -> String {
        format!("song_{index:03}")
    }
}

fn note_frequency(pc: PitchClass, octave: i32) -> f64 {
    let midi = 12 * (octave + 1) + pc.index() as i32;
    440.0 * 2f64.powf((midi - 69) as f64 / 12.0)
}

/// Seeded chord sequence; consecutive segments never repeat a label.
fn draw_segments(spec: &SynthSpec, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let (lo, hi) = spec.segment_duration;
    let mut segments: Vec<Segment> = Vec::new();
    let mut t = 0.0;
    while t < spec.song_length {
        let dur = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let end = (t + dur).min(spec.song_length);
        let mut label = spec.chord_pool[rng.gen_range(0..spec.chord_pool.len())].clone();
        if spec.chord_pool.len() > 1 {
            while segments.last().is_some_and(|s| s.label == label) {
                label = spec.chord_pool[rng.gen_range(0..spec.chord_pool.len())].clone();
            }
        }
        segments.push(Segment { start: t, end, label });
        t = end;
    }
    segments
}

/// Trapezoid gain: ramps of `fade` seconds centred on both boundaries.
fn envelope(t: f64, start: f64, end: f64, fade: f64) -> f64 {
    let up = ((t - (start - fade / 2.0)) / fade).clamp(0.0, 1.0);
    let down = (((end + fade / 2.0) - t) / fade).clamp(0.0, 1.0);
    up.min(down)
}

/// Audio and ground-truth track for one song, fixed by `(seed, index)`.
pub fn render_song(spec: &SynthSpec, index: usize) -> Result<(AudioBuffer, AnnotationTrack), SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(index as u64);
    let segments = draw_segments(spec, &mut rng);

    let sr = spec.sample_rate as f64;
    let n = (spec.song_length * sr).round() as usize;
    let mut samples = vec![0.0; n];
    for seg in &segments {
        let partials: Vec<(f64, f64)> = seg
            .label
            .pitch_classes()
            .into_iter()
            .flat_map(|pc| OCTAVES.map(move |o| note_frequency(pc, o)))
            .flat_map(|f| [(f, 1.0), (2.0 * f, HARMONIC_GAIN)])
            .collect();
        if partials.is_empty() {
            continue;
        }
        let first = ((seg.start - CROSSFADE_SECONDS) * sr).floor().max(0.0) as usize;
        let last = (((seg.end + CROSSFADE_SECONDS) * sr).ceil() as usize).min(n);
        for (i, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let t = i as f64 / sr;
            let gain = envelope(t, seg.start, seg.end, CROSSFADE_SECONDS);
            if gain == 0.0 {
                continue;
            }
            let tone: f64 = partials.iter().map(|&(f, a)| a * (2.0 * PI * f * t).sin()).sum();
            *s += gain * tone;
        }
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > 0.0 {
        samples.iter_mut().for_each(|s| *s *= PEAK / peak);
    }
    let audio = AudioBuffer::new(samples, spec.sample_rate).expect("finite synthetic audio");
    let track = AnnotationTrack::new("ground_truth", spec.song_id(index), segments).expect("ordered segments");
    Ok((audio, track))
}

/// Relabels a track segment by segment; timing is unchanged.
pub fn annotate(track: &AnnotationTrack, profile: &AnnotatorProfile) -> AnnotationTrack {
    track.relabel(&profile.id, |l| profile.relabel(l))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::Vocabulary;
    use crate::cqt::{compute_cqt, CqtConfig};
    use crate::decoder::decode;
    use crate::hip::Ship;
    use std::collections::BTreeSet;

    fn short_spec() -> SynthSpec {
        SynthSpec { n_songs: 2, song_length: 20.0, ..SynthSpec::default() }
    }

    fn l(s: &str) -> ChordLabel {
        ChordLabel::parse(s).unwrap()
    }

    #[test]
    fn rendering_is_deterministic() {
        let spec = short_spec();
        let (a, ta) = render_song(&spec, 1).unwrap();
        let (b, tb) = render_song(&spec, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = render_song(&spec, 0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn no_clipping() {
        let (audio, _) = render_song(&short_spec(), 0).unwrap();
        let peak = audio.samples().iter().fold(0.0f64, |m, s| m.max(s.abs()));
        assert!(peak <= PEAK + 1e-6);
        assert!((peak - PEAK).abs() < 1e-12);
    }

    #[test]
    fn no_chord_segment_is_silent() {
        let spec = SynthSpec { chord_pool: vec![ChordLabel::no_chord()], song_length: 2.0, ..SynthSpec::default() };
        let (audio, track) = render_song(&spec, 0).unwrap();
        assert!(audio.samples().iter().all(|&s| s == 0.0));
        assert!(track.labels().all(|l| l.is_no_chord()));
    }

    #[test]
    fn c_major_energy_sits_on_its_pitch_classes() {
        let spec = SynthSpec { chord_pool: vec![l("C:maj")], song_length: 4.0, ..SynthSpec::default() };
        let (audio, _) = render_song(&spec, 0).unwrap();
        let config = CqtConfig::default();
        let cqt = compute_cqt(&audio, &config).unwrap();
        let frame = cqt.frame(cqt.n_frames() / 2);
        // fold onto 24 bins per octave, then semitones
        let mut chroma = [0.0; 12];
        for (bin, v) in frame.iter().enumerate() {
            if bin % 2 == 0 {
                chroma[(bin / 2) % 12] += v;
            }
        }
        let mut order: Vec<usize> = (0..12).collect();
        order.sort_by(|&a, &b| chroma[b].total_cmp(&chroma[a]));
        let top: BTreeSet<usize> = order[..3].iter().copied().collect();
        assert_eq!(top, BTreeSet::from([0, 4, 7]));
        // strongest single bins are tones of the chord (even bins 2*(midi-24))
        let mut bins: Vec<usize> = (0..frame.len()).collect();
        bins.sort_by(|&a, &b| frame[b].total_cmp(&frame[a]));
        for &b in &bins[..6] {
            assert_eq!(b % 2, 0);
            assert!([0, 4, 7].contains(&((b / 2) % 12)), "bin {b}");
        }
    }

    #[test]
    fn relabel_rules() {
        let profiles = default_profiles(7);
        let enthusiast_roots = match &profiles[2].rule {
            RelabelRule::SeventhEnthusiast { roots } => roots.clone(),
            _ => unreachable!(),
        };
        assert_eq!(enthusiast_roots.len(), ENTHUSIAST_ROOTS);
        assert_eq!(RelabelRule::TriadReducer.apply(&l("G:maj7")), l("G:maj"));
        assert_eq!(RelabelRule::TriadReducer.apply(&l("G:sus4")), l("G:maj"));
        assert_eq!(RelabelRule::TriadReducer.apply(&l("B:hdim7")), l("B:dim"));
        assert_eq!(RelabelRule::MajMinOnly.apply(&l("B:hdim7")), l("B:min"));
        assert_eq!(RelabelRule::RootBiased.apply(&l("A:min")), l("A:min7"));
        assert_eq!(RelabelRule::RootBiased.apply(&l("A:maj")), l("A:maj"));
        let r = enthusiast_roots[0];
        assert_eq!(profiles[2].relabel(&ChordLabel::new(r, Quality::Maj)), ChordLabel::new(r, Quality::Maj7));
        let other = (0..12).map(PitchClass::new).find(|p| !enthusiast_roots.contains(p)).unwrap();
        assert_eq!(profiles[2].relabel(&ChordLabel::new(other, Quality::Maj)), ChordLabel::new(other, Quality::Maj));
        for p in &profiles {
            assert!(p.relabel(&ChordLabel::no_chord()).is_no_chord());
        }
    }

    #[test]
    fn annotate_keeps_timing() {
        let (_, truth) = render_song(&short_spec(), 0).unwrap();
        let identity = annotate(&truth, &AnnotatorProfile::new("id", RelabelRule::Identity));
        assert_eq!(identity.segments(), truth.segments());
        let reduced = annotate(&truth, &AnnotatorProfile::new("tr", RelabelRule::TriadReducer));
        for (a, b) in reduced.segments().iter().zip(truth.segments()) {
            assert_eq!((a.start, a.end), (b.start, b.end));
        }
        let triads = [Quality::Maj, Quality::Min, Quality::Dim, Quality::Aug];
        assert!(reduced.labels().all(|l| l.quality().is_none_or(|q| triads.contains(&q))));
    }

    #[test]
    fn vocabulary_is_the_image_of_the_ground_truth() {
        let spec = SynthSpec::default();
        let truth: Vec<AnnotationTrack> = (0..3).map(|i| render_song(&short_spec(), i).unwrap().1).collect();
        let truth_vocab = Vocabulary::from_tracks(&truth).unwrap();
        for p in &spec.annotator_profiles {
            let tracks: Vec<AnnotationTrack> = truth.iter().map(|t| annotate(t, p)).collect();
            let vocab = Vocabulary::from_tracks(&tracks).unwrap();
            let image: Vec<ChordLabel> = truth_vocab.labels().map(|l| p.relabel(l)).collect();
            assert_eq!(vocab, Vocabulary::from_labels(&image).unwrap());
        }
    }

    /// With exact shared profiles, every default annotator's own label is the
    /// decoded argmax over their full vocabulary.
    #[test]
    fn default_profiles_are_decodable_from_exact_targets() {
        let spec = SynthSpec::default();
        let profiles = &spec.annotator_profiles;
        let vocabs: Vec<Vocabulary> = profiles
            .iter()
            .map(|p| {
                let image: Vec<ChordLabel> = spec.chord_pool.iter().map(|l| p.relabel(l)).collect();
                Vocabulary::from_labels(&image).unwrap()
            })
            .collect();
        for truth in &spec.chord_pool {
            let labels: Vec<ChordLabel> = profiles.iter().map(|p| p.relabel(truth)).collect();
            let ship = Ship::encode(&labels).unwrap();
            for ((p, vocab), own) in profiles.iter().zip(&vocabs).zip(&labels) {
                let chosen = decode(&ship, vocab).unwrap().chosen().clone();
                assert_eq!(&chosen, own, "annotator {} on {truth}", p.id);
            }
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = SynthSpec::default();
        s.chord_pool.clear();
        assert_eq!(s.validate(), Err(SynthError::EmptyPool));
        let s = SynthSpec { segment_duration: (3.0, 1.0), ..SynthSpec::default() };
        assert!(matches!(s.validate(), Err(SynthError::Durations(_))));
        let mut s = SynthSpec::default();
        s.annotator_profiles.push(s.annotator_profiles[0].clone());
        assert!(matches!(s.validate(), Err(SynthError::DuplicateAnnotator(_))));
    }

    #[test]
    fn spec_json_round_trip() {
        let spec = SynthSpec::default();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(serde_json::from_str::<SynthSpec>(&text).unwrap(), spec);
    }
}
