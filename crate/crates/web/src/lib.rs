//! Browser bindings: shared profiles from typed labels, decoding into a
//! vocabulary, and the constant-Q spectrum of a synthesized chord.

use serde::Serialize;
use ship_core::annotation::Vocabulary;
use ship_core::chord::ChordLabel;
use ship_core::cqt::{compute_cqt, CqtConfig};
use ship_core::decoder::decode;
use ship_core::hip::{Hip, Ship, PROFILE_COLUMNS};
use ship_core::synth::{render_song, SynthSpec};
use wasm_bindgen::prelude::*;

#[derive(Debug, Serialize)]
pub struct ProfileView {
    pub columns: Vec<&'static str>,
    pub hips: Vec<(String, Vec<f64>)>,
    pub ship: Vec<f64>,
}

#[derive(Debug, Serialize)]
pub struct RankedView {
    pub label: String,
    pub combined: f64,
    pub probability: f64,
}

#[derive(Debug, Serialize)]
pub struct SpectrumView {
    pub label: String,
    pub frequencies: Vec<f64>,
    pub magnitudes: Vec<f64>,
    pub pitch_classes: Vec<String>,
}

/// Labels separated by whitespace or commas.
pub fn parse_labels(text: &str) -> Result<Vec<ChordLabel>, String> {
    let labels: Vec<ChordLabel> = text
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| ChordLabel::parse(t).map_err(|e| format!("`{t}`: {e}")))
        .collect::<Result<_, _>>()?;
    if labels.is_empty() {
        return Err("no labels given".into());
    }
    Ok(labels)
}

pub fn profile(labels: &str) -> Result<ProfileView, String> {
    let labels = parse_labels(labels)?;
    let ship = Ship::encode(&labels).map_err(|e| e.to_string())?;
    Ok(ProfileView {
        columns: PROFILE_COLUMNS.to_vec(),
        hips: labels.iter().map(|l| (l.to_string(), Hip::encode(l).values().to_vec())).collect(),
        ship: ship.values().to_vec(),
    })
}

/// Ranks `vocabulary` against the shared profile of `labels`.
pub fn rank(labels: &str, vocabulary: &str) -> Result<Vec<RankedView>, String> {
    let ship = Ship::encode(&parse_labels(labels)?).map_err(|e| e.to_string())?;
    let vocab = Vocabulary::from_labels(&parse_labels(vocabulary)?).map_err(|e| e.to_string())?;
    let result = decode(&ship, &vocab).map_err(|e| e.to_string())?;
    Ok(result
        .ranked
        .into_iter()
        .map(|c| RankedView { label: c.label.to_string(), combined: c.combined, probability: c.probability })
        .collect())
}

/// Renders two seconds of `label` and returns the middle CQT frame.
pub fn spectrum(label: &str) -> Result<SpectrumView, String> {
    let chord = ChordLabel::parse(label.trim()).map_err(|e| e.to_string())?;
    let spec = SynthSpec {
        n_songs: 1,
        song_length: 2.0,
        chord_pool: vec![chord.clone()],
        segment_duration: (2.0, 2.0),
        annotator_profiles: Vec::new(),
        ..SynthSpec::default()
    };
    let (audio, _) = render_song(&spec, 0).map_err(|e| e.to_string())?;
    let config = CqtConfig::default();
    let cqt = compute_cqt(&audio, &config).map_err(|e| e.to_string())?;
    Ok(SpectrumView {
        label: chord.to_string(),
        frequencies: (0..config.n_bins).map(|k| config.center_frequency(k)).collect(),
        magnitudes: cqt.frame(cqt.n_frames() / 2).to_vec(),
        pitch_classes: chord.pitch_classes().iter().map(|p| p.name().to_string()).collect(),
    })
}

fn to_json<T: Serialize>(value: Result<T, String>) -> Result<String, JsError> {
    let value = value.map_err(|e| JsError::new(&e))?;
    serde_json::to_string(&value).map_err(|e| JsError::new(&e.to_string()))
}

/// JSON `{columns, hips, ship}`.
#[wasm_bindgen(js_name = shipProfile)]
pub fn ship_profile(labels: &str) -> Result<String, JsError> {
    to_json(profile(labels))
}

/// JSON list of `{label, combined, probability}`, most probable first.
#[wasm_bindgen(js_name = decodeVocabulary)]
pub fn decode_vocabulary(labels: &str, vocabulary: &str) -> Result<String, JsError> {
    to_json(rank(labels, vocabulary))
}

/// JSON `{label, frequencies, magnitudes, pitch_classes}`.
#[wasm_bindgen(js_name = chordSpectrum)]
pub fn chord_spectrum(label: &str) -> Result<String, JsError> {
    to_json(spectrum(label))
}
