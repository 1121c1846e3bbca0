//! End-to-end workflow: synthetic corpus on disk, training, personalization,
//! evaluation and the three-arm comparison.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::annotation::{parse_lab, render_lab, AnnotationError, Corpus, FrameRef, Split, SongInput};
use crate::audio::{load_wav, save_wav, AudioError};
use crate::chord::ChordLabel;
use crate::cqt::{compute_cqt, load_cache, save_cache, CqtConfig, CqtError, CqtMatrix};
use crate::decoder::{personalize_sequence, DecodeError, PersonalizedSequence};
use crate::evaluation::{build_report, evaluate_row, EvalError, EvalReport, Metric};
use crate::features::{context_window, FeatureError, StandardizerStats};
use crate::hip::{Ship, PROFILE_LEN};
use crate::manifest::{Manifest, ManifestError, ManifestSong};
use crate::mlp::{row_to_ship, save_model, train, EpochRecord, MlpConfig, MlpError, MlpModel, ModelIoError, TrainError};
use crate::synth::{annotate, render_song, SynthError, SynthSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
const CACHE_DIR: &str = "cache";
const INFERENCE_CHUNK: usize = 1024;

pub const SHIP_SYSTEM: &str = "DNN_SHIP";
pub const ANN_SYSTEM: &str = "ANN|ISO";
pub const ISO_SYSTEM: &str = "DNN_ISO";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("{path}: {source}")]
    Audio { path: PathBuf, source: AudioError },
    #[error(transparent)]
    Cqt(#[from] CqtError),
    #[error("{path}: {source}")]
    Annotation { path: PathBuf, source: AnnotationError },
    #[error(transparent)]
    Corpus(#[from] AnnotationError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Model(#[from] MlpError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    ModelIo(#[from] ModelIoError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("model expects {expected} input features but the corpus yields {got}")]
    FeatureSize { expected: usize, got: usize },
}

type Result<T> = std::result::Result<T, PipelineError>;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    std::fs::write(path, contents).map_err(io_err(path))
}

/// Renders every song, annotates it with every profile and writes
/// `audio/`, `labs/<annotator>/` and the manifest under `out`.
pub fn write_corpus(spec: &SynthSpec, out: &Path) -> Result<Manifest> {
    spec.validate()?;
    create_dir(&out.join("audio"))?;
    for p in &spec.annotator_profiles {
        create_dir(&out.join("labs").join(&p.id))?;
    }
    let mut songs = Vec::with_capacity(spec.n_songs);
    for index in 0..spec.n_songs {
        let (audio, truth) = render_song(spec, index)?;
        let id = spec.song_id(index);
        let audio_rel = PathBuf::from("audio").join(format!("{id}.wav"));
        let audio_path = out.join(&audio_rel);
        save_wav(&audio_path, &audio).map_err(|source| PipelineError::Audio { path: audio_path.clone(), source })?;
        let mut labs = std::collections::BTreeMap::new();
        for p in &spec.annotator_profiles {
            let rel = PathBuf::from("labs").join(&p.id).join(format!("{id}.lab"));
            write_file(&out.join(&rel), annotate(&truth, p).to_lab())?;
            labs.insert(p.id.clone(), rel);
        }
        songs.push(ManifestSong { id, audio: audio_rel, labs });
    }
    let split = crate::annotation::SplitConfig { seed: spec.seed, ..Default::default() };
    let annotators = spec.annotator_profiles.iter().map(|p| p.id.clone()).collect();
    let manifest = Manifest::new(annotators, split, CqtConfig::default(), songs);
    manifest.validate()?;
    write_file(&out.join(MANIFEST_FILE), manifest.to_json())?;
    Manifest::load(out.join(MANIFEST_FILE)).map_err(Into::into)
}

fn cache_key(audio_bytes: &[u8], config: &CqtConfig) -> String {
    let mut hasher = Sha256::new();
    hasher.update(audio_bytes);
    hasher.update(serde_json::to_vec(config).expect("config serializes"));
    hasher.finalize().iter().fold(String::new(), |mut s, b| {
        write!(s, "{b:02x}").unwrap();
        s
    })
}

/// CQT of a WAV file, reusing `cache_dir/<hash>.cqt` when present.
pub fn cached_cqt(audio_path: &Path, config: &CqtConfig, cache_dir: Option<&Path>) -> Result<CqtMatrix> {
    let bytes = std::fs::read(audio_path).map_err(io_err(audio_path))?;
    let cache_path = cache_dir.map(|d| d.join(format!("{}.cqt", cache_key(&bytes, config))));
    if let Some(path) = &cache_path {
        if let Ok((matrix, cached)) = load_cache(path) {
            if cached == *config {
                return Ok(matrix);
            }
        }
    }
    let audio = load_wav(audio_path).map_err(|source| PipelineError::Audio { path: audio_path.into(), source })?;
    let matrix = compute_cqt(&audio, config)?;
    if let (Some(dir), Some(path)) = (cache_dir, &cache_path) {
        create_dir(dir)?;
        // write then rename so an interrupted run never leaves a truncated entry
        let tmp = path.with_extension("tmp");
        save_cache(&tmp, &matrix, config)?;
        std::fs::rename(&tmp, path).map_err(io_err(path))?;
    }
    Ok(matrix)
}

/// Reads audio and annotations and splits the frames as the manifest says.
pub fn load_corpus(manifest: &Manifest, split_override: Option<&crate::annotation::SplitConfig>) -> Result<Corpus> {
    let cache_dir = manifest.base_dir().join(CACHE_DIR);
    let mut inputs = Vec::with_capacity(manifest.songs.len());
    for song in &manifest.songs {
        let cqt = cached_cqt(&manifest.resolve(&song.audio), &manifest.cqt, Some(&cache_dir))?;
        let tracks = manifest
            .annotators
            .iter()
            .map(|a| {
                let path = manifest.resolve(&song.labs[a]);
                let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
                parse_lab(&text, a, &song.id).map_err(|source| PipelineError::Annotation { path, source })
            })
            .collect::<Result<Vec<_>>>()?;
        inputs.push(SongInput { song_id: song.id.clone(), cqt, tracks });
    }
    let corpus = crate::annotation::build_corpus(inputs)?;
    Ok(corpus.split(split_override.unwrap_or(&manifest.split))?)
}

/// Raw context windows of `frames`, one row each.
fn raw_features(corpus: &Corpus, frames: &[FrameRef]) -> Result<Array2<f64>> {
    let dim = corpus.songs().first().map_or(0, |s| s.cqt.n_bins()) * crate::features::CONTEXT_FRAMES;
    let mut x = Array2::zeros((frames.len(), dim));
    for (mut row, f) in x.rows_mut().into_iter().zip(frames) {
        let w = context_window(&corpus.songs()[f.song].cqt, f.frame)?;
        row.as_slice_mut().expect("standard layout").copy_from_slice(&w);
    }
    Ok(x)
}

fn standardize(x: &mut Array2<f64>, stats: &StandardizerStats) -> Result<()> {
    for mut row in x.rows_mut() {
        stats.apply_in_place(row.as_slice_mut().expect("standard layout"))?;
    }
    Ok(())
}

fn targets(corpus: &Corpus, frames: &[FrameRef]) -> Array2<f64> {
    let mut t = Array2::zeros((frames.len(), PROFILE_LEN));
    for (mut row, &f) in t.rows_mut().into_iter().zip(frames) {
        row.as_slice_mut().unwrap().copy_from_slice(corpus.target(f).values());
    }
    t
}

/// Trains on the profiles shared by `annotators`; one annotator gives the
/// single-reference baseline. Statistics come from the training split only.
pub fn train_on(
    corpus: &Corpus,
    annotators: &[String],
    config: &MlpConfig,
    on_epoch: impl FnMut(&EpochRecord),
) -> Result<MlpModel> {
    for a in annotators {
        if !corpus.annotators().contains(a) {
            return Err(PipelineError::UnknownAnnotator(a.clone()));
        }
    }
    let corpus = corpus.restricted_to(annotators)?;
    let train_frames = corpus.frames_in(Split::Train)?;
    let val_frames = corpus.frames_in(Split::Val)?;
    let mut train_x = raw_features(&corpus, &train_frames)?;
    if train_x.ncols() != config.layer_sizes[0] {
        return Err(PipelineError::FeatureSize { expected: config.layer_sizes[0], got: train_x.ncols() });
    }
    let rows: Vec<&[f64]> = train_x.rows().into_iter().map(|r| r.to_slice().expect("standard layout")).collect();
    let stats = StandardizerStats::fit(&rows)?;
    drop(rows);
    standardize(&mut train_x, &stats)?;
    let mut val_x = raw_features(&corpus, &val_frames)?;
    standardize(&mut val_x, &stats)?;
    let train_t = targets(&corpus, &train_frames);
    let val_t = targets(&corpus, &val_frames);
    Ok(train(train_x.view(), train_t.view(), val_x.view(), val_t.view(), config, stats, on_epoch)?)
}

pub fn history_log(model: &MlpModel) -> String {
    model.history.iter().map(|r| format!("{}\t{:.12}\t{:.12}\n", r.epoch, r.train_loss, r.val_accuracy)).collect()
}

/// Writes `<stem>.model` and `<stem>.history.tsv` into `dir`.
pub fn save_trained(model: &MlpModel, dir: &Path, stem: &str) -> Result<PathBuf> {
    create_dir(dir)?;
    let path = dir.join(format!("{stem}.model"));
    save_model(&path, model)?;
    write_file(&dir.join(format!("{stem}.history.tsv")), history_log(model))?;
    Ok(path)
}

/// Predicted profiles for `frames`.
pub fn predict_frames(model: &MlpModel, corpus: &Corpus, frames: &[FrameRef]) -> Result<Vec<Ship>> {
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(INFERENCE_CHUNK) {
        let mut x = raw_features(corpus, chunk)?;
        if x.ncols() != model.input_size() {
            return Err(PipelineError::FeatureSize { expected: model.input_size(), got: x.ncols() });
        }
        standardize(&mut x, &model.stats)?;
        let y = model.forward_batch(x.view())?;
        out.extend(y.rows().into_iter().map(|r| row_to_ship(r.as_slice().unwrap())));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SongLabels {
    pub song_id: String,
    pub frames: Vec<usize>,
    pub sequence: PersonalizedSequence,
}

/// Test-split frames grouped by song, each group in frame order.
fn test_frames_by_song(corpus: &Corpus) -> Result<Vec<Vec<FrameRef>>> {
    let mut groups = vec![Vec::new(); corpus.songs().len()];
    for f in corpus.frames_in(Split::Test)? {
        groups[f.song].push(f);
    }
    Ok(groups)
}

/// Decodes `ships` (aligned with the test frames) with the vocabulary the
/// annotator used on the training split.
pub fn personalize_from(corpus: &Corpus, ships: &[Ship], annotator: &str) -> Result<Vec<SongLabels>> {
    let idx = corpus.annotator_index(annotator).map_err(|_| PipelineError::UnknownAnnotator(annotator.into()))?;
    let vocab = corpus.vocabulary(idx, Split::Train)?;
    let mut rest = ships;
    let mut out = Vec::new();
    for frames in test_frames_by_song(corpus)? {
        let (mine, tail) = rest.split_at(frames.len());
        rest = tail;
        let Some(first) = frames.first() else { continue };
        let song = &corpus.songs()[first.song];
        let times: Vec<f64> = frames.iter().map(|f| song.cqt.frame_time(f.frame)).collect();
        let hop_seconds = song.cqt.hop() as f64 / song.cqt.sample_rate() as f64;
        let sequence = personalize_sequence(mine, &vocab, &times, hop_seconds)?;
        out.push(SongLabels {
            song_id: song.song_id.clone(),
            frames: frames.iter().map(|f| f.frame).collect(),
            sequence,
        });
    }
    Ok(out)
}

pub fn personalize(model: &MlpModel, corpus: &Corpus, annotator: &str) -> Result<Vec<SongLabels>> {
    let ships = predict_frames(model, corpus, &corpus.frames_in(Split::Test)?)?;
    personalize_from(corpus, &ships, annotator)
}

/// Writes one LAB per song to `dir`.
pub fn write_labs(songs: &[SongLabels], dir: &Path) -> Result<()> {
    create_dir(dir)?;
    for s in songs {
        write_file(&dir.join(format!("{}.lab", s.song_id)), render_lab(&s.sequence.segments))?;
    }
    Ok(())
}

/// Reference labels of `annotator` on every test frame, in corpus order.
pub fn test_references(corpus: &Corpus, annotator: &str) -> Result<Vec<ChordLabel>> {
    let idx = corpus.annotator_index(annotator).map_err(|_| PipelineError::UnknownAnnotator(annotator.into()))?;
    Ok(corpus.frames_in(Split::Test)?.into_iter().map(|f| corpus.label(idx, f).clone()).collect())
}

/// Estimates read back from `dir/<song>.lab` at each test frame time.
pub fn read_estimates(corpus: &Corpus, dir: &Path, annotator: &str) -> Result<Vec<ChordLabel>> {
    let mut out = Vec::new();
    for frames in test_frames_by_song(corpus)? {
        let Some(first) = frames.first() else { continue };
        let song = &corpus.songs()[first.song];
        let path = dir.join(format!("{}.lab", song.song_id));
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let track = parse_lab(&text, annotator, &song.song_id)
            .map_err(|source| PipelineError::Annotation { path: path.clone(), source })?;
        out.extend(frames.iter().map(|f| track.label_at(song.cqt.frame_time(f.frame))));
    }
    Ok(out)
}

/// Scores estimate directories laid out as `<dir>/<annotator>/<song>.lab`.
pub fn evaluate_dir(
    corpus: &Corpus,
    estimates: &Path,
    annotators: &[String],
    metrics: &[Metric],
    system: &str,
) -> Result<EvalReport> {
    let mut est = Vec::new();
    let mut refs = Vec::new();
    for a in annotators {
        refs.push((a.clone(), test_references(corpus, a)?));
        est.push((a.clone(), read_estimates(corpus, &estimates.join(a), a)?));
    }
    Ok(build_report(system, &est, &refs, metrics)?)
}

pub fn write_report(report: &EvalReport, dir: &Path) -> Result<()> {
    create_dir(dir)?;
    write_file(&dir.join("report.tsv"), report.to_tsv())?;
    let mut json = report.to_json();
    json.push('\n');
    write_file(&dir.join("report.json"), json)
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub mlp: MlpConfig,
    /// Annotator whose labels alone train the baseline; defaults to the first.
    pub reference: Option<String>,
    /// Annotators reported on; defaults to all.
    pub annotators: Option<Vec<String>>,
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    pub ship_model: MlpModel,
    pub iso_model: MlpModel,
}

/// Shared-profile model, direct agreement with the reference annotator, and
/// the single-reference model, scored per annotator on the test split.
/// Writes models, personalized labels and the report under `out`.
pub fn run_experiment(
    corpus: &Corpus,
    config: &ExperimentConfig,
    out: &Path,
    mut log: impl FnMut(&str),
) -> Result<ExperimentOutcome> {
    let all = corpus.annotators().to_vec();
    let reference = config.reference.clone().unwrap_or_else(|| all[0].clone());
    if !all.contains(&reference) {
        return Err(PipelineError::UnknownAnnotator(reference));
    }
    let annotators = config.annotators.clone().unwrap_or_else(|| all.clone());
    if let Some(a) = annotators.iter().find(|a| !all.contains(a)) {
        return Err(PipelineError::UnknownAnnotator(a.clone()));
    }

    log(&format!("training {SHIP_SYSTEM} on {} annotators", all.len()));
    let ship_model = train_on(corpus, &all, &config.mlp, |r| log(&epoch_line(SHIP_SYSTEM, r)))?;
    save_trained(&ship_model, &out.join("models"), "ship")?;
    log(&format!("training {ISO_SYSTEM} on `{reference}`"));
    let iso_model = train_on(corpus, std::slice::from_ref(&reference), &config.mlp, |r| log(&epoch_line(ISO_SYSTEM, r)))?;
    save_trained(&iso_model, &out.join("models"), "iso")?;

    let test = corpus.frames_in(Split::Test)?;
    let ship_pred = predict_frames(&ship_model, corpus, &test)?;
    let iso_pred = predict_frames(&iso_model, corpus, &test)?;
    let ann = test_references(corpus, &reference)?;

    let mut rows = Vec::new();
    for a in &annotators {
        let refs = test_references(corpus, a)?;
        for (system, preds) in [(SHIP_SYSTEM, &ship_pred), (ISO_SYSTEM, &iso_pred)] {
            let songs = personalize_from(corpus, preds, a)?;
            let dir = out.join("personalized").join(system.to_lowercase()).join(a);
            write_labs(&songs, &dir)?;
            let est: Vec<ChordLabel> = songs.into_iter().flat_map(|s| s.sequence.labels).collect();
            rows.push(evaluate_row(a, system, &est, &refs, &config.metrics)?);
        }
        rows.push(evaluate_row(a, ANN_SYSTEM, &ann, &refs, &config.metrics)?);
    }
    // per annotator: shared model, direct agreement, single-reference model
    let order = |s: &str| [SHIP_SYSTEM, ANN_SYSTEM, ISO_SYSTEM].iter().position(|x| *x == s);
    rows.sort_by_key(|r| (annotators.iter().position(|a| *a == r.annotator), order(&r.system)));
    let report = EvalReport { metrics: config.metrics.clone(), rows, agreement: None };
    write_report(&report, out)?;
    Ok(ExperimentOutcome { report, ship_model, iso_model })
}

fn epoch_line(system: &str, r: &EpochRecord) -> String {
    format!("{system} epoch {:>3}  loss {:.6}  val {:.4}", r.epoch, r.train_loss, r.val_accuracy)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::SynthSpec;

    fn small_spec() -> SynthSpec {
        SynthSpec { n_songs: 3, song_length: 8.0, ..SynthSpec::default() }
    }

    fn small_mlp() -> MlpConfig {
        MlpConfig {
            layer_sizes: vec![2880, 16, 19],
            batch_size: 64,
            max_epochs: 3,
            patience_epochs: 2,
            ..MlpConfig::default()
        }
    }

    #[test]
    fn corpus_on_disk_is_complete_and_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let m = write_corpus(&small_spec(), a.path()).unwrap();
        write_corpus(&small_spec(), b.path()).unwrap();
        assert_eq!(m.songs.len(), 3);
        for song in &m.songs {
            for rel in std::iter::once(&song.audio).chain(song.labs.values()) {
                let x = std::fs::read(a.path().join(rel)).unwrap();
                let y = std::fs::read(b.path().join(rel)).unwrap();
                assert_eq!(x, y, "{}", rel.display());
            }
        }
        let lab_count = walk_count(&a.path().join("labs"), "lab");
        assert_eq!(lab_count, 3 * 5);
    }

    fn walk_count(dir: &Path, ext: &str) -> usize {
        std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .map(|p| if p.is_dir() { walk_count(&p, ext) } else { (p.extension().unwrap() == ext) as usize })
            .sum()
    }

    #[test]
    fn cqt_cache_is_reused() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(&small_spec(), dir.path()).unwrap();
        let audio = m.resolve(&m.songs[0].audio);
        let cache = dir.path().join("c");
        let first = cached_cqt(&audio, &m.cqt, Some(&cache)).unwrap();
        let entries: Vec<_> = std::fs::read_dir(&cache).unwrap().collect();
        assert_eq!(entries.len(), 1);
        let second = cached_cqt(&audio, &m.cqt, Some(&cache)).unwrap();
        assert_eq!(first, second);
        let other = CqtConfig { n_bins: 96, ..m.cqt };
        cached_cqt(&audio, &other, Some(&cache)).unwrap();
        assert_eq!(std::fs::read_dir(&cache).unwrap().count(), 2);
    }

    #[test]
    fn personalized_labels_cover_test_frames_and_stay_in_vocabulary() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(&small_spec(), dir.path()).unwrap();
        let corpus = load_corpus(&m, None).unwrap();
        let model = train_on(&corpus, corpus.annotators(), &small_mlp(), |_| {}).unwrap();
        let test = corpus.frames_in(Split::Test).unwrap();
        for a in corpus.annotators() {
            let idx = corpus.annotator_index(a).unwrap();
            let vocab = corpus.vocabulary(idx, Split::Train).unwrap();
            let songs = personalize(&model, &corpus, a).unwrap();
            let covered: usize = songs.iter().map(|s| s.frames.len()).sum();
            assert_eq!(covered, test.len());
            assert!(songs.iter().flat_map(|s| &s.sequence.labels).all(|l| vocab.contains(l)));

            // labels written to disk read back identically at the frame times
            let out = dir.path().join("est").join(a);
            write_labs(&songs, &out).unwrap();
            let back = read_estimates(&corpus, &out, a).unwrap();
            let direct: Vec<ChordLabel> = songs.iter().flat_map(|s| s.sequence.labels.clone()).collect();
            assert_eq!(back, direct);
        }
    }

    #[test]
    fn references_score_perfectly_against_themselves() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(&small_spec(), dir.path()).unwrap();
        let corpus = load_corpus(&m, None).unwrap();
        let refs: Vec<(String, Vec<ChordLabel>)> = corpus
            .annotators()
            .iter()
            .map(|a| (a.clone(), test_references(&corpus, a).unwrap()))
            .collect();
        let report = build_report("self", &refs, &refs, &Metric::ALL).unwrap();
        assert_eq!(report.rows.len(), 5);
        assert!(report.rows.iter().flat_map(|r| &r.scores).all(|s| s.accuracy == 1.0));
    }

    #[test]
    fn unknown_annotator_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_corpus(&small_spec(), dir.path()).unwrap();
        let corpus = load_corpus(&m, None).unwrap();
        let err = train_on(&corpus, &["nobody".to_string()], &small_mlp(), |_| {}).unwrap_err();
        assert!(matches!(err, PipelineError::UnknownAnnotator(_)));
        assert!(matches!(personalize_from(&corpus, &[], "nobody"), Err(PipelineError::UnknownAnnotator(_))));
    }
}
