use std::error::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ship_core::annotation::SplitConfig;
use ship_core::evaluation::Metric;
use ship_core::manifest::Manifest;
use ship_core::mlp::{load_model, MlpConfig};
use ship_core::pipeline::{self, ExperimentConfig};
use ship_core::synth::{default_profiles, SynthSpec};

#[derive(Parser)]
#[command(name = "ship", version, about = "Annotator-specific chord labels from a shared harmonic interval profile")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic multi-annotator corpus (WAV, LAB, manifest).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// JSON synthesis spec; defaults to 20 songs x 60 s with five annotators.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a network on the shared profile of the selected annotators.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Output model file; the history log is written next to it.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
    /// Decode test-split frames into one annotator's vocabulary.
    Personalize {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Writes `<out>/<annotator>/<song>.lab`.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Score `<estimates>/<annotator>/<song>.lab` against the references.
    Evaluate {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        estimates: PathBuf,
        /// Directory receiving report.tsv and report.json.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "estimate")]
        system: String,
        #[arg(long, value_delimiter = ',', default_value = "root,majmin,mirex,thirds,7ths")]
        metrics: Vec<Metric>,
        #[command(flatten)]
        corpus: CorpusArgs,
    },
    /// Shared-profile model vs direct agreement vs single-reference model.
    Experiment {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Annotator whose labels alone train the baseline (default: first in the manifest).
        #[arg(long)]
        reference: Option<String>,
        #[arg(long, value_delimiter = ',', default_value = "root,majmin,mirex,thirds,7ths")]
        metrics: Vec<Metric>,
        #[command(flatten)]
        corpus: CorpusArgs,
        #[command(flatten)]
        training: TrainingArgs,
    },
}

#[derive(Args)]
struct CorpusArgs {
    /// Comma-separated annotator ids, or `all`.
    #[arg(long, value_delimiter = ',')]
    annotators: Option<Vec<String>>,
    /// Train, validation and test fractions; the split seed comes from the manifest.
    #[arg(long, value_parser = parse_ratios)]
    ratios: Option<[f64; 3]>,
}

#[derive(Args)]
struct TrainingArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths, e.g. `1024,512,256`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|p: Vec<f64>| format!("expected three ratios, got {}", p.len()))
}

impl CorpusArgs {
    fn selected(&self, manifest: &Manifest) -> Vec<String> {
        match &self.annotators {
            Some(a) if !(a.len() == 1 && a[0] == "all") => a.clone(),
            _ => manifest.annotators.clone(),
        }
    }

    fn load(&self, manifest: &Manifest) -> Result<ship_core::annotation::Corpus, pipeline::PipelineError> {
        let split = self.ratios.map(|ratios| SplitConfig { ratios, ..manifest.split });
        pipeline::load_corpus(manifest, split.as_ref())
    }
}

impl TrainingArgs {
    fn config(&self, input_dim: usize) -> MlpConfig {
        let mut c = MlpConfig::default();
        if let Some(h) = &self.hidden {
            c.layer_sizes = std::iter::once(input_dim).chain(h.iter().copied()).chain([19]).collect();
        }
        c.seed = self.seed.unwrap_or(c.seed);
        c.max_epochs = self.max_epochs.unwrap_or(c.max_epochs);
        c.patience_epochs = self.patience.unwrap_or(c.patience_epochs);
        c.batch_size = self.batch_size.unwrap_or(c.batch_size);
        c
    }
}

fn input_dim(manifest: &Manifest) -> usize {
    manifest.cqt.n_bins * ship_core::features::CONTEXT_FRAMES
}

fn run(cli: Cli) -> Result<(), Box<dyn Error>> {
    match cli.command {
        Command::Synth { out, spec, seed } => {
            let spec = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| format!("{}: {e}", path.display()))?;
                    let mut s: SynthSpec = serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
                    s.seed = seed.unwrap_or(s.seed);
                    s
                }
                None => {
                    let d = SynthSpec::default();
                    let seed = seed.unwrap_or(d.seed);
                    SynthSpec { seed, annotator_profiles: default_profiles(seed), ..d }
                }
            };
            let manifest = pipeline::write_corpus(&spec, &out)?;
            println!(
                "wrote {} songs x {} annotators to {}",
                manifest.songs.len(),
                manifest.annotators.len(),
                out.join(pipeline::MANIFEST_FILE).display()
            );
        }
        Command::Train { manifest, model, corpus, training } => {
            let manifest = Manifest::load(&manifest)?;
            let annotators = corpus.selected(&manifest);
            let data = corpus.load(&manifest)?;
            let config = training.config(input_dim(&manifest));
            let trained = pipeline::train_on(&data, &annotators, &config, |r| {
                eprintln!("epoch {:>3}  loss {:.6}  val {:.4}", r.epoch, r.train_loss, r.val_accuracy)
            })?;
            ship_core::mlp::save_model(&model, &trained)?;
            let history = history_path(&model);
            std::fs::write(&history, pipeline::history_log(&trained)).map_err(|e| format!("{}: {e}", history.display()))?;
            println!("wrote {} ({} epochs)", model.display(), trained.history.len());
        }
        Command::Personalize { manifest, model, out, corpus } => {
            let manifest = Manifest::load(&manifest)?;
            let annotators = corpus.selected(&manifest);
            let trained = load_model(&model).map_err(|e| format!("{}: {e}", model.display()))?;
            let data = corpus.load(&manifest)?;
            let test = data.frames_in(ship_core::annotation::Split::Test)?;
            let ships = pipeline::predict_frames(&trained, &data, &test)?;
            for a in &annotators {
                let songs = pipeline::personalize_from(&data, &ships, a)?;
                let flagged: usize = songs.iter().map(|s| s.sequence.flagged.len()).sum();
                if flagged > 0 {
                    eprintln!("{a}: {flagged} frames fell back to a uniform decision");
                }
                pipeline::write_labs(&songs, &out.join(a))?;
            }
            println!("wrote labels for {} annotators to {}", annotators.len(), out.display());
        }
        Command::Evaluate { manifest, estimates, out, system, metrics, corpus } => {
            let manifest = Manifest::load(&manifest)?;
            let annotators = corpus.selected(&manifest);
            let data = corpus.load(&manifest)?;
            let report = pipeline::evaluate_dir(&data, &estimates, &annotators, &metrics, &system)?;
            pipeline::write_report(&report, &out)?;
            print!("{}", report.to_tsv());
        }
        Command::Experiment { manifest, out, reference, metrics, corpus, training } => {
            let manifest = Manifest::load(&manifest)?;
            let annotators = corpus.annotators.as_ref().map(|_| corpus.selected(&manifest));
            let data = corpus.load(&manifest)?;
            let config = ExperimentConfig { mlp: training.config(input_dim(&manifest)), reference, annotators, metrics };
            let outcome = pipeline::run_experiment(&data, &config, &out, |line| eprintln!("{line}"))?;
            print!("{}", outcome.report.to_tsv());
        }
    }
    Ok(())
}

fn history_path(model: &Path) -> PathBuf {
    model.with_extension("history.tsv")
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
