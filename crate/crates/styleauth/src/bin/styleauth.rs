//! Command-line front end: corpus synthesis, feature dumps, model training,
//! single-clip verification, and full evaluation runs.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use styleauth::auth::{
    decide, verify, ClaimIdentity, ModelRegistry, ScenarioConfig, ScenarioKind, StoredModel,
    ThresholdState, VerifyOptions, MODEL_FORMAT_VERSION,
};
use styleauth::config::{load_config, EngineKind, ExperimentConfig};
use styleauth::corpus::{
    generate_corpus, read_wav, split_train_test, synth_manifest, CorpusManifest, DiskSource,
    ModelKey, StyleLabel, SynthSource, UtteranceMeta,
};
use styleauth::error::Error;
use styleauth::eval::{run_experiment, train_registry, trials_csv};
use styleauth::frontend::{extract_observations, format_feature_dump, FrontendConfig};
use styleauth::hmm::{load_model_json, save_model_json};
use styleauth::prosody::ProsodyConfig;

#[derive(Parser)]
#[command(name = "styleauth", version, about = "Speaking-style verification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a deterministic synthetic corpus (WAVs + manifest.csv).
    Synth {
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Number of speakers (alternating male/female).
        #[arg(long, default_value_t = 4)]
        speakers: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Dump the LPCC observation sequence of one clip as text.
    Features {
        /// Input WAV file.
        #[arg(long)]
        clip: PathBuf,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train one (speaker, sentence, style) model from a corpus.
    Train {
        /// Corpus directory containing manifest.csv.
        #[arg(long)]
        corpus: PathBuf,
        /// Model identity as speaker:sentence:style, e.g. m01:3:loud.
        #[arg(long)]
        claim: String,
        /// Output model file (JSON).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: ConfigOverrides,
    },
    /// Score one clip against a trained model and decide accept/reject.
    Verify {
        /// Claimed model file.
        #[arg(long)]
        model: PathBuf,
        /// Input WAV file.
        #[arg(long)]
        clip: PathBuf,
        /// Claimed identity as speaker:sentence:style; defaults to the
        /// identity stored in the model file.
        #[arg(long)]
        claim: Option<String>,
        #[arg(long, value_enum, default_value = "score-only")]
        scenario: ScenarioArg,
        /// Imposter model files (repeatable); required for pooled and
        /// max-imposter scenarios.
        #[arg(long)]
        imposter: Vec<PathBuf>,
        /// Decision threshold; defaults to the model's stored initial value.
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Full protocol run: train all models, run trials, write tables.
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Identification-mode confusion matrix only.
    Confusion {
        #[command(flatten)]
        run: RunArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Corpus directory containing manifest.csv; omitted = in-memory
    /// synthetic corpus.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Speakers for the in-memory synthetic corpus (ignored with --corpus).
    #[arg(long, default_value_t = 4)]
    speakers: usize,
    /// Output directory for result files.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    overrides: ConfigOverrides,
}

/// CLI overrides layered on top of the (optional) TOML config file.
#[derive(Args)]
struct ConfigOverrides {
    /// TOML experiment config; missing keys fall back to defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long, value_enum)]
    scenario: Option<ScenarioArg>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(long)]
    multi_speaker: bool,
    #[arg(long)]
    adapt_threshold: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum EngineArg {
    Hmm,
    Sphmm,
}

impl From<EngineArg> for EngineKind {
    fn from(e: EngineArg) -> EngineKind {
        match e {
            EngineArg::Hmm => EngineKind::Hmm,
            EngineArg::Sphmm => EngineKind::Sphmm,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ScenarioArg {
    ScoreOnly,
    MaxImposter,
    Pooled,
}

impl From<ScenarioArg> for ScenarioKind {
    fn from(s: ScenarioArg) -> ScenarioKind {
        match s {
            ScenarioArg::ScoreOnly => ScenarioKind::ScoreOnly,
            ScenarioArg::MaxImposter => ScenarioKind::MaxImposter,
            ScenarioArg::Pooled => ScenarioKind::Pooled,
        }
    }
}

impl ConfigOverrides {
    fn resolve(&self) -> Result<ExperimentConfig, AppError> {
        let mut config = match &self.config {
            Some(path) => load_config(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(e) = self.engine {
            config.engine = e.into();
        }
        if let Some(s) = self.scenario {
            config.scenario = s.into();
        }
        if let Some(a) = self.alpha {
            config.alpha = a;
        }
        if let Some(s) = self.seed {
            config.seed = s;
        }
        if let Some(j) = self.jobs {
            config.jobs = j;
        }
        if self.multi_speaker {
            config.multi_speaker = true;
        }
        if self.adapt_threshold {
            config.adapt_threshold = true;
        }
        config.validate()?;
        Ok(config)
    }
}

/// Exit 1 for usage problems, 2 for data/numeric failures.
enum AppError {
    Usage(String),
    Data(Error),
}

impl From<Error> for AppError {
    fn from(e: Error) -> AppError {
        match e {
            Error::Config(msg) => AppError::Usage(format!("invalid configuration: {msg}")),
            other => AppError::Data(other),
        }
    }
}

fn parse_claim(s: &str) -> Result<(String, u8, StyleLabel), AppError> {
    let usage = || {
        AppError::Usage(format!(
            "claim {s:?} must be speaker:sentence:style, e.g. m01:3:loud"
        ))
    };
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 || parts[0].is_empty() {
        return Err(usage());
    }
    let sentence: u8 = parts[1].parse().map_err(|_| usage())?;
    let style = StyleLabel::from_str(parts[2]).map_err(|_| usage())?;
    Ok((parts[0].to_string(), sentence, style))
}

fn write_text(path: &Path, text: &str) -> Result<(), AppError> {
    std::fs::write(path, text).map_err(|source| {
        AppError::Data(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn make_dir(path: &Path) -> Result<(), AppError> {
    std::fs::create_dir_all(path).map_err(|source| {
        AppError::Data(Error::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn load_stored_model(path: &Path) -> Result<StoredModel, AppError> {
    let stored: StoredModel = load_model_json(path)?;
    if stored.format_version != MODEL_FORMAT_VERSION {
        return Err(AppError::Data(Error::ModelFormat(format!(
            "unsupported model format version {} in {}",
            stored.format_version,
            path.display()
        ))));
    }
    Ok(stored)
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Synth { out, speakers, seed } => {
            if speakers == 0 {
                return Err(AppError::Usage("--speakers must be positive".into()));
            }
            make_dir(&out)?;
            let manifest = generate_corpus(&out, speakers, seed)?;
            println!(
                "wrote {} clips and manifest.csv to {}",
                manifest.entries.len(),
                out.display()
            );
            Ok(())
        }
        Command::Features { clip, out } => {
            let audio = read_wav(&clip)?;
            let obs = extract_observations(&audio, &FrontendConfig::default())?;
            let dump = format_feature_dump(&obs);
            match out {
                Some(path) => write_text(&path, &dump)?,
                None => print!("{dump}"),
            }
            Ok(())
        }
        Command::Train {
            corpus,
            claim,
            out,
            overrides,
        } => {
            let config = overrides.resolve()?;
            let (speaker_id, sentence_id, style) = parse_claim(&claim)?;
            if style.is_open_set() {
                return Err(AppError::Usage(
                    "the sad style has no trained model".into(),
                ));
            }
            let manifest = CorpusManifest::read_csv(&corpus.join("manifest.csv"))?;
            let source = DiskSource {
                manifest: manifest.clone(),
                base_dir: corpus,
            };
            let split = split_train_test(&manifest)?;
            let plan = if config.multi_speaker {
                styleauth::corpus::multi_speaker_plan(&split, &manifest)
            } else {
                styleauth::corpus::single_speaker_plan(&split)
            };
            let key = ModelKey {
                speaker_id,
                sentence_id,
                style,
            };
            let mut one = styleauth::corpus::TrainingPlan::default();
            match plan.per_model.get(&key) {
                Some(list) => one.per_model.insert(key.clone(), list.clone()),
                None => {
                    return Err(AppError::Data(Error::UnknownClaim(key.to_string())));
                }
            };
            let registry = train_registry(
                &one,
                &config,
                &source,
                &FrontendConfig::default(),
                &ProsodyConfig::default(),
            )?;
            let model = registry.models.into_iter().next().expect("one model").1;
            let stored = StoredModel {
                format_version: MODEL_FORMAT_VERSION,
                key: key.clone(),
                model,
            };
            save_model_json(&out, &stored)?;
            println!("trained {key}, wrote {}", out.display());
            Ok(())
        }
        Command::Verify {
            model,
            clip,
            claim,
            scenario,
            imposter,
            theta,
        } => {
            let stored = load_stored_model(&model)?;
            let claim = match claim {
                Some(s) => {
                    let (speaker_id, sentence_id, style) = parse_claim(&s)?;
                    ClaimIdentity::new(speaker_id, sentence_id, style)?
                }
                None => ClaimIdentity::new(
                    stored.key.speaker_id.clone(),
                    stored.key.sentence_id,
                    stored.key.style,
                )?,
            };
            if claim.model_key() != stored.key {
                return Err(AppError::Usage(format!(
                    "claim {} does not match model identity {}",
                    claim.model_key(),
                    stored.key
                )));
            }
            let kind: ScenarioKind = scenario.into();
            if kind != ScenarioKind::ScoreOnly && imposter.is_empty() {
                return Err(AppError::Usage(
                    "pooled and max-imposter scenarios need at least one --imposter model".into(),
                ));
            }
            let mut registry = ModelRegistry::default();
            let initial_theta = theta.unwrap_or(stored.model.initial_theta);
            registry.models.insert(stored.key.clone(), stored.model);
            let mut imposter_keys = Vec::new();
            for path in &imposter {
                let imp = load_stored_model(path)?;
                imposter_keys.push(imp.key.clone());
                registry.models.insert(imp.key, imp.model);
            }
            let audio = read_wav(&clip)?;
            // Metadata of an externally supplied clip is unknown; record it
            // under the claimed identity (the H0/H1 tag is not meaningful
            // for single-clip runs).
            let true_meta = UtteranceMeta {
                speaker_id: claim.speaker_id.clone(),
                gender: styleauth::corpus::Gender::Male,
                sentence_id: claim.sentence_id,
                style: claim.style,
                token_index: 1,
            };
            let scenario_config = ScenarioConfig {
                kind,
                imposter_keys,
            };
            let mut threshold = ThresholdState::new(initial_theta, 16, 0.0);
            let trial = verify(
                &audio,
                &claim,
                &true_meta,
                &registry,
                &scenario_config,
                &mut threshold,
                &VerifyOptions::default(),
                &FrontendConfig::default(),
                &ProsodyConfig::default(),
            )?;
            let verdict = match decide(trial.lambda, trial.theta) {
                styleauth::auth::Decision::Accept => "ACCEPT",
                styleauth::auth::Decision::Reject => "REJECT",
            };
            println!("lambda {:.6} theta {:.6} {}", trial.lambda, trial.theta, verdict);
            Ok(())
        }
        Command::Evaluate { run } => run_protocol(run, true),
        Command::Confusion { run } => run_protocol(run, false),
    }
}

fn run_protocol(args: RunArgs, full: bool) -> Result<(), AppError> {
    let config = args.overrides.resolve()?;
    if args.speakers == 0 {
        return Err(AppError::Usage("--speakers must be positive".into()));
    }
    let (manifest, source): (CorpusManifest, Box<dyn styleauth::corpus::ClipSource>) =
        match &args.corpus {
            Some(dir) => {
                let manifest = CorpusManifest::read_csv(&dir.join("manifest.csv"))?;
                let source = DiskSource {
                    manifest: manifest.clone(),
                    base_dir: dir.clone(),
                };
                (manifest, Box::new(source))
            }
            None => {
                let manifest = synth_manifest(args.speakers);
                let source = SynthSource {
                    manifest: manifest.clone(),
                    master_seed: config.seed,
                };
                (manifest, Box::new(source))
            }
        };
    let output = run_experiment(&config, &manifest, source.as_ref())?;
    make_dir(&args.out)?;
    write_text(&args.out.join("confusion.txt"), &output.confusion.render_text())?;
    write_text(&args.out.join("confusion.csv"), &output.confusion.render_csv())?;
    if full {
        write_text(&args.out.join("performance.txt"), &output.table.render_text())?;
        write_text(&args.out.join("performance.csv"), &output.table.render_csv())?;
        write_text(&args.out.join("trials.csv"), &trials_csv(&output.trials))?;
        let models_dir = args.out.join("models");
        make_dir(&models_dir)?;
        for (key, model) in output.registry.models {
            let file = models_dir.join(format!(
                "{}_s{}_{}.json",
                key.speaker_id, key.sentence_id, key.style
            ));
            let stored = StoredModel {
                format_version: MODEL_FORMAT_VERSION,
                key,
                model,
            };
            save_model_json(&file, &stored)?;
        }
    }
    println!("wrote results to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(AppError::Data(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
