use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use placerec::descriptors::DescriptorSet;
use placerec::harness::{
    generate_synthetic, generate_synthetic_descriptors, load_dataset, run_experiment, save_corpus, DataSource,
    DatasetStats, ExperimentGrid, SyntheticWorldConfig,
};
use placerec::ngram::{load_models, save_models, train_class_models};
use placerec::wordselect::mean_run_length;
use placerec::{
    compute_gist, fit_pca, filter_sequence, make_transition, train_som, Belief, ClassSet, Codebook, Error, GaborBank,
    GrayImage, PcaModel, Result, SelectionStrategy, SmoothingSpec, SomTrainConfig, WordSequence,
};

#[derive(Parser)]
#[command(name = "placerec", version, about = "Visual place recognition with n-gram place models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyKind {
    None,
    Subsample,
    Compress,
    Unique,
}

#[derive(Clone, Copy, ValueEnum)]
enum SmoothingKind {
    Ll,
    Wb,
}

#[derive(Subcommand)]
enum Command {
    /// Compute 384-d descriptors for every PGM image in a directory.
    Gist {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PCA projection on a descriptor file.
    FitPca {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 80)]
        components: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a square self-organizing map.
    TrainSom {
        #[arg(long)]
        input: PathBuf,
        /// Project descriptors with this PCA model first.
        #[arg(long)]
        pca: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        side: usize,
        #[arg(long, default_value_t = 10)]
        epochs: usize,
        #[arg(long, default_value_t = 0.5)]
        learning_rate: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Map descriptors to visual words.
    Quantize {
        #[arg(long)]
        codebook: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        pca: Option<PathBuf>,
        /// One class id per line, aligned with the descriptors.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Apply a word-selection strategy to a sequence file.
    Select {
        #[arg(long, value_enum)]
        strategy: StrategyKind,
        #[arg(long)]
        rate: Option<usize>,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate one n-gram model per class from labelled sequences.
    Train {
        #[arg(long, default_value_t = 2)]
        order: usize,
        #[arg(long, value_enum, default_value = "wb")]
        smoothing: SmoothingKind,
        #[arg(long, default_value_t = 1.0)]
        delta: f64,
        /// Vocabulary size K.
        #[arg(long)]
        vocab: usize,
        #[arg(long)]
        out: PathBuf,
        /// Sequence files or directories of `*.tsv` files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Filter a word sequence and write the per-step beliefs as CSV.
    Filter {
        #[arg(long)]
        models: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.99)]
        p_e: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic labelled corpus into `<out>/train` and `<out>/test`.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a parameter grid and write `report.json` and `summary.csv`.
    Experiment {
        #[arg(long)]
        grid: Option<PathBuf>,
        /// Directory with `train/` and `test/` sequence files.
        #[arg(long, conflicts_with = "config")]
        data: Option<PathBuf>,
        /// Vocabulary size of `--data`.
        #[arg(long, requires = "data")]
        vocab: Option<usize>,
        /// Synthetic world config; the default world is used when neither
        /// `--data` nor `--config` is given.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the synthetic word stream directly instead of quantizing
        /// synthetic descriptors with trained maps.
        #[arg(long)]
        words: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_toml<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Parse {
                location: p.display().to_string(),
                message: e.to_string(),
            })
        }
    }
}

fn project_all(set: &DescriptorSet, pca: Option<&Path>) -> Result<Vec<Vec<f64>>> {
    match pca {
        None => Ok(set.vectors.clone()),
        Some(p) => {
            let model = PcaModel::load(p)?;
            set.vectors.iter().map(|v| model.project(v)).collect()
        }
    }
}

fn classes_of(seqs: &[WordSequence]) -> Vec<u32> {
    let mut ids: Vec<u32> = seqs.iter().filter_map(WordSequence::labels).flatten().copied().collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gist { input, out } => {
            let mut files: Vec<PathBuf> = fs::read_dir(&input)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("pgm")))
                .collect();
            files.sort();
            let bank = GaborBank::default();
            let mut set = DescriptorSet::default();
            for f in &files {
                let img = GrayImage::read_pgm(f)?;
                let d = compute_gist(&img, &bank)?;
                let name = f.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
                set.push(name, d.into_vec());
            }
            set.save(&out)?;
            eprintln!("{} descriptors written to {}", set.len(), out.display());
        }
        Command::FitPca { input, components, out } => {
            let set = DescriptorSet::load(&input)?;
            let pca = fit_pca(&set.vectors, components)?;
            pca.save(&out)?;
            eprintln!(
                "{components} components explain {:.2}% of the variance",
                100.0 * pca.explained_ratio()
            );
        }
        Command::TrainSom { input, pca, side, epochs, learning_rate, seed, out } => {
            let set = DescriptorSet::load(&input)?;
            let data = project_all(&set, pca.as_deref())?;
            let cfg = SomTrainConfig {
                epochs,
                initial_learning_rate: learning_rate,
                ..SomTrainConfig::for_side(side, seed)
            };
            let cb = train_som(&data, side, &cfg)?;
            cb.save(&out)?;
            eprintln!("trained {side}x{side} map ({} words)", cb.vocab_size());
        }
        Command::Quantize { codebook, input, pca, labels, out } => {
            let cb = Codebook::load(&codebook)?;
            let set = DescriptorSet::load(&input)?;
            let data = project_all(&set, pca.as_deref())?;
            let words = cb.quantize_sequence(&data)?.words().to_vec();
            let seq = match labels {
                None => WordSequence::unlabeled(words),
                Some(p) => {
                    let text = fs::read_to_string(&p)?;
                    let mut ids = Vec::new();
                    for (i, line) in text.lines().enumerate() {
                        let line = line.trim();
                        if line.is_empty() || line.starts_with('#') {
                            continue;
                        }
                        ids.push(line.parse::<u32>().map_err(|_| Error::Parse {
                            location: format!("{}:{}", p.display(), i + 1),
                            message: format!("invalid class id {line:?}"),
                        })?);
                    }
                    WordSequence::labeled(words, ids)?
                }
            };
            seq.save(&out)?;
        }
        Command::Select { strategy, rate, input, out } => {
            let kind = match strategy {
                StrategyKind::None => "none",
                StrategyKind::Subsample => "subsample",
                StrategyKind::Compress => "compress",
                StrategyKind::Unique => "unique",
            };
            let st = SelectionStrategy::from_parts(kind, rate)?;
            let seq = WordSequence::load(&input)?;
            let selected = st.apply(&seq)?;
            selected.save(&out)?;
            if !seq.is_empty() {
                eprintln!(
                    "{} -> {} frames, mean run length {:.3} -> {:.3}",
                    seq.len(),
                    selected.len(),
                    mean_run_length(&seq)?,
                    mean_run_length(&selected)?
                );
            }
        }
        Command::Train { order, smoothing, delta, vocab, out, inputs } => {
            let spec = match smoothing {
                SmoothingKind::Ll => SmoothingSpec::Lidstone { delta },
                SmoothingKind::Wb => SmoothingSpec::WittenBell,
            };
            let (seqs, _) = load_dataset(&inputs, None)?;
            let classes = classes_of(&seqs);
            if classes.is_empty() {
                return Err(Error::InsufficientData("no labelled frames to train on".into()));
            }
            let models = train_class_models(&seqs, &classes, order, vocab, spec)?;
            save_models(&out, &models)?;
            eprintln!("{} place models of order {order} written", models.len());
        }
        Command::Filter { models, input, p_e, out } => {
            let models = load_models(&models)?;
            let classes = ClassSet::from_ids(models.iter().map(|m| m.class_id()).collect())?;
            let transition = make_transition(&classes, p_e)?;
            let seq = WordSequence::load(&input)?;
            let trace = filter_sequence(&models, &transition, &seq, Belief::uniform(classes.len()))?;
            trace.save_csv(&out, &classes)?;
            if let Some(truth) = seq.labels() {
                let predicted = trace.map_labels(&models);
                let correct = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
                eprintln!("frame accuracy {:.2}%", 100.0 * correct as f64 / truth.len() as f64);
            }
        }
        Command::Synth { config, seed, out } => {
            let mut cfg: SyntheticWorldConfig = read_toml(config.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let corpus = generate_synthetic(&cfg)?;
            save_corpus(out.join("train"), &corpus.train)?;
            save_corpus(out.join("test"), &corpus.test)?;
            let stats = DatasetStats::new(&corpus.train, &corpus.test);
            eprintln!("{} training and {} testing frames", stats.train.total, stats.test.total);
        }
        Command::Experiment { grid, data, vocab, config, words, seed, out } => {
            let mut grid: ExperimentGrid = read_toml(grid.as_deref())?;
            if let Some(s) = seed {
                grid.seed = s;
            }
            let source = match data {
                Some(dir) => {
                    let vocab = vocab.ok_or_else(|| Error::Validation("--data needs --vocab".into()))?;
                    let (train, _) = load_dataset(&[dir.join("train")], None)?;
                    let (test, _) = load_dataset(&[dir.join("test")], None)?;
                    DataSource::Words { train, test, vocab_size: vocab }
                }
                None => {
                    let cfg: SyntheticWorldConfig = read_toml(config.as_deref())?;
                    let corpus = generate_synthetic(&cfg)?;
                    if words {
                        DataSource::Words {
                            vocab_size: corpus.vocab_size,
                            train: corpus.train,
                            test: corpus.test,
                        }
                    } else {
                        let (train, test) = generate_synthetic_descriptors(&cfg, &corpus)?;
                        DataSource::Descriptors { train, test }
                    }
                }
            };
            let report = run_experiment(&grid, &source)?;
            fs::create_dir_all(&out)?;
            fs::write(out.join("report.json"), report.to_json())?;
            fs::write(out.join("summary.csv"), report.to_csv())?;
            eprintln!("{} cells, {} filter runs, chance {:.2}%", report.cells.len(), report.filter_runs, report.chance);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
