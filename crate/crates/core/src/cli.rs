//! Command-line driver. `spose <command> ...`; see `spose --help`.
//!
//! `generate` and `train` accept `--config <file>` with `key=value` lines whose
//! keys are the long flag names; flags override the file. Each of these
//! commands writes a `manifest.txt` into its output directory that is itself a
//! valid config file, so `spose train --config run/manifest.txt --out rerun`
//! repeats a run.

use std::collections::{BTreeMap, HashMap};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};

use crate::data::{TrainConfig, TripletDataset};
use crate::downstream::{self, CategoryLabeling, CrossValidationPlan};
use crate::error::{Result, SposeError};
use crate::evaluation::{self, RepeatedTripletSet};
use crate::io::{self, fmt_real};
use crate::{stats, synthetic, training};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const TRIPLETS_FILE: &str = "triplets.tsv";
pub const TRUTH_FILE: &str = "truth.tsv";
pub const EMBEDDING_FILE: &str = "embedding.tsv";
pub const GRID_REPORT_FILE: &str = "grid_report.tsv";

#[derive(Debug, Parser)]
#[command(
    name = "spose",
    version,
    about = "Sparse positive similarity embeddings from odd-one-out judgments"
)]
pub struct Cli {
    /// Worker threads for grid search and per-target regressions (0 = all cores).
    /// Results do not depend on this value.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a ground-truth embedding and triplet judgments from it.
    Generate(GenerateArgs),
    /// Fit an embedding: regularization search, then pruning.
    Train(TrainArgs),
    /// Held-out evaluation reports.
    #[command(subcommand)]
    Evaluate(EvaluateCommand),
    /// Analyses against external concept data.
    #[command(subcommand)]
    Downstream(DownstreamCommand),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub concepts: Option<usize>,
    #[arg(long)]
    pub dims: Option<usize>,
    #[arg(long)]
    pub density: Option<f64>,
    #[arg(long)]
    pub scale: Option<f64>,
    /// Number of distinct triples to draw.
    #[arg(long)]
    pub triplets: Option<usize>,
    /// Judgments sampled per triple.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub triplets: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Comma-separated penalty values.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub init_dims: Option<usize>,
    #[arg(long)]
    pub prune_threshold: Option<f64>,
    #[arg(long)]
    pub split: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvaluateCommand {
    /// Fraction of judgments matching the model's most probable pair.
    Accuracy {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        triplets: PathBuf,
        /// Vocabulary of the triplet file; defaults to the embedding's concepts.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bayes ceiling from repeated-triplet counts.
    Ceiling {
        /// Lines `i1 i2 i3 c12 c13 c23`, tab-separated.
        #[arg(long, required_unless_present = "triplets")]
        counts: Option<PathBuf>,
        /// Alternatively, group a triplet file by triple.
        #[arg(long, requires = "vocab", conflicts_with = "counts")]
        triplets: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Ignore triples with fewer observations.
        #[arg(long, default_value_t = 1)]
        min_repeats: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Empirical (from --triplets) or model (from --embedding) similarity matrix.
    Simmatrix {
        #[arg(long, required_unless_present = "triplets")]
        embedding: Option<PathBuf>,
        #[arg(long, conflicts_with = "embedding", requires = "vocab")]
        triplets: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Concept names, one per line; defaults to every concept.
        #[arg(long)]
        subset: Option<PathBuf>,
        /// Third concepts for the model matrix: the subset itself or all concepts.
        #[arg(long, value_parser = ["subset", "all"], default_value = "subset")]
        pool: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pearson correlation of off-diagonal entries of two similarity matrices.
    Simcorr {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Greedy correlation matching of the dimensions of two embeddings.
    MatchDims {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.8)]
        threshold: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Remove triplets containing two or more of the given concepts.
    FilterHoldout {
        #[arg(long)]
        triplets: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        subset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long, default_value_t = 10)]
    pub outer_folds: usize,
    #[arg(long, default_value_t = 10)]
    pub inner_folds: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl CvArgs {
    fn plan(&self) -> CrossValidationPlan {
        CrossValidationPlan {
            outer_folds: self.outer_folds,
            inner_folds: self.inner_folds,
            seed: self.seed,
            ..CrossValidationPlan::default()
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum DownstreamCommand {
    /// Nested-CV logistic regression AUC for each binary feature.
    PredictFeatures {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Keep only this many features with the most positive entries.
        #[arg(long)]
        top: Option<usize>,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Non-negative L1 regression of each dimension on predictor features.
    ExplainDims {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        features: PathBuf,
        /// Weights listed per dimension.
        #[arg(long, default_value_t = 12)]
        show: usize,
        #[command(flatten)]
        cv: CvArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Centroid dot-product typicality scores, optionally correlated with norms.
    Typicality {
        #[arg(long)]
        embedding: PathBuf,
        /// Lines `name<TAB>category`.
        #[arg(long)]
        categories: PathBuf,
        /// Lines `name<TAB>score`.
        #[arg(long)]
        norms: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Leave-one-out nearest-neighbor category accuracy.
    Classify {
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let stdout = std::io::stdout();
    match run(cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.category().exit_code()
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| SposeError::invalid(format!("thread pool: {e}")))?;
    let mut buf: Vec<u8> = Vec::new();
    let result = pool.install(|| match cli.command {
        Command::Generate(args) => cmd_generate(&args, &mut buf),
        Command::Train(args) => cmd_train(&args, &mut buf),
        Command::Evaluate(cmd) => cmd_evaluate(cmd, &mut buf),
        Command::Downstream(cmd) => cmd_downstream(cmd, &mut buf),
    });
    out.write_all(&buf)
        .map_err(|e| SposeError::io("<stdout>", e))?;
    result
}

// ---------------------------------------------------------------------------
// config files and manifests

/// `key=value` lines; `#` starts a comment line.
#[derive(Debug, Default)]
struct ConfigFile {
    entries: HashMap<String, String>,
    origin: String,
}

impl ConfigFile {
    fn load(path: Option<&Path>, allowed: &[&str]) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ConfigFile::default());
        };
        let origin = path.display().to_string();
        let text = fs::read_to_string(path).map_err(|e| SposeError::io(path, e))?;
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| SposeError::Parse {
                path: origin.clone(),
                line: i + 1,
                message: "expected key=value".into(),
            })?;
            let k = k.trim();
            if !allowed.contains(&k) {
                return Err(SposeError::Parse {
                    path: origin.clone(),
                    line: i + 1,
                    message: format!("unknown key {k:?}"),
                });
            }
            entries.insert(k.to_string(), v.trim().to_string());
        }
        Ok(ConfigFile { entries, origin })
    }

    /// Flag value, else config value, else `default`.
    fn resolve<T: FromStr>(&self, flag: Option<T>, key: &str, default: Option<T>) -> Result<T> {
        if let Some(v) = flag {
            return Ok(v);
        }
        if let Some(raw) = self.entries.get(key) {
            return raw.parse().map_err(|_| {
                SposeError::invalid(format!("{}: bad value {raw:?} for {key}", self.origin))
            });
        }
        default.ok_or_else(|| SposeError::invalid(format!("missing required --{key}")))
    }
}

fn parse_grid(raw: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| SposeError::invalid(format!("bad lambda value {s:?}")))
        })
        .collect()
}

fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| SposeError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Run record written next to a command's outputs.
#[derive(Debug, Clone, Default)]
pub struct RunManifest {
    pub command: String,
    pub seed: u64,
    /// Resolved settings, in the config-file key space.
    pub config: BTreeMap<String, String>,
    /// `(key, path, sha256)` of each input file.
    pub inputs: Vec<(String, PathBuf, String)>,
    pub timings: Vec<(String, f64)>,
}

impl RunManifest {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# spose run manifest");
        let _ = writeln!(s, "# tool_version={}", env!("CARGO_PKG_VERSION"));
        let _ = writeln!(s, "# command={}", self.command);
        for (key, path, digest) in &self.inputs {
            let _ = writeln!(s, "# input {key}={} sha256={digest}", path.display());
        }
        for (stage, secs) in &self.timings {
            let _ = writeln!(s, "# timing {stage}={secs:.3}s");
        }
        let _ = writeln!(s, "seed={}", self.seed);
        for (k, v) in &self.config {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    fn write(&self, dir: &Path) -> Result<()> {
        io::save_text(&dir.join(MANIFEST_FILE), &self.to_text())
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SposeError::io(dir, e))
}

fn emit(out: &mut dyn Write, file: Option<&Path>, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| SposeError::io("<stdout>", e))?;
    if let Some(path) = file {
        io::save_text(path, text)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// generate

const GENERATE_KEYS: &[&str] = &[
    "concepts", "dims", "density", "scale", "triplets", "repeats", "seed", "out",
];

fn cmd_generate(args: &GenerateArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref(), GENERATE_KEYS)?;
    let concepts: usize = cfg.resolve(args.concepts, "concepts", None)?;
    let dims: usize = cfg.resolve(args.dims, "dims", None)?;
    let density: f64 = cfg.resolve(args.density, "density", Some(0.3))?;
    let scale: f64 = cfg.resolve(args.scale, "scale", Some(2.0))?;
    let triplets: usize = cfg.resolve(args.triplets, "triplets", None)?;
    let repeats: usize = cfg.resolve(args.repeats, "repeats", Some(1))?;
    let seed: u64 = cfg.resolve(args.seed, "seed", Some(0))?;
    let dir: PathBuf = cfg.resolve(args.out.clone(), "out", None)?;

    let start = Instant::now();
    let truth = synthetic::generate_ground_truth(concepts, dims, density, scale, seed)?;
    let data = synthetic::sample_triplets(&truth, triplets, seed, repeats)?;
    let elapsed = start.elapsed().as_secs_f64();

    ensure_dir(&dir)?;
    io::save_vocabulary(truth.embedding.vocabulary(), &dir.join(VOCAB_FILE))?;
    io::save_embedding(&truth.embedding, &dir.join(TRUTH_FILE))?;
    io::save_triplets(&data, &dir.join(TRIPLETS_FILE))?;

    let config = [
        ("concepts", concepts.to_string()),
        ("dims", dims.to_string()),
        ("density", fmt_real(density)),
        ("scale", fmt_real(scale)),
        ("triplets", triplets.to_string()),
        ("repeats", repeats.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    RunManifest {
        command: "generate".into(),
        seed,
        config,
        inputs: vec![],
        timings: vec![("generate".into(), elapsed)],
    }
    .write(&dir)?;
    emit(
        out,
        None,
        &format!(
            "wrote {} concepts, {} judgments to {}\n",
            concepts,
            data.len(),
            dir.display()
        ),
    )
}

// ---------------------------------------------------------------------------
// train

const TRAIN_KEYS: &[&str] = &[
    "triplets",
    "vocab",
    "lambda-grid",
    "epochs",
    "lr",
    "init-dims",
    "prune-threshold",
    "split",
    "batch",
    "seed",
    "out",
];

fn cmd_train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = ConfigFile::load(args.config.as_deref(), TRAIN_KEYS)?;
    let defaults = TrainConfig::default();
    let triplets_path: PathBuf = cfg.resolve(args.triplets.clone(), "triplets", None)?;
    let vocab_path: PathBuf = cfg.resolve(args.vocab.clone(), "vocab", None)?;
    let grid_raw: String = cfg.resolve(
        args.lambda_grid.clone(),
        "lambda-grid",
        Some(
            defaults
                .lambda_grid
                .iter()
                .map(|l| fmt_real(*l))
                .collect::<Vec<_>>()
                .join(","),
        ),
    )?;
    let config = TrainConfig {
        lambda_grid: parse_grid(&grid_raw)?,
        epochs: cfg.resolve(args.epochs, "epochs", Some(defaults.epochs))?,
        learning_rate: cfg.resolve(args.lr, "lr", Some(defaults.learning_rate))?,
        init_dims: cfg.resolve(args.init_dims, "init-dims", Some(defaults.init_dims))?,
        prune_threshold: cfg.resolve(
            args.prune_threshold,
            "prune-threshold",
            Some(defaults.prune_threshold),
        )?,
        split_fraction: cfg.resolve(args.split, "split", Some(defaults.split_fraction))?,
        batch_size: cfg.resolve(args.batch, "batch", Some(defaults.batch_size))?,
        seed: cfg.resolve(args.seed, "seed", Some(defaults.seed))?,
    };
    config.validate()?;
    let dir: PathBuf = cfg.resolve(args.out.clone(), "out", None)?;

    let vocab = io::load_vocabulary(&vocab_path)?;
    let data = io::load_triplets(&triplets_path, vocab)?;

    let start = Instant::now();
    let (embedding, report) = training::train_full(&data, &config)?;
    let elapsed = start.elapsed().as_secs_f64();

    ensure_dir(&dir)?;
    io::save_embedding(&embedding, &dir.join(EMBEDDING_FILE))?;
    io::save_text(&dir.join(GRID_REPORT_FILE), &report.to_tsv())?;

    let snapshot: BTreeMap<String, String> = [
        ("triplets", triplets_path.display().to_string()),
        ("vocab", vocab_path.display().to_string()),
        (
            "lambda-grid",
            config
                .lambda_grid
                .iter()
                .map(|l| fmt_real(*l))
                .collect::<Vec<_>>()
                .join(","),
        ),
        ("epochs", config.epochs.to_string()),
        ("lr", fmt_real(config.learning_rate)),
        ("init-dims", config.init_dims.to_string()),
        ("prune-threshold", fmt_real(config.prune_threshold)),
        ("split", fmt_real(config.split_fraction)),
        ("batch", config.batch_size.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    RunManifest {
        command: "train".into(),
        seed: config.seed,
        config: snapshot,
        inputs: vec![
            (
                "triplets".into(),
                triplets_path.clone(),
                sha256_file(&triplets_path)?,
            ),
            (
                "vocab".into(),
                vocab_path.clone(),
                sha256_file(&vocab_path)?,
            ),
        ],
        timings: vec![("train_full".into(), elapsed)],
    }
    .write(&dir)?;
    emit(
        out,
        None,
        &format!(
            "selected lambda {} with {} dimensions; wrote {}\n",
            fmt_real(report.selected_lambda),
            embedding.n_dims(),
            dir.display()
        ),
    )
}

// ---------------------------------------------------------------------------
// evaluate

fn load_dataset_for(
    embedding: &crate::data::Embedding,
    triplets: &Path,
    vocab: Option<&Path>,
) -> Result<TripletDataset> {
    let vocabulary = match vocab {
        Some(p) => {
            let v = io::load_vocabulary(p)?;
            if &v != embedding.vocabulary() {
                return Err(SposeError::invalid(format!(
                    "vocabulary {} does not match the embedding's concepts",
                    p.display()
                )));
            }
            v
        }
        None => embedding.vocabulary().clone(),
    };
    io::load_triplets(triplets, vocabulary)
}

fn cmd_evaluate(cmd: EvaluateCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        EvaluateCommand::Accuracy {
            embedding,
            triplets,
            vocab,
            out: file,
        } => {
            let emb = io::load_embedding(&embedding)?;
            let data = load_dataset_for(&emb, &triplets, vocab.as_deref())?;
            let acc = evaluation::accuracy(&emb, &data)?;
            emit(
                out,
                file.as_deref(),
                &format!("accuracy\t{}\nn\t{}\n", fmt_real(acc), data.len()),
            )
        }
        EvaluateCommand::Ceiling {
            counts,
            triplets,
            vocab,
            min_repeats,
            out: file,
        } => {
            let set = match (counts, triplets, vocab) {
                (Some(c), _, _) => evaluation::load_counts(&c)?,
                (None, Some(t), Some(v)) => RepeatedTripletSet::from_dataset(&io::load_triplets(
                    &t,
                    io::load_vocabulary(&v)?,
                )?),
                _ => {
                    return Err(SposeError::invalid(
                        "need --counts, or --triplets with --vocab",
                    ))
                }
            };
            let set = set.with_min_total(min_repeats);
            let ceiling = evaluation::bayes_ceiling(&set)?;
            emit(
                out,
                file.as_deref(),
                &format!(
                    "bayes_ceiling\t{}\ntriples\t{}\n",
                    fmt_real(ceiling),
                    set.len()
                ),
            )
        }
        EvaluateCommand::Simmatrix {
            embedding,
            triplets,
            vocab,
            subset,
            pool,
            out: file,
        } => {
            let matrix = if let Some(e) = embedding {
                let emb = io::load_embedding(&e)?;
                let subset = match subset {
                    Some(s) => io::load_subset(&s, emb.vocabulary())?,
                    None => (0..emb.n_concepts()).collect(),
                };
                let pool: Vec<usize> = if pool == "all" {
                    (0..emb.n_concepts()).collect()
                } else {
                    subset.clone()
                };
                evaluation::model_similarity(&emb, &subset, &pool)?
            } else {
                let t = triplets.expect("clap enforces --embedding or --triplets");
                let v = vocab.expect("clap enforces --vocab with --triplets");
                let data = io::load_triplets(&t, io::load_vocabulary(&v)?)?;
                let subset = match subset {
                    Some(s) => io::load_subset(&s, data.vocabulary())?,
                    None => (0..data.vocabulary().len()).collect(),
                };
                evaluation::empirical_similarity(&data, &subset)?
            };
            io::save_similarity(&matrix, &file)?;
            let defined = matrix.values().iter().filter(|v| v.is_some()).count() / 2;
            emit(
                out,
                None,
                &format!(
                    "wrote {}x{} matrix ({defined} defined pairs) to {}\n",
                    matrix.len(),
                    matrix.len(),
                    file.display()
                ),
            )
        }
        EvaluateCommand::Simcorr { a, b, out: file } => {
            let (ma, mb) = (io::load_similarity(&a)?, io::load_similarity(&b)?);
            if ma.vocabulary() != mb.vocabulary() {
                return Err(SposeError::invalid(
                    "similarity matrices cover different concepts",
                ));
            }
            let r = evaluation::offdiag_pearson(&ma, &mb)?;
            emit(out, file.as_deref(), &format!("pearson\t{}\n", fmt_real(r)))
        }
        EvaluateCommand::MatchDims {
            a,
            b,
            threshold,
            out: file,
        } => {
            let report = training::match_dimensions(
                &io::load_embedding(&a)?,
                &io::load_embedding(&b)?,
                threshold,
            )?;
            emit(out, file.as_deref(), &report.to_tsv())
        }
        EvaluateCommand::FilterHoldout {
            triplets,
            vocab,
            subset,
            out: file,
        } => {
            let data = io::load_triplets(&triplets, io::load_vocabulary(&vocab)?)?;
            let held = io::load_subset(&subset, data.vocabulary())?;
            let kept = data.filter_holdout(&held);
            io::save_triplets(&kept, &file)?;
            emit(
                out,
                None,
                &format!(
                    "kept\t{}\nremoved\t{}\n",
                    kept.len(),
                    data.len() - kept.len()
                ),
            )
        }
    }
}

// ---------------------------------------------------------------------------
// downstream

fn load_labels(path: &Path, emb: &crate::data::Embedding) -> Result<CategoryLabeling> {
    let pairs: Vec<(String, String)> = io::load_name_value_pairs(path)?
        .into_iter()
        .map(|(_, n, c)| (n, c))
        .collect();
    CategoryLabeling::from_names(emb.vocabulary(), &pairs)
}

fn cmd_downstream(cmd: DownstreamCommand, out: &mut dyn Write) -> Result<()> {
    match cmd {
        DownstreamCommand::PredictFeatures {
            embedding,
            features,
            top,
            cv,
            out: file,
        } => {
            let emb = io::load_embedding(&embedding)?;
            let mut table = io::load_feature_table(&features)?;
            if let Some(k) = top {
                table = table.densest(k);
            }
            let results = downstream::logistic_feature_auc(&emb, &table, &cv.plan())?;
            let aucs: Vec<f64> = results.iter().map(|r| r.auc).collect();
            let mut s = String::new();
            let _ = writeln!(
                s,
                "# median_auc={}",
                stats::median(&aucs).map_or("NA".into(), fmt_real)
            );
            s.push_str("feature\tauc\tn_positive\tconverged\n");
            for r in &results {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}",
                    r.feature,
                    fmt_real(r.auc),
                    r.n_positive,
                    r.converged
                );
            }
            emit(out, file.as_deref(), &s)
        }
        DownstreamCommand::ExplainDims {
            embedding,
            features,
            show,
            cv,
            out: file,
        } => {
            let emb = io::load_embedding(&embedding)?;
            let table = io::load_feature_table(&features)?;
            let results = downstream::nnls_explain(&emb, &table, &cv.plan())?;
            let rs: Vec<f64> = results.iter().filter_map(|r| r.cv_correlation).collect();
            let mut s = String::new();
            let _ = writeln!(
                s,
                "# median_cv_correlation={}",
                stats::median(&rs).map_or("NA".into(), fmt_real)
            );
            s.push_str("dimension\tcv_correlation\talpha\ttop_weights\n");
            for r in &results {
                let weights = r
                    .weights
                    .iter()
                    .take(show)
                    .map(|(n, w)| format!("{n}:{}", fmt_real(*w)))
                    .collect::<Vec<_>>()
                    .join(",");
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}",
                    r.dimension,
                    r.cv_correlation.map_or("NA".into(), fmt_real),
                    fmt_real(r.alpha),
                    weights
                );
            }
            emit(out, file.as_deref(), &s)
        }
        DownstreamCommand::Typicality {
            embedding,
            categories,
            norms,
            out: file,
        } => {
            let emb = io::load_embedding(&embedding)?;
            let labels = load_labels(&categories, &emb)?;
            let mut s = String::new();
            if let Some(n) = norms {
                let norm_map = io::load_scores(&n)?
                    .into_iter()
                    .filter_map(|(name, v)| emb.vocabulary().index_of(&name).map(|i| (i, v)))
                    .collect();
                let (per, median) = downstream::typicality_correlations(&emb, &labels, &norm_map)?;
                let _ = writeln!(
                    s,
                    "# median_correlation={}",
                    median.map_or("NA".into(), fmt_real)
                );
                s.push_str("category\tn\tcorrelation\n");
                for c in &per {
                    let _ = writeln!(
                        s,
                        "{}\t{}\t{}",
                        c.category,
                        c.n,
                        c.correlation.map_or("NA".into(), fmt_real)
                    );
                }
            }
            s.push_str("concept\tcategory\tscore\n");
            for (cat, members) in labels.categories() {
                if members.len() < 2 {
                    continue;
                }
                let scores = downstream::typicality_scores(&emb, &members)?;
                for (c, v) in members.iter().zip(scores) {
                    let name = emb.vocabulary().name(*c).unwrap_or_default();
                    let _ = writeln!(s, "{name}\t{cat}\t{}", fmt_real(v));
                }
            }
            emit(out, file.as_deref(), &s)
        }
        DownstreamCommand::Classify {
            embedding,
            categories,
            out: file,
        } => {
            let emb = io::load_embedding(&embedding)?;
            let labels = load_labels(&categories, &emb)?;
            let r = downstream::nn_category_accuracy(&emb, &labels)?;
            emit(
                out,
                file.as_deref(),
                &format!(
                    "accuracy\t{}\nevaluated\t{}\nexcluded_zero_norm\t{}\n",
                    fmt_real(r.accuracy),
                    r.n_evaluated,
                    r.excluded_zero_norm.len()
                ),
            )
        }
    }
}
