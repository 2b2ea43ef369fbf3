//! Batch command-line surface for the pipeline: preprocess, build-graph,
//! train, evaluate, predict and aaw.
//!
//! Configuration precedence is flags > config file > built-in defaults; the
//! config file is flat `key = value` text using the long flag names as keys.
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure,
//! 5 format/version error. Output files are written atomically and removed
//! again if the command fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use triage::corpusgraph::{build_graph, CorpusGraph, GraphBuildOptions};
use triage::dataset::{load_corpus, make_split, DatasetSplit, LabelVector, RawTweet};
use triage::embeddings::EmbeddingTable;
use triage::encoder::{load_imported_embeddings, EncoderKind, EncoderSpec, ImportedEmbeddings};
use triage::error::{Error, Result};
use triage::gat::GatConfig;
use triage::metrics::{aaw_from_parts, evaluate, AawConfig, DeltaMode};
use triage::preprocess::{
    preprocess_corpus, EmojiMap, Gazetteer, ProcessedCorpus, ProcessedTweet, Stoplist,
};
use triage::relnet::{predict, ModelConfig, Variant};
use triage::train::{
    history_to_csv, model_from_checkpoint, train, Checkpoint, TrainConfig, TrainInputs,
};

#[derive(Parser)]
#[command(
    name = "triage",
    version,
    about = "Multi-label crisis-tweet classification pipeline"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Clean and tokenize a corpus, spot entities, encode labels
    Preprocess(PreprocessArgs),
    /// Build the word/entity/label graph from a processed corpus
    BuildGraph(BuildGraphArgs),
    /// Train a model and write checkpoint and history
    Train(TrainArgs),
    /// Score a checkpoint on a test split and write a metrics report
    Evaluate(EvaluateArgs),
    /// Emit per-tweet probabilities and thresholded labels
    Predict(PredictArgs),
    /// Compute the accumulated alert worth pair on annotated data
    Aaw(AawArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    /// Corpus file: one JSON record per line (id, text, labels, priority?)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Stop-word file, one token per line [default: bundled English list]
    #[arg(long)]
    stoplist: Option<PathBuf>,
    /// Emoji map file, emoji<TAB>name per line [default: none]
    #[arg(long)]
    emoji_map: Option<PathBuf>,
    /// Gazetteer file, one surface form per line [default: none]
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Output path for the processed corpus (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct BuildGraphArgs {
    /// Processed corpus from the preprocess command
    #[arg(long)]
    processed: Option<PathBuf>,
    /// Pretrained word vectors, `token v1 .. vF` per line [default: none]
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Feature dimension when no embedding file is given [default: 64]
    #[arg(long)]
    feature_dim: Option<usize>,
    /// Co-occurrence window in tokens [default: 5]
    #[arg(long)]
    window: Option<usize>,
    /// Minimum word frequency for a word node [default: 1]
    #[arg(long)]
    min_freq: Option<usize>,
    /// Seed for out-of-table feature initialization [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Output path for the binary graph file
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional debug dump: node table plus `i j weight` triplets
    #[arg(long)]
    coo: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    /// Processed corpus from the preprocess command
    #[arg(long)]
    processed: Option<PathBuf>,
    /// Graph file from build-graph (required unless --variant encoder-only)
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Split file to reuse; generated and saved when absent
    #[arg(long)]
    split: Option<PathBuf>,
    /// Where to save a generated split [default: next to the checkpoint]
    #[arg(long)]
    split_out: Option<PathBuf>,
    /// Test fraction of the corpus [default: 0.2]
    #[arg(long)]
    test_fraction: Option<f64>,
    /// Validation fraction carved from the train portion [default: 0.2]
    #[arg(long)]
    valid_fraction: Option<f64>,
    /// Model variant: full, encoder-only or graph-only [default: full]
    #[arg(long)]
    variant: Option<String>,
    /// Training epochs [default: 200]
    #[arg(long)]
    epochs: Option<usize>,
    /// Mini-batch size [default: 128]
    #[arg(long)]
    batch_size: Option<usize>,
    /// Adam learning rate [default: 2e-5]
    #[arg(long)]
    learning_rate: Option<f64>,
    /// Dropout rate on attention and input features [default: 0.25]
    #[arg(long)]
    dropout: Option<f64>,
    /// Early-stopping patience in epochs [default: 10]
    #[arg(long)]
    patience: Option<usize>,
    /// Run seed [default: 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Decision threshold for validation F1 [default: 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Encoder kind: trainable-meanpool or imported [default: trainable-meanpool]
    #[arg(long)]
    encoder: Option<String>,
    /// Trainable encoder output dimension [default: 64]
    #[arg(long)]
    encoder_dim: Option<usize>,
    /// Imported per-tweet embedding file (required for --encoder imported)
    #[arg(long)]
    imported: Option<PathBuf>,
    /// Total hidden width of the first attention layer [default: 64]
    #[arg(long)]
    gat_hidden: Option<usize>,
    /// Attention heads on layer 1 [default: 4]
    #[arg(long)]
    gat_heads1: Option<usize>,
    /// Attention heads on layer 2 [default: 1]
    #[arg(long)]
    gat_heads2: Option<usize>,
    /// Label embedding width out of layer 2 [default: 64]
    #[arg(long)]
    gat_out_dim: Option<usize>,
    /// Multiply edge weights into attention scores [default: off]
    #[arg(long)]
    weighted_attention: bool,
    /// Relation head hidden width [default: 128]
    #[arg(long)]
    relnet_hidden: Option<usize>,
    /// Output path for the checkpoint
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
    /// Output path for the per-epoch history CSV [default: none]
    #[arg(long)]
    history_out: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Processed corpus from the preprocess command
    #[arg(long)]
    processed: Option<PathBuf>,
    /// Split file; the test ids are evaluated [default: all tweets]
    #[arg(long)]
    split: Option<PathBuf>,
    /// Graph file matching the checkpoint fingerprint
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Checkpoint to evaluate
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Imported embedding file [default: the checkpoint's recorded source]
    #[arg(long)]
    imported: Option<PathBuf>,
    /// Decision threshold [default: 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Alert-worth mixing constant alpha [default: 0.75]
    #[arg(long)]
    alpha: Option<f64>,
    /// Priority cutoff separating high from low [default: 0.7]
    #[arg(long)]
    cutoff: Option<f64>,
    /// Comma-separated actionable labels [default: the six standard types]
    #[arg(long)]
    actionable: Option<String>,
    /// Worth table file, label<TAB>weight per line [default: uniform groups]
    #[arg(long)]
    worth_table: Option<PathBuf>,
    /// Delta definition: abs-error or system-score [default: abs-error]
    #[arg(long)]
    delta_mode: Option<String>,
    /// Output path for the metrics report (JSON)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    /// Processed corpus to predict on (use this or --corpus)
    #[arg(long)]
    processed: Option<PathBuf>,
    /// Raw corpus to clean first (use this or --processed)
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Stop-word file for --corpus [default: bundled English list]
    #[arg(long)]
    stoplist: Option<PathBuf>,
    /// Emoji map file for --corpus [default: none]
    #[arg(long)]
    emoji_map: Option<PathBuf>,
    /// Gazetteer file for --corpus [default: none]
    #[arg(long)]
    gazetteer: Option<PathBuf>,
    /// Graph file matching the checkpoint fingerprint
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Checkpoint to predict with
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Imported embedding file [default: the checkpoint's recorded source]
    #[arg(long)]
    imported: Option<PathBuf>,
    /// Decision threshold [default: 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Output path for id<TAB>probs<TAB>labels lines [default: stdout]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AawArgs {
    /// Processed corpus with priority annotations
    #[arg(long)]
    processed: Option<PathBuf>,
    /// Split file; the test ids are scored [default: all tweets]
    #[arg(long)]
    split: Option<PathBuf>,
    /// Graph file matching the checkpoint fingerprint
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Checkpoint to score
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Imported embedding file [default: the checkpoint's recorded source]
    #[arg(long)]
    imported: Option<PathBuf>,
    /// Decision threshold [default: 0.5]
    #[arg(long)]
    threshold: Option<f64>,
    /// Alert-worth mixing constant alpha [default: 0.75]
    #[arg(long)]
    alpha: Option<f64>,
    /// Priority cutoff separating high from low [default: 0.7]
    #[arg(long)]
    cutoff: Option<f64>,
    /// Comma-separated actionable labels [default: the six standard types]
    #[arg(long)]
    actionable: Option<String>,
    /// Worth table file, label<TAB>weight per line [default: uniform groups]
    #[arg(long)]
    worth_table: Option<PathBuf>,
    /// Delta definition: abs-error or system-score [default: abs-error]
    #[arg(long)]
    delta_mode: Option<String>,
    /// Output path for the scores (JSON) [default: print only]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Flat key=value config file; flags override it
    #[arg(long)]
    config: Option<PathBuf>,
}

/// Flat `key = value` config file using long flag names as keys.
struct FileConfig(BTreeMap<String, String>);

impl FileConfig {
    fn load(path: Option<&PathBuf>) -> Result<Self> {
        let mut map = BTreeMap::new();
        if let Some(path) = path {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            for (lineno, line) in text.lines().enumerate() {
                let line = line.trim();
                if line.is_empty() || line.starts_with('#') {
                    continue;
                }
                let (key, value) = line.split_once('=').ok_or_else(|| {
                    Error::Usage(format!("config line {}: expected key = value", lineno + 1))
                })?;
                map.insert(key.trim().to_string(), value.trim().to_string());
            }
        }
        Ok(FileConfig(map))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.0.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|_| Error::Usage(format!("config key {key}: cannot parse {raw:?}"))),
        }
    }

    fn get_path(&self, key: &str) -> Option<PathBuf> {
        self.0.get(key).map(PathBuf::from)
    }
}

/// Files created by this invocation; all are removed again on failure.
#[derive(Default)]
struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    fn write_bytes(&mut self, path: &Path, bytes: &[u8]) -> Result<()> {
        let tmp = tmp_path(path);
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        self.created.push(path.to_path_buf());
        Ok(())
    }

    fn write_str(&mut self, path: &Path, text: &str) -> Result<()> {
        self.write_bytes(path, text.as_bytes())
    }

    /// Run a path-taking saver against a temp file, then move into place.
    fn save_with(&mut self, path: &Path, saver: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        let tmp = tmp_path(path);
        saver(&tmp)?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))?;
        self.created.push(path.to_path_buf());
        Ok(())
    }

    fn cleanup(&self) {
        for path in &self.created {
            let _ = fs::remove_file(path);
        }
    }
}

fn tmp_path(path: &Path) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "out".into());
    name.push_str(".tmp");
    path.with_file_name(name)
}

fn require(path: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    path.ok_or_else(|| Error::Usage(format!("missing required --{flag}")))
}

fn load_stoplist(path: Option<&PathBuf>) -> Result<Stoplist> {
    match path {
        Some(p) => Stoplist::load(p),
        None => Ok(Stoplist::bundled()),
    }
}

fn load_emoji_map(path: Option<&PathBuf>) -> Result<EmojiMap> {
    match path {
        Some(p) => EmojiMap::load(p),
        None => Ok(EmojiMap::empty()),
    }
}

fn load_gazetteer(path: Option<&PathBuf>, stoplist: &Stoplist) -> Result<Gazetteer> {
    match path {
        Some(p) => Gazetteer::load(p, stoplist),
        None => Ok(Gazetteer::empty()),
    }
}

fn select_split<'a>(
    corpus: &'a ProcessedCorpus,
    split: Option<&DatasetSplit>,
) -> Result<Vec<&'a ProcessedTweet>> {
    match split {
        None => Ok(corpus.tweets.iter().collect()),
        Some(split) => {
            let by_id: BTreeMap<&str, &ProcessedTweet> =
                corpus.tweets.iter().map(|t| (t.id.as_str(), t)).collect();
            split
                .test
                .iter()
                .map(|id| {
                    by_id.get(id.as_str()).copied().ok_or_else(|| {
                        Error::InvalidData(format!("split references unknown id {id}"))
                    })
                })
                .collect()
        }
    }
}

/// Load imported embeddings for a checkpoint, preferring an explicit flag
/// over the source path recorded at training time.
fn load_ckpt_imported(
    ckpt: &Checkpoint,
    flag: Option<&PathBuf>,
) -> Result<Option<ImportedEmbeddings>> {
    if ckpt.encoder_kind != EncoderKind::Imported {
        return Ok(None);
    }
    let path = flag
        .cloned()
        .or_else(|| ckpt.encoder_source.clone().map(PathBuf::from))
        .ok_or_else(|| {
            Error::Usage("checkpoint uses imported embeddings: pass --imported".into())
        })?;
    Ok(Some(load_imported_embeddings(&path)?))
}

fn aaw_config(
    file: &FileConfig,
    alpha: Option<f64>,
    cutoff: Option<f64>,
    actionable: Option<String>,
    worth_table: Option<PathBuf>,
    delta_mode: Option<String>,
) -> Result<AawConfig> {
    let mut cfg = AawConfig {
        alpha: alpha.or(file.get("alpha")?).unwrap_or(0.75),
        cutoff: cutoff.or(file.get("cutoff")?).unwrap_or(0.7),
        ..Default::default()
    };
    if let Some(list) = actionable.or(file.get("actionable")?) {
        cfg.actionable_labels = list
            .split(',')
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect();
    }
    if let Some(path) = worth_table.or_else(|| file.get_path("worth-table")) {
        cfg.load_worth_table(&path)?;
    }
    if let Some(mode) = delta_mode.or(file.get("delta-mode")?) {
        cfg.delta_mode = DeltaMode::parse(&mode)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_preprocess(args: PreprocessArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let corpus_path = require(args.corpus.or_else(|| file.get_path("corpus")), "corpus")?;
    let out_path = require(args.out.or_else(|| file.get_path("out")), "out")?;
    let stoplist = load_stoplist(args.stoplist.or_else(|| file.get_path("stoplist")).as_ref())?;
    let emoji = load_emoji_map(
        args.emoji_map
            .or_else(|| file.get_path("emoji-map"))
            .as_ref(),
    )?;
    let gaz = load_gazetteer(
        args.gazetteer
            .or_else(|| file.get_path("gazetteer"))
            .as_ref(),
        &stoplist,
    )?;
    let (corpus, vocab) = load_corpus(&corpus_path, None)?;
    let tweets = preprocess_corpus(&corpus, &vocab, &stoplist, &emoji, &gaz)?;
    let processed = ProcessedCorpus { vocab, tweets };
    outputs.save_with(&out_path, |p| processed.save(p))?;
    println!(
        "processed {} tweets, {} labels -> {}",
        processed.tweets.len(),
        processed.vocab.k(),
        out_path.display()
    );
    Ok(())
}

fn cmd_build_graph(args: BuildGraphArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let processed_path = require(
        args.processed.or_else(|| file.get_path("processed")),
        "processed",
    )?;
    let out_path = require(args.out.or_else(|| file.get_path("out")), "out")?;
    let processed = ProcessedCorpus::load(&processed_path)?;
    let table = match args.embeddings.or_else(|| file.get_path("embeddings")) {
        Some(path) => EmbeddingTable::load(&path)?,
        None => {
            let dim = args.feature_dim.or(file.get("feature-dim")?).unwrap_or(64);
            EmbeddingTable::empty(dim)
        }
    };
    let opts = GraphBuildOptions {
        window: args.window.or(file.get("window")?).unwrap_or(5),
        min_freq: args.min_freq.or(file.get("min-freq")?).unwrap_or(1),
        seed: args.seed.or(file.get("seed")?).unwrap_or(42),
    };
    let graph = build_graph(&processed.tweets, &processed.vocab, &table, &opts)?;
    outputs.save_with(&out_path, |p| graph.save(p))?;
    if let Some(coo) = args.coo.or_else(|| file.get_path("coo")) {
        outputs.write_str(&coo, &graph.dump_coo())?;
    }
    println!(
        "graph {} nodes, dim {}, fingerprint {:016x} -> {}",
        graph.node_count(),
        graph.feature_dim(),
        graph.fingerprint(),
        out_path.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let processed_path = require(
        args.processed.or_else(|| file.get_path("processed")),
        "processed",
    )?;
    let checkpoint_out = require(
        args.checkpoint_out
            .or_else(|| file.get_path("checkpoint-out")),
        "checkpoint-out",
    )?;
    let processed = ProcessedCorpus::load(&processed_path)?;

    let config = TrainConfig {
        epochs: args.epochs.or(file.get("epochs")?).unwrap_or(200),
        batch_size: args.batch_size.or(file.get("batch-size")?).unwrap_or(128),
        learning_rate: args
            .learning_rate
            .or(file.get("learning-rate")?)
            .unwrap_or(2e-5),
        dropout: args.dropout.or(file.get("dropout")?).unwrap_or(0.25),
        patience: args.patience.or(file.get("patience")?).unwrap_or(10),
        seed: args.seed.or(file.get("seed")?).unwrap_or(42),
        variant: Variant::parse(
            &args
                .variant
                .or(file.get("variant")?)
                .unwrap_or_else(|| "full".into()),
        )?,
        threshold: args.threshold.or(file.get("threshold")?).unwrap_or(0.5),
    };
    let encoder_kind = EncoderKind::parse(
        &args
            .encoder
            .or(file.get("encoder")?)
            .unwrap_or_else(|| "trainable-meanpool".into()),
    )?;
    let imported_path = args.imported.or_else(|| file.get_path("imported"));
    let imported = match encoder_kind {
        EncoderKind::Imported => {
            let path = require(imported_path.clone(), "imported")?;
            Some(load_imported_embeddings(&path)?)
        }
        EncoderKind::TrainableMeanpool => None,
    };
    let encoder_dim = imported.as_ref().map(|e| e.dimension()).unwrap_or(
        args.encoder_dim.or(file.get("encoder-dim")?).unwrap_or(64),
    );
    let model_config = ModelConfig {
        variant: config.variant,
        encoder: EncoderSpec {
            kind: encoder_kind,
            d: encoder_dim,
            source: imported_path,
        },
        gat: GatConfig {
            hidden: args.gat_hidden.or(file.get("gat-hidden")?).unwrap_or(64),
            heads1: args.gat_heads1.or(file.get("gat-heads1")?).unwrap_or(4),
            heads2: args.gat_heads2.or(file.get("gat-heads2")?).unwrap_or(1),
            out_dim: args.gat_out_dim.or(file.get("gat-out-dim")?).unwrap_or(64),
            attn_slope: 0.2,
            dropout: config.dropout,
            weighted_scores: args.weighted_attention
                || file.get("weighted-attention")?.unwrap_or(false),
        },
        relnet_hidden: args
            .relnet_hidden
            .or(file.get("relnet-hidden")?)
            .unwrap_or(128),
    };

    let graph = match args.graph.or_else(|| file.get_path("graph")) {
        Some(path) => Some(CorpusGraph::load(&path)?),
        None => None,
    };

    let split_path = args.split.or_else(|| file.get_path("split"));
    let split = match &split_path {
        Some(path) if path.exists() => DatasetSplit::load(path)?,
        _ => {
            let test_fraction = args
                .test_fraction
                .or(file.get("test-fraction")?)
                .unwrap_or(0.2);
            let valid_fraction = args
                .valid_fraction
                .or(file.get("valid-fraction")?)
                .unwrap_or(0.2);
            let raw_like: Vec<RawTweet> = processed
                .tweets
                .iter()
                .map(|t| RawTweet {
                    id: t.id.clone(),
                    text: String::new(),
                    labels: Vec::new(),
                    priority: t.priority,
                })
                .collect();
            let split = make_split(
                &raw_like,
                (1.0 - test_fraction, test_fraction),
                valid_fraction,
                config.seed,
            )?;
            let save_to = args
                .split_out
                .or_else(|| file.get_path("split-out"))
                .or(split_path)
                .unwrap_or_else(|| checkpoint_out.with_extension("split.json"));
            outputs.save_with(&save_to, |p| split.save(p))?;
            split
        }
    };

    let inputs = TrainInputs {
        tweets: &processed.tweets,
        split: &split,
        vocab: &processed.vocab,
        graph: graph.as_ref(),
        imported,
    };
    let (checkpoint, history) = train(&inputs, &model_config, &config)?;
    outputs.save_with(&checkpoint_out, |p| checkpoint.save(p))?;
    if let Some(history_out) = args.history_out.or_else(|| file.get_path("history-out")) {
        outputs.write_str(&history_out, &history_to_csv(&history))?;
    }
    println!(
        "trained {} epochs, best valid F1w {} at step {} -> {}",
        history.len(),
        checkpoint.best_valid_f1,
        checkpoint.step_count,
        checkpoint_out.display()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let processed_path = require(
        args.processed.or_else(|| file.get_path("processed")),
        "processed",
    )?;
    let checkpoint_path = require(
        args.checkpoint.or_else(|| file.get_path("checkpoint")),
        "checkpoint",
    )?;
    let out_path = require(args.out.or_else(|| file.get_path("out")), "out")?;
    let processed = ProcessedCorpus::load(&processed_path)?;
    let ckpt = Checkpoint::load(&checkpoint_path)?;
    let graph = match args.graph.or_else(|| file.get_path("graph")) {
        Some(path) => Some(CorpusGraph::load(&path)?),
        None => None,
    };
    let imported = load_ckpt_imported(&ckpt, args.imported.as_ref())?;
    let split = match args.split.or_else(|| file.get_path("split")) {
        Some(path) => Some(DatasetSplit::load(&path)?),
        None => None,
    };
    let test = select_split(&processed, split.as_ref())?;
    let threshold = args.threshold.or(file.get("threshold")?).unwrap_or(0.5);
    let cfg = aaw_config(
        &file,
        args.alpha,
        args.cutoff,
        args.actionable,
        args.worth_table,
        args.delta_mode,
    )?;
    let report = evaluate(&ckpt, graph.as_ref(), imported, &test, threshold, &cfg)?;
    outputs.save_with(&out_path, |p| report.save(p))?;
    let optional = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_else(|| "n/a".into());
    println!(
        "f1_weighted {} hamming_loss {} jaccard_mean {} aaw_high {} aaw_all {} -> {}",
        report.f1_weighted,
        report.hamming_loss,
        report.jaccard_mean,
        optional(report.aaw_high),
        optional(report.aaw_all),
        out_path.display()
    );
    Ok(())
}

fn cmd_predict(args: PredictArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let checkpoint_path = require(
        args.checkpoint.or_else(|| file.get_path("checkpoint")),
        "checkpoint",
    )?;
    let ckpt = Checkpoint::load(&checkpoint_path)?;

    let processed_path = args.processed.or_else(|| file.get_path("processed"));
    let corpus_path = args.corpus.or_else(|| file.get_path("corpus"));
    let tweets: Vec<ProcessedTweet> = match (processed_path, corpus_path) {
        (Some(path), None) => ProcessedCorpus::load(&path)?.tweets,
        (None, Some(path)) => {
            let stoplist =
                load_stoplist(args.stoplist.or_else(|| file.get_path("stoplist")).as_ref())?;
            let emoji = load_emoji_map(
                args.emoji_map
                    .or_else(|| file.get_path("emoji-map"))
                    .as_ref(),
            )?;
            let gaz = load_gazetteer(
                args.gazetteer
                    .or_else(|| file.get_path("gazetteer"))
                    .as_ref(),
                &stoplist,
            )?;
            let (corpus, _) = load_corpus(&path, Some(&ckpt.vocab))?;
            preprocess_corpus(&corpus, &ckpt.vocab, &stoplist, &emoji, &gaz)?
        }
        _ => {
            return Err(Error::Usage(
                "pass exactly one of --processed or --corpus".into(),
            ))
        }
    };

    let graph = match args.graph.or_else(|| file.get_path("graph")) {
        Some(path) => Some(CorpusGraph::load(&path)?),
        None => None,
    };
    let imported = load_ckpt_imported(&ckpt, args.imported.as_ref())?;
    let threshold = args.threshold.or(file.get("threshold")?).unwrap_or(0.5);

    let (model, store) = model_from_checkpoint(&ckpt, graph.as_ref(), imported)?;
    let refs: Vec<&ProcessedTweet> = tweets.iter().collect();
    if refs.is_empty() {
        return Err(Error::InvalidData("no tweets to predict on".into()));
    }
    let probs = model.infer_batch(&refs, &store)?;
    let mut lines = String::new();
    for (row, tweet) in refs.iter().enumerate() {
        let prediction = predict(probs.row(row), threshold, &[])?;
        let prob_text: Vec<String> = prediction.probs.iter().map(|p| p.to_string()).collect();
        let names = prediction.labels.to_names(&ckpt.vocab);
        lines.push_str(&format!(
            "{}\t{}\t{}\n",
            tweet.id,
            prob_text.join(","),
            names.join(",")
        ));
    }
    match args.out.or_else(|| file.get_path("out")) {
        Some(path) => {
            outputs.write_str(&path, &lines)?;
            println!("predicted {} tweets -> {}", refs.len(), path.display());
        }
        None => print!("{lines}"),
    }
    Ok(())
}

fn cmd_aaw(args: AawArgs, outputs: &mut Outputs) -> Result<()> {
    let file = FileConfig::load(args.config.as_ref())?;
    let processed_path = require(
        args.processed.or_else(|| file.get_path("processed")),
        "processed",
    )?;
    let checkpoint_path = require(
        args.checkpoint.or_else(|| file.get_path("checkpoint")),
        "checkpoint",
    )?;
    let processed = ProcessedCorpus::load(&processed_path)?;
    let ckpt = Checkpoint::load(&checkpoint_path)?;
    let graph = match args.graph.or_else(|| file.get_path("graph")) {
        Some(path) => Some(CorpusGraph::load(&path)?),
        None => None,
    };
    let imported = load_ckpt_imported(&ckpt, args.imported.as_ref())?;
    let split = match args.split.or_else(|| file.get_path("split")) {
        Some(path) => Some(DatasetSplit::load(&path)?),
        None => None,
    };
    let test = select_split(&processed, split.as_ref())?;
    if test.is_empty() {
        return Err(Error::InvalidData("empty evaluation set".into()));
    }
    let threshold = args.threshold.or(file.get("threshold")?).unwrap_or(0.5);
    let cfg = aaw_config(
        &file,
        args.alpha,
        args.cutoff,
        args.actionable,
        args.worth_table,
        args.delta_mode,
    )?;

    let (model, store) = model_from_checkpoint(&ckpt, graph.as_ref(), imported)?;
    let actionable = cfg.actionable_indices(&ckpt.vocab);
    let probs = model.infer_batch(&test, &store)?;
    let predictions = (0..probs.rows())
        .map(|r| predict(probs.row(r), threshold, &actionable))
        .collect::<Result<Vec<_>>>()?;
    let parts: Vec<(String, Option<f64>, LabelVector)> = test
        .iter()
        .map(|t| (t.id.clone(), t.priority, t.label_vector.clone()))
        .collect();
    let (aaw_all, aaw_high) = aaw_from_parts(&predictions, &parts, &ckpt.vocab, &cfg)?;
    println!("aaw_high {aaw_high}");
    println!("aaw_all {aaw_all}");
    if let Some(path) = args.out.or_else(|| file.get_path("out")) {
        let json = format!("{{\n  \"aaw_high\": {aaw_high},\n  \"aaw_all\": {aaw_all}\n}}\n");
        outputs.write_str(&path, &json)?;
    }
    Ok(())
}

fn run(cli: Cli, outputs: &mut Outputs) -> Result<()> {
    match cli.command {
        Command::Preprocess(args) => cmd_preprocess(args, outputs),
        Command::BuildGraph(args) => cmd_build_graph(args, outputs),
        Command::Train(args) => cmd_train(args, outputs),
        Command::Evaluate(args) => cmd_evaluate(args, outputs),
        Command::Predict(args) => cmd_predict(args, outputs),
        Command::Aaw(args) => cmd_aaw(args, outputs),
    }
}

fn main() {
    let cli = Cli::parse();
    let mut outputs = Outputs::default();
    if let Err(e) = run(cli, &mut outputs) {
        outputs.cleanup();
        eprintln!("error[{}]: {e}", e.class().name());
        std::process::exit(e.class().exit_code());
    }
}
