//! The `biophilic` command line. Each subcommand reads the file formats of
//! [`crate::data`] and [`crate::decoder`] and delegates to the library.
//!
//! Exit codes: 0 on success, 2 on a usage error, 1 on any other failure.
//! Failures also print one JSON line `{"error": kind, "message": …}` on
//! stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{
    read_embeddings, read_labels, split_dataset, Dataset, Embedding, LabelTaxonomy, SplitRule, SplitSpec,
};
use crate::decoder::{load_checkpoint, DecoderParams};
use crate::error::{Error, Result};
use crate::explain::{
    explain_segments, load_png, render_overlay, save_png, segment, EmbeddingPredictor, ExplainConfig, Predictor,
    ProviderProcess,
};
use crate::metrics::classification_report;
use crate::numerics::Matrix;
use crate::tagging::{
    build_gallery, checkpoint_digest, dominant_index, make_tags, TagResult, CURATION_THRESHOLD, EVAL_THRESHOLD,
};
use crate::training::{hpo_search, train_observed, HpoConfig, OptimizerKind, SearchSpace, TrainConfig, TrainOutputs};

#[derive(Debug, Parser)]
#[command(name = "biophilic", version, about = "Biophilic artwork tagging on image embeddings")]
struct Cli {
    /// Output format on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Seed for every random choice. Overrides a seed given in --config.
    #[arg(long, global = true, env = "BIOPHILIC_SEED")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Text,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Shuffle the ids of an embedding file into train/validation/test.
    Split(SplitArgs),
    /// Train a decoder and write its best-epoch checkpoint.
    Train(TrainArgs),
    /// Search optimizer × learning rate on the validation split.
    Hpo(HpoArgs),
    /// Score a checkpoint against labels and print the metrics report.
    Eval(EvalArgs),
    /// Print per-label probabilities, one JSON line per embedding.
    Predict(PredictArgs),
    /// Tags, dominant label and Biophilic flag, one JSON line per image.
    Tag(TagArgs),
    /// Group tagged images by dominant label into a gallery manifest.
    Gallery(TagArgs),
    /// Explain one image's prediction with superpixel perturbations.
    Explain(ExplainArgs),
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// BEMB embedding file whose ids are split.
    #[arg(long)]
    embeddings: PathBuf,
    /// Train,val,test fractions summing to 1 [default: 0.7,0.2,0.1].
    #[arg(long, value_delimiter = ',', conflicts_with = "counts")]
    ratios: Option<Vec<f64>>,
    /// Exact train,val,test sizes summing to the number of ids.
    #[arg(long, value_delimiter = ',')]
    counts: Option<Vec<usize>>,
    /// Write the split JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// BEMB embedding file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Label CSV with header `id,<label1>,…`.
    #[arg(long)]
    labels: PathBuf,
    /// Taxonomy manifest JSON [default: the built-in 15 labels].
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Split JSON from `split`; without it a 7:2:1 split is drawn from --seed.
    #[arg(long)]
    split: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training config JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Where to write the best-epoch checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Write one JSON line per epoch here.
    #[arg(long)]
    history: Option<PathBuf>,
    /// Number of epochs.
    #[arg(long)]
    epochs: Option<usize>,
    /// Learning rate.
    #[arg(long)]
    learning_rate: Option<f64>,
    /// adam or sgd.
    #[arg(long)]
    optimizer: Option<OptimizerKind>,
    /// Mini-batch size.
    #[arg(long)]
    batch_size: Option<usize>,
}

/// `--config` file for `hpo`; every section is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpoSettings {
    /// Base training config; optimizer and learning rate are searched.
    pub train: TrainConfig,
    pub hpo: HpoConfig,
    pub space: SearchSpace,
}

#[derive(Debug, Args)]
struct HpoArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON with optional "train", "hpo" and "space" sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of sampled grid cells.
    #[arg(long)]
    trials: Option<usize>,
    /// Epochs per trial.
    #[arg(long)]
    epochs_per_trial: Option<usize>,
    /// Trials run concurrently. Results do not depend on it.
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the report JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Subset {
    Train,
    Val,
    Test,
    All,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// BDEC checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// BEMB embedding file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Label CSV.
    #[arg(long)]
    labels: PathBuf,
    /// Taxonomy manifest JSON [default: the built-in 15 labels].
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Decision threshold; a label is predicted when p > threshold.
    #[arg(long, default_value_t = EVAL_THRESHOLD)]
    threshold: f64,
    /// Split JSON; restricts scoring to --subset.
    #[arg(long)]
    split: Option<PathBuf>,
    /// Which part of --split to score.
    #[arg(long, value_enum, default_value_t = Subset::Test, requires = "split")]
    subset: Subset,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// BDEC checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// BEMB embedding file.
    #[arg(long)]
    embeddings: PathBuf,
    /// Taxonomy manifest; checked against the checkpoint's label count.
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Write the JSON lines here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TagArgs {
    /// BDEC checkpoint used to score --embeddings.
    #[arg(long, requires = "embeddings")]
    checkpoint: Option<PathBuf>,
    /// BEMB embedding file.
    #[arg(long, requires = "checkpoint")]
    embeddings: Option<PathBuf>,
    /// JSON lines from `predict`, instead of --checkpoint/--embeddings.
    #[arg(long, conflicts_with = "embeddings")]
    predictions: Option<PathBuf>,
    /// Taxonomy manifest JSON [default: the built-in 15 labels].
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Tag threshold; a label is tagged when p > threshold.
    #[arg(long, default_value_t = CURATION_THRESHOLD)]
    threshold: f64,
    /// Write the output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExplainArgs {
    /// PNG image to explain.
    #[arg(long)]
    image: PathBuf,
    /// BDEC checkpoint applied to the provider's embeddings.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Embedding provider executable (newline-delimited JSON on stdin/stdout).
    #[arg(long)]
    provider: String,
    /// Argument passed to the provider; repeatable.
    #[arg(long = "provider-arg", allow_hyphen_values = true)]
    provider_args: Vec<String>,
    /// Taxonomy manifest JSON [default: the built-in 15 labels].
    #[arg(long)]
    taxonomy: Option<PathBuf>,
    /// Label to explain [default: the image's dominant label].
    #[arg(long)]
    label: Option<String>,
    /// Perturbed samples, including the original image.
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    /// Target number of superpixels.
    #[arg(long, default_value_t = 50)]
    segments: usize,
    /// SLIC compactness.
    #[arg(long, default_value_t = 10.0)]
    compactness: f64,
    /// Kernel width of the sample weighting.
    #[arg(long, default_value_t = 0.25)]
    kernel_width: f64,
    /// Ridge penalty of the surrogate.
    #[arg(long, default_value_t = 1.0)]
    lambda: f64,
    /// Number of segments to highlight.
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    /// Images per provider round trip.
    #[arg(long, default_value_t = 50)]
    batch_size: usize,
    /// Parallel prediction batches (the provider itself is serial).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write the explanation JSON here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the green-tinted overlay PNG here.
    #[arg(long)]
    overlay: Option<PathBuf>,
}

/// One line of `predict` output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub probabilities: Vec<f64>,
}

/// Runs the CLI on `args` (program name first) with the process's stdout
/// and stderr, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

/// [`run`] with explicit output streams.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().ansi().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            let line = serde_json::json!({"error": e.kind(), "message": e.to_string()});
            let _ = writeln!(err, "{line}");
            1
        }
    }
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<()> {
    let ctx = Ctx {
        format: cli.format,
        seed: cli.seed,
    };
    match cli.command {
        Command::Split(a) => ctx.split(a, out),
        Command::Train(a) => ctx.train(a, out),
        Command::Hpo(a) => ctx.hpo(a, out),
        Command::Eval(a) => ctx.eval(a, out),
        Command::Predict(a) => ctx.predict(a, out),
        Command::Tag(a) => ctx.tag(a, out),
        Command::Gallery(a) => ctx.gallery(a, out),
        Command::Explain(a) => ctx.explain(a, out),
    }
}

struct Ctx {
    format: Format,
    seed: Option<u64>,
}

fn load_taxonomy(path: Option<&Path>) -> Result<LabelTaxonomy> {
    path.map_or_else(|| Ok(LabelTaxonomy::biophilic_default()), LabelTaxonomy::load)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Writes `body` to `path` if given, else to `out`.
fn emit(path: Option<&Path>, body: &str, out: &mut dyn Write) -> Result<()> {
    match path {
        Some(p) => write_file(p, body.as_bytes()),
        None => Ok(out.write_all(body.as_bytes())?),
    }
}

fn pretty<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

fn features(embeddings: &[Embedding]) -> Result<Matrix> {
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let data = embeddings.iter().flat_map(|e| e.vector.iter().map(|&v| v as f64)).collect();
    Matrix::from_vec(embeddings.len(), dim, data)
}

fn check_labels(params: &DecoderParams, taxonomy: &LabelTaxonomy) -> Result<()> {
    if params.n_labels() != taxonomy.len() {
        return Err(Error::Shape(format!(
            "checkpoint predicts {} labels, taxonomy has {}",
            params.n_labels(),
            taxonomy.len()
        )));
    }
    Ok(())
}

fn predictions(checkpoint: &Path, embeddings: &Path) -> Result<(DecoderParams, Vec<Prediction>)> {
    let params = load_checkpoint(checkpoint)?.params;
    let emb = read_embeddings(embeddings)?;
    if emb.is_empty() {
        return Ok((params, Vec::new()));
    }
    let probs = params.predict(&features(&emb)?)?;
    let preds = emb
        .iter()
        .zip(probs.row_iter())
        .map(|(e, p)| Prediction {
            id: e.id.clone(),
            probabilities: p.to_vec(),
        })
        .collect();
    Ok((params, preds))
}

fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .map_err(|e| Error::Format(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}

impl Ctx {
    fn split(&self, a: SplitArgs, out: &mut dyn Write) -> Result<()> {
        let ids: Vec<String> = read_embeddings(&a.embeddings)?.into_iter().map(|e| e.id).collect();
        fn three<T: Copy + std::fmt::Debug>(v: &[T], flag: &str) -> Result<[T; 3]> {
            <[T; 3]>::try_from(v)
                .map_err(|_| Error::Validation(format!("--{flag} takes three comma-separated values, got {v:?}")))
        }
        let rule = match (a.ratios, a.counts) {
            (Some(r), _) => SplitRule::Ratios(three(&r, "ratios")?),
            (_, Some(c)) => SplitRule::Counts(three(&c, "counts")?),
            _ => SplitRule::default(),
        };
        let spec = split_dataset(&ids, rule, self.seed.unwrap_or(0))?;
        match self.format {
            Format::Json => emit(a.out.as_deref(), &pretty(&spec)?, out),
            Format::Text => {
                if let Some(p) = &a.out {
                    write_file(p, pretty(&spec)?.as_bytes())?;
                }
                let [t, v, s] = spec.sizes();
                Ok(writeln!(out, "train {t}, val {v}, test {s} (seed {})", spec.seed)?)
            }
        }
    }

    /// Taxonomy plus train and validation sets.
    fn train_val(&self, d: &DataArgs, seed: u64) -> Result<(LabelTaxonomy, Dataset, Dataset)> {
        let taxonomy = load_taxonomy(d.taxonomy.as_deref())?;
        let data = Dataset::align(&read_embeddings(&d.embeddings)?, &read_labels(&d.labels, &taxonomy)?)?;
        let split: SplitSpec = match &d.split {
            Some(p) => read_json(p)?,
            None => split_dataset(&data.ids, SplitRule::default(), seed)?,
        };
        let train = data.subset(&split.train_ids)?;
        let val = data.subset(&split.val_ids)?;
        Ok((taxonomy, train, val))
    }

    fn train(&self, a: TrainArgs, out: &mut dyn Write) -> Result<()> {
        let mut cfg = match &a.config {
            Some(p) => TrainConfig::load(p)?,
            None => TrainConfig::default(),
        };
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        cfg.epochs = a.epochs.unwrap_or(cfg.epochs);
        cfg.learning_rate = a.learning_rate.unwrap_or(cfg.learning_rate);
        cfg.optimizer = a.optimizer.unwrap_or(cfg.optimizer);
        cfg.batch_size = a.batch_size.unwrap_or(cfg.batch_size);
        cfg.validate()?;
        let (taxonomy, train, val) = self.train_val(&a.data, cfg.seed)?;
        let outputs = TrainOutputs {
            checkpoint: Some(a.checkpoint.clone()),
            history: a.history.clone(),
        };
        let text = self.format == Format::Text;
        let outcome = train_observed(&cfg, &train, &val, &taxonomy, &outputs, |r, _| {
            if text {
                writeln!(out, "epoch {:>3}  loss {:.5}  val F1 {:.4}", r.epoch, r.train_loss, r.val_weighted_f1)?;
            }
            Ok(())
        })?;
        let r = &outcome.report;
        match self.format {
            Format::Json => Ok(out.write_all(pretty(r)?.as_bytes())?),
            Format::Text => Ok(writeln!(
                out,
                "best epoch {} with validation weighted F1 {:.4}; checkpoint {}",
                r.best_epoch,
                r.best_val_weighted_f1,
                a.checkpoint.display()
            )?),
        }
    }

    fn hpo(&self, a: HpoArgs, out: &mut dyn Write) -> Result<()> {
        let mut s: HpoSettings = match &a.config {
            Some(p) => read_json(p)?,
            None => HpoSettings::default(),
        };
        s.hpo.seed = self.seed.unwrap_or(s.hpo.seed);
        s.hpo.trials = a.trials.unwrap_or(s.hpo.trials);
        s.hpo.epochs_per_trial = a.epochs_per_trial.unwrap_or(s.hpo.epochs_per_trial);
        s.hpo.jobs = a.jobs.unwrap_or(s.hpo.jobs);
        s.train.validate()?;
        let (taxonomy, train, val) = self.train_val(&a.data, s.hpo.seed)?;
        let report = hpo_search(&s.space, &s.hpo, &s.train, &train, &val, &taxonomy)?;
        match self.format {
            Format::Json => {
                let body = serde_json::json!({
                    "trials": report.trials,
                    "best": report.best,
                    "best_config": report.best_config(&s.train),
                });
                emit(a.out.as_deref(), &pretty(&body)?, out)
            }
            Format::Text => {
                for t in &report.trials {
                    let note = if t.diverged { "  (diverged)" } else { "" };
                    writeln!(out, "{:<4} lr {:<6} F1 {:.4}{note}", t.optimizer, t.learning_rate, t.score)?;
                }
                let b = &report.best;
                Ok(writeln!(out, "best: {} lr {} F1 {:.4}", b.optimizer, b.learning_rate, b.score)?)
            }
        }
    }

    fn eval(&self, a: EvalArgs, out: &mut dyn Write) -> Result<()> {
        let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
        let params = load_checkpoint(&a.checkpoint)?.params;
        check_labels(&params, &taxonomy)?;
        let mut data = Dataset::align(&read_embeddings(&a.embeddings)?, &read_labels(&a.labels, &taxonomy)?)?;
        if let Some(p) = &a.split {
            let split: SplitSpec = read_json(p)?;
            let ids = match a.subset {
                Subset::Train => split.train_ids,
                Subset::Val => split.val_ids,
                Subset::Test => split.test_ids,
                Subset::All => data.ids.clone(),
            };
            data = data.subset(&ids)?;
        }
        if !(a.threshold > 0.0 && a.threshold < 1.0) {
            return Err(Error::Validation(format!("threshold must be in (0, 1), got {}", a.threshold)));
        }
        let probs = params.predict(&data.features)?;
        let pred = crate::tagging::binarize_matrix(&probs, a.threshold);
        let report = classification_report(&pred, &data.targets, &taxonomy)?;
        match self.format {
            Format::Json => Ok(out.write_all(pretty(&report.to_json())?.as_bytes())?),
            Format::Text => Ok(out.write_all(report.to_text().as_bytes())?),
        }
    }

    fn predict(&self, a: PredictArgs, out: &mut dyn Write) -> Result<()> {
        let (params, preds) = predictions(&a.checkpoint, &a.embeddings)?;
        if let Some(t) = &a.taxonomy {
            check_labels(&params, &LabelTaxonomy::load(t)?)?;
        }
        let mut body = String::new();
        for p in &preds {
            match self.format {
                Format::Json => body += &(serde_json::to_string(p)? + "\n"),
                Format::Text => {
                    let cols: Vec<String> = p.probabilities.iter().map(|v| format!("{v:.4}")).collect();
                    body += &format!("{}\t{}\n", p.id, cols.join("\t"));
                }
            }
        }
        emit(a.out.as_deref(), &body, out)
    }

    /// Tag results plus the checkpoint digest when one was used.
    fn tag_results(&self, a: &TagArgs, taxonomy: &LabelTaxonomy) -> Result<(Vec<TagResult>, Option<String>)> {
        let (preds, digest) = match (&a.checkpoint, &a.embeddings, &a.predictions) {
            (Some(c), Some(e), _) => {
                let (params, preds) = predictions(c, e)?;
                check_labels(&params, taxonomy)?;
                let bytes = std::fs::read(c).map_err(|err| Error::io(c, err))?;
                (preds, Some(checkpoint_digest(&bytes)))
            }
            (_, _, Some(p)) => (read_predictions(p)?, None),
            _ => {
                return Err(Error::Validation(
                    "give --checkpoint with --embeddings, or --predictions".into(),
                ))
            }
        };
        let results = preds
            .iter()
            .map(|p| make_tags(p.id.clone(), &p.probabilities, taxonomy, a.threshold))
            .collect::<Result<Vec<_>>>()?;
        Ok((results, digest))
    }

    fn tag(&self, a: TagArgs, out: &mut dyn Write) -> Result<()> {
        let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
        let (results, _) = self.tag_results(&a, &taxonomy)?;
        let mut body = String::new();
        for r in &results {
            match self.format {
                Format::Json => body += &(serde_json::to_string(r)? + "\n"),
                Format::Text => {
                    let tags: Vec<String> =
                        r.tags.iter().map(|t| format!("{} ({:.2})", t.label, t.probability)).collect();
                    body += &format!(
                        "{}: dominant {} ({:.2}); tags [{}]; {}\n",
                        r.id,
                        r.dominant,
                        r.dominant_probability,
                        tags.join(", "),
                        r.flag_text()
                    );
                }
            }
        }
        emit(a.out.as_deref(), &body, out)
    }

    fn gallery(&self, a: TagArgs, out: &mut dyn Write) -> Result<()> {
        let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
        let (results, digest) = self.tag_results(&a, &taxonomy)?;
        let manifest = build_gallery(&results, &taxonomy, digest)?;
        match self.format {
            Format::Json => emit(a.out.as_deref(), &pretty(&manifest)?, out),
            Format::Text => {
                if let Some(p) = &a.out {
                    write_file(p, pretty(&manifest)?.as_bytes())?;
                }
                for g in &manifest.groups {
                    writeln!(out, "{}: {} images", g.label, g.records.len())?;
                }
                let m = &manifest.metadata;
                Ok(writeln!(out, "{} images, {} Biophilic", m.records, m.biophilic_records)?)
            }
        }
    }

    fn explain(&self, a: ExplainArgs, out: &mut dyn Write) -> Result<()> {
        let taxonomy = load_taxonomy(a.taxonomy.as_deref())?;
        let params = load_checkpoint(&a.checkpoint)?.params;
        check_labels(&params, &taxonomy)?;
        let image = load_png(&a.image)?;
        let config = ExplainConfig {
            n_samples: a.samples,
            target_segments: a.segments,
            compactness: a.compactness,
            kernel_width: a.kernel_width,
            lambda: a.lambda,
            top_k: a.top_k,
            seed: self.seed.unwrap_or(0),
            batch_size: a.batch_size,
            jobs: a.jobs,
        };
        let (_guard, client) = ProviderProcess::spawn(&a.provider, &a.provider_args)?;
        let predictor = EmbeddingPredictor::new(client, params);
        let label = match &a.label {
            Some(name) => taxonomy
                .index_of(name)
                .ok_or_else(|| Error::Validation(format!("unknown label {name:?}")))?,
            None => dominant_index(predictor.predict(std::slice::from_ref(&image))?.row(0)),
        };
        let segmap = segment(&image, config.target_segments, config.compactness)?;
        let mut explanation = explain_segments(&image, &segmap, &predictor, label, &config)?;
        explanation.label = Some(taxonomy.label(label).to_string());
        if let Some(p) = &a.overlay {
            save_png(&render_overlay(&image, &segmap, &explanation.selected)?, p)?;
        }
        match self.format {
            Format::Json => emit(a.out.as_deref(), &pretty(&explanation)?, out),
            Format::Text => {
                if let Some(p) = &a.out {
                    write_file(p, pretty(&explanation)?.as_bytes())?;
                }
                Ok(writeln!(
                    out,
                    "{} (p = {:.3}): {} segments, top {:?}, R² {:.3}",
                    taxonomy.label(label),
                    explanation.base_probability,
                    explanation.n_segments,
                    explanation.selected,
                    explanation.r2
                )?)
            }
        }
    }
}
