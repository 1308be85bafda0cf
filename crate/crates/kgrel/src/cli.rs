//! Command-line entry points: train, eval, predict-stats, analyze,
//! resplit-nell.
//!
//! Every subcommand accepts `--config <file>` holding `key=value` lines
//! (keys are the long flag names); explicit flags override file values.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{
    dataset_fingerprint, load_checkpoint, save_checkpoint, CheckpointMeta,
};
use crate::data::{self, Dataset, Split};
use crate::error::{KgError, Result};
use crate::eval::{prediction_stats, ranking_report, EvalConfig, HISTOGRAM_BINS};
use crate::models::{Dims, ModelKind};
use crate::report;
use crate::train::{train_with_progress, TrainConfig};

#[derive(Parser)]
#[command(name = "kgrel", version, about = "Linear knowledge-graph embedding models with per-relation evaluation and relation-structure diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write a checkpoint.
    Train(TrainArgs),
    /// Ranking evaluation (hits@k, MRR) with per-relation breakdown.
    Eval(EvalArgs),
    /// Independent prediction accuracy and other-truth counts.
    PredictStats(PredictArgs),
    /// Relation-structure diagnostics (Khs, paths, symmetry, norms, eigen).
    Analyze(AnalyzeArgs),
    /// Rebuild NELL-995 validation/test splits of 20,000 triples each.
    ResplitNell(ResplitArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Transe,
    MureI,
    Distmult,
    Tucker,
    Mure,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> ModelKind {
        match m {
            ModelArg::Transe => ModelKind::TransE,
            ModelArg::MureI => ModelKind::MuReI,
            ModelArg::Distmult => ModelKind::DistMult,
            ModelArg::Tucker => ModelKind::TuckEr,
            ModelArg::Mure => ModelKind::MuRe,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Valid,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Valid => Split::Valid,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct CommonArgs {
    /// Dataset directory with train.txt, valid.txt, test.txt.
    #[arg(long)]
    dataset: PathBuf,
    /// Drop duplicate triples within a split instead of failing.
    #[arg(long, default_value_t = false)]
    dedupe: bool,
    /// Optional key=value config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Entity embedding dimension.
    #[arg(long, default_value_t = 200)]
    dim_entity: usize,
    /// Relation embedding dimension (TuckER only).
    #[arg(long, default_value_t = 30)]
    dim_relation: usize,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 50)]
    negatives: usize,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Validation hits@10 every N epochs (0 = never).
    #[arg(long, default_value_t = 0)]
    valid_every: usize,
    /// Output checkpoint path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint to evaluate.
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// hits@k cutoffs.
    #[arg(long, value_delimiter = ',', default_values_t = vec![10])]
    ks: Vec<usize>,
    /// Rank against all candidates, without filtering known truths.
    #[arg(long, default_value_t = false)]
    raw: bool,
    /// Emit the per-relation breakdown (not only the overall row).
    #[arg(long, default_value_t = true)]
    per_relation: bool,
    /// CSV output path (stdout when no output is given).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// JSON output path.
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct PredictArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Histogram bin count.
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// CSV output path for the accuracy table (stdout when absent).
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// CSV output path for probability histograms.
    #[arg(long)]
    out_histogram: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum AnalysisKind {
    Khs,
    Paths,
    Symmetry,
    Norms,
    Eigen,
    All,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Checkpoint (required for symmetry, norms and eigen).
    #[arg(long)]
    ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = AnalysisKind::All)]
    which: AnalysisKind,
    /// Build relation graphs from all splits instead of train only.
    #[arg(long, default_value_t = false)]
    all_splits: bool,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args)]
struct ResplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for the resplit train/valid/test files.
    #[arg(long)]
    out: PathBuf,
}

/// Expands `--config file` into argv entries. Keys already present as
/// explicit flags are skipped, so flags override file values.
fn inject_config(argv: Vec<String>) -> std::result::Result<Vec<String>, String> {
    let config_pos = argv.iter().position(|a| a == "--config");
    let Some(pos) = config_pos else {
        return Ok(argv);
    };
    let path = argv
        .get(pos + 1)
        .ok_or_else(|| "--config requires a file path".to_string())?
        .clone();
    let text = fs::read_to_string(&path).map_err(|e| format!("config {path}: {e}"))?;
    let mut injected = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config {path}:{}: expected key=value", idx + 1))?;
        let flag = format!("--{}", key.trim());
        if argv.iter().any(|a| *a == flag) {
            continue;
        }
        injected.push(flag);
        let value = value.trim();
        if value != "true" {
            injected.push(value.to_string());
        }
    }
    // insert right after the subcommand (argv[1])
    let mut out = argv;
    let insert_at = 2.min(out.len());
    out.splice(insert_at..insert_at, injected);
    Ok(out)
}

fn load_with_builtin_taxonomy(args: &CommonArgs) -> Result<Dataset> {
    let mut dataset = data::load_dataset(&args.dataset, args.dedupe)?;
    if dataset.taxonomy.is_none() {
        // fall back to the shipped taxonomies when they match the vocab
        for builtin in [crate::WN18RR_TAXONOMY, crate::NELL995_TAXONOMY] {
            let tax = data::parse_taxonomy(builtin, "builtin", &dataset.vocab)?;
            if !tax.label_of.is_empty() {
                dataset.taxonomy = Some(tax);
                break;
            }
        }
    }
    Ok(dataset)
}

fn write_or_print(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, contents).map_err(|e| KgError::io(p.display().to_string(), e)),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let dataset = load_with_builtin_taxonomy(&args.common)?;
    let dims = Dims {
        d_e: args.dim_entity,
        d_r: args.dim_relation,
        n_e: dataset.vocab.n_entities(),
        n_r: dataset.vocab.n_relations(),
    };
    let kind: ModelKind = args.model.into();
    let config = TrainConfig {
        kind,
        dims,
        learning_rate: args.lr,
        batch_size: args.batch,
        n_negatives: args.negatives,
        epochs: args.epochs,
        seed: args.seed,
        valid_every: args.valid_every,
    };
    let (params, _log) = train_with_progress(&dataset.store, &config, |rec| {
        match rec.valid_hits_at_10 {
            Some(h) => println!(
                "epoch={} loss={} seconds={} valid_hits10={}",
                rec.epoch, rec.mean_loss, rec.seconds, h
            ),
            None => println!(
                "epoch={} loss={} seconds={}",
                rec.epoch, rec.mean_loss, rec.seconds
            ),
        }
    })?;
    let mut meta = CheckpointMeta::new(kind, dims, args.seed);
    meta.train_config = Some(config);
    meta.dataset_fingerprint = dataset_fingerprint(&dataset.store, dims.n_e, dims.n_r);
    save_checkpoint(&params, &meta, &args.out)?;
    println!("checkpoint written to {}", args.out.display());
    Ok(())
}

fn run_eval(args: EvalArgs) -> Result<()> {
    let dataset = load_with_builtin_taxonomy(&args.common)?;
    let (params, _meta) = load_checkpoint(&args.ckpt)?;
    let config = EvalConfig {
        ks: args.ks.clone(),
        filtered: !args.raw,
        split: args.split.into(),
    };
    let mut rep = ranking_report(
        &params,
        &dataset.store,
        dataset.taxonomy.as_ref(),
        &dataset.vocab.relations,
        &config,
    )?;
    if !args.per_relation {
        rep.per_relation.clear();
    }
    if let Some(p) = &args.out_json {
        let json = serde_json::to_string_pretty(&report::ranking_json(&rep)).unwrap();
        write_or_print(Some(p), &(json + "\n"))?;
    }
    if args.out_json.is_none() || args.out_csv.is_some() {
        write_or_print(args.out_csv.as_deref(), &report::ranking_csv(&rep))?;
    }
    Ok(())
}

fn run_predict(args: PredictArgs) -> Result<()> {
    if !(args.threshold > 0.0 && args.threshold < 1.0) {
        return Err(KgError::Config("threshold must be in (0, 1)".into()));
    }
    if args.bins < 2 {
        return Err(KgError::Config("bins must be at least 2".into()));
    }
    let dataset = load_with_builtin_taxonomy(&args.common)?;
    let (params, _meta) = load_checkpoint(&args.ckpt)?;
    // accumulate at a resolution the requested bin count divides
    let store_bins = if HISTOGRAM_BINS % args.bins == 0 {
        HISTOGRAM_BINS
    } else {
        args.bins
    };
    let stats = prediction_stats(
        &params,
        &dataset.store,
        &dataset.vocab.relations,
        args.threshold,
        store_bins,
    )?;
    if let Some(p) = &args.out_json {
        let json = serde_json::to_string_pretty(&report::prediction_json(&stats)).unwrap();
        write_or_print(Some(p), &(json + "\n"))?;
    }
    if let Some(p) = &args.out_histogram {
        write_or_print(Some(p), &report::histogram_csv(&stats, args.bins))?;
    }
    if args.out_json.is_none() || args.out_csv.is_some() {
        write_or_print(args.out_csv.as_deref(), &report::prediction_csv(&stats))?;
    }
    Ok(())
}

fn run_analyze(args: AnalyzeArgs) -> Result<()> {
    let dataset = load_with_builtin_taxonomy(&args.common)?;
    let loaded = match &args.ckpt {
        Some(p) => Some(load_checkpoint(p)?),
        None => None,
    };
    let params = loaded.as_ref().map(|(p, _)| p);
    match args.which {
        AnalysisKind::Symmetry => {
            if !params.map_or(false, |p| p.kind.is_tucker()) {
                return Err(KgError::Config(
                    "analyze symmetry requires a TuckER checkpoint (--ckpt)".into(),
                ));
            }
        }
        AnalysisKind::Norms => {
            if !params.map_or(false, |p| p.kind.has_translation()) {
                return Err(KgError::Config(
                    "analyze norms requires a checkpoint with a translation vector (TransE, MuRE_I, MuRE)"
                        .into(),
                ));
            }
        }
        AnalysisKind::Eigen => {
            if !params.map_or(false, |p| p.kind.has_diagonal()) {
                return Err(KgError::Config(
                    "analyze eigen requires a checkpoint with a diagonal relation matrix (DistMult, MuRE)"
                        .into(),
                ));
            }
        }
        _ => {}
    }
    let rep = crate::analyze::structure_report(
        params,
        &dataset.store,
        dataset.taxonomy.as_ref(),
        &dataset.vocab.relations,
        args.all_splits,
    )?;
    let csv = match args.which {
        AnalysisKind::Eigen => report::eigen_csv(&rep),
        _ => report::structure_csv(&rep),
    };
    if let Some(p) = &args.out_json {
        let json = serde_json::to_string_pretty(&report::structure_json(&rep)).unwrap();
        write_or_print(Some(p), &(json + "\n"))?;
    }
    if args.out_json.is_none() || args.out_csv.is_some() {
        write_or_print(args.out_csv.as_deref(), &csv)?;
    }
    Ok(())
}

fn run_resplit(args: ResplitArgs) -> Result<()> {
    let dir = &args.common.dataset;
    let train = data::load_split_opts(&dir.join("train.txt"), args.common.dedupe)?;
    let valid = data::load_split_opts(&dir.join("valid.txt"), args.common.dedupe)?;
    let test = data::load_split_opts(&dir.join("test.txt"), args.common.dedupe)?;
    let (new_train, new_valid, new_test) = data::resplit_nell(&train, &valid, &test, args.seed)?;
    fs::create_dir_all(&args.out)
        .map_err(|e| KgError::io(args.out.display().to_string(), e))?;
    data::save_split(&args.out.join("train.txt"), &new_train)?;
    data::save_split(&args.out.join("valid.txt"), &new_valid)?;
    data::save_split(&args.out.join("test.txt"), &new_test)?;
    println!(
        "resplit written to {}: train={} valid={} test={}",
        args.out.display(),
        new_train.len(),
        new_valid.len(),
        new_test.len()
    );
    Ok(())
}

/// Runs the CLI on the given argv; returns the process exit code.
pub fn cli(argv: Vec<String>) -> i32 {
    crate::parallel::init_thread_cap();
    let argv = match inject_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            // clap handles help/version via this path with exit code 0
            let _ = e.print();
            return e.exit_code();
        }
    };
    let result = match cli.command {
        Command::Train(args) => run_train(args),
        Command::Eval(args) => run_eval(args),
        Command::PredictStats(args) => run_predict(args),
        Command::Analyze(args) => run_analyze(args),
        Command::ResplitNell(args) => run_resplit(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
