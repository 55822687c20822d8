mod config;

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use rnmsr_core::ablation::{ablation_csv, run_ablation};
use rnmsr_core::baselines::{ItemKnn, Pop};
use rnmsr_core::data::store::{read_dataset, write_dataset};
use rnmsr_core::data::{
    ingest_path, preprocess, sequence_split, synth_generate, Dataset, ItemIndex, PreprocessOptions,
    SynthConfig,
};
use rnmsr_core::gbp::{compute_stats, render_report, ReportFormat};
use rnmsr_core::metrics::{evaluate, EvalReport, Scorer};
use rnmsr_core::model::Model;
use rnmsr_core::train::train;

use config::{resolve, write_run_json, HyperArgs};

/// Session-based recommender with repeat/explore behavior patterns.
#[derive(Parser)]
#[command(name = "rnmsr", version, about, max_term_width = 100)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic interaction log
    Synth(SynthArgs),
    /// Ingest, filter, split, and index a raw interaction log
    Preprocess(PreprocessArgs),
    /// Behavior-pattern statistics of a session log
    Stats(StatsArgs),
    /// Train a model on a preprocessed dataset
    Train(TrainArgs),
    /// Evaluate a checkpoint or baseline on a dataset split
    Evaluate(EvaluateArgs),
    /// Train and evaluate all six ablation variants
    Ablate(AblateArgs),
    /// Rank the most likely next items for a session
    Recommend(RecommendArgs),
    /// Print attention weights and mode probabilities for a session
    DumpAttention(DumpAttentionArgs),
}

#[derive(clap::Args)]
struct SynthArgs {
    /// Output log file (session_id<TAB>item_id<TAB>timestamp)
    #[arg(long)]
    out: PathBuf,
    /// Number of sessions [default: 1000]
    #[arg(long, default_value_t = 1000)]
    sessions: usize,
    /// Item catalog size [default: 500]
    #[arg(long, default_value_t = 500)]
    items: usize,
    /// Minimum session length [default: 3]
    #[arg(long, default_value_t = 3)]
    min_len: usize,
    /// Maximum session length [default: 8]
    #[arg(long, default_value_t = 8)]
    max_len: usize,
    /// Probability each next item repeats an earlier one [default: 0.4]
    #[arg(long, default_value_t = 0.4)]
    repeat_rate: f64,
    /// Random seed [default: env RNMSR_SEED, else 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the run record [default: <out>.run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct PreprocessArgs {
    /// Raw interaction log
    #[arg(long)]
    input: PathBuf,
    /// Output dataset directory
    #[arg(long)]
    out_dir: PathBuf,
    /// Minimum corpus-wide item frequency [default: 5]
    #[arg(long, default_value_t = 5)]
    min_item_freq: u64,
    /// Test window: sessions ending in the final N seconds [default: 86400]
    #[arg(long, default_value_t = 86_400)]
    holdout_secs: i64,
    /// Validation fraction of the training pairs [default: 0.1]
    #[arg(long, default_value_t = 0.1)]
    valid_frac: f64,
    /// Random seed [default: env RNMSR_SEED, else 42]
    #[arg(long)]
    seed: Option<u64>,
    /// Where to write the run record [default: <out-dir>/run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct StatsArgs {
    /// Raw interaction log
    #[arg(long)]
    input: PathBuf,
    /// Pattern window length [default: 6]
    #[arg(long, default_value_t = 6)]
    l_max: usize,
    /// Apply the corpus frequency filter before counting [default: off]
    #[arg(long, default_value_t = 0)]
    min_item_freq: u64,
    /// Output format: csv or text [default: csv]
    #[arg(long, default_value = "csv")]
    format: String,
    /// Write the report here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Where to write the run record [default: run.json next to --out, else ./run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct TrainArgs {
    /// Preprocessed dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for checkpoint.ckpt and epochs.ldjson
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Where to write the run record [default: <out-dir>/run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct EvaluateArgs {
    /// Preprocessed dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint to evaluate
    #[arg(long, conflicts_with = "baseline")]
    checkpoint: Option<PathBuf>,
    /// Baseline instead of a checkpoint: pop or itemknn
    #[arg(long)]
    baseline: Option<String>,
    /// Neighbors kept per query item for itemknn [default: 100]
    #[arg(long, default_value_t = 100)]
    knn_k: usize,
    /// Split to evaluate: test, valid, or train [default: test]
    #[arg(long, default_value = "test")]
    split: String,
    /// Comma-separated cutoffs [default: 1,3,5,10,20]
    #[arg(long, default_value = "1,3,5,10,20")]
    cutoffs: String,
    /// Directory for metrics.json and metrics.csv [default: .]
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Where to write the run record [default: <out-dir>/run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct AblateArgs {
    /// Preprocessed dataset directory
    #[arg(long)]
    data: PathBuf,
    /// Output directory for ablation.csv
    #[arg(long)]
    out_dir: PathBuf,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Comma-separated cutoffs [default: 1,3,5,10,20]
    #[arg(long, default_value = "1,3,5,10,20")]
    cutoffs: String,
    /// Where to write the run record [default: <out-dir>/run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct RecommendArgs {
    /// Preprocessed dataset directory (for the item vocabulary)
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated raw item ids of the running session
    #[arg(long)]
    session: String,
    /// Number of items to print [default: 20]
    #[arg(long, default_value_t = 20)]
    topk: usize,
    /// Where to write the run record [default: ./run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

#[derive(clap::Args)]
struct DumpAttentionArgs {
    /// Preprocessed dataset directory (for the item vocabulary)
    #[arg(long)]
    data: PathBuf,
    /// Model checkpoint
    #[arg(long)]
    checkpoint: PathBuf,
    /// Comma-separated raw item ids of the running session
    #[arg(long)]
    session: String,
    /// Zero the instance-level inputs, isolating the pattern pathway
    #[arg(long)]
    zero_instance: bool,
    /// Where to write the run record [default: ./run.json]
    #[arg(long)]
    run_json: Option<PathBuf>,
}

fn main() {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(args) => cmd_synth(args),
        Command::Preprocess(args) => cmd_preprocess(args),
        Command::Stats(args) => cmd_stats(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Ablate(args) => cmd_ablate(args),
        Command::Recommend(args) => cmd_recommend(args),
        Command::DumpAttention(args) => cmd_dump_attention(args),
    };
    if let Err(err) = result {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}

fn resolve_seed(flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var("RNMSR_SEED") {
        Ok(raw) => raw
            .parse::<u64>()
            .with_context(|| format!("RNMSR_SEED = {raw:?} is not a valid seed")),
        Err(_) => Ok(42),
    }
}

fn sibling_run_json(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".run.json");
    out.with_file_name(name)
}

fn cmd_synth(args: SynthArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let cfg = SynthConfig {
        n_sessions: args.sessions,
        n_items: args.items,
        min_len: args.min_len,
        max_len: args.max_len,
        repeat_rate: args.repeat_rate,
        seed,
    };
    let sessions = synth_generate(&cfg)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(&args.out)?);
    let mut interactions = 0usize;
    for s in &sessions {
        for (item, ts) in s.items.iter().zip(&s.timestamps) {
            writeln!(w, "{}\t{}\t{}", s.id, item, ts)?;
            interactions += 1;
        }
    }
    w.flush()?;
    let run_json = args.run_json.unwrap_or_else(|| sibling_run_json(&args.out));
    write_run_json(
        &run_json,
        "synth",
        seed,
        &serde_json::json!({
            "out": args.out,
            "sessions": args.sessions,
            "items": args.items,
            "min_len": args.min_len,
            "max_len": args.max_len,
            "repeat_rate": args.repeat_rate,
        }),
    )?;
    println!(
        "wrote {} interactions across {} sessions to {}",
        interactions,
        sessions.len(),
        args.out.display()
    );
    Ok(())
}

fn cmd_preprocess(args: PreprocessArgs) -> Result<()> {
    let seed = resolve_seed(args.seed)?;
    let sessions = ingest_path(&args.input)?;
    let n_raw = sessions.len();
    let opts = PreprocessOptions {
        min_item_freq: args.min_item_freq,
        holdout_secs: args.holdout_secs,
        valid_fraction: args.valid_frac,
        seed,
    };
    let dataset = preprocess(sessions, &opts)?;
    write_dataset(&args.out_dir, &dataset)?;
    let run_json = args
        .run_json
        .unwrap_or_else(|| args.out_dir.join("run.json"));
    write_run_json(
        &run_json,
        "preprocess",
        seed,
        &serde_json::json!({
            "input": args.input,
            "out_dir": args.out_dir,
            "min_item_freq": args.min_item_freq,
            "holdout_secs": args.holdout_secs,
            "valid_frac": args.valid_frac,
        }),
    )?;
    println!(
        "{} raw sessions -> {} items, {} train / {} valid / {} test pairs -> {}",
        n_raw,
        dataset.n_items(),
        dataset.train.len(),
        dataset.valid.len(),
        dataset.test.len(),
        args.out_dir.display()
    );
    Ok(())
}

fn cmd_stats(args: StatsArgs) -> Result<()> {
    let format = match args.format.as_str() {
        "csv" => ReportFormat::Csv,
        "text" => ReportFormat::Text,
        other => bail!("unknown format {other:?} (expected csv|text)"),
    };
    let mut sessions = ingest_path(&args.input)?;
    if args.min_item_freq > 0 {
        sessions = rnmsr_core::data::filter_sessions(sessions, args.min_item_freq);
    }
    // Index items per session; raw id identity is irrelevant to patterns.
    let mut pairs: Vec<(Vec<ItemIndex>, ItemIndex)> = Vec::new();
    for s in &sessions {
        if s.items.len() < 2 {
            continue;
        }
        let mut local: Vec<String> = Vec::new();
        let items: Vec<ItemIndex> = s
            .items
            .iter()
            .map(|raw| match local.iter().position(|l| l == raw) {
                Some(i) => i as ItemIndex + 1,
                None => {
                    local.push(raw.clone());
                    local.len() as ItemIndex
                }
            })
            .collect();
        for ex in sequence_split(&items) {
            pairs.push((ex.prefix, ex.target));
        }
    }
    let stats = compute_stats(pairs.iter().map(|(p, t)| (p.as_slice(), *t)), args.l_max);
    let report = render_report(&stats, format);
    match &args.out {
        Some(path) => {
            std::fs::write(path, &report).with_context(|| format!("writing {}", path.display()))?
        }
        None => print!("{report}"),
    }
    let run_json = args.run_json.unwrap_or_else(|| match &args.out {
        Some(out) => sibling_run_json(out),
        None => PathBuf::from("run.json"),
    });
    write_run_json(
        &run_json,
        "stats",
        0,
        &serde_json::json!({
            "input": args.input,
            "l_max": args.l_max,
            "min_item_freq": args.min_item_freq,
            "format": args.format,
            "pairs": pairs.len(),
        }),
    )?;
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let resolved = resolve(&args.hyper)?;
    let dataset = read_dataset(&args.data)?;
    std::fs::create_dir_all(&args.out_dir)?;
    let run_json = args
        .run_json
        .unwrap_or_else(|| args.out_dir.join("run.json"));
    write_run_json(
        &run_json,
        "train",
        resolved.seed,
        &serde_json::json!({
            "data": args.data,
            "out_dir": args.out_dir,
            "train": resolved.train,
        }),
    )?;

    let output = train(&dataset, &resolved.train)?;
    let mut log =
        std::io::BufWriter::new(std::fs::File::create(args.out_dir.join("epochs.ldjson"))?);
    for stats in &output.log {
        writeln!(log, "{}", serde_json::to_string(stats)?)?;
        match stats.valid_mrr20 {
            Some(mrr) => println!(
                "epoch {:>3}  lr {:.1e}  loss {:.4}  valid MRR@20 {:.4}",
                stats.epoch, stats.lr, stats.train_loss, mrr
            ),
            None => println!(
                "epoch {:>3}  lr {:.1e}  loss {:.4}",
                stats.epoch, stats.lr, stats.train_loss
            ),
        }
    }
    log.flush()?;
    let ckpt = args.out_dir.join("checkpoint.ckpt");
    output.model.save(&ckpt)?;
    println!(
        "kept epoch {} checkpoint at {}",
        output.best_epoch,
        ckpt.display()
    );
    Ok(())
}

fn parse_cutoffs(raw: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for tok in raw.split(',') {
        let n: usize = tok
            .trim()
            .parse()
            .with_context(|| format!("bad cutoff {tok:?}"))?;
        if n == 0 {
            bail!("cutoffs must be positive");
        }
        out.push(n);
    }
    if out.is_empty() {
        bail!("at least one cutoff required");
    }
    Ok(out)
}

fn split_pairs<'d>(dataset: &'d Dataset, split: &str) -> Result<&'d [rnmsr_core::Example]> {
    Ok(match split {
        "test" => &dataset.test,
        "valid" => &dataset.valid,
        "train" => &dataset.train,
        other => bail!("unknown split {other:?} (expected test|valid|train)"),
    })
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let cutoffs = parse_cutoffs(&args.cutoffs)?;
    let pairs = split_pairs(&dataset, &args.split)?;
    if pairs.is_empty() {
        bail!("split {:?} contains no pairs", args.split);
    }

    let (label, report): (String, EvalReport) = match (&args.checkpoint, &args.baseline) {
        (Some(ckpt), None) => {
            let model = Model::load(ckpt)?;
            if model.n_items != dataset.n_items() {
                bail!(
                    "checkpoint was trained over {} items but the dataset has {}",
                    model.n_items,
                    dataset.n_items()
                );
            }
            ("model".to_string(), evaluate(&model, pairs, &cutoffs))
        }
        (None, Some(name)) => match name.as_str() {
            "pop" => {
                let pop = Pop::fit(&dataset.train, dataset.n_items());
                ("pop".to_string(), evaluate(&pop, pairs, &cutoffs))
            }
            "itemknn" => {
                let knn = ItemKnn::fit(&dataset.train, dataset.n_items(), args.knn_k);
                ("itemknn".to_string(), evaluate(&knn, pairs, &cutoffs))
            }
            other => bail!("unknown baseline {other:?} (expected pop|itemknn)"),
        },
        (None, None) => bail!("provide --checkpoint or --baseline"),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    std::fs::create_dir_all(&args.out_dir)?;
    std::fs::write(
        args.out_dir.join("metrics.json"),
        serde_json::to_string_pretty(&report)? + "\n",
    )?;
    std::fs::write(args.out_dir.join("metrics.csv"), report.to_csv())?;
    let run_json = args
        .run_json
        .unwrap_or_else(|| args.out_dir.join("run.json"));
    write_run_json(
        &run_json,
        "evaluate",
        0,
        &serde_json::json!({
            "data": args.data,
            "scorer": label,
            "split": args.split,
            "cutoffs": cutoffs,
            "knn_k": args.knn_k,
            "checkpoint": args.checkpoint,
        }),
    )?;
    print!("{report}");
    Ok(())
}

fn cmd_ablate(args: AblateArgs) -> Result<()> {
    let resolved = resolve(&args.hyper)?;
    let cutoffs = parse_cutoffs(&args.cutoffs)?;
    let dataset = read_dataset(&args.data)?;
    if dataset.test.is_empty() {
        bail!("ablation needs a non-empty test split");
    }
    std::fs::create_dir_all(&args.out_dir)?;
    let run_json = args
        .run_json
        .unwrap_or_else(|| args.out_dir.join("run.json"));
    write_run_json(
        &run_json,
        "ablate",
        resolved.seed,
        &serde_json::json!({
            "data": args.data,
            "out_dir": args.out_dir,
            "cutoffs": cutoffs,
            "train": resolved.train,
        }),
    )?;
    let rows = run_ablation(&dataset, &resolved.train, &cutoffs)?;
    let csv = ablation_csv(&rows, &cutoffs);
    std::fs::write(args.out_dir.join("ablation.csv"), &csv)?;
    print!("{csv}");
    Ok(())
}

fn parse_session(dataset: &Dataset, raw: &str) -> Result<Vec<ItemIndex>> {
    let mut items = Vec::new();
    for tok in raw.split(',') {
        let tok = tok.trim();
        let idx = dataset
            .vocab
            .index_of(tok)
            .with_context(|| format!("item {tok:?} is not in the vocabulary"))?;
        items.push(idx);
    }
    if items.is_empty() {
        bail!("session is empty");
    }
    Ok(items)
}

fn cmd_recommend(args: RecommendArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let model = Model::load(&args.checkpoint)?;
    let prefix = parse_session(&dataset, &args.session)?;
    let scores = model.scores(&prefix);
    let mut order: Vec<usize> = (1..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap()
            .then_with(|| a.cmp(&b))
    });
    for &idx in order.iter().take(args.topk) {
        let raw = dataset
            .vocab
            .raw_of(idx as ItemIndex)
            .expect("index within vocabulary");
        println!("{}\t{:.6}", raw, scores[idx]);
    }
    let run_json = args.run_json.unwrap_or_else(|| PathBuf::from("run.json"));
    write_run_json(
        &run_json,
        "recommend",
        0,
        &serde_json::json!({
            "data": args.data,
            "checkpoint": args.checkpoint,
            "session": args.session,
            "topk": args.topk,
        }),
    )?;
    Ok(())
}

fn cmd_dump_attention(args: DumpAttentionArgs) -> Result<()> {
    let dataset = read_dataset(&args.data)?;
    let model = Model::load(&args.checkpoint)?;
    let prefix = parse_session(&dataset, &args.session)?;
    let report = model.dump_attention(&prefix, args.zero_instance, |idx| {
        dataset.vocab.raw_of(idx).unwrap_or("?").to_string()
    });
    print!("{report}");
    let run_json = args.run_json.unwrap_or_else(|| PathBuf::from("run.json"));
    write_run_json(
        &run_json,
        "dump-attention",
        0,
        &serde_json::json!({
            "data": args.data,
            "checkpoint": args.checkpoint,
            "session": args.session,
            "zero_instance": args.zero_instance,
        }),
    )?;
    Ok(())
}
