//! Hyperparameter resolution: defaults <- config file <- command-line flags,
//! plus the `run.json` record that makes a run reproducible.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use rnmsr_core::diff::OptimizerConfig;
use rnmsr_core::model::{Ablation, Activation, ModelConfig};
use rnmsr_core::session_graph::SimilaritySource;
use rnmsr_core::train::TrainConfig;

/// Flags shared by every model-facing subcommand. Unset flags fall back to
/// the config file, then to the defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct HyperArgs {
    /// Key=value config file; flags win on conflict
    #[arg(long, global = false)]
    pub config: Option<PathBuf>,

    /// Latent dimension [default: 100]
    #[arg(long)]
    pub dim: Option<usize>,
    /// Pattern window length [default: 6]
    #[arg(long)]
    pub l_max: Option<usize>,
    /// Reversed-position table rows [default: 50]
    #[arg(long)]
    pub l_pos: Option<usize>,
    /// Similarity threshold for graph edges [default: 0]
    #[arg(long)]
    pub eta: Option<f64>,
    /// Graph propagation iterations [default: 1]
    #[arg(long)]
    pub gnn_iters: Option<usize>,
    /// Discriminate MLP depth [default: 2]
    #[arg(long)]
    pub mlp_depth: Option<usize>,
    /// Discriminate MLP activation: relu|tanh|sigmoid [default: relu]
    #[arg(long)]
    pub mlp_activation: Option<String>,
    /// Dropout after the item embedding [default: 0.25]
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Similarity gate source: current|input [default: current]
    #[arg(long)]
    pub sim_source: Option<String>,

    /// Training epochs [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Mini-batch size [default: 100]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Initial learning rate [default: 0.001]
    #[arg(long)]
    pub lr: Option<f64>,
    /// Learning-rate decay factor [default: 0.1]
    #[arg(long)]
    pub lr_decay_factor: Option<f64>,
    /// Epochs between decays, 0 disables [default: 3]
    #[arg(long)]
    pub lr_decay_every: Option<usize>,
    /// L2 penalty [default: 1e-5]
    #[arg(long)]
    pub l2: Option<f64>,
    /// Early-stop patience on validation MRR@20, 0 disables [default: 3]
    #[arg(long)]
    pub patience: Option<usize>,
    /// Random seed [default: env RNMSR_SEED, else 42]
    #[arg(long)]
    pub seed: Option<u64>,

    /// Use raw item embeddings (skip the graph encoder)
    #[arg(long)]
    pub no_iirl: bool,
    /// Use the consecutive-adjacency session graph
    #[arg(long)]
    pub seq_graph: bool,
    /// Remove the pattern input of the repeat head
    #[arg(long)]
    pub no_gbp_r: bool,
    /// Remove the pattern input of the discriminate head
    #[arg(long)]
    pub no_gbp_d: bool,
    /// Remove the pattern input everywhere
    #[arg(long)]
    pub no_gbp: bool,
}

/// Parsed `key = value` file. Lines starting with `#` are comments.
#[derive(Debug, Default, Clone)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

const KNOWN_KEYS: &[&str] = &[
    "dim",
    "l_max",
    "l_pos",
    "eta",
    "gnn_iters",
    "mlp_depth",
    "mlp_activation",
    "dropout",
    "sim_source",
    "epochs",
    "batch_size",
    "lr",
    "lr_decay_factor",
    "lr_decay_every",
    "l2",
    "patience",
    "seed",
    "no_iirl",
    "seq_graph",
    "no_gbp_r",
    "no_gbp_d",
    "no_gbp",
];

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        let mut values = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("{}:{}: expected key = value", path.display(), ln + 1))?;
            let key = key.trim().to_string();
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{}:{}: unknown config key {key:?}", path.display(), ln + 1);
            }
            values.insert(key, value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw
                .parse::<T>()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("config key {key} = {raw:?}: {e}")),
        }
    }

    fn get_bool(&self, key: &str) -> Result<bool> {
        match self.values.get(key).map(|s| s.as_str()) {
            None => Ok(false),
            Some("true") | Some("1") | Some("yes") => Ok(true),
            Some("false") | Some("0") | Some("no") => Ok(false),
            Some(other) => bail!("config key {key} = {other:?}: expected a boolean"),
        }
    }
}

fn parse_activation(s: &str) -> Result<Activation> {
    s.parse::<Activation>().map_err(|e| anyhow::anyhow!(e))
}

fn parse_sim_source(s: &str) -> Result<SimilaritySource> {
    match s {
        "current" => Ok(SimilaritySource::Current),
        "input" => Ok(SimilaritySource::Input),
        other => bail!("unknown sim_source {other:?} (expected current|input)"),
    }
}

/// Fully resolved knobs for one run.
#[derive(Debug, Clone, Serialize)]
pub struct Resolved {
    pub seed: u64,
    pub train: TrainConfig,
}

pub fn resolve(args: &HyperArgs) -> Result<Resolved> {
    let file = match &args.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let seed = match args.seed.or(file.get("seed")?) {
        Some(s) => s,
        None => match std::env::var("RNMSR_SEED") {
            Ok(raw) => raw
                .parse::<u64>()
                .with_context(|| format!("RNMSR_SEED = {raw:?} is not a valid seed"))?,
            Err(_) => 42,
        },
    };

    let mlp_activation = match &args.mlp_activation {
        Some(s) => parse_activation(s)?,
        None => match file.get::<String>("mlp_activation")? {
            Some(s) => parse_activation(&s)?,
            None => Activation::Relu,
        },
    };
    let sim_source = match &args.sim_source {
        Some(s) => parse_sim_source(s)?,
        None => match file.get::<String>("sim_source")? {
            Some(s) => parse_sim_source(&s)?,
            None => SimilaritySource::Current,
        },
    };

    let mut ablation = Ablation {
        no_iirl: args.no_iirl || file.get_bool("no_iirl")?,
        seq_graph: args.seq_graph || file.get_bool("seq_graph")?,
        no_gbp_r: args.no_gbp_r || file.get_bool("no_gbp_r")?,
        no_gbp_d: args.no_gbp_d || file.get_bool("no_gbp_d")?,
    };
    if args.no_gbp || file.get_bool("no_gbp")? {
        ablation = ablation.without_gbp();
    }

    let model = ModelConfig {
        dim: args.dim.or(file.get("dim")?).unwrap_or(100),
        l_max: args.l_max.or(file.get("l_max")?).unwrap_or(6),
        l_pos: args.l_pos.or(file.get("l_pos")?).unwrap_or(50),
        eta: args.eta.or(file.get("eta")?).unwrap_or(0.0),
        gnn_iters: args.gnn_iters.or(file.get("gnn_iters")?).unwrap_or(1),
        mlp_depth: args.mlp_depth.or(file.get("mlp_depth")?).unwrap_or(2),
        mlp_activation,
        dropout: args.dropout.or(file.get("dropout")?).unwrap_or(0.25),
        sim_source,
        ablation,
    };
    model.validate().map_err(|e| anyhow::anyhow!(e))?;

    let optimizer = OptimizerConfig {
        learning_rate: args.lr.or(file.get("lr")?).unwrap_or(1e-3),
        decay_factor: args
            .lr_decay_factor
            .or(file.get("lr_decay_factor")?)
            .unwrap_or(0.1),
        decay_every: args
            .lr_decay_every
            .or(file.get("lr_decay_every")?)
            .unwrap_or(3),
        l2: args.l2.or(file.get("l2")?).unwrap_or(1e-5),
        ..OptimizerConfig::default()
    };

    Ok(Resolved {
        seed,
        train: TrainConfig {
            epochs: args.epochs.or(file.get("epochs")?).unwrap_or(30),
            batch_size: args.batch_size.or(file.get("batch_size")?).unwrap_or(100),
            seed,
            patience: args.patience.or(file.get("patience")?).unwrap_or(3),
            optimizer,
            model,
        },
    })
}

/// Record of a run: the subcommand, the resolved seed, and every resolved
/// value the run depended on.
pub fn write_run_json<T: Serialize>(
    path: &Path,
    command: &str,
    seed: u64,
    detail: &T,
) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let record = serde_json::json!({
        "command": command,
        "seed": seed,
        "config": detail,
    });
    std::fs::write(path, serde_json::to_string_pretty(&record)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_settings() {
        let resolved = resolve(&HyperArgs::default()).unwrap();
        let t = &resolved.train;
        assert_eq!(t.model.dim, 100);
        assert_eq!(t.batch_size, 100);
        assert_eq!(t.optimizer.learning_rate, 1e-3);
        assert_eq!(t.optimizer.decay_factor, 0.1);
        assert_eq!(t.optimizer.decay_every, 3);
        assert_eq!(t.optimizer.l2, 1e-5);
        assert_eq!(t.model.dropout, 0.25);
        assert_eq!(t.model.l_max, 6);
        assert_eq!(t.model.l_pos, 50);
    }

    #[test]
    fn flags_override_config_file() {
        let dir = std::env::temp_dir().join(format!("rnmsr-cfg-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "dim = 64\nepochs = 5\n# comment\nno_gbp = true\n").unwrap();
        let args = HyperArgs {
            config: Some(path),
            dim: Some(32),
            ..HyperArgs::default()
        };
        let resolved = resolve(&args).unwrap();
        assert_eq!(resolved.train.model.dim, 32);
        assert_eq!(resolved.train.epochs, 5);
        assert!(resolved.train.model.ablation.no_gbp_r);
        assert!(resolved.train.model.ablation.no_gbp_d);
        std::fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let dir = std::env::temp_dir().join(format!("rnmsr-cfg-bad-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(&path, "learning_rate = 0.1\n").unwrap();
        let args = HyperArgs {
            config: Some(path),
            ..HyperArgs::default()
        };
        let err = resolve(&args).unwrap_err();
        assert!(err.to_string().contains("unknown config key"));
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
