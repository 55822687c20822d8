//! The six-variant ablation grid: full model, no instance-level encoding,
//! sequential graph, and the three pattern removals.

use serde::Serialize;

use crate::data::Dataset;
use crate::metrics::{evaluate, EvalReport};
use crate::model::ModelConfig;
use crate::train::{train, TrainConfig, TrainError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    NoIirl,
    SeqGraph,
    NoGbpRepeat,
    NoGbpDiscriminate,
    NoGbp,
    Full,
}

impl Variant {
    pub fn all() -> [Variant; 6] {
        [
            Variant::NoIirl,
            Variant::SeqGraph,
            Variant::NoGbpRepeat,
            Variant::NoGbpDiscriminate,
            Variant::NoGbp,
            Variant::Full,
        ]
    }

    pub fn label(&self) -> &'static str {
        match self {
            Variant::NoIirl => "w/o IIRL",
            Variant::SeqGraph => "w/o SSG",
            Variant::NoGbpRepeat => "w/o GBP-r",
            Variant::NoGbpDiscriminate => "w/o GBP-d",
            Variant::NoGbp => "w/o GBP",
            Variant::Full => "full",
        }
    }

    pub fn apply(&self, mut config: ModelConfig) -> ModelConfig {
        match self {
            Variant::NoIirl => config.ablation.no_iirl = true,
            Variant::SeqGraph => config.ablation.seq_graph = true,
            Variant::NoGbpRepeat => config.ablation.no_gbp_r = true,
            Variant::NoGbpDiscriminate => config.ablation.no_gbp_d = true,
            Variant::NoGbp => config.ablation = config.ablation.without_gbp(),
            Variant::Full => {}
        }
        config
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub report: EvalReport,
}

/// Train and evaluate every variant with the same seed and data split.
pub fn run_ablation(
    dataset: &Dataset,
    base: &TrainConfig,
    cutoffs: &[usize],
) -> Result<Vec<AblationRow>, TrainError> {
    let mut rows = Vec::with_capacity(6);
    for variant in Variant::all() {
        let mut cfg = base.clone();
        cfg.model = variant.apply(cfg.model);
        let out = train(dataset, &cfg)?;
        let report = evaluate(&out.model, &dataset.test, cutoffs);
        rows.push(AblationRow {
            variant: variant.label().to_string(),
            report,
        });
    }
    Ok(rows)
}

/// One row per variant with P/MRR/NDCG at each cutoff.
pub fn ablation_csv(rows: &[AblationRow], cutoffs: &[usize]) -> String {
    let mut out = String::from("variant");
    for &n in cutoffs {
        out.push_str(&format!(",p@{n},mrr@{n},ndcg@{n}"));
    }
    out.push('\n');
    for row in rows {
        out.push_str(&row.variant);
        for &n in cutoffs {
            let r = row.report.row(n).expect("cutoff present");
            out.push_str(&format!(",{:.6},{:.6},{:.6}", r.precision, r.mrr, r.ndcg));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn six_variants_in_fixed_order() {
        let labels: Vec<&str> = Variant::all().iter().map(|v| v.label()).collect();
        assert_eq!(
            labels,
            vec![
                "w/o IIRL",
                "w/o SSG",
                "w/o GBP-r",
                "w/o GBP-d",
                "w/o GBP",
                "full"
            ]
        );
    }

    #[test]
    fn no_gbp_sets_both_flags() {
        let cfg = Variant::NoGbp.apply(ModelConfig::default());
        assert!(cfg.ablation.no_gbp_r);
        assert!(cfg.ablation.no_gbp_d);
        assert!(!cfg.ablation.no_iirl);
    }
}
