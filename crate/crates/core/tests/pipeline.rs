//! Library-level pipeline: synthetic log -> text format -> ingest -> filter ->
//! temporal split -> dataset -> train -> checkpoint -> evaluate, with the
//! conservation and reproducibility invariants along the way.

use std::collections::HashMap;

use rnmsr_core::baselines::Pop;
use rnmsr_core::data::store::{read_dataset, write_dataset};
use rnmsr_core::data::{
    filter_sessions, ingest_reader, preprocess, synth_generate, temporal_split, PreprocessOptions,
    SynthConfig,
};
use rnmsr_core::diff::OptimizerConfig;
use rnmsr_core::metrics::{evaluate, DEFAULT_CUTOFFS};
use rnmsr_core::model::{Ablation, Activation, Model, ModelConfig};
use rnmsr_core::session_graph::SimilaritySource;
use rnmsr_core::train::{train, TrainConfig};

fn synth_log(cfg: &SynthConfig) -> String {
    let mut log = String::from("# synthetic interaction log\n");
    for s in synth_generate(cfg).unwrap() {
        for (item, ts) in s.items.iter().zip(&s.timestamps) {
            log.push_str(&format!("{}\t{}\t{}\n", s.id, item, ts));
        }
    }
    log
}

#[test]
fn temporal_split_conserves_interactions() {
    let cfg = SynthConfig {
        n_sessions: 200,
        n_items: 30,
        min_len: 2,
        max_len: 7,
        repeat_rate: 0.4,
        seed: 21,
    };
    let log = synth_log(&cfg);
    let sessions = ingest_reader(log.as_bytes()).unwrap();
    let filtered = filter_sessions(sessions, 5);
    let count_interactions = |ss: &[rnmsr_core::RawSession]| -> HashMap<String, usize> {
        let mut m = HashMap::new();
        for s in ss {
            for item in &s.items {
                *m.entry(item.clone()).or_insert(0) += 1;
            }
        }
        m
    };
    let before = count_interactions(&filtered);
    let (train_raw, test_raw) = temporal_split(filtered, 3600 * 20).unwrap();
    let mut after = count_interactions(&train_raw);
    for (item, c) in count_interactions(&test_raw) {
        *after.entry(item).or_insert(0) += c;
    }
    assert_eq!(
        before, after,
        "interactions lost or duplicated by the split"
    );
    assert!(!test_raw.is_empty());
}

#[test]
fn end_to_end_training_beats_popularity_and_reloads_bit_exactly() {
    let cfg = SynthConfig {
        n_sessions: 250,
        n_items: 40,
        min_len: 3,
        max_len: 7,
        repeat_rate: 0.55,
        seed: 5,
    };
    let log = synth_log(&cfg);
    let sessions = ingest_reader(log.as_bytes()).unwrap();
    let dataset = preprocess(
        sessions,
        &PreprocessOptions {
            min_item_freq: 5,
            holdout_secs: 3600 * 12,
            valid_fraction: 0.1,
            seed: 5,
        },
    )
    .unwrap();
    assert!(!dataset.valid.is_empty());

    // Disk round trip is lossless.
    let dir = tempdir("pipeline-ds");
    write_dataset(&dir, &dataset).unwrap();
    let reloaded = read_dataset(&dir).unwrap();
    assert_eq!(reloaded.train, dataset.train);
    assert_eq!(reloaded.valid, dataset.valid);
    assert_eq!(reloaded.test, dataset.test);

    let train_cfg = TrainConfig {
        epochs: 6,
        batch_size: 50,
        seed: 5,
        patience: 0,
        optimizer: OptimizerConfig {
            decay_every: 0,
            ..OptimizerConfig::default()
        },
        model: ModelConfig {
            dim: 16,
            l_max: 6,
            l_pos: 10,
            eta: 0.0,
            gnn_iters: 1,
            mlp_depth: 2,
            mlp_activation: Activation::Relu,
            dropout: 0.0,
            sim_source: SimilaritySource::Current,
            ablation: Ablation::default(),
        },
    };
    let out = train(&dataset, &train_cfg).unwrap();

    // On a repeat-heavy corpus the model must beat raw popularity.
    let model_report = evaluate(&out.model, &dataset.valid, &DEFAULT_CUTOFFS);
    let pop = Pop::fit(&dataset.train, dataset.n_items());
    let pop_report = evaluate(&pop, &dataset.valid, &DEFAULT_CUTOFFS);
    assert!(
        model_report.mrr(20) > pop_report.mrr(20),
        "model MRR@20 {:.4} <= POP {:.4}",
        model_report.mrr(20),
        pop_report.mrr(20)
    );

    // Two loads of one checkpoint evaluate bit-exactly.
    let ckpt = dir.join("model.ckpt");
    out.model.save(&ckpt).unwrap();
    let a = Model::load(&ckpt).unwrap();
    let b = Model::load(&ckpt).unwrap();
    let report_a = evaluate(&a, &dataset.valid, &DEFAULT_CUTOFFS);
    let report_b = evaluate(&b, &dataset.valid, &DEFAULT_CUTOFFS);
    assert_eq!(report_a, report_b);
    assert_eq!(report_a, evaluate(&a, &dataset.valid, &DEFAULT_CUTOFFS));

    std::fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn training_is_reproducible_across_runs() {
    let corpus = rnmsr_core::data::generate_mode_separable(120, 40, 3);
    let cfg = TrainConfig {
        epochs: 2,
        batch_size: 40,
        seed: 9,
        patience: 0,
        optimizer: OptimizerConfig::default(),
        model: ModelConfig {
            dim: 8,
            l_max: 5,
            l_pos: 8,
            eta: 0.0,
            gnn_iters: 1,
            mlp_depth: 1,
            mlp_activation: Activation::Tanh,
            dropout: 0.25,
            sim_source: SimilaritySource::Current,
            ablation: Ablation::default(),
        },
    };
    let a = train(&corpus.dataset, &cfg).unwrap();
    let b = train(&corpus.dataset, &cfg).unwrap();
    for (sa, sb) in a.log.iter().zip(&b.log) {
        assert_eq!(sa.train_loss, sb.train_loss);
        assert_eq!(sa.valid_mrr20, sb.valid_mrr20);
    }
    let ra = evaluate(&a.model, &corpus.dataset.test, &DEFAULT_CUTOFFS);
    let rb = evaluate(&b.model, &corpus.dataset.test, &DEFAULT_CUTOFFS);
    assert_eq!(ra, rb);
}

fn tempdir(tag: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("rnmsr-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
