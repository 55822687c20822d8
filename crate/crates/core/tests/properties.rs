//! Property tests for the structural invariants: relabeling invariance,
//! restricted growth, filter fixed points, split counting, and the model's
//! distribution contracts.

use proptest::prelude::*;

use rnmsr_core::data::{filter_sessions, sequence_split, RawSession};
use rnmsr_core::gbp::{compute_stats, extract_gbp};
use rnmsr_core::model::{Ablation, Activation, Model, ModelConfig};
use rnmsr_core::session_graph::SimilaritySource;

fn arb_session(max_items: u32, max_len: usize) -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(1..=max_items, 1..=max_len)
}

proptest! {
    /// Any bijection over item ids leaves the extracted pattern unchanged.
    #[test]
    fn extract_gbp_is_relabeling_invariant(
        session in arb_session(12, 12),
        shift in 1u32..1000,
        l_max in 1usize..=8,
    ) {
        // (i * 7919 + shift) over a prime modulus > max item is injective on
        // the small id range used here.
        let relabel = |i: u32| (i * 7919 + shift) % 100_003 + 1;
        let relabeled: Vec<u32> = session.iter().map(|&i| relabel(i)).collect();
        prop_assert_eq!(extract_gbp(&session, l_max), extract_gbp(&relabeled, l_max));
    }

    #[test]
    fn extract_gbp_output_is_restricted_growth(
        session in arb_session(10, 14),
        l_max in 1usize..=8,
    ) {
        let p = extract_gbp(&session, l_max);
        prop_assert!(p.is_restricted_growth());
        prop_assert!(p.len() <= l_max);
        prop_assert_eq!(p.len(), session.len().min(l_max));
    }

    /// Equal item-equality structure over the suffix means equal patterns.
    #[test]
    fn equal_structure_gives_equal_patterns(session in arb_session(6, 10)) {
        let doubled: Vec<u32> = session.iter().map(|&i| i * 2 + 40).collect();
        prop_assert_eq!(extract_gbp(&session, 6), extract_gbp(&doubled, 6));
    }

    #[test]
    fn sequence_split_yields_n_minus_one_pairs(session in arb_session(20, 15)) {
        prop_assume!(session.len() >= 2);
        let pairs = sequence_split(&session);
        prop_assert_eq!(pairs.len(), session.len() - 1);
        for (k, pair) in pairs.iter().enumerate() {
            prop_assert_eq!(&pair.prefix[..], &session[..k + 1]);
            prop_assert_eq!(pair.target, session[k + 1]);
        }
    }

    #[test]
    fn stats_conserve_counts(
        sessions in prop::collection::vec(arb_session(8, 8), 1..40),
    ) {
        let pairs: Vec<(&[u32], u32)> = sessions
            .iter()
            .filter(|s| s.len() >= 2)
            .map(|s| (&s[..s.len() - 1], s[s.len() - 1]))
            .collect();
        let stats = compute_stats(pairs.iter().map(|(p, t)| (*p, *t)), 6);
        for stat in stats.per_pattern.values() {
            prop_assert_eq!(stat.repeat + stat.explore, stat.total);
            prop_assert_eq!(stat.per_key.iter().sum::<u64>(), stat.repeat);
        }
    }
}

fn arb_raw_sessions() -> impl Strategy<Value = Vec<RawSession>> {
    prop::collection::vec(
        prop::collection::vec(0u8..6, 1..6).prop_map(|items| items),
        1..25,
    )
    .prop_map(|sessions| {
        sessions
            .into_iter()
            .enumerate()
            .map(|(s, items)| RawSession {
                id: format!("s{s}"),
                items: items.iter().map(|i| format!("i{i}")).collect(),
                timestamps: (0..items.len()).map(|k| (s * 100 + k) as i64).collect(),
            })
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_idempotent_and_satisfies_postconditions(sessions in arb_raw_sessions()) {
        let once = filter_sessions(sessions, 5);
        // Postconditions: every session has length >= 2, every surviving item
        // occurs at least 5 times.
        let mut counts = std::collections::HashMap::new();
        for s in &once {
            prop_assert!(s.len() >= 2);
            for item in &s.items {
                *counts.entry(item.clone()).or_insert(0u64) += 1;
            }
        }
        for (item, count) in &counts {
            prop_assert!(*count >= 5, "{item} occurs {count} times");
        }
        let twice = filter_sessions(once.clone(), 5);
        prop_assert_eq!(once, twice);
    }
}

fn small_model() -> Model {
    Model::new(
        ModelConfig {
            dim: 5,
            l_max: 5,
            l_pos: 8,
            eta: 0.0,
            gnn_iters: 1,
            mlp_depth: 2,
            mlp_activation: Activation::Relu,
            dropout: 0.0,
            sim_source: SimilaritySource::Current,
            ablation: Ablation::default(),
        },
        15,
        7,
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Normalization and support contracts of the combined distribution.
    #[test]
    fn forward_distribution_contracts(prefix in prop::collection::vec(1u32..=15, 1..9)) {
        let model = small_model();
        let trace = model.forward(&prefix);

        prop_assert_eq!(trace.p_repeat + trace.p_explore, 1.0);
        let total: f64 = trace.combined.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-6, "combined sums to {total}");

        let suffix = &prefix[trace.suffix_start..];
        for &item in &prefix {
            prop_assert_eq!(trace.explore[item as usize], 0.0);
            if !suffix.contains(&item) {
                prop_assert_eq!(trace.combined[item as usize], 0.0);
            }
        }
        // Repeat mass never lands outside the suffix window.
        for (item, p) in &trace.repeat_dist {
            prop_assert!(suffix.contains(item));
            prop_assert!(*p >= 0.0);
        }
    }

    /// Repeat probability of an item equals the sum of its positions' masses.
    #[test]
    fn duplicate_aggregation_matches_position_recomputation(
        prefix in prop::collection::vec(1u32..=6, 1..8),
    ) {
        let model = small_model();
        let trace = model.forward(&prefix);
        let suffix = &prefix[trace.suffix_start..];
        for (g, (item, p)) in trace.repeat_dist.iter().enumerate() {
            let manual: f64 = trace.repeat_groups[g]
                .iter()
                .map(|&j| {
                    assert_eq!(suffix[j], *item);
                    trace.repeat_attention[j]
                })
                .sum();
            prop_assert!((p - manual).abs() < 1e-12);
        }
    }
}
