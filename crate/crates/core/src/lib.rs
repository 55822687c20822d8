//! Repeat-aware session-based recommendation.
//!
//! A session (an anonymous, time-ordered click sequence) is modeled on two
//! levels. Instance level: items become nodes of a per-session graph whose
//! directed edges require both temporal precedence and cosine similarity
//! above a threshold, encoded by mean-pooling propagation with a residual.
//! Group level: the session is relabeled into an item-independent key
//! sequence (its behavior pattern), embedded via a pattern table. A
//! discriminate head mixes both levels into repeat/explore mode weights; a
//! repeat head scores in-session items through pattern-conditioned reversed
//! positions; an explore head scores unseen items from an attention-pooled
//! session vector. The final distribution is the probability-weighted union
//! of the two supports.
//!
//! The crate also ships the preprocessing pipeline (filtering, temporal and
//! sequence splits), pattern statistics, ranking metrics, POP and Item-KNN
//! baselines, the training loop, and the ablation grid.

pub mod ablation;
pub mod baselines;
pub mod data;
pub mod diff;
pub mod gbp;
pub mod metrics;
pub mod model;
pub mod session_graph;
pub mod train;

pub use data::{Dataset, Example, Interaction, ItemIndex, ItemVocab, RawSession};
pub use gbp::{extract_gbp, Pattern, PatternVocab};
pub use metrics::{evaluate, EvalReport, Scorer};
pub use model::{Ablation, Model, ModelConfig, Trace};
pub use train::{train, TrainConfig, TrainOutput};
