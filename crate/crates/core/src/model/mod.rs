//! The full prediction head: pattern embedding, mode discrimination, repeat
//! scoring over the session suffix, explore scoring over unseen items, and
//! the probabilistic combination into one distribution over the vocabulary.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::ItemIndex;
use crate::diff::params::{init_gaussian, ParamId, ParamStore};
use crate::diff::tape::{Tape, Var};
use crate::diff::{read_checkpoint_file, write_checkpoint_file, CheckpointError};
use crate::gbp::{extract_gbp, gbp_suffix, Pattern, PatternVocab};
use crate::session_graph::{encode, EncodeOptions, EncoderWeights, SimilaritySource};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply(&self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Relu => tape.relu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Sigmoid => tape.sigmoid(x),
        }
    }
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

/// Component switches for the ablation grid.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    /// Use raw item embeddings instead of the graph encoder.
    pub no_iirl: bool,
    /// Consecutive-adjacency session graph instead of the similarity graph.
    pub seq_graph: bool,
    /// Zero the pattern embedding feeding the repeat head.
    pub no_gbp_r: bool,
    /// Zero the pattern embedding feeding the discriminate head.
    pub no_gbp_d: bool,
}

impl Ablation {
    pub fn without_gbp(mut self) -> Self {
        self.no_gbp_r = true;
        self.no_gbp_d = true;
        self
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Latent dimension.
    pub dim: usize,
    /// Pattern window length; sessions longer than this use their suffix.
    pub l_max: usize,
    /// Rows in the reversed-position table; longer sessions clamp to the last
    /// row.
    pub l_pos: usize,
    /// Similarity threshold for graph edges.
    pub eta: f64,
    /// Graph propagation iterations.
    pub gnn_iters: usize,
    pub mlp_depth: usize,
    pub mlp_activation: Activation,
    /// Dropout rate applied to item embeddings in training mode.
    pub dropout: f64,
    pub sim_source: SimilaritySource,
    pub ablation: Ablation,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            dim: 100,
            l_max: 6,
            l_pos: 50,
            eta: 0.0,
            gnn_iters: 1,
            mlp_depth: 2,
            mlp_activation: Activation::Relu,
            dropout: 0.25,
            sim_source: SimilaritySource::Current,
            ablation: Ablation::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 {
            return Err("dim must be positive".into());
        }
        if !(1..=8).contains(&self.l_max) {
            return Err("l_max must be in 1..=8".into());
        }
        if self.l_pos < self.l_max {
            return Err(format!(
                "l_pos ({}) must be at least l_max ({})",
                self.l_pos, self.l_max
            ));
        }
        if self.gnn_iters == 0 || self.gnn_iters > 4 {
            return Err("gnn_iters must be in 1..=4".into());
        }
        if self.mlp_depth == 0 {
            return Err("mlp_depth must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err("dropout must be in [0, 1)".into());
        }
        Ok(())
    }
}

/// Handles to every trainable tensor.
#[derive(Clone, Debug)]
struct ParamIds {
    item_emb: ParamId,
    pattern_emb: ParamId,
    pos_emb: ParamId,
    graph: EncoderWeights,
    dis_w: ParamId,
    dis_b: ParamId,
    dis_q: ParamId,
    mlp: Vec<(ParamId, ParamId)>,
    dis_proj: ParamId,
    rep_w_m: ParamId,
    rep_b_m: ParamId,
    rep_w: ParamId,
    rep_u: ParamId,
    rep_q: ParamId,
    rep_b: ParamId,
    exp_w: ParamId,
    exp_u: ParamId,
    exp_q: ParamId,
    exp_b: ParamId,
    exp_w_t: ParamId,
    exp_b_t: ParamId,
}

pub struct Model {
    pub config: ModelConfig,
    pub n_items: usize,
    pub patterns: PatternVocab,
    pub store: ParamStore,
    ids: ParamIds,
    /// Global optimizer step, persisted in checkpoints.
    pub step: u64,
}

const INIT_STD: f64 = 0.1;

impl Model {
    pub fn new(config: ModelConfig, n_items: usize, seed: u64) -> Model {
        config.validate().expect("invalid model config");
        assert!(n_items >= 1, "model needs at least one item");
        let patterns = PatternVocab::full(config.l_max);
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.dim;
        let mut gauss = |store: &mut ParamStore, name: &str, r: usize, c: usize| {
            init_gaussian(store, name, r, c, 0.0, INIT_STD, &mut rng)
        };

        let item_emb = gauss(&mut store, "item_emb", n_items + 1, d);
        let pattern_emb = gauss(&mut store, "pattern_emb", patterns.table_rows(), d);
        let pos_emb = gauss(&mut store, "pos_emb", config.l_pos, d);
        let graph = EncoderWeights {
            w_self: gauss(&mut store, "graph.w_self", d, d),
            w_neighbors: gauss(&mut store, "graph.w_neighbors", d, 2 * d),
            bias: gauss(&mut store, "graph.bias", 1, d),
        };
        let dis_w = gauss(&mut store, "dis.w", d, d);
        let dis_b = gauss(&mut store, "dis.b", 1, d);
        let dis_q = gauss(&mut store, "dis.q", 1, d);
        let mut mlp = Vec::with_capacity(config.mlp_depth);
        for layer in 0..config.mlp_depth {
            let in_dim = if layer == 0 { 2 * d } else { d };
            let w = gauss(&mut store, &format!("dis.mlp.{layer}.w"), d, in_dim);
            let b = gauss(&mut store, &format!("dis.mlp.{layer}.b"), 1, d);
            mlp.push((w, b));
        }
        let dis_proj = gauss(&mut store, "dis.proj", 2, d);
        let rep_w_m = gauss(&mut store, "rep.w_m", d, 2 * d);
        let rep_b_m = gauss(&mut store, "rep.b_m", 1, d);
        let rep_w = gauss(&mut store, "rep.w", d, d);
        let rep_u = gauss(&mut store, "rep.u", d, d);
        let rep_q = gauss(&mut store, "rep.q", 1, d);
        let rep_b = gauss(&mut store, "rep.b", 1, d);
        let exp_w = gauss(&mut store, "exp.w", d, d);
        let exp_u = gauss(&mut store, "exp.u", d, d);
        let exp_q = gauss(&mut store, "exp.q", 1, d);
        let exp_b = gauss(&mut store, "exp.b", 1, d);
        let exp_w_t = gauss(&mut store, "exp.w_t", d, d);
        let exp_b_t = gauss(&mut store, "exp.b_t", 1, d);

        Model {
            config,
            n_items,
            patterns,
            store,
            ids: ParamIds {
                item_emb,
                pattern_emb,
                pos_emb,
                graph,
                dis_w,
                dis_b,
                dis_q,
                mlp,
                dis_proj,
                rep_w_m,
                rep_b_m,
                rep_w,
                rep_u,
                rep_q,
                rep_b,
                exp_w,
                exp_u,
                exp_q,
                exp_b,
                exp_w_t,
                exp_b_t,
            },
            step: 0,
        }
    }

    /// Eval-mode forward pass.
    pub fn forward(&self, prefix: &[ItemIndex]) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_inner(prefix, false, &mut rng, false)
    }

    /// Training-mode forward pass (dropout active).
    pub fn forward_train(&self, prefix: &[ItemIndex], rng: &mut ChaCha8Rng) -> Trace {
        self.forward_inner(prefix, true, rng, false)
    }

    /// Forward with instance features zeroed (session summary and repeat-head
    /// item inputs), isolating what the pattern pathway alone produces.
    pub fn forward_zero_instance(&self, prefix: &[ItemIndex]) -> Trace {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        self.forward_inner(prefix, false, &mut rng, true)
    }

    fn forward_inner(
        &self,
        prefix: &[ItemIndex],
        training: bool,
        rng: &mut ChaCha8Rng,
        zero_instance: bool,
    ) -> Trace {
        assert!(!prefix.is_empty(), "forward on an empty prefix");
        for &item in prefix {
            assert!(
                item >= 1 && item as usize <= self.n_items,
                "item {item} outside vocabulary 1..={}",
                self.n_items
            );
        }
        let cfg = &self.config;
        let d = cfg.dim;
        let n = prefix.len();
        let mut tape = Tape::new();

        // Instance-level representations, one row per position.
        let encode_opts = EncodeOptions {
            eta: cfg.eta,
            iterations: cfg.gnn_iters,
            no_iirl: cfg.ablation.no_iirl,
            sequential: cfg.ablation.seq_graph,
            sim_source: cfg.sim_source,
            dropout: cfg.dropout,
            training,
        };
        let h = encode(
            &mut tape,
            &self.store,
            self.ids.item_emb,
            &self.ids.graph,
            prefix,
            &encode_opts,
            rng,
        );

        // Group-level pattern embedding.
        let pattern = extract_gbp(prefix, cfg.l_max);
        let pattern_index = self.patterns.index_of(&pattern);
        let u = tape.gather_rows(&self.store, self.ids.pattern_emb, vec![pattern_index]);

        // Discriminate head: attention-pooled session summary concatenated
        // with the pattern embedding, through the MLP to two mode logits.
        let beta = {
            let w = tape.param(&self.store, self.ids.dis_w);
            let b = tape.param(&self.store, self.ids.dis_b);
            let q = tape.param(&self.store, self.ids.dis_q);
            let pre = tape.linear(h, w, b);
            let act = tape.tanh(pre);
            let logits = tape.matmul_transposed(act, q); // n x 1
            tape.softmax(logits, None)
        };
        let s_d = if zero_instance {
            tape.zeros(1, d)
        } else {
            let beta_row = tape.transpose(beta);
            tape.matmul(beta_row, h) // 1 x d
        };
        let u_d = if cfg.ablation.no_gbp_d {
            tape.zeros(1, d)
        } else {
            u
        };
        let mut z = tape.concat_cols(u_d, s_d); // 1 x 2d
        for &(w, b) in &self.ids.mlp {
            let wv = tape.param(&self.store, w);
            let bv = tape.param(&self.store, b);
            let lin = tape.linear(z, wv, bv);
            z = cfg.mlp_activation.apply(&mut tape, lin);
        }
        let modes = {
            let proj = tape.param(&self.store, self.ids.dis_proj);
            let logits = tape.matmul_transposed(z, proj); // 1 x 2
            tape.softmax(logits, None)
        };
        let p_repeat = tape.pick(modes, 0);
        let p_explore = tape.pick(modes, 1);

        // Repeat head over the pattern window: impact vectors from reversed
        // positions and the pattern, attention over suffix positions, then
        // per-item aggregation of duplicate positions.
        let suffix = gbp_suffix(prefix, cfg.l_max);
        let suffix_start = n - suffix.len();
        let l = suffix.len();
        let u_r = if cfg.ablation.no_gbp_r {
            tape.zeros(1, d)
        } else {
            u
        };
        let (repeat_items, repeat_groups) = suffix_groups(suffix);
        let repeat_probs = {
            let rev_rows: Vec<usize> = (0..l).map(|j| ((l - j).min(cfg.l_pos)) - 1).collect();
            let p_rows = tape.gather_rows(&self.store, self.ids.pos_emb, rev_rows);
            let u_rep = tape.repeat_row(u_r, l);
            let pu = tape.concat_cols(p_rows, u_rep); // l x 2d
            let w_m = tape.param(&self.store, self.ids.rep_w_m);
            let b_m = tape.param(&self.store, self.ids.rep_b_m);
            let lin = tape.linear(pu, w_m, b_m);
            let impact = tape.tanh(lin); // l x d, row j = impact at position j

            let h_suffix = if zero_instance {
                tape.zeros(l, d)
            } else {
                tape.select_rows(h, (suffix_start..n).collect())
            };
            let w_r = tape.param(&self.store, self.ids.rep_w);
            let u_rw = tape.param(&self.store, self.ids.rep_u);
            let b_r = tape.param(&self.store, self.ids.rep_b);
            let q_r = tape.param(&self.store, self.ids.rep_q);
            let hw = tape.matmul_transposed(h_suffix, w_r);
            let mw = tape.matmul_transposed(impact, u_rw);
            let pre = tape.add(hw, mw);
            let pre = tape.add_row(pre, b_r);
            let act = tape.tanh(pre);
            let logits = tape.matmul_transposed(act, q_r); // l x 1
            tape.softmax(logits, None)
        };
        let repeat_item_probs = tape.sum_groups(repeat_probs, repeat_groups.clone());

        // Explore head over the whole prefix: position-aware attention pools
        // a session vector; scores are inner products with item embeddings,
        // with every in-session item (and padding) masked out.
        let alpha = {
            let rev_rows: Vec<usize> = (0..n).map(|i| ((n - i).min(cfg.l_pos)) - 1).collect();
            let p_rows = tape.gather_rows(&self.store, self.ids.pos_emb, rev_rows);
            let w_e = tape.param(&self.store, self.ids.exp_w);
            let u_e = tape.param(&self.store, self.ids.exp_u);
            let b_e = tape.param(&self.store, self.ids.exp_b);
            let q_e = tape.param(&self.store, self.ids.exp_q);
            let hw = tape.matmul_transposed(h, w_e);
            let pw = tape.matmul_transposed(p_rows, u_e);
            let pre = tape.add(hw, pw);
            let pre = tape.add_row(pre, b_e);
            let act = tape.tanh(pre);
            let logits = tape.matmul_transposed(act, q_e); // n x 1
            tape.softmax(logits, None)
        };
        let (explore_probs, explore_summary_var) = {
            let alpha_row = tape.transpose(alpha);
            let s_e = tape.matmul(alpha_row, h); // 1 x d
            let w_t = tape.param(&self.store, self.ids.exp_w_t);
            let b_t = tape.param(&self.store, self.ids.exp_b_t);
            let lin = tape.linear(s_e, w_t, b_t);
            let gated = tape.tanh(lin);
            let s_e_final = tape.add(gated, s_e);
            let scores = tape.matmul_param_t(s_e_final, &self.store, self.ids.item_emb);
            let mut mask = vec![false; self.n_items + 1];
            mask[0] = true;
            for &item in prefix {
                mask[item as usize] = true;
            }
            (tape.softmax(scores, Some(mask)), s_e_final)
        };

        // Combine: repeat mass lands on suffix items, explore mass on unseen
        // items; everything else is exactly zero.
        let combined = {
            let rep_scaled = tape.mul_scalar(repeat_item_probs, p_repeat);
            let scattered = tape.scatter(
                rep_scaled,
                repeat_items.iter().map(|&i| i as usize).collect(),
                self.n_items + 1,
            );
            let exp_scaled = tape.mul_scalar(explore_probs, p_explore);
            tape.add(scattered, exp_scaled)
        };

        let h_prime: Vec<Vec<f64>> = (0..n).map(|i| tape.value(h).row(i).to_vec()).collect();
        let pattern_embedding = tape.value(u).row(0).to_vec();
        let session_summary = tape.value(s_d).row(0).to_vec();
        let explore_summary = tape.value(explore_summary_var).row(0).to_vec();
        let beta_values = tape.value(beta).data().to_vec();
        let alpha_values = tape.value(alpha).data().to_vec();
        let repeat_attention = tape.value(repeat_probs).data().to_vec();
        let repeat_dist: Vec<(ItemIndex, f64)> = repeat_items
            .iter()
            .zip(tape.value(repeat_item_probs).data())
            .map(|(&i, &p)| (i, p))
            .collect();
        let p_repeat_value = tape.value(p_repeat).item();
        let p_explore_value = tape.value(p_explore).item();
        let combined_values = tape.value(combined).data().to_vec();
        let explore_values = tape.value(explore_probs).data().to_vec();

        Trace {
            tape,
            combined_var: combined,
            pattern,
            pattern_index,
            suffix_start,
            repeat_groups,
            p_repeat: p_repeat_value,
            p_explore: p_explore_value,
            h_prime,
            pattern_embedding,
            session_summary,
            explore_summary,
            beta: beta_values,
            alpha: alpha_values,
            repeat_attention,
            repeat_dist,
            explore: explore_values,
            combined: combined_values,
        }
    }

    /// Negative log-likelihood of `target` on the trace's tape.
    pub fn loss(&self, trace: &mut Trace, target: ItemIndex) -> Var {
        assert!(
            target >= 1 && target as usize <= self.n_items,
            "target {target} outside vocabulary"
        );
        let p = trace.tape.pick(trace.combined_var, target as usize);
        trace.tape.neg_log(p, LOG_EPS)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let config = serde_json::to_string(&self.config)
            .map_err(|e| CheckpointError::Format(e.to_string()))?;
        let meta = vec![
            ("n_items".to_string(), self.n_items.to_string()),
            ("config".to_string(), config),
        ];
        write_checkpoint_file(path, &self.store, self.step, &meta)
    }

    pub fn load(path: &std::path::Path) -> Result<Model, CheckpointError> {
        let ckpt = read_checkpoint_file(path)?;
        let n_items: usize = ckpt
            .meta_value("n_items")
            .ok_or_else(|| CheckpointError::Format("missing n_items".into()))?
            .parse()
            .map_err(|e| CheckpointError::Format(format!("bad n_items: {e}")))?;
        let config: ModelConfig = serde_json::from_str(
            ckpt.meta_value("config")
                .ok_or_else(|| CheckpointError::Format("missing config".into()))?,
        )
        .map_err(|e| CheckpointError::Format(format!("bad config: {e}")))?;
        let mut model = Model::new(config, n_items, 0);
        model.step = ckpt.step;
        let expected = model.store.len();
        let mut loaded = 0usize;
        for (name, tensor) in ckpt.tensors {
            let id = model
                .store
                .id_of(&name)
                .ok_or_else(|| CheckpointError::Format(format!("unknown parameter {name:?}")))?;
            let param = model.store.get_mut(id);
            if param.value.shape() != tensor.shape() {
                return Err(CheckpointError::Format(format!(
                    "parameter {name:?} shape {:?} does not match model {:?}",
                    tensor.shape(),
                    param.value.shape()
                )));
            }
            param.value = tensor;
            loaded += 1;
        }
        if loaded != expected {
            return Err(CheckpointError::Format(format!(
                "checkpoint holds {loaded} of {expected} parameters"
            )));
        }
        Ok(model)
    }

    /// Human-readable report of the attention state for one prefix. `label`
    /// renders item indices (e.g. back to raw ids).
    pub fn dump_attention<L: Fn(ItemIndex) -> String>(
        &self,
        prefix: &[ItemIndex],
        zero_instance: bool,
        label: L,
    ) -> String {
        let trace = if zero_instance {
            self.forward_zero_instance(prefix)
        } else {
            self.forward(prefix)
        };
        let mut out = String::new();
        out.push_str(&format!("pattern: {}\n", trace.pattern));
        out.push_str(&format!(
            "mode weights: repeat {:.4}  explore {:.4}\n",
            trace.p_repeat, trace.p_explore
        ));
        out.push_str("pos  item        beta     alpha    repeat_attn\n");
        for (i, &item) in prefix.iter().enumerate() {
            let rep = if i >= trace.suffix_start {
                format!("{:.4}", trace.repeat_attention[i - trace.suffix_start])
            } else {
                "-".to_string()
            };
            out.push_str(&format!(
                "{:<4} {:<10} {:.4}   {:.4}   {}\n",
                i + 1,
                label(item),
                trace.beta[i],
                trace.alpha[i],
                rep
            ));
        }
        out.push_str("repeat distribution:");
        for (item, p) in &trace.repeat_dist {
            out.push_str(&format!(" {}:{p:.4}", label(*item)));
        }
        out.push('\n');
        out
    }
}

/// Cross-entropy clamp; keeps the log finite when the target's structural
/// probability is zero.
pub const LOG_EPS: f64 = 1e-12;

/// Distinct items of the suffix in first-appearance order, with the flat
/// suffix positions backing each item.
fn suffix_groups(suffix: &[ItemIndex]) -> (Vec<ItemIndex>, Vec<Vec<usize>>) {
    let mut items: Vec<ItemIndex> = Vec::new();
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (j, &item) in suffix.iter().enumerate() {
        match items.iter().position(|&i| i == item) {
            Some(g) => groups[g].push(j),
            None => {
                items.push(item);
                groups.push(vec![j]);
            }
        }
    }
    (items, groups)
}

/// Everything one forward pass produced: the tape (for loss/backward), the
/// final distribution, and the attention read-outs.
pub struct Trace {
    pub tape: Tape,
    pub combined_var: Var,
    pub pattern: Pattern,
    pub pattern_index: usize,
    /// Index of the first suffix position within the prefix.
    pub suffix_start: usize,
    /// Suffix positions backing each distinct repeat-candidate item.
    pub repeat_groups: Vec<Vec<usize>>,
    pub p_repeat: f64,
    pub p_explore: f64,
    /// Instance-level representation per prefix position.
    pub h_prime: Vec<Vec<f64>>,
    pub pattern_embedding: Vec<f64>,
    /// Attention-pooled session summary feeding the discriminate head.
    pub session_summary: Vec<f64>,
    /// Final session vector scoring unseen items.
    pub explore_summary: Vec<f64>,
    /// Discriminate attention per prefix position.
    pub beta: Vec<f64>,
    /// Explore attention per prefix position.
    pub alpha: Vec<f64>,
    /// Repeat softmax mass per suffix position.
    pub repeat_attention: Vec<f64>,
    /// Repeat probability per distinct suffix item.
    pub repeat_dist: Vec<(ItemIndex, f64)>,
    /// Explore distribution over `0..=n_items` (in-session items exactly 0).
    pub explore: Vec<f64>,
    /// Combined distribution over `0..=n_items`.
    pub combined: Vec<f64>,
}

impl Trace {
    /// Scores over the vocabulary, index 0 (padding) included as 0.
    pub fn scores(&self) -> &[f64] {
        &self.combined
    }
}

/// Value-level mirror of the combination rule, used as a cross-check oracle:
/// `P(v) = p_repeat * rep(v)` for suffix items, `p_explore * exp(v)` for
/// everything else.
pub fn combine_distributions(
    p_repeat: f64,
    repeat_dist: &[(ItemIndex, f64)],
    p_explore: f64,
    explore: &[f64],
) -> Vec<f64> {
    let mut out: Vec<f64> = explore.iter().map(|&p| p_explore * p).collect();
    for &(item, p) in repeat_dist {
        out[item as usize] += p_repeat * p;
    }
    out
}
