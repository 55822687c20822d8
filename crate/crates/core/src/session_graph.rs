//! Per-session item graphs and the mean-pooling graph encoder.
//!
//! Nodes are the distinct items of a session. A directed in-link from
//! `v_j` to `v_i` requires both temporal precedence (some occurrence of `v_j`
//! before `v_i`) and latent-space agreement: `cosine(h_i, h_j) >= eta`.
//! Out-links are symmetric with "follows". A plain consecutive-adjacency
//! variant is kept for ablation.

use crate::data::ItemIndex;
use crate::diff::params::{ParamId, ParamStore};
use crate::diff::tape::{Tape, Var};
use crate::diff::tensor::Tensor;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SessionGraph {
    /// Distinct items in order of first appearance.
    pub nodes: Vec<ItemIndex>,
    /// Node backing each sequence position.
    pub node_of_pos: Vec<usize>,
    /// Sequence positions of each node.
    pub positions_of_node: Vec<Vec<usize>>,
    /// In-link neighbor node indices per node (sorted, no self).
    pub in_neighbors: Vec<Vec<usize>>,
    /// Out-link neighbor node indices per node (sorted, no self).
    pub out_neighbors: Vec<Vec<usize>>,
}

impl SessionGraph {
    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }
}

/// Distinct-node layout of a session: which node each position maps to.
pub fn node_layout(items: &[ItemIndex]) -> (Vec<ItemIndex>, Vec<usize>, Vec<Vec<usize>>) {
    let mut nodes: Vec<ItemIndex> = Vec::new();
    let mut node_of_pos = Vec::with_capacity(items.len());
    let mut positions_of_node: Vec<Vec<usize>> = Vec::new();
    for (pos, &item) in items.iter().enumerate() {
        let node = match nodes.iter().position(|&n| n == item) {
            Some(n) => n,
            None => {
                nodes.push(item);
                positions_of_node.push(Vec::new());
                nodes.len() - 1
            }
        };
        node_of_pos.push(node);
        positions_of_node[node].push(pos);
    }
    (nodes, node_of_pos, positions_of_node)
}

/// Cosine similarity; either vector having zero norm yields 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    dot / (na.sqrt() * nb.sqrt())
}

/// Build the similarity-gated graph from node embeddings `h` (one row per
/// node, in `node_layout` order).
///
/// For repeated items, `v_j` is an in-link candidate of `v_i` when
/// `min_pos(v_j) < max_pos(v_i)`, and an out-link candidate when
/// `max_pos(v_j) > min_pos(v_i)`.
pub fn build_graph(items: &[ItemIndex], h: &Tensor, eta: f64) -> SessionGraph {
    let (nodes, node_of_pos, positions_of_node) = node_layout(items);
    let n = nodes.len();
    assert_eq!(h.rows(), n, "embedding rows must match node count");
    let min_pos: Vec<usize> = positions_of_node.iter().map(|p| p[0]).collect();
    let max_pos: Vec<usize> = positions_of_node
        .iter()
        .map(|p| *p.last().unwrap())
        .collect();

    let mut in_neighbors = vec![Vec::new(); n];
    let mut out_neighbors = vec![Vec::new(); n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let sim = cosine(h.row(i), h.row(j));
            if sim < eta {
                continue;
            }
            if min_pos[j] < max_pos[i] {
                in_neighbors[i].push(j);
            }
            if max_pos[j] > min_pos[i] {
                out_neighbors[i].push(j);
            }
        }
    }
    SessionGraph {
        nodes,
        node_of_pos,
        positions_of_node,
        in_neighbors,
        out_neighbors,
    }
}

/// Consecutive-adjacency graph: in-links are the items immediately preceding
/// any occurrence, out-links the items immediately following. Self-loops from
/// immediate repeats are dropped.
pub fn build_sequential_graph(items: &[ItemIndex]) -> SessionGraph {
    let (nodes, node_of_pos, positions_of_node) = node_layout(items);
    let n = nodes.len();
    let mut in_neighbors = vec![Vec::new(); n];
    let mut out_neighbors = vec![Vec::new(); n];
    for pos in 1..items.len() {
        let prev = node_of_pos[pos - 1];
        let cur = node_of_pos[pos];
        if prev == cur {
            continue;
        }
        if !in_neighbors[cur].contains(&prev) {
            in_neighbors[cur].push(prev);
        }
        if !out_neighbors[prev].contains(&cur) {
            out_neighbors[prev].push(cur);
        }
    }
    for list in in_neighbors.iter_mut().chain(out_neighbors.iter_mut()) {
        list.sort_unstable();
    }
    SessionGraph {
        nodes,
        node_of_pos,
        positions_of_node,
        in_neighbors,
        out_neighbors,
    }
}

/// Mean over a neighborhood per node; the empty neighborhood is a zero row.
pub fn aggregate(tape: &mut Tape, h: Var, neighbor_sets: &[Vec<usize>]) -> Var {
    tape.mean_rows(h, neighbor_sets.to_vec())
}

/// Weights of one encoder step.
#[derive(Clone, Copy, Debug)]
pub struct EncoderWeights {
    /// `d x d` self transform.
    pub w_self: ParamId,
    /// `d x 2d` neighbor transform over `[in || out]`.
    pub w_neighbors: ParamId,
    /// `1 x d` bias.
    pub bias: ParamId,
}

/// One propagation step:
/// `o = tanh(h W_self^T + [h_in || h_out] W_neighbors^T + bias)`,
/// `h_all = mean over in + out + self`, result `o + h_all + h`.
pub fn encode_step(
    tape: &mut Tape,
    ps: &ParamStore,
    weights: &EncoderWeights,
    h: Var,
    graph: &SessionGraph,
) -> Var {
    let h_in = aggregate(tape, h, &graph.in_neighbors);
    let h_out = aggregate(tape, h, &graph.out_neighbors);
    let neighbors = tape.concat_cols(h_in, h_out);

    let w_self = tape.param(ps, weights.w_self);
    let w_neighbors = tape.param(ps, weights.w_neighbors);
    let bias = tape.param(ps, weights.bias);

    let self_term = tape.matmul_transposed(h, w_self);
    let neigh_term = tape.matmul_transposed(neighbors, w_neighbors);
    let pre = tape.add(self_term, neigh_term);
    let pre = tape.add_row(pre, bias);
    let o = tape.tanh(pre);

    let all_sets: Vec<Vec<usize>> = (0..graph.n_nodes())
        .map(|i| {
            let mut set = graph.in_neighbors[i].clone();
            set.extend_from_slice(&graph.out_neighbors[i]);
            set.push(i);
            set
        })
        .collect();
    let h_all = tape.mean_rows(h, all_sets);

    let sum = tape.add(o, h_all);
    tape.add(sum, h)
}

/// Which embeddings feed the similarity gate when iterating.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SimilaritySource {
    /// Rebuild the graph from the previous iteration's representations.
    Current,
    /// Always gate on the input embeddings.
    Input,
}

#[derive(Clone, Debug)]
pub struct EncodeOptions {
    pub eta: f64,
    pub iterations: usize,
    /// Skip the encoder entirely and use raw embeddings.
    pub no_iirl: bool,
    /// Use the consecutive-adjacency graph instead of the similarity graph.
    pub sequential: bool,
    pub sim_source: SimilaritySource,
    pub dropout: f64,
    pub training: bool,
}

/// Embed a session's items, run the encoder, and scatter node representations
/// back to sequence positions. Returns per-position representations `n x d`.
pub fn encode(
    tape: &mut Tape,
    ps: &ParamStore,
    item_table: ParamId,
    weights: &EncoderWeights,
    items: &[ItemIndex],
    opts: &EncodeOptions,
    rng: &mut ChaCha8Rng,
) -> Var {
    assert!(!items.is_empty(), "encode on an empty session");
    assert!(opts.iterations >= 1, "iteration count must be >= 1");
    let (nodes, node_of_pos, _) = node_layout(items);
    let rows: Vec<usize> = nodes.iter().map(|&i| i as usize).collect();
    let h0 = tape.gather_rows(ps, item_table, rows);
    let h0 = tape.dropout(h0, opts.dropout, opts.training, rng);

    let h_final = if opts.no_iirl {
        h0
    } else {
        let sequential = opts.sequential.then(|| build_sequential_graph(items));
        let mut h = h0;
        for _ in 0..opts.iterations {
            let graph = match &sequential {
                Some(g) => g.clone(),
                None => {
                    let source = match opts.sim_source {
                        SimilaritySource::Current => h,
                        SimilaritySource::Input => h0,
                    };
                    build_graph(items, tape.value(source), opts.eta)
                }
            };
            h = encode_step(tape, ps, weights, h, &graph);
        }
        h
    };
    tape.select_rows(h_final, node_of_pos)
}
