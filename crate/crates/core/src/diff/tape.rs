use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{ParamId, ParamStore};
use super::tensor::{matmul, matmul_t, Tensor};

/// Handle to a node on the tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    /// Constant input; gradients stop here.
    Const,
    /// Full copy of a parameter tensor; backward accumulates into the param.
    Param {
        id: ParamId,
    },
    /// Selected rows of a parameter table (embedding lookup).
    GatherRows {
        id: ParamId,
        rows: Vec<usize>,
    },
    /// `x (m x d) @ P (v x d)^T` against a parameter table, without copying it.
    MatMulParamT {
        x: Var,
        id: ParamId,
    },
    MatMul {
        a: Var,
        b: Var,
    },
    /// `x (m x k) @ w (n x k)^T` for `out x in` weight layout.
    MatMulT {
        x: Var,
        w: Var,
    },
    Transpose {
        x: Var,
    },
    Add {
        a: Var,
        b: Var,
    },
    /// Row vector added to every row of a matrix (bias).
    AddRow {
        m: Var,
        row: Var,
    },
    /// Column-wise concatenation of two equal-height matrices.
    Concat {
        a: Var,
        b: Var,
    },
    /// Gather rows of another node (scatter-add on backward).
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    /// Stack `count` copies of a single row.
    RepeatRow {
        row: Var,
        count: usize,
    },
    Tanh {
        x: Var,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    /// Broadcast-multiply by a `1x1` node.
    MulScalar {
        x: Var,
        s: Var,
    },
    ScaleConst {
        x: Var,
        c: f64,
    },
    /// Sum of the elementwise product; output `1x1`.
    Dot {
        a: Var,
        b: Var,
    },
    /// Softmax over all elements (flat). Masked entries are exactly zero in
    /// the output and receive no gradient. With exactly two live entries the
    /// second is computed as `1 - first` so the pair sums to 1 exactly.
    Softmax {
        x: Var,
        mask: Option<Vec<bool>>,
    },
    /// Row `i` of the output is the mean of `x`'s rows listed in `sets[i]`;
    /// the mean of an empty set is the zero vector.
    MeanRows {
        x: Var,
        sets: Vec<Vec<usize>>,
    },
    /// Flat-index group sums: `out[g] = sum(x[i] for i in groups[g])`.
    SumGroups {
        x: Var,
        groups: Vec<Vec<usize>>,
    },
    /// Place flat `x[i]` at `out[positions[i]]` in a wider vector.
    Scatter {
        x: Var,
        positions: Vec<usize>,
    },
    /// Inverted dropout: kept entries scaled by `1/(1-rate)`.
    Dropout {
        x: Var,
        keep: Vec<bool>,
        scale: f64,
    },
    /// Single element at a flat index, as `1x1`.
    Pick {
        x: Var,
        index: usize,
    },
    /// `-ln(x + eps)` of a `1x1` node.
    NegLog {
        x: Var,
        eps: f64,
    },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Append-only computation tape. Nodes are created in topological order, so
/// reverse traversal is a valid backward schedule.
///
/// Forward reads parameter values through `&ParamStore`; `backward`
/// accumulates into `Param::grad` and never clears it, so consecutive
/// backward calls add up until `ParamStore::zero_grads`.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        value.assert_finite("tape op output");
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const)
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(Tensor::zeros(rows, cols), Op::Const)
    }

    pub fn param(&mut self, ps: &ParamStore, id: ParamId) -> Var {
        self.push(ps.get(id).value.clone(), Op::Param { id })
    }

    pub fn gather_rows(&mut self, ps: &ParamStore, id: ParamId, rows: Vec<usize>) -> Var {
        let table = &ps.get(id).value;
        let mut out = Tensor::zeros(rows.len(), table.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(table.row(r));
        }
        self.push(out, Op::GatherRows { id, rows })
    }

    pub fn matmul_param_t(&mut self, x: Var, ps: &ParamStore, id: ParamId) -> Var {
        let out = matmul_t(self.value(x), &ps.get(id).value);
        self.push(out, Op::MatMulParamT { x, id })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul { a, b })
    }

    pub fn matmul_transposed(&mut self, x: Var, w: Var) -> Var {
        let out = matmul_t(self.value(x), self.value(w));
        self.push(out, Op::MatMulT { x, w })
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let out = self.value(x).transpose();
        self.push(out, Op::Transpose { x })
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "add shape mismatch");
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(out, Op::Add { a, b })
    }

    pub fn add_row(&mut self, m: Var, row: Var) -> Var {
        let (tm, tr) = (self.value(m), self.value(row));
        assert_eq!(tr.rows(), 1, "add_row needs a row vector");
        assert_eq!(tm.cols(), tr.cols(), "add_row width mismatch");
        let mut out = tm.clone();
        for r in 0..out.rows() {
            let orow = out.row_mut(r);
            for (o, v) in orow.iter_mut().zip(tr.row(0)) {
                *o += v;
            }
        }
        self.push(out, Op::AddRow { m, row })
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.rows(), tb.rows(), "concat row mismatch");
        let rows = ta.rows();
        let mut out = Tensor::zeros(rows, ta.cols() + tb.cols());
        for r in 0..rows {
            let orow = out.row_mut(r);
            orow[..ta.cols()].copy_from_slice(ta.row(r));
            orow[ta.cols()..].copy_from_slice(tb.row(r));
        }
        self.push(out, Op::Concat { a, b })
    }

    pub fn select_rows(&mut self, x: Var, rows: Vec<usize>) -> Var {
        let tx = self.value(x);
        let mut out = Tensor::zeros(rows.len(), tx.cols());
        for (i, &r) in rows.iter().enumerate() {
            out.row_mut(i).copy_from_slice(tx.row(r));
        }
        self.push(out, Op::SelectRows { x, rows })
    }

    pub fn repeat_row(&mut self, row: Var, count: usize) -> Var {
        let tr = self.value(row);
        assert_eq!(tr.rows(), 1, "repeat_row needs a row vector");
        let mut out = Tensor::zeros(count, tr.cols());
        for r in 0..count {
            out.row_mut(r).copy_from_slice(tr.row(0));
        }
        self.push(out, Op::RepeatRow { row, count })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
        self.push(out, Op::Tanh { x })
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        self.push(out, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|v| *v = 1.0 / (1.0 + (-*v).exp()));
        self.push(out, Op::Sigmoid { x })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "mul shape mismatch");
        let mut out = ta.clone();
        for (o, v) in out.data_mut().iter_mut().zip(tb.data()) {
            *o *= v;
        }
        self.push(out, Op::Mul { a, b })
    }

    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Var {
        let sv = self.value(s);
        assert_eq!(sv.shape(), (1, 1), "mul_scalar needs a 1x1 scale");
        let c = sv.item();
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::MulScalar { x, s })
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let mut out = self.value(x).clone();
        out.data_mut().iter_mut().for_each(|v| *v *= c);
        self.push(out, Op::ScaleConst { x, c })
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert_eq!(ta.shape(), tb.shape(), "dot shape mismatch");
        let s: f64 = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        self.push(Tensor::scalar(s), Op::Dot { a, b })
    }

    pub fn softmax(&mut self, x: Var, mask: Option<Vec<bool>>) -> Var {
        let tx = self.value(x);
        if let Some(m) = &mask {
            assert_eq!(m.len(), tx.len(), "softmax mask length mismatch");
        }
        let out = softmax_forward(tx, mask.as_deref());
        self.push(out, Op::Softmax { x, mask })
    }

    /// Neighborhood sets are treated as sets: indices are sorted and deduped
    /// so the mean is independent of the order callers list members in.
    pub fn mean_rows(&mut self, x: Var, mut sets: Vec<Vec<usize>>) -> Var {
        for s in sets.iter_mut() {
            s.sort_unstable();
            s.dedup();
        }
        let tx = self.value(x);
        let mut out = Tensor::zeros(sets.len(), tx.cols());
        for (i, set) in sets.iter().enumerate() {
            if set.is_empty() {
                continue;
            }
            let orow = out.row_mut(i);
            for &r in set {
                for (o, v) in orow.iter_mut().zip(tx.row(r)) {
                    *o += v;
                }
            }
            let inv = 1.0 / set.len() as f64;
            orow.iter_mut().for_each(|v| *v *= inv);
        }
        self.push(out, Op::MeanRows { x, sets })
    }

    pub fn sum_groups(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Var {
        let tx = self.value(x);
        let mut out = Tensor::zeros(1, groups.len());
        for (g, idxs) in groups.iter().enumerate() {
            let s: f64 = idxs.iter().map(|&i| tx.data()[i]).sum();
            out.set(0, g, s);
        }
        self.push(out, Op::SumGroups { x, groups })
    }

    pub fn scatter(&mut self, x: Var, positions: Vec<usize>, len: usize) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.len(), positions.len(), "scatter positions mismatch");
        let mut out = Tensor::zeros(1, len);
        for (&p, &v) in positions.iter().zip(tx.data()) {
            out.data_mut()[p] += v;
        }
        self.push(out, Op::Scatter { x, positions })
    }

    /// Identity when not training or when `rate == 0`.
    pub fn dropout(&mut self, x: Var, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Var {
        assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0,1)");
        if !training || rate == 0.0 {
            return x;
        }
        let n = self.value(x).len();
        let keep: Vec<bool> = (0..n).map(|_| rng.gen::<f64>() >= rate).collect();
        let scale = 1.0 / (1.0 - rate);
        let mut out = self.value(x).clone();
        for (v, &k) in out.data_mut().iter_mut().zip(&keep) {
            *v = if k { *v * scale } else { 0.0 };
        }
        self.push(out, Op::Dropout { x, keep, scale })
    }

    pub fn pick(&mut self, x: Var, index: usize) -> Var {
        let v = self.value(x).data()[index];
        self.push(Tensor::scalar(v), Op::Pick { x, index })
    }

    pub fn neg_log(&mut self, x: Var, eps: f64) -> Var {
        let tx = self.value(x);
        assert_eq!(tx.shape(), (1, 1), "neg_log expects a scalar");
        let v = -(tx.item() + eps).ln();
        self.push(Tensor::scalar(v), Op::NegLog { x, eps })
    }

    /// `x @ w^T + b` with `w` stored `out x in` and `b` a row vector.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let xw = self.matmul_transposed(x, w);
        self.add_row(xw, b)
    }

    /// Backpropagate `d(loss)/d(node)` from a scalar node, seeding with
    /// `seed` (use `1.0` for a plain gradient, `1/batch` for a mean over a
    /// batch). Accumulates into `Param::grad`.
    pub fn backward(&mut self, loss: Var, seed: f64, ps: &mut ParamStore) {
        assert!(!self.nodes.is_empty(), "backward on an empty tape");
        assert_eq!(
            self.nodes[loss.0].value.shape(),
            (1, 1),
            "backward needs a scalar loss"
        );
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(seed));

        for i in (0..self.nodes.len()).rev() {
            let g = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Const => {}
                Op::Param { id } => {
                    ps.get_mut(*id).grad.add_assign(&g);
                }
                Op::GatherRows { id, rows } => {
                    let grad = &mut ps.get_mut(*id).grad;
                    for (r_out, &r_in) in rows.iter().enumerate() {
                        let src = g.row(r_out).to_vec();
                        for (t, s) in grad.row_mut(r_in).iter_mut().zip(src) {
                            *t += s;
                        }
                    }
                }
                Op::MatMulParamT { x, id } => {
                    let x = *x;
                    let id = *id;
                    // y = x @ P^T: dx += g @ P; dP += g^T @ x
                    let dx = matmul(&g, &ps.get(id).value);
                    self.accumulate(&mut grads, x, dx);
                    let dp = matmul(&g.transpose(), self.value(x));
                    ps.get_mut(id).grad.add_assign(&dp);
                }
                Op::MatMul { a, b } => {
                    let (a, b) = (*a, *b);
                    let da = matmul(&g, &self.value(b).transpose());
                    let db = matmul(&self.value(a).transpose(), &g);
                    self.accumulate(&mut grads, a, da);
                    self.accumulate(&mut grads, b, db);
                }
                Op::MatMulT { x, w } => {
                    let (x, w) = (*x, *w);
                    // y = x @ w^T: dx += g @ w; dw += g^T @ x
                    let dx = matmul(&g, self.value(w));
                    let dw = matmul(&g.transpose(), self.value(x));
                    self.accumulate(&mut grads, x, dx);
                    self.accumulate(&mut grads, w, dw);
                }
                Op::Transpose { x } => {
                    let x = *x;
                    let dx = g.transpose();
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    self.accumulate(&mut grads, a, g.clone());
                    self.accumulate(&mut grads, b, g);
                }
                Op::AddRow { m, row } => {
                    let (m, row) = (*m, *row);
                    let mut drow = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (d, v) in drow.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.accumulate(&mut grads, m, g);
                    self.accumulate(&mut grads, row, drow);
                }
                Op::Concat { a, b } => {
                    let (a, b) = (*a, *b);
                    let ca = self.value(a).cols();
                    let rows = g.rows();
                    let mut da = Tensor::zeros(rows, ca);
                    let mut db = Tensor::zeros(rows, g.cols() - ca);
                    for r in 0..rows {
                        da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    self.accumulate(&mut grads, a, da);
                    self.accumulate(&mut grads, b, db);
                }
                Op::SelectRows { x, rows } => {
                    let x = *x;
                    let rows = rows.clone();
                    let mut dx = Tensor::zeros(self.value(x).rows(), self.value(x).cols());
                    for (r_out, &r_in) in rows.iter().enumerate() {
                        for (t, s) in dx.row_mut(r_in).iter_mut().zip(g.row(r_out)) {
                            *t += s;
                        }
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::RepeatRow { row, count } => {
                    let (row, count) = (*row, *count);
                    let mut drow = Tensor::zeros(1, g.cols());
                    for r in 0..count {
                        for (d, v) in drow.row_mut(0).iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.accumulate(&mut grads, row, drow);
                }
                Op::Tanh { x } => {
                    let x = *x;
                    let y = &self.nodes[i].value;
                    let mut dx = g;
                    for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= 1.0 - yv * yv;
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Relu { x } => {
                    let x = *x;
                    let xin = self.value(x).clone();
                    let mut dx = g;
                    for (d, xv) in dx.data_mut().iter_mut().zip(xin.data()) {
                        if *xv <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Sigmoid { x } => {
                    let x = *x;
                    let y = &self.nodes[i].value;
                    let mut dx = g;
                    for (d, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                        *d *= yv * (1.0 - yv);
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let mut da = g.clone();
                    for (d, bv) in da.data_mut().iter_mut().zip(self.value(b).data()) {
                        *d *= bv;
                    }
                    let mut db = g;
                    for (d, av) in db.data_mut().iter_mut().zip(self.value(a).data()) {
                        *d *= av;
                    }
                    self.accumulate(&mut grads, a, da);
                    self.accumulate(&mut grads, b, db);
                }
                Op::MulScalar { x, s } => {
                    let (x, s) = (*x, *s);
                    let c = self.value(s).item();
                    let ds: f64 = g
                        .data()
                        .iter()
                        .zip(self.value(x).data())
                        .map(|(gv, xv)| gv * xv)
                        .sum();
                    let mut dx = g;
                    dx.data_mut().iter_mut().for_each(|v| *v *= c);
                    self.accumulate(&mut grads, x, dx);
                    self.accumulate(&mut grads, s, Tensor::scalar(ds));
                }
                Op::ScaleConst { x, c } => {
                    let (x, c) = (*x, *c);
                    let mut dx = g;
                    dx.data_mut().iter_mut().for_each(|v| *v *= c);
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Dot { a, b } => {
                    let (a, b) = (*a, *b);
                    let gv = g.item();
                    let mut da = self.value(b).clone();
                    da.data_mut().iter_mut().for_each(|v| *v *= gv);
                    let mut db = self.value(a).clone();
                    db.data_mut().iter_mut().for_each(|v| *v *= gv);
                    self.accumulate(&mut grads, a, da);
                    self.accumulate(&mut grads, b, db);
                }
                Op::Softmax { x, mask } => {
                    let x = *x;
                    let y = &self.nodes[i].value;
                    let live = |j: usize| -> bool { mask.as_ref().is_none_or(|m| !m[j]) };
                    let s: f64 = (0..y.len())
                        .filter(|&j| live(j))
                        .map(|j| g.data()[j] * y.data()[j])
                        .sum();
                    let mut dx = Tensor::zeros(y.rows(), y.cols());
                    for j in 0..y.len() {
                        if live(j) {
                            dx.data_mut()[j] = y.data()[j] * (g.data()[j] - s);
                        }
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::MeanRows { x, sets } => {
                    let x = *x;
                    let sets = sets.clone();
                    let mut dx = Tensor::zeros(self.value(x).rows(), self.value(x).cols());
                    for (i_out, set) in sets.iter().enumerate() {
                        if set.is_empty() {
                            continue;
                        }
                        let inv = 1.0 / set.len() as f64;
                        for &r in set {
                            for (t, s) in dx.row_mut(r).iter_mut().zip(g.row(i_out)) {
                                *t += s * inv;
                            }
                        }
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::SumGroups { x, groups } => {
                    let x = *x;
                    let groups = groups.clone();
                    let tx = self.value(x);
                    let mut dx = Tensor::zeros(tx.rows(), tx.cols());
                    for (gidx, idxs) in groups.iter().enumerate() {
                        let gv = g.data()[gidx];
                        for &j in idxs {
                            dx.data_mut()[j] += gv;
                        }
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Scatter { x, positions } => {
                    let x = *x;
                    let positions = positions.clone();
                    let tx = self.value(x);
                    let mut dx = Tensor::zeros(tx.rows(), tx.cols());
                    for (i_in, &p) in positions.iter().enumerate() {
                        dx.data_mut()[i_in] += g.data()[p];
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Dropout { x, keep, scale } => {
                    let x = *x;
                    let scale = *scale;
                    let keep = keep.clone();
                    let mut dx = g;
                    for (d, k) in dx.data_mut().iter_mut().zip(keep) {
                        *d = if k { *d * scale } else { 0.0 };
                    }
                    self.accumulate(&mut grads, x, dx);
                }
                Op::Pick { x, index } => {
                    let (x, index) = (*x, *index);
                    let tx = self.value(x);
                    let mut dx = Tensor::zeros(tx.rows(), tx.cols());
                    dx.data_mut()[index] = g.item();
                    self.accumulate(&mut grads, x, dx);
                }
                Op::NegLog { x, eps } => {
                    let (x, eps) = (*x, *eps);
                    let xv = self.value(x).item();
                    let dx = Tensor::scalar(-g.item() / (xv + eps));
                    self.accumulate(&mut grads, x, dx);
                }
            }
        }
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, delta: Tensor) {
        match &mut grads[v.0] {
            Some(t) => t.add_assign(&delta),
            slot @ None => {
                assert_eq!(
                    delta.shape(),
                    self.nodes[v.0].value.shape(),
                    "gradient shape mismatch"
                );
                *slot = Some(delta);
            }
        }
    }
}

fn softmax_forward(x: &Tensor, mask: Option<&[bool]>) -> Tensor {
    let live: Vec<usize> = (0..x.len())
        .filter(|&j| mask.is_none_or(|m| !m[j]))
        .collect();
    let mut out = Tensor::zeros(x.rows(), x.cols());
    if live.is_empty() {
        return out;
    }
    let max = live
        .iter()
        .map(|&j| x.data()[j])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    let mut exps = Vec::with_capacity(live.len());
    for &j in &live {
        let e = (x.data()[j] - max).exp();
        exps.push(e);
        sum += e;
    }
    for (k, &j) in live.iter().enumerate() {
        out.data_mut()[j] = exps[k] / sum;
    }
    if live.len() == 2 {
        // Two-way softmax is used for the repeat/explore mode weights, which
        // must sum to 1 exactly; 1 - p is exact and stays in [0, 1].
        let first = out.data()[live[0]];
        out.data_mut()[live[1]] = 1.0 - first;
    }
    out
}
