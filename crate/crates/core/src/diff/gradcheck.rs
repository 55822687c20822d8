//! Central finite-difference verification of tape gradients.
//!
//! The checker re-runs a caller-supplied forward pass with each parameter
//! element nudged by `±h` and compares the secant slope against the analytic
//! gradient left in `Param::grad`. It exercises the forward path only, so it
//! is independent of everything `Tape::backward` does.

use super::params::{ParamId, ParamStore};

pub struct GradCheckReport {
    /// Worst relative error over all checked elements.
    pub max_rel_error: f64,
    /// `(param name, flat index)` of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Elements where both gradients are below this magnitude are compared
/// absolutely; central differences cannot resolve relative error there.
const TINY: f64 = 1e-6;
const TINY_ABS_TOL: f64 = 1e-9;

/// Compare analytic gradients (already accumulated in `store`) against
/// central finite differences of `loss_fn` with step `h`, over every element
/// of every parameter.
///
/// `loss_fn` must be a pure function of the parameter values.
pub fn check_gradients<F>(store: &mut ParamStore, h: f64, mut loss_fn: F) -> GradCheckReport
where
    F: FnMut(&ParamStore) -> f64,
{
    let ids: Vec<ParamId> = store.ids().collect();
    let mut max_rel = 0.0;
    let mut worst = None;
    let mut checked = 0;
    for id in ids {
        let n = store.get(id).value.len();
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + h;
            let up = loss_fn(store);
            store.get_mut(id).value.data_mut()[i] = orig - h;
            let down = loss_fn(store);
            store.get_mut(id).value.data_mut()[i] = orig;

            let numeric = (up - down) / (2.0 * h);
            let analytic = store.get(id).grad.data()[i];
            checked += 1;

            let scale = analytic.abs().max(numeric.abs());
            let rel = if scale < TINY {
                // Both near zero: pass unless the absolute gap is itself
                // larger than finite-difference noise allows.
                if (analytic - numeric).abs() < TINY_ABS_TOL {
                    0.0
                } else {
                    (analytic - numeric).abs() / TINY
                }
            } else {
                (analytic - numeric).abs() / scale
            };
            if rel > max_rel {
                max_rel = rel;
                worst = Some((store.name(id).to_string(), i));
            }
        }
    }
    GradCheckReport {
        max_rel_error: max_rel,
        worst,
        checked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::tape::Tape;
    use crate::diff::tensor::Tensor;

    /// A composite covering most tape ops: gather, linear, tanh/relu/sigmoid,
    /// softmax (masked), mean-rows, groups, scatter, scalar plumbing.
    #[test]
    fn composite_ops_match_finite_differences() {
        let mut ps = ParamStore::new();
        ps.add(
            "table",
            Tensor::from_vec(
                4,
                3,
                vec![
                    0.1, -0.2, 0.3, 0.5, 0.4, -0.1, 0.2, 0.2, 0.6, -0.4, 0.1, 0.05,
                ],
            ),
        );
        ps.add(
            "w",
            Tensor::from_vec(2, 3, vec![0.3, -0.5, 0.2, 0.7, 0.1, -0.3]),
        );
        ps.add("b", Tensor::from_vec(1, 2, vec![0.05, -0.02]));
        ps.add("q", Tensor::from_vec(1, 2, vec![0.4, -0.6]));

        let forward = |ps: &ParamStore| -> (Tape, crate::diff::tape::Var) {
            let mut tape = Tape::new();
            let rows = tape.gather_rows(ps, ps.id_of("table").unwrap(), vec![0, 2, 3, 2]);
            let wv = tape.param(ps, ps.id_of("w").unwrap());
            let bv = tape.param(ps, ps.id_of("b").unwrap());
            let lin = tape.linear(rows, wv, bv); // 4x2
            let t = tape.tanh(lin);
            let r = tape.relu(lin);
            let s = tape.sigmoid(lin);
            let mix = tape.add(t, r);
            let mix = tape.add(mix, s);
            let agg = tape.mean_rows(mix, vec![vec![0, 1], vec![], vec![1, 2, 3]]); // 3x2
            let qv = tape.param(ps, ps.id_of("q").unwrap());
            let logits = tape.matmul_transposed(agg, qv); // 3x1
            let sm = tape.softmax(logits, Some(vec![false, false, true]));
            let grouped = tape.sum_groups(sm, vec![vec![0], vec![1, 2]]); // 1x2
            let scattered = tape.scatter(grouped, vec![3, 1], 5); // 1x5
            let picked = tape.pick(scattered, 1);
            let loss = tape.neg_log(picked, 1e-9);
            (tape, loss)
        };

        // The inputs keep every relu pre-activation away from zero, so the
        // finite-difference secant never straddles the kink.
        let (mut tape, loss) = forward(&ps);
        tape.backward(loss, 1.0, &mut ps);
        let report = check_gradients(&mut ps, 1e-5, |ps| {
            let (tape, loss) = forward(ps);
            tape.value(loss).item()
        });
        assert!(
            report.max_rel_error < 1e-4,
            "max rel error {} at {:?}",
            report.max_rel_error,
            report.worst
        );
        assert!(report.checked > 0);
    }

    #[test]
    fn matmul_pair_and_dot_match_finite_differences() {
        let mut ps = ParamStore::new();
        ps.add(
            "a",
            Tensor::from_vec(2, 3, vec![0.3, 1.2, -0.7, 0.4, 0.9, -1.1]),
        );
        ps.add(
            "b",
            Tensor::from_vec(3, 2, vec![0.5, -0.4, 1.0, 0.3, -0.2, 0.8]),
        );

        let forward = |ps: &ParamStore| -> (Tape, crate::diff::tape::Var) {
            let mut tape = Tape::new();
            let a = tape.param(ps, ps.id_of("a").unwrap());
            let b = tape.param(ps, ps.id_of("b").unwrap());
            let prod = tape.matmul(a, b); // 2x2
            let tr = tape.transpose(prod);
            let m = tape.mul(prod, tr);
            let sc = tape.scale(m, 0.5);
            let flatsum = {
                let ones = tape.constant(Tensor::from_vec(2, 2, vec![1.0; 4]));
                tape.dot(sc, ones)
            };
            let sq = tape.mul(flatsum, flatsum);
            let eps = tape.constant(Tensor::scalar(1.0));
            let shifted = tape.add(sq, eps);
            let loss = tape.neg_log(shifted, 0.0);
            (tape, loss)
        };

        let (mut tape, loss) = forward(&ps);
        tape.backward(loss, 1.0, &mut ps);
        let report = check_gradients(&mut ps, 1e-5, |ps| {
            let (tape, loss) = forward(ps);
            tape.value(loss).item()
        });
        assert!(
            report.max_rel_error < 1e-4,
            "max rel error {} at {:?}",
            report.max_rel_error,
            report.worst
        );
    }
}
