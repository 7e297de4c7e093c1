//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rqn_core::nn::gradcheck::{check, check_entries};
use rqn_core::nn::{Graph, Matrix, ParamId, ParamStore, Var};
use rqn_core::training::{Learner, TrainBatch};

pub const EPS: f64 = 1e-5;
pub const REL_TOL: f64 = 1e-4;
pub const FLOOR: f64 = 1e-7;

/// Runs `build` on a fresh graph, reduces the output with an MSE against a
/// fixed random target, backpropagates, and finite-differences every parameter.
pub fn gradcheck_layer<F>(store: &mut ParamStore, target: Matrix, build: F) -> f64
where
    F: Fn(&mut Graph, &ParamStore) -> Var,
{
    let eval = |s: &ParamStore, backward: Option<&mut ParamStore>| -> f64 {
        let mut g = Graph::new();
        let out = build(&mut g, s);
        let loss = g.mse(out, target.clone()).unwrap();
        let v = g.scalar(loss);
        if let Some(dst) = backward {
            g.backward(loss, dst).unwrap();
        }
        v
    };
    store.zero_grad();
    let snapshot = store.clone();
    eval(&snapshot, Some(store));
    let report = check(store, EPS, FLOOR, |s| eval(s, None));
    assert!(report.checked > 0);
    report.worst_rel_error
}

/// Worst relative error between backpropagation and finite differences of
/// the complete training loss, on the largest-gradient entry plus a few
/// random entries of every tensor accepted by `select`.
pub fn full_loss_gradcheck(l: &Learner, batch: &TrainBatch, select: impl Fn(&str) -> bool) -> f64 {
    let targets = l.td_targets(batch).unwrap();
    let loss_at = |s: &ParamStore| {
        let mut g = Graph::new();
        let parts = l.loss_graph(&mut g, s, batch, targets.clone()).unwrap();
        g.scalar(parts.total)
    };
    let mut store = l.params.clone();
    store.zero_grad();
    let mut g = Graph::new();
    let parts = l.loss_graph(&mut g, &l.params, batch, targets.clone()).unwrap();
    g.backward(parts.total, &mut store).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut entries = Vec::new();
    for t in (0..store.len()).filter(|&t| select(&store.get(ParamId(t)).name)) {
        let (rows, cols) = store.get(ParamId(t)).shape();
        let grad = store.grad(ParamId(t));
        let (mut br, mut bc) = (0, 0);
        for r in 0..rows {
            for c in 0..cols {
                if grad[[r, c]].abs() > grad[[br, bc]].abs() {
                    (br, bc) = (r, c);
                }
            }
        }
        entries.push((ParamId(t), br, bc));
        for _ in 0..6 {
            entries.push((ParamId(t), rng.gen_range(0..rows), rng.gen_range(0..cols)));
        }
    }
    assert!(!entries.is_empty());
    check_entries(&store, &entries, EPS, FLOOR, loss_at).worst_rel_error
}

