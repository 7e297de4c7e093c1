//! Central finite-difference gradients, used to check [`Graph::backward`](super::Graph::backward).

use super::params::{ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub worst_rel_error: f64,
    pub checked: usize,
}

/// Compares the analytic gradients already accumulated in `store` against
/// `(f(p + eps) - f(p - eps)) / 2 eps` for every scalar parameter. The
/// relative error uses `max(|numeric|, 1e-8)` as denominator; entries whose
/// both gradients are below `abs_floor` are counted as agreeing.
pub fn check<F>(store: &ParamStore, eps: f64, abs_floor: f64, loss: F) -> GradCheck
where
    F: FnMut(&ParamStore) -> f64,
{
    let entries: Vec<(ParamId, usize, usize)> = (0..store.len())
        .flat_map(|t| {
            let (rows, cols) = store.get(ParamId(t)).shape();
            (0..rows).flat_map(move |r| (0..cols).map(move |c| (ParamId(t), r, c)))
        })
        .collect();
    check_entries(store, &entries, eps, abs_floor, loss)
}

/// [`check`] restricted to the listed `(tensor, row, col)` entries; for
/// networks too large to probe exhaustively.
pub fn check_entries<F>(
    store: &ParamStore,
    entries: &[(ParamId, usize, usize)],
    eps: f64,
    abs_floor: f64,
    mut loss: F,
) -> GradCheck
where
    F: FnMut(&ParamStore) -> f64,
{
    let mut probe = store.clone();
    let mut worst = 0.0f64;
    for &(id, r, c) in entries {
        let orig = store.value(id)[[r, c]];
        probe.value_mut(id)[[r, c]] = orig + eps;
        let up = loss(&probe);
        probe.value_mut(id)[[r, c]] = orig - eps;
        let down = loss(&probe);
        probe.value_mut(id)[[r, c]] = orig;
        let numeric = (up - down) / (2.0 * eps);
        let analytic = store.grad(id)[[r, c]];
        if numeric.abs() < abs_floor && analytic.abs() < abs_floor {
            continue;
        }
        let rel = (analytic - numeric).abs() / numeric.abs().max(1e-8);
        worst = worst.max(rel);
    }
    GradCheck {
        worst_rel_error: worst,
        checked: entries.len(),
    }
}
