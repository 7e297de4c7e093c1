use serde::{Deserialize, Serialize};

use super::params::{Matrix, ParamStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum OptimizerKind {
    Sgd,
    RmsProp { alpha: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::RmsProp {
                alpha: 0.99,
                eps: 1e-5,
            },
            lr: 5e-4,
            clip_norm: Some(10.0),
        }
    }
}

/// Optimizer plus its per-parameter accumulators.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    square_avg: Vec<Matrix>,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Self {
        let square_avg = store.iter().map(|t| Matrix::zeros(t.shape())).collect();
        Self { config, square_avg }
    }

    /// Clips the global gradient norm, applies one update and clears the
    /// gradients. Returns the gradient norm measured before clipping.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<f64> {
        if self.square_avg.len() != store.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} tensors, store has {}",
                self.square_avg.len(),
                store.len()
            )));
        }
        let norm = store.grad_norm();
        if !norm.is_finite() {
            let bad = store
                .iter()
                .find(|t| t.grad.iter().any(|g| !g.is_finite()))
                .map(|t| t.name.clone())
                .unwrap_or_default();
            return Err(Error::NonFinite(format!("gradient of '{bad}'")));
        }
        let scale = match self.config.clip_norm {
            Some(max) if norm > max => max / norm,
            _ => 1.0,
        };
        let lr = self.config.lr;
        for (t, acc) in store.iter_mut().zip(&mut self.square_avg) {
            if !t.requires_grad {
                continue;
            }
            match self.config.kind {
                OptimizerKind::Sgd => {
                    ndarray::Zip::from(&mut t.value)
                        .and(&t.grad)
                        .for_each(|p, &g| *p -= lr * g * scale);
                }
                OptimizerKind::RmsProp { alpha, eps } => {
                    ndarray::Zip::from(&mut t.value)
                        .and(&t.grad)
                        .and(acc)
                        .for_each(|p, &g, v| {
                            let g = g * scale;
                            *v = alpha * *v + (1.0 - alpha) * g * g;
                            *p -= lr * g / (v.sqrt() + eps);
                        });
                }
            }
            if t.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("parameter '{}' after update", t.name)));
            }
            t.grad.fill(0.0);
        }
        Ok(norm)
    }
}
