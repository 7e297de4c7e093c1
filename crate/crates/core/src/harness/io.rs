//! Per-run artifacts: `metrics.csv`, `phi.csv`, `reconstruction.csv`,
//! `run.json` (the resolved config) and `params.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalRecord, PhiSnapshot, ReconstructionTable};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::nn::ParamStore;

pub const METRICS_FILE: &str = "metrics.csv";
pub const PHI_FILE: &str = "phi.csv";
pub const RECONSTRUCTION_FILE: &str = "reconstruction.csv";
pub const MANIFEST_FILE: &str = "run.json";
pub const PARAMS_FILE: &str = "params.json";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

pub fn write_metrics(path: &Path, records: &[EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "eval_reward"])?;
    for r in records {
        w.write_record([r.episode.to_string(), r.eval_reward.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn write_phi(path: &Path, trace: &[PhiSnapshot]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "agent", "phi"])?;
    for s in trace {
        for (i, p) in s.phi.iter().enumerate() {
            w.write_record([s.episode.to_string(), i.to_string(), p.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct PhiRow {
    episode: u64,
    agent: usize,
    phi: f64,
}

pub fn read_phi(path: &Path) -> Result<Vec<PhiSnapshot>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out: Vec<PhiSnapshot> = Vec::new();
    for row in r.deserialize() {
        let row: PhiRow = row?;
        match out.last_mut() {
            Some(s) if s.episode == row.episode && s.phi.len() == row.agent => s.phi.push(row.phi),
            _ if row.agent == 0 => out.push(PhiSnapshot {
                episode: row.episode,
                phi: vec![row.phi],
            }),
            _ => return Err(Error::Shape(format!("phi.csv: unexpected row for episode {}", row.episode))),
        }
    }
    Ok(out)
}

pub fn write_reconstruction(path: &Path, table: &ReconstructionTable) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["a0", "a1", "qtot"])?;
    for (a0, row) in table.0.iter().enumerate() {
        for (a1, v) in row.iter().enumerate() {
            w.write_record([a0.to_string(), a1.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_manifest(path: &Path, cfg: &RunConfig) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(cfg)? + "\n")?;
    Ok(())
}

pub fn read_manifest(path: &Path) -> Result<RunConfig> {
    let value = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let cfg = RunConfig::from_value(value)?;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize, Deserialize)]
struct SavedTensor {
    name: String,
    shape: (usize, usize),
    values: Vec<f64>,
}

pub fn write_params(path: &Path, store: &ParamStore) -> Result<()> {
    let saved: Vec<SavedTensor> = store
        .iter()
        .map(|t| SavedTensor {
            name: t.name.clone(),
            shape: t.shape(),
            values: t.value.iter().copied().collect(),
        })
        .collect();
    fs::write(path, serde_json::to_string(&saved)?)?;
    Ok(())
}

/// Loads saved values into `store`, which must have the same layout.
pub fn read_params_into(path: &Path, store: &mut ParamStore) -> Result<()> {
    let saved: Vec<SavedTensor> = serde_json::from_str(&fs::read_to_string(path)?)?;
    if saved.len() != store.len() {
        return Err(Error::Shape(format!(
            "{} holds {} tensors, network has {}",
            path.display(),
            saved.len(),
            store.len()
        )));
    }
    for (t, s) in store.iter_mut().zip(saved) {
        if t.name != s.name || t.shape() != s.shape {
            return Err(Error::Shape(format!(
                "saved tensor '{}' {:?} does not match '{}' {:?}",
                s.name,
                s.shape,
                t.name,
                t.shape()
            )));
        }
        t.value = ndarray::Array2::from_shape_vec(s.shape, s.values).map_err(|e| Error::Shape(e.to_string()))?;
    }
    Ok(())
}

/// `episode,mean,ci95` rows.
pub fn write_aggregate(path: &Path, episodes: &[u64], agg: &super::Aggregate) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["episode", "mean", "ci95"])?;
    for ((e, m), h) in episodes.iter().zip(&agg.mean).zip(&agg.half_width) {
        w.write_record([e.to_string(), m.to_string(), h.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
