//! Trained kernels on disk: the `d x d` matrix as headerless CSV rows and a
//! JSON header next to it (same stem, `.json`).

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use lqt_core::datadriven::{KernelMatrix, TrainingConfig, TrainingOutcome, ZLayout};
use lqt_core::linalg::{from_rows, to_rows};
use lqt_core::statespace::CostWeights;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result, Stage, StageExt};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRange {
    pub name: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub iterations: usize,
    pub converged: bool,
    pub final_delta: f64,
    pub jitter: f64,
    pub gamma: f64,
    pub mu: f64,
    pub eps_rl: f64,
    pub max_iters: usize,
    pub samples: usize,
    pub dataset_seed: u64,
    pub model_hash: String,
    /// Weights the kernel was trained under, row-major.
    pub q: Vec<Vec<f64>>,
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelHeader {
    pub d: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub m: usize,
    pub p: usize,
    pub blocks: Vec<BlockRange>,
    pub training: TrainingMeta,
}

impl KernelHeader {
    pub fn new(outcome: &TrainingOutcome, cfg: &TrainingConfig, w: &CostWeights, samples: usize, dataset_seed: u64, model_hash: String) -> Self {
        let layout = outcome.kernel.layout();
        Self {
            d: layout.dim(),
            horizon: layout.horizon,
            m: layout.m,
            p: layout.p,
            blocks: layout
                .blocks()
                .into_iter()
                .map(|(name, r)| BlockRange {
                    name: name.to_string(),
                    start: r.start,
                    end: r.end,
                })
                .collect(),
            training: TrainingMeta {
                iterations: outcome.iterations,
                converged: outcome.converged,
                final_delta: outcome.final_delta(),
                jitter: outcome.jitter,
                gamma: cfg.gamma,
                mu: cfg.mu,
                eps_rl: cfg.eps_rl,
                max_iters: cfg.max_iters,
                samples,
                dataset_seed,
                model_hash,
                q: to_rows(w.q()),
                r: to_rows(w.r()),
            },
        }
    }

    pub fn weights(&self) -> Result<CostWeights> {
        let q = from_rows(&self.training.q).stage(Stage::Persist)?;
        let r = from_rows(&self.training.r).stage(Stage::Persist)?;
        CostWeights::new(q, r, self.training.gamma).stage(Stage::Persist)
    }
}

pub fn header_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

pub fn save_kernel(path: &Path, kernel: &KernelMatrix, header: &KernelHeader) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(BufWriter::new(File::create(path).stage(Stage::Persist)?));
    for row in kernel.matrix().row_iter() {
        wtr.write_record(row.iter().map(|v| v.to_string())).stage(Stage::Persist)?;
    }
    wtr.flush().stage(Stage::Persist)?;
    let side = BufWriter::new(File::create(header_path(path)).stage(Stage::Persist)?);
    serde_json::to_writer_pretty(side, header).stage(Stage::Persist)?;
    Ok(())
}

pub fn load_kernel(path: &Path) -> Result<(KernelMatrix, KernelHeader)> {
    let side = File::open(header_path(path)).stage(Stage::Persist)?;
    let header: KernelHeader = serde_json::from_reader(BufReader::new(side)).stage(Stage::Persist)?;
    let layout = ZLayout::new(header.horizon, header.m, header.p).stage(Stage::Persist)?;
    if layout.dim() != header.d {
        return Err(BenchError::invalid(Stage::Persist, format!("header d = {} but (N+1)(m+p) = {}", header.d, layout.dim())));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_reader(BufReader::new(File::open(path).stage(Stage::Persist)?));
    let mut values = Vec::with_capacity(header.d * header.d);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.stage(Stage::Persist)?;
        if rec.len() != header.d {
            return Err(BenchError::invalid(Stage::Persist, format!("kernel row {rows} has {} entries, expected {}", rec.len(), header.d)));
        }
        for s in rec.iter() {
            values.push(s.parse::<f64>().map_err(|e| BenchError::invalid(Stage::Persist, format!("kernel entry {s:?}: {e}")))?);
        }
        rows += 1;
    }
    if rows != header.d {
        return Err(BenchError::invalid(Stage::Persist, format!("kernel has {rows} rows, expected {}", header.d)));
    }
    let h = DMatrix::from_row_slice(header.d, header.d, &values);
    Ok((KernelMatrix::new(layout, h).stage(Stage::Persist)?, header))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn outcome() -> TrainingOutcome {
        let layout = ZLayout::new(1, 1, 1).unwrap();
        let h = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64) + if i == j { 1.0 } else { 0.0 });
        TrainingOutcome {
            kernel: KernelMatrix::new(layout, h).unwrap(),
            iterations: 7,
            converged: true,
            deltas: vec![0.5, 1e-4],
            residuals: vec![],
            jitter: 1e-4,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        let out = outcome();
        let w = CostWeights::identity(1, 1, 0.99).unwrap();
        let header = KernelHeader::new(&out, &TrainingConfig::default(), &w, 100, 4, "abc".into());
        save_kernel(&path, &out.kernel, &header).unwrap();
        let (k, h) = load_kernel(&path).unwrap();
        assert_eq!(k, out.kernel);
        assert_eq!(h, header);
        assert_eq!(h.blocks.len(), 4);
        assert_eq!(h.weights().unwrap(), w);
    }

    #[test]
    fn truncated_kernel_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("kernel.csv");
        let out = outcome();
        let w = CostWeights::identity(1, 1, 0.9).unwrap();
        save_kernel(&path, &out.kernel, &KernelHeader::new(&out, &TrainingConfig::default(), &w, 1, 0, String::new())).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let short: Vec<&str> = text.lines().take(3).collect();
        std::fs::write(&path, short.join("\n")).unwrap();
        let err = load_kernel(&path).unwrap_err();
        assert_eq!(err.stage(), Stage::Persist);
    }
}
