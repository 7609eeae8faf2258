//! Bayesian optimization of the diagonal weights around either pipeline.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use lqt_core::bayesopt::{fitness, fitness_or_penalty, optimize, weights_from_theta, BoRecord, SearchDomain};
use lqt_core::datadriven::LiftedRegression;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Pipeline, Plant};
use crate::error::{Result, Stage, StageExt};
use crate::experiment::{simulate_data_driven, simulate_observer, solve_model_based};

/// Best weights found; loads back as a `weights` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TunedWeights {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub q: Vec<f64>,
    pub r: Vec<f64>,
    pub fitness: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct TuneReport {
    pub domain: SearchDomain,
    pub history: Vec<BoRecord>,
    pub best: TunedWeights,
}

/// Unweighted discounted cost of one candidate over the tuning horizon.
/// Errors surface as `Err` and are penalized by the caller.
fn evaluate(plant: &Plant, cfg: &ExperimentConfig, reg: Option<&LiftedRegression>, theta: &DVector<f64>) -> lqt_core::Result<f64> {
    let w = weights_from_theta(theta, plant.model.p(), plant.model.m(), cfg.gamma)?;
    let horizon = cfg.bo.horizon;
    let trace = match reg {
        None => {
            let sol = solve_model_based(plant, cfg, &w).map_err(core_error)?;
            simulate_observer(plant, cfg, &w, &sol, horizon).map_err(core_error)?
        }
        Some(reg) => {
            let outcome = reg.train(&cfg.training(), &w)?;
            simulate_data_driven(plant, cfg, &w, &outcome.kernel, horizon).map_err(core_error)?
        }
    };
    fitness(&trace, cfg.gamma, horizon)
}

fn core_error(e: crate::error::BenchError) -> lqt_core::Error {
    match e {
        crate::error::BenchError::Core { source, .. } => source,
        other => lqt_core::Error::Parse(other.to_string()),
    }
}

/// Tunes the configured pipeline. Data-driven runs need the regression of
/// the dataset, which stays fixed across candidates.
pub fn tune_with(plant: &Plant, cfg: &ExperimentConfig, reg: Option<&LiftedRegression>) -> Result<TuneReport> {
    let (p, m) = (plant.model.p(), plant.model.m());
    let domain = cfg.bo.domain(cfg.pipeline, p, m)?;
    let acq = cfg.bo.acquisition(cfg.seed);
    let outcome = optimize(|theta| fitness_or_penalty(evaluate(plant, cfg, reg, theta)), &domain, &acq).stage(Stage::Tune)?;
    let best = TunedWeights {
        pipeline: cfg.pipeline,
        seed: cfg.seed,
        q: outcome.best.rows(0, p).iter().copied().collect(),
        r: outcome.best.rows(p, m).iter().copied().collect(),
        fitness: outcome.best_fitness,
        evaluations: outcome.history.len(),
    };
    Ok(TuneReport {
        domain,
        history: outcome.history,
        best,
    })
}

pub fn tune(cfg: &ExperimentConfig) -> Result<TuneReport> {
    let plant = Plant::from_config(cfg)?;
    match cfg.pipeline {
        Pipeline::ModelBased => tune_with(&plant, cfg, None),
        Pipeline::DataDriven => {
            let ds = crate::experiment::dataset(&plant, cfg)?;
            let reg = crate::experiment::regression(&ds, cfg)?;
            tune_with(&plant, cfg, Some(&reg))
        }
    }
}

/// `history.csv` (`iter,theta_1..theta_k,fitness`) and `best.json`.
pub fn write_tune(dir: &Path, report: &TuneReport) -> Result<()> {
    fs::create_dir_all(dir).stage(Stage::Persist)?;
    let file = File::create(dir.join("history.csv")).stage(Stage::Persist)?;
    let mut wtr = csv::Writer::from_writer(BufWriter::new(file));
    let mut header = vec!["iter".to_string()];
    header.extend((1..=report.domain.dim()).map(|i| format!("theta_{i}")));
    header.push("fitness".into());
    wtr.write_record(&header).stage(Stage::Persist)?;
    for rec in &report.history {
        let mut row = vec![rec.iter.to_string()];
        row.extend(rec.theta.iter().map(f64::to_string));
        row.push(rec.fitness.to_string());
        wtr.write_record(&row).stage(Stage::Persist)?;
    }
    wtr.flush().stage(Stage::Persist)?;
    let best = serde_json::to_string_pretty(&report.best).stage(Stage::Persist)?;
    fs::write(dir.join("best.json"), best + "\n").stage(Stage::Persist)?;
    Ok(())
}
