//! The two pipelines end to end, and the summary they report.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use lqt_core::augmented::augment;
use lqt_core::datadriven::{run_data_driven_closed_loop, KernelMatrix, LiftedRegression, TrainingOutcome, Warmup};
use lqt_core::datagen::{generate_dataset, IoDataset, StabilizingGain};
use lqt_core::lqt::{random_initial_gain, run_observer_closed_loop, solve_lqt, LqtSolution};
use lqt_core::observer::{estimation_error, LuenbergerObserver};
use lqt_core::plant::LinearPlant;
use lqt_core::statespace::CostWeights;
use lqt_core::trace::SimulationTrace;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Pipeline, Plant};
use crate::error::{Result, Stage, StageExt};

/// Result of one closed-loop run. `perf_index_k` sums the first
/// `min(k, steps)` discounted stage costs under the run's own weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pipeline: Pipeline,
    pub steps: usize,
    pub report_step: usize,
    pub seed: u64,
    /// `y` at the report step (the last step when the run is shorter).
    pub final_outputs: Vec<f64>,
    /// `||r - y||_2` at the report step.
    pub tracking_error_l2: f64,
    pub perf_index_100: f64,
    pub perf_index_1000: f64,
    /// Same sums with `Q = I`, `R = I`; the tuner's fitness.
    pub unweighted_index_1000: f64,
    /// Gain iterations or value-iteration sweeps.
    pub iterations: usize,
    pub converged: bool,
    /// `||xhat - x||_2` at the report step (observer runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimation_error: Option<f64>,
    /// `||C (xhat - x)||_2` at the report step (observer runs only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_estimation_error: Option<f64>,
    pub wall_time: f64,
}

impl Summary {
    pub fn from_trace(cfg: &ExperimentConfig, w: &CostWeights, trace: &SimulationTrace, iterations: usize, converged: bool, wall_time: f64) -> Result<Self> {
        let len = trace.len();
        let index = |h: usize| trace.performance_index(w, h.min(len)).stage(Stage::Simulate);
        let at = trace.records().get(cfg.report_step.min(len.saturating_sub(1)));
        let (final_outputs, tracking_error_l2) = match at {
            Some(rec) => (rec.y.iter().copied().collect(), (&rec.r - &rec.y).norm()),
            None => (Vec::new(), 0.0),
        };
        let (estimation_error, output_estimation_error) = match at.and_then(|r| Some((r.xhat.as_ref()?, r.x.as_ref()?, r.yhat.as_ref()?, &r.y))) {
            Some((xhat, x, yhat, y)) => (Some(estimation_error(xhat, x)), Some((yhat - y).norm())),
            None => (None, None),
        };
        Ok(Self {
            pipeline: cfg.pipeline,
            steps: len,
            report_step: cfg.report_step,
            seed: cfg.seed,
            final_outputs,
            tracking_error_l2,
            perf_index_100: index(100)?,
            perf_index_1000: index(1000)?,
            unweighted_index_1000: trace.unweighted_index(w.gamma(), 1000.min(len)).stage(Stage::Simulate)?,
            iterations,
            converged,
            estimation_error,
            output_estimation_error,
            wall_time,
        })
    }

    /// Pretty JSON; the only run-to-run difference for a fixed config is `wall_time`.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: Summary,
    pub trace: SimulationTrace,
    pub solution: Option<LqtSolution>,
    pub training: Option<TrainingOutcome>,
}

/// `||xhat(t) - x(t)||` for every step of an observer run.
pub fn estimation_errors(trace: &SimulationTrace) -> Vec<f64> {
    trace
        .records()
        .iter()
        .filter_map(|r| Some(estimation_error(r.xhat.as_ref()?, r.x.as_ref()?)))
        .collect()
}

pub fn solve_model_based(plant: &Plant, cfg: &ExperimentConfig, w: &CostWeights) -> Result<LqtSolution> {
    let aug = augment(&plant.model, &plant.reference, w).stage(Stage::Solve)?;
    let k0 = random_initial_gain(aug.m(), aug.dim(), cfg.observer.k0_variance, cfg.seed);
    solve_lqt(&aug, w, &k0, cfg.observer.eps).stage(Stage::Solve)
}

pub fn simulate_observer(plant: &Plant, cfg: &ExperimentConfig, w: &CostWeights, sol: &LqtSolution, steps: usize) -> Result<SimulationTrace> {
    let n = plant.model.n();
    let xhat0 = cfg.observer.xhat0.vector(n)?;
    let mut obs = LuenbergerObserver::design(plant.model.clone(), cfg.observer.tau, xhat0).stage(Stage::Solve)?;
    let mut sim = LinearPlant::new(plant.model.clone(), cfg.observer.x0.vector(n)?).stage(Stage::Simulate)?;
    run_observer_closed_loop(&mut sim, &plant.reference, w, sol, &mut obs, steps).stage(Stage::Simulate)
}

/// Loads the configured dataset or records a fresh one under `K_data`.
pub fn dataset(plant: &Plant, cfg: &ExperimentConfig) -> Result<IoDataset> {
    if let Some(path) = &cfg.data.dataset {
        let ds = IoDataset::load(path).stage(Stage::Data)?;
        if (ds.m(), ds.p()) != (plant.model.m(), plant.model.p()) {
            return Err(crate::error::BenchError::invalid(Stage::Data, "dataset dimensions do not match the model"));
        }
        return Ok(ds);
    }
    let gain = StabilizingGain::new(plant.data_gain(cfg)?, &plant.model).stage(Stage::Data)?;
    let x0 = cfg.data.x0.vector(plant.model.n())?;
    generate_dataset(&plant.model, &gain, &cfg.data.noise(cfg.seed), &plant.reference, cfg.data.samples, &x0).stage(Stage::Data)
}

pub fn regression(ds: &IoDataset, cfg: &ExperimentConfig) -> Result<LiftedRegression> {
    LiftedRegression::new(ds, cfg.training.horizon, cfg.training.mu).stage(Stage::Train)
}

pub fn simulate_data_driven(plant: &Plant, cfg: &ExperimentConfig, w: &CostWeights, kernel: &KernelMatrix, steps: usize) -> Result<SimulationTrace> {
    let x0 = cfg.data.x0.vector(plant.model.n())?;
    let mut sim = LinearPlant::new(plant.model.clone(), x0).stage(Stage::Simulate)?;
    run_data_driven_closed_loop(&mut sim, kernel, &plant.reference, w, steps, &Warmup::Zero).stage(Stage::Simulate)
}

/// Observer pipeline: solve, then run the closed loop.
pub fn run_model_based(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let plant = Plant::from_config(cfg)?;
    let sol = solve_model_based(&plant, cfg, &plant.weights)?;
    let trace = simulate_observer(&plant, cfg, &plant.weights, &sol, cfg.steps)?;
    let summary = Summary::from_trace(cfg, &plant.weights, &trace, sol.iterations, true, start.elapsed().as_secs_f64())?;
    Ok(RunOutput {
        summary,
        trace,
        solution: Some(sol),
        training: None,
    })
}

/// Data-driven pipeline on a prepared regression.
pub fn run_data_driven_with(plant: &Plant, cfg: &ExperimentConfig, reg: &LiftedRegression) -> Result<RunOutput> {
    let start = Instant::now();
    let outcome = reg.train(&cfg.training(), &plant.weights).stage(Stage::Train)?;
    let trace = simulate_data_driven(plant, cfg, &plant.weights, &outcome.kernel, cfg.steps)?;
    let wall = start.elapsed().as_secs_f64() + reg.setup_seconds();
    let summary = Summary::from_trace(cfg, &plant.weights, &trace, outcome.iterations, outcome.converged, wall)?;
    Ok(RunOutput {
        summary,
        trace,
        solution: None,
        training: Some(outcome),
    })
}

/// Data-driven pipeline: record data, train, run.
pub fn run_data_driven(cfg: &ExperimentConfig) -> Result<RunOutput> {
    let start = Instant::now();
    let plant = Plant::from_config(cfg)?;
    let ds = dataset(&plant, cfg)?;
    let reg = regression(&ds, cfg)?;
    let mut out = run_data_driven_with(&plant, cfg, &reg)?;
    out.summary.wall_time = start.elapsed().as_secs_f64();
    Ok(out)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    match cfg.pipeline {
        Pipeline::ModelBased => run_model_based(cfg),
        Pipeline::DataDriven => run_data_driven(cfg),
    }
}

/// Writes `trace.csv` and `summary.json` into `dir`.
pub fn write_run(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).stage(Stage::Persist)?;
    let file = File::create(dir.join("trace.csv")).stage(Stage::Persist)?;
    out.trace.write_csv(BufWriter::new(file)).stage(Stage::Persist)?;
    fs::write(dir.join("summary.json"), out.summary.to_json() + "\n").stage(Stage::Persist)?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    let text = fs::read_to_string(path).stage(Stage::Compare)?;
    serde_json::from_str(&text).stage(Stage::Compare)
}
