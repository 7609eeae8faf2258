//! Experiment configuration. Every field has a default, and the defaults
//! reproduce the baseline runs on the extruder model.

use std::path::{Path, PathBuf};

use lqt_core::bayesopt::{AcquisitionConfig, SearchDomain};
use lqt_core::config::SystemConfig;
use lqt_core::datadriven::TrainingConfig;
use lqt_core::datagen::ProbingNoiseConfig;
use lqt_core::fixtures::{self, data_driven_params as dd, observer_params as obs};
use lqt_core::statespace::{CostWeights, ReferenceGenerator, StateSpaceModel};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result, Stage, StageExt};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "LQT_BENCH_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pipeline {
    ModelBased,
    DataDriven,
}

impl Pipeline {
    pub fn name(self) -> &'static str {
        match self {
            Pipeline::ModelBased => "model-based",
            Pipeline::DataDriven => "data-driven",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NamedWeights {
    Identity,
    /// Tuned weights reported for the observer pipeline.
    ObserverBo,
    /// Tuned weights reported for the data-driven pipeline.
    DataDrivenBo,
}

/// A named weight set or explicit diagonals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightsSpec {
    Named(NamedWeights),
    Diagonal { q: Vec<f64>, r: Vec<f64> },
}

impl Default for WeightsSpec {
    fn default() -> Self {
        WeightsSpec::Named(NamedWeights::Identity)
    }
}

impl WeightsSpec {
    /// `identity`, `observer-bo`, `data-driven-bo`, or a JSON file with
    /// `q` and `r` diagonals (a tuning result works).
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(WeightsSpec::Named(NamedWeights::Identity)),
            "observer-bo" => Ok(WeightsSpec::Named(NamedWeights::ObserverBo)),
            "data-driven-bo" => Ok(WeightsSpec::Named(NamedWeights::DataDrivenBo)),
            path => {
                let text = std::fs::read_to_string(path).stage(Stage::Config)?;
                serde_json::from_str(&text).stage(Stage::Config)
            }
        }
    }

    pub fn resolve(&self, p: usize, m: usize, gamma: f64) -> Result<CostWeights> {
        let w = match self {
            WeightsSpec::Named(NamedWeights::Identity) => CostWeights::identity(p, m, gamma),
            WeightsSpec::Named(NamedWeights::ObserverBo) => {
                check_paper_dims(p, m)?;
                CostWeights::from_diagonals(&fixtures::OBSERVER_BO_Q, &fixtures::OBSERVER_BO_R, gamma)
            }
            WeightsSpec::Named(NamedWeights::DataDrivenBo) => {
                check_paper_dims(p, m)?;
                CostWeights::from_diagonals(&fixtures::DATA_DRIVEN_BO_Q, &fixtures::DATA_DRIVEN_BO_R, gamma)
            }
            WeightsSpec::Diagonal { q, r } => {
                if q.len() != p || r.len() != m {
                    return Err(BenchError::invalid(
                        Stage::Config,
                        format!("weights need {p} + {m} diagonal entries, got {} + {}", q.len(), r.len()),
                    ));
                }
                CostWeights::from_diagonals(q, r, gamma)
            }
        };
        w.stage(Stage::Config)
    }
}

fn check_paper_dims(p: usize, m: usize) -> Result<()> {
    if (p, m) != (5, 7) {
        return Err(BenchError::invalid(Stage::Config, "tuned fixture weights only fit the 5-output, 7-input model"));
    }
    Ok(())
}

/// Initial state: every component equal, or an explicit vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialState {
    Uniform(f64),
    Vector(Vec<f64>),
}

impl InitialState {
    pub fn vector(&self, n: usize) -> Result<DVector<f64>> {
        match self {
            InitialState::Uniform(v) => Ok(DVector::from_element(n, *v)),
            InitialState::Vector(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
            InitialState::Vector(v) => Err(BenchError::invalid(Stage::Config, format!("initial state has {} entries, model has {n}", v.len()))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverParams {
    pub tau: f64,
    /// Gain-iteration stopping threshold.
    pub eps: f64,
    pub k0_variance: f64,
    pub x0: InitialState,
    pub xhat0: InitialState,
}

impl Default for ObserverParams {
    fn default() -> Self {
        Self {
            tau: obs::TAU,
            eps: obs::EPS,
            k0_variance: obs::K0_VARIANCE,
            x0: InitialState::Uniform(obs::X0),
            xhat0: InitialState::Uniform(obs::XHAT0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataParams {
    pub samples: usize,
    /// Initial state for data collection and for the closed loop.
    pub x0: InitialState,
    pub sigma: f64,
    pub omega2: f64,
    pub bandwidth: f64,
    pub scale: f64,
    /// Load this dataset instead of generating one.
    pub dataset: Option<PathBuf>,
    /// Data-collection feedback; the extruder's `K_data` by default, an LQR
    /// gain for other systems.
    pub k_data: Option<Vec<Vec<f64>>>,
}

impl Default for DataParams {
    fn default() -> Self {
        let noise = ProbingNoiseConfig::default();
        Self {
            samples: dd::SAMPLES,
            x0: InitialState::Uniform(dd::X0),
            sigma: noise.sigma,
            omega2: noise.omega2,
            bandwidth: noise.bandwidth,
            scale: noise.scale,
            dataset: None,
            k_data: None,
        }
    }
}

impl DataParams {
    pub fn noise(&self, seed: u64) -> ProbingNoiseConfig {
        ProbingNoiseConfig {
            sigma: self.sigma,
            omega2: self.omega2,
            bandwidth: self.bandwidth,
            scale: self.scale,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingParams {
    pub horizon: usize,
    pub mu: f64,
    pub eps_rl: f64,
    pub max_iters: usize,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            horizon: dd::HORIZON,
            mu: dd::MU,
            eps_rl: dd::EPS_RL,
            max_iters: dd::MAX_ITERS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoParams {
    /// Preset name (`bounds-observer`, `bounds-datadriven`) or a JSON file
    /// with `lower` and `upper`; the pipeline's preset when absent.
    pub bounds: Option<String>,
    pub init_samples: usize,
    pub iterations: usize,
    pub epsilon: f64,
    pub candidate_count: usize,
    /// Steps in the fitness sum.
    pub horizon: usize,
}

impl Default for BoParams {
    fn default() -> Self {
        let acq = AcquisitionConfig::default();
        Self {
            bounds: None,
            init_samples: acq.init_samples,
            iterations: acq.iterations,
            epsilon: acq.epsilon,
            candidate_count: acq.candidate_count,
            horizon: 1000,
        }
    }
}

impl BoParams {
    pub fn acquisition(&self, seed: u64) -> AcquisitionConfig {
        AcquisitionConfig {
            epsilon: self.epsilon,
            candidate_count: self.candidate_count,
            iterations: self.iterations,
            init_samples: self.init_samples,
            seed,
        }
    }

    pub fn domain(&self, pipeline: Pipeline, p: usize, m: usize) -> Result<SearchDomain> {
        let name = match (&self.bounds, pipeline) {
            (Some(b), _) => b.as_str(),
            (None, Pipeline::ModelBased) => "bounds-observer",
            (None, Pipeline::DataDriven) => "bounds-datadriven",
        };
        let domain = match SearchDomain::preset(name, p, m) {
            Some(d) => d,
            None => {
                let text = std::fs::read_to_string(name).stage(Stage::Config)?;
                serde_json::from_str::<SearchDomain>(&text).stage(Stage::Config)?
            }
        };
        domain.validate().stage(Stage::Config)?;
        if domain.dim() != p + m {
            return Err(BenchError::invalid(Stage::Config, format!("bounds have {} entries, need {}", domain.dim(), p + m)));
        }
        Ok(domain)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// System description file; the extruder model when absent.
    pub system: Option<PathBuf>,
    pub pipeline: Pipeline,
    pub weights: WeightsSpec,
    pub gamma: f64,
    /// Closed-loop length.
    pub steps: usize,
    /// Step whose outputs are reported as final.
    pub report_step: usize,
    /// Seeds the initial gain, the probing noise and the tuner.
    pub seed: u64,
    pub observer: ObserverParams,
    pub data: DataParams,
    pub training: TrainingParams,
    pub bo: BoParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: None,
            pipeline: Pipeline::ModelBased,
            weights: WeightsSpec::default(),
            gamma: obs::GAMMA,
            steps: 1000,
            report_step: 100,
            seed: 0,
            observer: ObserverParams::default(),
            data: DataParams::default(),
            training: TrainingParams::default(),
            bo: BoParams::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).stage(Stage::Config)?;
        serde_json::from_str(&text).stage(Stage::Config)
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            gamma: self.gamma,
            mu: self.training.mu,
            eps_rl: self.training.eps_rl,
            max_iters: self.training.max_iters,
            horizon: self.training.horizon,
            h0: None,
        }
    }
}

/// Model, reference and the configured weights.
#[derive(Debug, Clone)]
pub struct Plant {
    pub model: StateSpaceModel,
    pub reference: ReferenceGenerator,
    pub weights: CostWeights,
    /// True for the built-in extruder model.
    pub is_paper: bool,
}

impl Plant {
    pub fn from_config(cfg: &ExperimentConfig) -> Result<Self> {
        let (sys, is_paper) = match &cfg.system {
            Some(path) => (SystemConfig::load(path).stage(Stage::Config)?, false),
            None => (SystemConfig::paper(), true),
        };
        let model = sys.model().stage(Stage::Config)?;
        let reference = sys.reference_generator().stage(Stage::Config)?;
        let weights = cfg.weights.resolve(model.p(), model.m(), cfg.gamma)?;
        Ok(Self {
            model,
            reference,
            weights,
            is_paper,
        })
    }

    pub fn data_gain(&self, cfg: &ExperimentConfig) -> Result<DMatrix<f64>> {
        match (&cfg.data.k_data, self.is_paper) {
            (Some(rows), _) => lqt_core::linalg::from_rows(rows).stage(Stage::Config),
            (None, true) => Ok(fixtures::paper_k_data()),
            (None, false) => {
                let (n, m) = (self.model.n(), self.model.m());
                let g = lqt_core::datagen::discrete_lqr_gain(&self.model, &DMatrix::identity(n, n), &DMatrix::identity(m, m))
                    .stage(Stage::Data)?;
                Ok(g.gain().clone())
            }
        }
    }
}

/// `--out`, then `$LQT_BENCH_OUT`, then `./results`.
pub fn output_root(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}
