//! Named reproduction runs, one per published figure or result.

use std::fs;
use std::path::Path;

use crate::compare::{compare_runs, Reduction};
use crate::config::{ExperimentConfig, NamedWeights, Pipeline, WeightsSpec};
use crate::error::{Result, Stage, StageExt};
use crate::experiment::{self, write_run, RunOutput};
use crate::tune::{tune, write_tune};

/// Seed of every repro run: the initial gain draw, the probing noise and the tuner.
pub const REPRO_SEED: u64 = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Repro {
    ObserverBaseline,
    ObserverBo,
    DdBaseline,
    DdBo,
    TuneObserver,
    TuneDd,
}

impl Repro {
    pub const ALL: [Repro; 6] = [
        Repro::ObserverBaseline,
        Repro::ObserverBo,
        Repro::DdBaseline,
        Repro::DdBo,
        Repro::TuneObserver,
        Repro::TuneDd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Repro::ObserverBaseline => "repro-observer-baseline",
            Repro::ObserverBo => "repro-observer-bo",
            Repro::DdBaseline => "repro-dd-baseline",
            Repro::DdBo => "repro-dd-bo",
            Repro::TuneObserver => "repro-tune-observer",
            Repro::TuneDd => "repro-tune-dd",
        }
    }

    /// What the run regenerates.
    pub fn target(self) -> &'static str {
        match self {
            Repro::ObserverBaseline => "Figures 2 and 3: observer outputs, index and estimation error with Q = I, R = I (Table 1)",
            Repro::ObserverBo => "Figure 4: observer outputs and index under the tuned Q*, R* of section 6.1, against the baseline",
            Repro::DdBaseline => "Figure 5: data-driven outputs and index with Q = I, R = I (Table 2)",
            Repro::DdBo => "Figure 6: data-driven outputs under the tuned Q*, R* of section 6.3, against the baseline",
            Repro::TuneObserver => "Section 6.1 search for Q*, R* (50 initial points, 100 iterations)",
            Repro::TuneDd => "Section 6.3 search for Q*, R* (50 initial points, 100 iterations)",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|r| r.name() == name || r.name().strip_prefix("repro-") == Some(name))
    }

    pub fn config(self) -> ExperimentConfig {
        let pipeline = match self {
            Repro::ObserverBaseline | Repro::ObserverBo | Repro::TuneObserver => Pipeline::ModelBased,
            _ => Pipeline::DataDriven,
        };
        let weights = match self {
            Repro::ObserverBo => WeightsSpec::Named(NamedWeights::ObserverBo),
            Repro::DdBo => WeightsSpec::Named(NamedWeights::DataDrivenBo),
            _ => WeightsSpec::default(),
        };
        ExperimentConfig {
            pipeline,
            weights,
            seed: REPRO_SEED,
            ..Default::default()
        }
    }
}

#[derive(Debug)]
pub enum ReproOutput {
    Run(Box<RunOutput>),
    Comparison {
        baseline: Box<RunOutput>,
        tuned: Box<RunOutput>,
        reduction: Reduction,
    },
    Tune(Box<crate::tune::TuneReport>),
}

/// Runs `repro` and writes its files under `root/<name>/`.
pub fn run(repro: Repro, root: &Path) -> Result<ReproOutput> {
    let dir = root.join(repro.name());
    let cfg = repro.config();
    match repro {
        Repro::ObserverBaseline | Repro::DdBaseline => {
            let out = experiment::run_experiment(&cfg)?;
            write_run(&dir, &out)?;
            Ok(ReproOutput::Run(Box::new(out)))
        }
        Repro::ObserverBo | Repro::DdBo => {
            let base_cfg = ExperimentConfig {
                weights: WeightsSpec::default(),
                ..cfg.clone()
            };
            let (baseline, tuned) = match cfg.pipeline {
                Pipeline::ModelBased => (experiment::run_model_based(&base_cfg)?, experiment::run_model_based(&cfg)?),
                Pipeline::DataDriven => {
                    // one dataset for both weight sets
                    let plant = crate::config::Plant::from_config(&cfg)?;
                    let base_plant = crate::config::Plant::from_config(&base_cfg)?;
                    let ds = experiment::dataset(&plant, &cfg)?;
                    let reg = experiment::regression(&ds, &cfg)?;
                    (
                        experiment::run_data_driven_with(&base_plant, &base_cfg, &reg)?,
                        experiment::run_data_driven_with(&plant, &cfg, &reg)?,
                    )
                }
            };
            write_run(&dir.join("baseline"), &baseline)?;
            write_run(&dir.join("tuned"), &tuned)?;
            let reduction = compare_runs(&baseline.summary, &tuned.summary)?;
            let json = serde_json::to_string_pretty(&reduction).stage(Stage::Persist)?;
            fs::write(dir.join("compare.json"), json + "\n").stage(Stage::Persist)?;
            Ok(ReproOutput::Comparison {
                baseline: Box::new(baseline),
                tuned: Box::new(tuned),
                reduction,
            })
        }
        Repro::TuneObserver | Repro::TuneDd => {
            let report = tune(&cfg)?;
            write_tune(&dir, &report)?;
            Ok(ReproOutput::Tune(Box::new(report)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for r in Repro::ALL {
            assert_eq!(Repro::parse(r.name()), Some(r));
        }
        assert_eq!(Repro::parse("dd-bo"), Some(Repro::DdBo));
        assert_eq!(Repro::parse("nope"), None);
    }

    #[test]
    fn repro_configs_use_the_published_settings() {
        let cfg = Repro::DdBo.config();
        assert_eq!(cfg.pipeline, Pipeline::DataDriven);
        assert_eq!(cfg.data.samples, 15_000);
        assert_eq!(cfg.training.max_iters, 1000);
        let cfg = Repro::TuneObserver.config();
        assert_eq!((cfg.bo.init_samples, cfg.bo.iterations), (50, 100));
    }
}
