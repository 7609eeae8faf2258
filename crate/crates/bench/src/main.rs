use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lqt_bench::config::{output_root, Pipeline, Plant, WeightsSpec, OUTPUT_ROOT_ENV};
use lqt_bench::error::{Result, Stage, StageExt};
use lqt_bench::experiment::{self, write_run, RunOutput};
use lqt_bench::kernel_io::{load_kernel, save_kernel, KernelHeader};
use lqt_bench::repro::{self, Repro, ReproOutput};
use lqt_bench::{compare_runs, tune, ExperimentConfig, Summary};

#[derive(Parser)]
#[command(name = "lqt-bench", version, about = "Observer-based and data-driven LQT experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON); every field is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root.
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `identity`, `observer-bo`, `data-driven-bo` or a JSON file with `q` and `r`.
    #[arg(long)]
    weights: Option<String>,
    /// Closed-loop steps.
    #[arg(long)]
    steps: Option<usize>,
}

impl Common {
    fn load(&self, pipeline: Option<Pipeline>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(p) = pipeline {
            cfg.pipeline = p;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.weights {
            cfg.weights = WeightsSpec::parse(w)?;
        }
        if let Some(n) = self.steps {
            cfg.steps = n;
        }
        Ok(cfg)
    }

    fn dir(&self, name: &str) -> PathBuf {
        output_root(self.out.as_deref()).join(name)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Record an input-output dataset under the stabilizing feedback.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV; the JSON sidecar goes next to it.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Observer-based controller: solve, then run the closed loop.
    ModelBased {
        #[command(flatten)]
        common: Common,
    },
    /// Learn a kernel from data.
    Train {
        #[command(flatten)]
        common: Common,
        /// Dataset CSV; generated from the config when absent.
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Kernel CSV to write.
        #[arg(long)]
        kernel: Option<PathBuf>,
    },
    /// Closed loop from a saved kernel.
    RunDd {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        kernel: PathBuf,
    },
    /// Full data-driven pipeline: data, training and closed loop.
    DataDriven {
        #[command(flatten)]
        common: Common,
    },
    /// Bayesian optimization of the diagonal weights.
    Tune {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_pipeline)]
        pipeline: Option<Pipeline>,
    },
    /// Reductions of the second run against the first.
    Compare { a: PathBuf, b: PathBuf },
    /// Figures 2 and 3.
    ReproObserverBaseline(ReproArgs),
    /// Figure 4.
    ReproObserverBo(ReproArgs),
    /// Figure 5.
    ReproDdBaseline(ReproArgs),
    /// Figure 6.
    ReproDdBo(ReproArgs),
    /// Tuned weights of section 6.1.
    ReproTuneObserver(ReproArgs),
    /// Tuned weights of section 6.3.
    ReproTuneDd(ReproArgs),
}

#[derive(Args)]
struct ReproArgs {
    #[arg(long, env = OUTPUT_ROOT_ENV)]
    out: Option<PathBuf>,
}

fn parse_pipeline(s: &str) -> std::result::Result<Pipeline, String> {
    match s {
        "model-based" | "observer" => Ok(Pipeline::ModelBased),
        "data-driven" | "dd" => Ok(Pipeline::DataDriven),
        _ => Err(format!("unknown pipeline {s:?}")),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value).stage(Stage::Persist)?);
    Ok(())
}

fn finish(dir: &Path, out: &RunOutput) -> Result<()> {
    write_run(dir, out)?;
    print_json(&out.summary)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, dataset } => {
            let cfg = common.load(Some(Pipeline::DataDriven))?;
            let plant = Plant::from_config(&cfg)?;
            let ds = experiment::dataset(&plant, &cfg)?;
            let path = dataset.unwrap_or_else(|| common.dir("gen-data").join("dataset.csv"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).stage(Stage::Persist)?;
            }
            ds.save(&path).stage(Stage::Persist)?;
            eprintln!("wrote {} samples to {}", ds.len(), path.display());
        }
        Command::ModelBased { common } => {
            let cfg = common.load(Some(Pipeline::ModelBased))?;
            finish(&common.dir("model-based"), &experiment::run_model_based(&cfg)?)?;
        }
        Command::Train { common, dataset, kernel } => {
            let mut cfg = common.load(Some(Pipeline::DataDriven))?;
            if dataset.is_some() {
                cfg.data.dataset = dataset;
            }
            let plant = Plant::from_config(&cfg)?;
            let ds = experiment::dataset(&plant, &cfg)?;
            let reg = experiment::regression(&ds, &cfg)?;
            let tcfg = cfg.training();
            let outcome = reg.train(&tcfg, &plant.weights).stage(Stage::Train)?;
            let header = KernelHeader::new(&outcome, &tcfg, &plant.weights, ds.len(), ds.meta.seed, ds.meta.model_hash.clone());
            let path = kernel.unwrap_or_else(|| common.dir("train").join("kernel.csv"));
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).stage(Stage::Persist)?;
            }
            save_kernel(&path, &outcome.kernel, &header)?;
            eprintln!(
                "{} after {} iterations (last change {:.3e}); kernel written to {}",
                if outcome.converged { "converged" } else { "stopped" },
                outcome.iterations,
                outcome.final_delta(),
                path.display()
            );
        }
        Command::RunDd { common, kernel } => {
            let mut cfg = common.load(Some(Pipeline::DataDriven))?;
            let (k, header) = load_kernel(&kernel)?;
            let start = std::time::Instant::now();
            let mut plant = Plant::from_config(&cfg)?;
            if common.weights.is_none() {
                plant.weights = header.weights()?;
            }
            cfg.gamma = plant.weights.gamma();
            let trace = experiment::simulate_data_driven(&plant, &cfg, &plant.weights, &k, cfg.steps)?;
            let summary = Summary::from_trace(&cfg, &plant.weights, &trace, header.training.iterations, header.training.converged, start.elapsed().as_secs_f64())?;
            let out = RunOutput {
                summary,
                trace,
                solution: None,
                training: None,
            };
            finish(&common.dir("run-dd"), &out)?;
        }
        Command::DataDriven { common } => {
            let cfg = common.load(Some(Pipeline::DataDriven))?;
            finish(&common.dir("data-driven"), &experiment::run_data_driven(&cfg)?)?;
        }
        Command::Tune { common, pipeline } => {
            let cfg = common.load(pipeline)?;
            let report = tune::tune(&cfg)?;
            tune::write_tune(&common.dir("tune"), &report)?;
            print_json(&report.best)?;
        }
        Command::Compare { a, b } => {
            let (a, b) = (experiment::read_summary(&a)?, experiment::read_summary(&b)?);
            print_json(&compare_runs(&a, &b)?)?;
        }
        Command::ReproObserverBaseline(args) => run_repro(Repro::ObserverBaseline, args)?,
        Command::ReproObserverBo(args) => run_repro(Repro::ObserverBo, args)?,
        Command::ReproDdBaseline(args) => run_repro(Repro::DdBaseline, args)?,
        Command::ReproDdBo(args) => run_repro(Repro::DdBo, args)?,
        Command::ReproTuneObserver(args) => run_repro(Repro::TuneObserver, args)?,
        Command::ReproTuneDd(args) => run_repro(Repro::TuneDd, args)?,
    }
    Ok(())
}

fn run_repro(which: Repro, args: ReproArgs) -> Result<()> {
    eprintln!("{}: {}", which.name(), which.target());
    match repro::run(which, &output_root(args.out.as_deref()))? {
        ReproOutput::Run(out) => print_json(&out.summary),
        ReproOutput::Comparison { reduction, .. } => print_json(&reduction),
        ReproOutput::Tune(report) => print_json(&report.best),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lqt-bench: {e}");
            ExitCode::from(e.stage().exit_code())
        }
    }
}
