use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use sicerp::dataset::{ingest, Dataset, FeatureMode};
use sicerp::experiment::{
    predict_all, run_experiment, split_indices, train_model, ExperimentConfig, IntegratorChoice,
    SplitSpec,
};
use sicerp::formats::{dump_level, read_json, write_json, write_srgb, ModelFile, RepresentationFile};
use sicerp::represent::{represent, RepresentationConfig, RepresentationKind};
use sicerp::synth::{synth_generate, Structure, SyntheticSpec};
use sicerp::Result;
use sicerp_core::kernel::BlockCache;
use sicerp_core::spd::KernelConfig;

#[derive(Parser)]
#[command(name = "sicerp", version, about = "SICE hierarchy representations and radius-margin kernel learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest or JSONL file and write normalized JSONL features.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        mode: Option<FeatureMode>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a seeded synthetic dataset.
    Synth(SynthArgs),
    /// Compute per-sample representations.
    Represent {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        rep: RepArgs,
        #[arg(long)]
        out: PathBuf,
        /// Also write the kernel block cache (SRGB).
        #[arg(long)]
        cache: Option<PathBuf>,
        /// Bandwidth for the cache; median heuristic when omitted.
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Cross-validate and train on the training split.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Evaluate a saved model on the test split.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        split_file: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate in one go and write a report.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Write one level of one sample as CSV.
    Dump {
        /// Representation or model file.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 0)]
        level: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct DataArgs {
    /// JSONL sequences or a JSON manifest.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    mode: Option<FeatureMode>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset> {
        ingest(&self.data, self.mode)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    seed: u64,
    /// JSON spec; the flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 20)]
    d: usize,
    #[arg(long, default_value_t = 12)]
    m_min: usize,
    #[arg(long, default_value_t = 18)]
    m_max: usize,
    #[arg(long, default_value_t = 30)]
    train_per_class: usize,
    #[arg(long, default_value_t = 30)]
    test_per_class: usize,
    /// Comma-separated: chain, grid, random:<density>.
    #[arg(long, default_value = "chain,grid,random:0.1")]
    structures: String,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long)]
    out: PathBuf,
    /// Ground-truth precision matrices.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Explicit train/test id lists.
    #[arg(long)]
    split_out: Option<PathBuf>,
}

#[derive(Args)]
struct RepArgs {
    #[arg(long, value_enum, default_value = "sice")]
    representation: RepresentationKind,
    #[arg(long, default_value_t = 10)]
    levels: usize,
    #[arg(long, default_value_t = 0.01)]
    ratio: f64,
    #[arg(long, default_value_t = 1e-7)]
    eps: f64,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 1000)]
    max_iter: usize,
}

impl RepArgs {
    fn config(&self) -> RepresentationConfig {
        RepresentationConfig {
            kind: self.representation,
            levels: self.levels,
            ratio: self.ratio,
            eps: self.eps,
            tol: self.tol,
            max_iter: self.max_iter,
        }
    }
}

#[derive(Args)]
struct ExperimentArgs {
    #[command(flatten)]
    rep: RepArgs,
    #[arg(long, value_enum, default_value = "single")]
    integrator: IntegratorChoice,
    /// Fixed level for `single`; cross-validated when omitted.
    #[arg(long)]
    level: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
    gamma_multipliers: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,1,10,100")]
    c_grid: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long)]
    seed: u64,
    /// JSON `{"train": [ids], "test": [ids]}`; odd/even subjects otherwise.
    #[arg(long)]
    split_file: Option<PathBuf>,
    /// Weight-learning iterations.
    #[arg(long, default_value_t = 100)]
    opt_iter: usize,
    #[arg(long, default_value_t = 1e-5)]
    tau: f64,
}

#[derive(Serialize, Deserialize)]
struct SplitFile {
    train: Vec<String>,
    test: Vec<String>,
}

fn split_from(path: Option<&Path>) -> Result<SplitSpec> {
    Ok(match path {
        Some(p) => {
            let f: SplitFile = read_json(p)?;
            SplitSpec::Explicit {
                train: f.train,
                test: f.test,
            }
        }
        None => SplitSpec::OddEvenSubject,
    })
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::new(self.rep.config(), self.integrator, self.seed);
        cfg.level = self.level;
        cfg.gamma = self.gamma;
        cfg.gamma_multipliers = self.gamma_multipliers.clone();
        cfg.c_grid = self.c_grid.clone();
        cfg.folds = self.folds;
        cfg.split = split_from(self.split_file.as_deref())?;
        cfg.max_iter = self.opt_iter;
        cfg.tau = self.tau;
        Ok(cfg)
    }
}

fn timing_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    report.with_file_name(format!("{stem}.timing.json"))
}

#[derive(Serialize)]
struct EvalReport {
    accuracy: f64,
    n_test: usize,
    predictions: Vec<sicerp::experiment::PredictionRecord>,
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Ingest { input, mode, out } => {
            let data = ingest(&input, mode)?;
            data.write_jsonl(&out)?;
            log::info!("{} samples written to {}", data.len(), out.display());
        }
        Command::Synth(args) => {
            let spec = match &args.spec {
                Some(p) => {
                    let mut s: SyntheticSpec = read_json(p)?;
                    s.seed = args.seed;
                    s
                }
                None => SyntheticSpec {
                    d: args.d,
                    m_min: args.m_min,
                    m_max: args.m_max,
                    train_per_class: args.train_per_class,
                    test_per_class: args.test_per_class,
                    classes: args
                        .structures
                        .split(',')
                        .map(|s| Structure::parse(s.trim()))
                        .collect::<Result<_>>()?,
                    noise: args.noise,
                    seed: args.seed,
                },
            };
            let data = synth_generate(&spec)?;
            data.dataset.write_jsonl(&args.out)?;
            if let Some(p) = &args.truth {
                write_json(p, &data.ground_truth(&spec))?;
            }
            if let Some(p) = &args.split_out {
                write_json(
                    p,
                    &SplitFile {
                        train: data.train_ids.clone(),
                        test: data.test_ids.clone(),
                    },
                )?;
            }
        }
        Command::Represent {
            data,
            rep,
            out,
            cache,
            gamma,
        } => {
            let dataset = data.load()?;
            let cfg = rep.config();
            let reps = represent(&dataset, &cfg)?;
            write_json(&out, &RepresentationFile::new(cfg, &dataset, &reps))?;
            if let Some(path) = cache {
                let c = BlockCache::build(&reps)?;
                let kcfg = match gamma {
                    Some(g) => KernelConfig::new(g)?,
                    None => KernelConfig::median_heuristic(&c.same_level_squared_distances(None)),
                };
                write_srgb(&path, &c.kernel_blocks(kcfg))?;
            }
        }
        Command::Train { data, exp, model } => {
            let dataset = data.load()?;
            let cfg = exp.config()?;
            let (train, _) = split_indices(&dataset, &cfg.split)?;
            let train_set = Dataset {
                samples: train.iter().map(|i| dataset.samples[*i].clone()).collect(),
            };
            let (file, _, selected) = train_model(&cfg, &train_set)?;
            log::info!("selected {selected:?}");
            write_json(&model, &file)?;
        }
        Command::Eval {
            data,
            model,
            split_file,
            out,
        } => {
            let dataset = data.load()?;
            let file: ModelFile = read_json(&model)?;
            let classifier = file.to_classifier()?;
            let (_, test) = split_indices(&dataset, &split_from(split_file.as_deref())?)?;
            let test_set = Dataset {
                samples: test.iter().map(|i| dataset.samples[*i].clone()).collect(),
            };
            let reps = represent(&test_set, &file.representation)?;
            let predicted = predict_all(&classifier, &reps)?;
            let predictions: Vec<_> = test_set
                .samples
                .iter()
                .zip(&predicted)
                .map(|(s, p)| sicerp::experiment::PredictionRecord {
                    id: s.id.clone(),
                    label: s.label.clone(),
                    predicted: file.class_labels[*p].clone(),
                })
                .collect();
            let correct = predictions.iter().filter(|p| p.label == p.predicted).count();
            write_json(
                &out,
                &EvalReport {
                    accuracy: correct as f64 / predictions.len() as f64,
                    n_test: predictions.len(),
                    predictions,
                },
            )?;
        }
        Command::Run { data, exp, out, model } => {
            let dataset = data.load()?;
            let cfg = exp.config()?;
            let outcome = run_experiment(&cfg, &dataset)?;
            write_json(&out, &outcome.report)?;
            write_json(&timing_path(&out), &outcome.timing)?;
            if let Some(p) = model {
                write_json(&p, &outcome.model)?;
            }
            println!("accuracy {:.4}", outcome.report.accuracy);
        }
        Command::Dump { input, id, level, out } => {
            dump_level(&input, &id, level, &out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn,sicerp_core::glasso=error")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
