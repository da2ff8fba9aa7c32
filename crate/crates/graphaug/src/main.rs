use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use graphaug::config::{DatasetKind, ExperimentConfig};
use graphaug::pipeline::{self, Experiment, Method, Workspace};
use graphaug::{report, text};
use graphaug_core::datasets::{SyntheticConfig, SyntheticKind};
use graphaug_core::transforms::Category;

#[derive(Parser)]
#[command(name = "graphaug", version, about = "Learned label-invariant augmentation for graph classification")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset file and its class histogram.
    GenData {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "data")]
        out: PathBuf,
    },
    /// Train the pair-matching reward model.
    TrainReward(Common),
    /// Train the augmentation policy against a trained reward model.
    TrainPolicy {
        #[command(flatten)]
        common: Common,
        /// Reward checkpoint (default: reward.ckpt in the output directory).
        #[arg(long)]
        reward: Option<PathBuf>,
    },
    /// Train and test classifiers with one augmentation method.
    TrainClassifier {
        #[command(flatten)]
        common: Common,
        /// none, uniform-{masknf,dropnode,perturbedge,dropedge},
        /// gt-{masknf,dropnode,perturbedge}, graphaug
        #[arg(long, default_value = "none")]
        augmentation: String,
        /// Policy checkpoint (default: policy.ckpt in the output directory).
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Run a complete experiment.
    Reproduce {
        #[command(flatten)]
        common: Common,
        /// colors-ordering, triangles-perturb, colors-graphaug,
        /// triangles-probe or mutag-cv
        #[arg(long)]
        experiment: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Colors,
    Triangles,
}

#[derive(Clone, Copy, ValueEnum)]
enum SingleCategory {
    Masknf,
    Dropnode,
    Perturbedge,
}

#[derive(Args)]
struct Common {
    /// TOML configuration; unset keys take the dataset's defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// colors, triangles, a dataset file or a TU directory.
    #[arg(long)]
    dataset: Option<String>,
    /// Policy picks only categories; elements use the uniform rate.
    #[arg(long)]
    category_only: bool,
    /// Policy always uses this category.
    #[arg(long, value_enum, conflicts_with = "category_only")]
    single_category: Option<SingleCategory>,
    /// Reward model without cross-graph attention messages.
    #[arg(long)]
    no_cross_graph: bool,
    /// Write SVG charts next to the CSV files.
    #[arg(long)]
    plots: bool,
}

fn dataset_override(spec: &str) -> Result<(DatasetKind, Option<PathBuf>)> {
    Ok(match spec {
        "colors" => (DatasetKind::Colors, None),
        "triangles" => (DatasetKind::Triangles, None),
        path => {
            let p = Path::new(path);
            if p.is_dir() {
                (DatasetKind::Tu, Some(p.into()))
            } else if p.is_file() {
                (DatasetKind::File, Some(p.into()))
            } else {
                bail!("--dataset {path}: not colors, triangles, a file or a directory");
            }
        }
    })
}

impl Common {
    fn resolve(&self, default: DatasetKind) -> Result<(ExperimentConfig, Workspace)> {
        let over = self.dataset.as_deref().map(dataset_override).transpose()?;
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::preset(over.as_ref().map_or(default, |(k, _)| *k)),
        };
        if let Some((kind, path)) = over {
            config.dataset.kind = kind;
            config.dataset.path = path;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if self.category_only {
            config.set_category_only();
        }
        if let Some(c) = self.single_category {
            config.set_single_category(match c {
                SingleCategory::Masknf => Category::MaskNf,
                SingleCategory::Dropnode => Category::DropNode,
                SingleCategory::Perturbedge => Category::PerturbEdge,
            });
        }
        if self.no_cross_graph {
            config.reward.cross_graph = false;
        }
        config.experiment.plots |= self.plots;
        config.validate()?;
        let ws = Workspace::create(&self.out)?;
        Ok((config, ws))
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { kind, n, seed, out } => {
            let kind = match kind {
                Kind::Colors => SyntheticKind::Colors,
                Kind::Triangles => SyntheticKind::Triangles,
            };
            let dataset = kind.generate(&SyntheticConfig::with_size(n), seed)?;
            std::fs::create_dir_all(&out).with_context(|| out.display().to_string())?;
            let path = out.join(format!("{}.txt", kind.name()));
            text::write_dataset(&path, &dataset)?;
            #[derive(serde::Serialize)]
            struct Row {
                label: usize,
                count: usize,
            }
            let hist = dataset.class_histogram();
            report::write_rows(
                &out.join(format!("{}_summary.csv", kind.name())),
                hist.iter().enumerate().map(|(i, &count)| Row { label: i + 1, count }),
            )?;
            println!("wrote {} graphs to {}", dataset.len(), path.display());
            for (i, c) in hist.iter().enumerate() {
                println!("label {:>2}: {c}", i + 1);
            }
        }
        Command::TrainReward(common) => {
            let (config, ws) = common.resolve(DatasetKind::Colors)?;
            ws.write_config(&config)?;
            let data = pipeline::load_data(&config)?;
            let (_, stage) = pipeline::train_reward_stage(&config, &data, &ws)?;
            println!("held-out pair accuracy {:.4}", stage.pair_accuracy);
        }
        Command::TrainPolicy { common, reward } => {
            let (config, ws) = common.resolve(DatasetKind::Colors)?;
            let reward = pipeline::load_reward(&ws, reward.as_deref())?;
            ws.write_config(&config)?;
            let data = pipeline::load_data(&config)?;
            let (_, history) = pipeline::train_policy_stage(&config, &data, &reward, &ws, "policy")?;
            if let Some(r) = history.epoch_mean_reward.last() {
                println!("final mean reward {r:.4}");
            }
        }
        Command::TrainClassifier { common, augmentation, policy } => {
            let (config, ws) = common.resolve(DatasetKind::Colors)?;
            let method =
                Method::from_name(&augmentation).with_context(|| format!("unknown augmentation `{augmentation}`"))?;
            let policy = match method {
                Method::GraphAug | Method::CategoryOnly => Some(pipeline::load_policy(&ws, policy.as_deref())?),
                _ => None,
            };
            ws.write_config(&config)?;
            let data = pipeline::load_data(&config)?;
            let aug = pipeline::augmentation(method, &config, data.synthetic_kind(), policy.as_ref())?;
            let mut log = pipeline::RunLog::new();
            let report = pipeline::run_fixed(&config, &data, method, &aug, &mut log)?;
            let reports = [report];
            report::write_results(&ws.path("results.csv"), &reports)?;
            report::write_classifier_log(&ws.path("classifier_log.csv"), &log)?;
            print!("{}", report::summary_table(&reports));
        }
        Command::Reproduce { common, experiment } => {
            let exp = Experiment::from_name(&experiment).with_context(|| {
                let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.name()).collect();
                format!("unknown experiment `{experiment}` (expected one of {})", names.join(", "))
            })?;
            let (config, ws) = common.resolve(exp.default_dataset())?;
            pipeline::reproduce(exp, &config, &ws)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
