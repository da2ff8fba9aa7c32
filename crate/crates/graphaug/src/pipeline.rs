//! Training stages and reproducible experiments over one output directory.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use graphaug_core::datasets::{kfold_splits, Dataset, Split, SyntheticKind};
use graphaug_core::policy::PolicyModel;
use graphaug_core::reward::{evaluate_pairs, pair_accuracy, pairable, sample_pairs, RewardHistory, RewardModel};
use graphaug_core::rng;
use graphaug_core::trainer::{
    run_cv, train_classifier, train_policy, Augmentation, ClassifierRun, EvalReport, PolicyHistory, RunEntry,
};
use graphaug_core::transforms::{gt_defined, Category, TransformKind};
use serde::Serialize;

use crate::checkpoint;
use crate::config::{DatasetKind, ExperimentConfig};
use crate::error::{Error, Result};
use crate::plot;
use crate::report;
use crate::text;
use crate::tu;

pub const REWARD_CKPT: &str = "reward.ckpt";
pub const POLICY_CKPT: &str = "policy.ckpt";
pub const CATEGORY_ONLY_CKPT: &str = "policy-category-only.ckpt";

const REWARD_STREAM: u64 = 1;
const POLICY_STREAM: u64 = 2;
const PAIR_EVAL_STREAM: u64 = 3;

/// Classifier training-data treatment, named as in the result files.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    None,
    Uniform(TransformKind),
    Gt(Category),
    GraphAug,
    CategoryOnly,
}

impl Method {
    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "none" => Some(Method::None),
            "graphaug" => Some(Method::GraphAug),
            "graphaug-category-only" => Some(Method::CategoryOnly),
            _ => {
                if let Some(kind) = name.strip_prefix("uniform-") {
                    TransformKind::from_name(kind).map(Method::Uniform)
                } else if let Some(cat) = name.strip_prefix("gt-") {
                    Category::from_name(cat).map(Method::Gt)
                } else {
                    None
                }
            }
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::None => f.write_str("none"),
            Method::Uniform(kind) => write!(f, "uniform-{}", kind.name()),
            Method::Gt(cat) => write!(f, "gt-{}", cat.name()),
            Method::GraphAug => f.write_str("graphaug"),
            Method::CategoryOnly => f.write_str("graphaug-category-only"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    ColorsOrdering,
    TrianglesPerturb,
    ColorsGraphaug,
    TrianglesProbe,
    MutagCv,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::ColorsOrdering,
        Experiment::TrianglesPerturb,
        Experiment::ColorsGraphaug,
        Experiment::TrianglesProbe,
        Experiment::MutagCv,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ColorsOrdering => "colors-ordering",
            Experiment::TrianglesPerturb => "triangles-perturb",
            Experiment::ColorsGraphaug => "colors-graphaug",
            Experiment::TrianglesProbe => "triangles-probe",
            Experiment::MutagCv => "mutag-cv",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == name)
    }

    /// Dataset kind the experiment runs on when the config leaves it open.
    pub fn default_dataset(self) -> DatasetKind {
        match self {
            Experiment::ColorsOrdering | Experiment::ColorsGraphaug => DatasetKind::Colors,
            Experiment::TrianglesPerturb | Experiment::TrianglesProbe => DatasetKind::Triangles,
            Experiment::MutagCv => DatasetKind::Tu,
        }
    }
}

/// Output directory of a run.
#[derive(Clone, Debug)]
pub struct Workspace {
    pub dir: PathBuf,
}

impl Workspace {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self { dir })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Writes the resolved configuration and its hash.
    pub fn write_config(&self, config: &ExperimentConfig) -> Result<()> {
        let path = self.path("config.toml");
        fs::write(&path, config.to_toml()).map_err(|e| Error::io(&path, e))?;
        let path = self.path("config.sha256");
        fs::write(&path, format!("{}\n", config.hash())).map_err(|e| Error::io(&path, e))
    }

    /// Path of a checkpoint written by an earlier stage.
    pub fn require(&self, file: &str, stage: &'static str) -> Result<PathBuf> {
        let path = self.path(file);
        if path.is_file() {
            Ok(path)
        } else {
            Err(Error::MissingStage { stage, path })
        }
    }
}

#[derive(Clone, Debug)]
pub struct Data {
    pub dataset: Dataset,
    pub split: Split,
}

impl Data {
    pub fn synthetic_kind(&self) -> Option<SyntheticKind> {
        self.dataset.synthetic_kind()
    }
}

/// Generates or reads the configured dataset and its train/val/test split.
/// Synthetic and file datasets split contiguously; TU datasets use the first
/// fold of a stratified `experiment.folds`-fold assignment.
pub fn load_data(config: &ExperimentConfig) -> Result<Data> {
    let d = &config.dataset;
    let dataset = match d.kind {
        DatasetKind::Colors => SyntheticKind::Colors.generate(&d.synthetic(), config.dataset_seed())?,
        DatasetKind::Triangles => SyntheticKind::Triangles.generate(&d.synthetic(), config.dataset_seed())?,
        DatasetKind::File => text::read_dataset(d.path.as_deref().expect("validated"))?,
        DatasetKind::Tu => {
            let tu = tu::parse_tu_dataset(d.path.as_deref().expect("validated"), d.degree_cap)?;
            let spec = kfold_splits(&tu.dataset.labels(), config.experiment.folds, config.dataset_seed())?;
            return Ok(Data { split: spec.split(0), dataset: tu.dataset });
        }
    };
    let n = dataset.len();
    let split = if d.n_train + d.n_val + d.n_test == n {
        Split::contiguous(d.n_train, d.n_val, d.n_test)
    } else {
        let (train, val) = (n * 8 / 10, n / 10);
        log::info!("{n} graphs do not match the configured split sizes; using {train}/{val}/{}", n - train - val);
        Split::contiguous(train, val, n - train - val)
    };
    Ok(Data { dataset, split })
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardStage {
    pub history: RewardHistory,
    /// Accuracy on balanced pairs drawn from validation and test graphs.
    pub pair_accuracy: f64,
    /// Mean score on same-label and on different-label held-out pairs.
    pub mean_same: f64,
    pub mean_different: f64,
}

/// Trains the reward model on the training graphs and writes
/// `reward.ckpt`, `reward_log.csv` and `pair_eval.csv`.
pub fn train_reward_stage(
    config: &ExperimentConfig,
    data: &Data,
    ws: &Workspace,
) -> Result<(RewardModel, RewardStage)> {
    let seed = rng::derive_seed(config.seed, REWARD_STREAM);
    let (model, history) =
        graphaug_core::reward::train_reward_model(&data.dataset, &data.split.train, &config.reward, seed)?;
    checkpoint::save_reward(&ws.path(REWARD_CKPT), &model, seed, config.reward.epochs as u64)?;
    report::write_reward_log(&ws.path("reward_log.csv"), &history)?;
    let held_out: Vec<usize> = data.split.val.iter().chain(&data.split.test).copied().collect();
    let candidates = pairable(&data.dataset, &held_out, config.reward.max_nodes);
    let mut r = rng::stream(seed, PAIR_EVAL_STREAM);
    let pairs = sample_pairs(&data.dataset, &candidates, config.experiment.eval_pairs, &mut r)?;
    let evals = evaluate_pairs(&model, &data.dataset, &pairs)?;
    report::write_pair_eval(&ws.path("pair_eval.csv"), &evals)?;
    let mean = |same: bool| {
        let s: Vec<f64> = evals.iter().filter(|e| (e.label1 == e.label2) == same).map(|e| e.score).collect();
        s.iter().sum::<f64>() / s.len().max(1) as f64
    };
    let stage = RewardStage {
        history,
        pair_accuracy: pair_accuracy(&evals),
        mean_same: mean(true),
        mean_different: mean(false),
    };
    log::info!("reward model: held-out pair accuracy {:.4}", stage.pair_accuracy);
    Ok((model, stage))
}

/// Trains a policy against `reward` and writes `<name>.ckpt` and
/// `<name>_log.csv`.
pub fn train_policy_stage(
    config: &ExperimentConfig,
    data: &Data,
    reward: &RewardModel,
    ws: &Workspace,
    name: &str,
) -> Result<(PolicyModel, PolicyHistory)> {
    let seed = rng::derive_seed(config.seed, POLICY_STREAM);
    let (policy, history) = train_policy(&data.dataset, &data.split.train, reward, &config.policy, &config.rl, seed)?;
    checkpoint::save_policy(&ws.path(&format!("{name}.ckpt")), &policy, seed, config.rl.epochs as u64)?;
    report::write_policy_log(&ws.path(&format!("{name}_log.csv")), &history)?;
    if config.experiment.plots {
        let svg = plot::curves(&[("mean reward".into(), history.epoch_mean_reward.clone())], &format!("{name} reward"));
        plot::write(&ws.path(&format!("{name}_reward.svg")), &svg)?;
    }
    Ok((policy, history))
}

/// Builds the augmentation for `method`; learned methods take their policy
/// from `policy`.
pub fn augmentation(
    method: Method,
    config: &ExperimentConfig,
    dataset: Option<SyntheticKind>,
    policy: Option<&PolicyModel>,
) -> Result<Augmentation> {
    let rate = config.experiment.rate;
    Ok(match method {
        Method::None => Augmentation::None,
        Method::Uniform(kind) => Augmentation::Uniform { kind, rate },
        Method::Gt(category) => {
            let dataset = dataset.filter(|&d| gt_defined(d, category)).ok_or_else(|| {
                graphaug_core::Error::UndefinedTransform(format!(
                    "{method} needs a dataset with a label oracle that allows it"
                ))
            })?;
            Augmentation::Gt { dataset, category, rate }
        }
        Method::GraphAug | Method::CategoryOnly => {
            let model = policy.ok_or_else(|| Error::Config(format!("{method} needs a trained policy")))?;
            let cap_fraction = if config.experiment.classifier_cap { model.config().cap_fraction } else { 0.0 };
            Augmentation::Policy { model: Box::new(model.clone()), cap_fraction }
        }
    })
}

pub type RunLog = Vec<(String, u64, ClassifierRun)>;

/// `experiment.seeds` classifier runs on the fixed split, seeds
/// `config.seed + i`.
pub fn run_fixed(
    config: &ExperimentConfig,
    data: &Data,
    method: Method,
    aug: &Augmentation,
    log: &mut RunLog,
) -> Result<EvalReport> {
    let mut entries = Vec::with_capacity(config.experiment.seeds);
    for i in 0..config.experiment.seeds as u64 {
        let seed = config.seed + i;
        let (_, run) = train_classifier(&data.dataset, &data.split, aug, &config.classifier, seed)?;
        log::info!("{method} seed {seed}: test accuracy {:.4} (best epoch {})", run.test_accuracy, run.best_epoch);
        entries.push(RunEntry { fold: 0, seed, accuracy: run.test_accuracy });
        log.push((method.to_string(), seed, run));
    }
    Ok(EvalReport::new(method.to_string(), data.dataset.name.clone(), model_name(config), entries))
}

fn model_name(config: &ExperimentConfig) -> &'static str {
    match config.classifier.kind {
        graphaug_core::nn::GnnKind::Gin => "gin",
        graphaug_core::nn::GnnKind::Gcn => "gcn",
    }
}

/// Mean DropNode probability over triangle-member and non-member nodes,
/// pooled across graphs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DropProbe {
    pub graphs: usize,
    pub member_nodes: usize,
    pub member_mean: f64,
    pub other_nodes: usize,
    pub other_mean: f64,
}

pub fn probe_drop_probabilities(policy: &PolicyModel, dataset: &Dataset, indices: &[usize]) -> Result<DropProbe> {
    let (mut ms, mut mn, mut os, mut on) = (0.0, 0usize, 0.0, 0usize);
    for &i in indices {
        let g = &dataset.graphs[i].graph;
        let member = graphaug_core::datasets::triangle_nodes(g);
        for (p, m) in policy.drop_probabilities(g)?.into_iter().zip(member) {
            if m {
                ms += p as f64;
                mn += 1;
            } else {
                os += p as f64;
                on += 1;
            }
        }
    }
    Ok(DropProbe {
        graphs: indices.len(),
        member_nodes: mn,
        member_mean: ms / mn.max(1) as f64,
        other_nodes: on,
        other_mean: os / on.max(1) as f64,
    })
}

#[derive(Clone, Debug, Default)]
pub struct Outcome {
    pub reports: Vec<EvalReport>,
    pub reward: Option<RewardStage>,
    pub policy: Option<PolicyHistory>,
    pub category_only_policy: Option<PolicyHistory>,
    pub probe: Option<DropProbe>,
}

impl Outcome {
    pub fn report(&self, method: &str) -> Option<&EvalReport> {
        self.reports.iter().find(|r| r.method == method)
    }
}

fn write_reports(
    config: &ExperimentConfig,
    ws: &Workspace,
    outcome: &Outcome,
    log: &RunLog,
    title: &str,
) -> Result<()> {
    report::write_results(&ws.path("results.csv"), &outcome.reports)?;
    report::write_summary(&ws.path("ordering.csv"), &outcome.reports)?;
    if !log.is_empty() {
        report::write_classifier_log(&ws.path("classifier_log.csv"), log)?;
    }
    if config.experiment.plots && !outcome.reports.is_empty() {
        plot::write(&ws.path("accuracy.svg"), &plot::accuracy_bars(&outcome.reports, title))?;
    }
    Ok(())
}

fn expect_dataset(experiment: Experiment, config: &ExperimentConfig, data: &Data) -> Result<()> {
    let want = match experiment.default_dataset() {
        DatasetKind::Colors => Some(SyntheticKind::Colors),
        DatasetKind::Triangles => Some(SyntheticKind::Triangles),
        _ => None,
    };
    if want.is_some() && data.synthetic_kind() != want {
        return Err(Error::Config(format!(
            "{} runs on {}, not on {}",
            experiment.name(),
            want.map_or("", |k| k.name()),
            config.dataset.name()
        )));
    }
    Ok(())
}

/// Runs `experiment` end to end, writing every artefact into `ws`.
pub fn reproduce(experiment: Experiment, config: &ExperimentConfig, ws: &Workspace) -> Result<Outcome> {
    ws.write_config(config)?;
    let data = load_data(config)?;
    expect_dataset(experiment, config, &data)?;
    let kind = data.synthetic_kind();
    let mut outcome = Outcome::default();
    let mut log = RunLog::new();
    let fixed = |methods: &[Method], policies: &[(Method, &PolicyModel)], outcome: &mut Outcome, log: &mut RunLog| {
        for &m in methods {
            let policy = policies.iter().find(|(pm, _)| *pm == m).map(|(_, p)| *p);
            let aug = augmentation(m, config, kind, policy)?;
            outcome.reports.push(run_fixed(config, &data, m, &aug, log)?);
        }
        Ok::<_, Error>(())
    };
    match experiment {
        Experiment::ColorsOrdering => {
            let methods = [Method::Gt(Category::MaskNf), Method::None, Method::Uniform(TransformKind::MaskNf)];
            fixed(&methods, &[], &mut outcome, &mut log)?;
        }
        Experiment::TrianglesPerturb => {
            let methods = [Method::None, Method::Uniform(TransformKind::PerturbEdge)];
            fixed(&methods, &[], &mut outcome, &mut log)?;
        }
        Experiment::ColorsGraphaug => {
            let (reward, stage) = train_reward_stage(config, &data, ws)?;
            outcome.reward = Some(stage);
            let (policy, history) = train_policy_stage(config, &data, &reward, ws, "policy")?;
            outcome.policy = Some(history);
            let mut ablated = config.clone();
            ablated.set_category_only();
            let (cat_policy, history) = train_policy_stage(&ablated, &data, &reward, ws, "policy-category-only")?;
            outcome.category_only_policy = Some(history);
            let methods = [Method::None, Method::GraphAug, Method::CategoryOnly];
            fixed(
                &methods,
                &[(Method::GraphAug, &policy), (Method::CategoryOnly, &cat_policy)],
                &mut outcome,
                &mut log,
            )?;
        }
        Experiment::TrianglesProbe => {
            let (reward, stage) = train_reward_stage(config, &data, ws)?;
            outcome.reward = Some(stage);
            let (policy, history) = train_policy_stage(config, &data, &reward, ws, "policy")?;
            outcome.policy = Some(history);
            let n = config.experiment.probe_graphs.min(data.split.test.len());
            let probe = probe_drop_probabilities(&policy, &data.dataset, &data.split.test[..n])?;
            log::info!(
                "drop probability: triangle nodes {:.4}, other nodes {:.4}",
                probe.member_mean,
                probe.other_mean
            );
            report::write_rows(&ws.path("probe.csv"), [probe])?;
            outcome.probe = Some(probe);
        }
        Experiment::MutagCv => {
            outcome.reports = cross_validate(
                config,
                &data.dataset,
                &[Method::None, Method::Uniform(TransformKind::DropNode), Method::GraphAug],
                ws,
            )?;
        }
    }
    write_reports(config, ws, &outcome, &log, experiment.name())?;
    print!("{}", report::summary_table(&outcome.reports));
    Ok(outcome)
}

/// `experiment.repeats` × `experiment.folds` cross-validation of each
/// method. Learned methods train a reward model and a policy on every
/// fold's training graphs.
pub fn cross_validate(
    config: &ExperimentConfig,
    dataset: &Dataset,
    methods: &[Method],
    ws: &Workspace,
) -> Result<Vec<EvalReport>> {
    let kind = dataset.synthetic_kind();
    let mut reports = Vec::with_capacity(methods.len());
    for &method in methods {
        let report = run_cv(
            dataset,
            &method.to_string(),
            &config.classifier,
            config.experiment.repeats,
            config.experiment.folds,
            config.seed,
            |split, seed| match method {
                Method::GraphAug | Method::CategoryOnly => {
                    let mut fold_config = config.clone();
                    fold_config.seed = seed;
                    if method == Method::CategoryOnly {
                        fold_config.set_category_only();
                    }
                    let data = Data { dataset: dataset.clone(), split: split.clone() };
                    let scratch = Workspace::create(ws.path("folds")).map_err(into_core)?;
                    let (reward, _) = train_reward_stage(&fold_config, &data, &scratch).map_err(into_core)?;
                    let (policy, _) =
                        train_policy_stage(&fold_config, &data, &reward, &scratch, "policy").map_err(into_core)?;
                    augmentation(method, &fold_config, kind, Some(&policy)).map_err(into_core)
                }
                _ => augmentation(method, config, kind, None).map_err(into_core),
            },
        )?;
        reports.push(report);
    }
    Ok(reports)
}

fn into_core(e: Error) -> graphaug_core::Error {
    match e {
        Error::Core(c) => c,
        other => graphaug_core::Error::InvalidConfig(other.to_string()),
    }
}

/// Reads a checkpointed stage output or reports which stage is missing.
pub fn load_reward(ws: &Workspace, explicit: Option<&Path>) -> Result<RewardModel> {
    let path = match explicit {
        Some(p) if p.is_file() => p.to_path_buf(),
        Some(p) => return Err(Error::MissingStage { stage: "train-reward", path: p.into() }),
        None => ws.require(REWARD_CKPT, "train-reward")?,
    };
    checkpoint::load_reward(&path)
}

pub fn load_policy(ws: &Workspace, explicit: Option<&Path>) -> Result<PolicyModel> {
    let path = match explicit {
        Some(p) if p.is_file() => p.to_path_buf(),
        Some(p) => return Err(Error::MissingStage { stage: "train-policy", path: p.into() }),
        None => ws.require(POLICY_CKPT, "train-policy")?,
    };
    checkpoint::load_policy(&path)
}
