use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::datasets::{kfold_splits, Dataset, Split};
use crate::error::{Error, Result};
use crate::rng;

use super::classifier::{train_classifier, Augmentation, ClassifierConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunEntry {
    pub fold: usize,
    pub seed: u64,
    pub accuracy: f64,
}

/// Test accuracies of repeated runs of one method on one dataset.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    pub method: String,
    pub dataset: String,
    pub model: String,
    pub entries: Vec<RunEntry>,
    pub mean: f64,
    /// Population standard deviation of the entry accuracies.
    pub std: f64,
}

/// Standard deviation with divisor `n` (0 for fewer than two values).
pub fn population_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    Float::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
}

impl EvalReport {
    pub fn new(
        method: impl Into<String>,
        dataset: impl Into<String>,
        model: impl Into<String>,
        entries: Vec<RunEntry>,
    ) -> Self {
        let mut report =
            Self { method: method.into(), dataset: dataset.into(), model: model.into(), entries, mean: 0.0, std: 0.0 };
        report.recompute();
        report
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.accuracy).collect()
    }

    pub fn recompute(&mut self) {
        let acc = self.accuracies();
        self.mean = if acc.is_empty() { 0.0 } else { acc.iter().sum::<f64>() / acc.len() as f64 };
        self.std = population_std(&acc);
    }
}

/// `repeats` independent `folds`-fold cross-validation runs. Each repeat
/// draws a fresh stratified fold assignment; `augmentation(split, seed)`
/// builds the method for one fold from that fold's split.
#[allow(clippy::too_many_arguments)]
pub fn run_cv<F>(
    dataset: &Dataset,
    method: &str,
    config: &ClassifierConfig,
    repeats: usize,
    folds: usize,
    seed: u64,
    mut augmentation: F,
) -> Result<EvalReport>
where
    F: FnMut(&Split, u64) -> Result<Augmentation>,
{
    if repeats == 0 {
        return Err(Error::InvalidConfig("cross-validation needs at least one repeat".into()));
    }
    let labels = dataset.labels();
    let mut entries = Vec::with_capacity(repeats * folds);
    for r in 0..repeats {
        let repeat_seed = rng::derive_seed(seed, r as u64);
        let spec = kfold_splits(&labels, folds, repeat_seed)?;
        for fold in 0..folds {
            let split = spec.split(fold);
            let run_seed = rng::derive_seed(repeat_seed, fold as u64);
            let aug = augmentation(&split, run_seed)?;
            let (_, run) = train_classifier(dataset, &split, &aug, config, run_seed)?;
            log::info!("{method} on {}: repeat {r} fold {fold} accuracy {:.4}", dataset.name, run.test_accuracy);
            entries.push(RunEntry { fold, seed: repeat_seed, accuracy: run.test_accuracy });
        }
    }
    let model = match config.kind {
        crate::nn::GnnKind::Gin => "gin",
        crate::nn::GnnKind::Gcn => "gcn",
    };
    Ok(EvalReport::new(method, dataset.name.clone(), model, entries))
}
