//! CSV outputs.

use std::path::Path;

use graphaug_core::reward::{PairEval, RewardHistory};
use graphaug_core::trainer::{ClassifierRun, EvalReport, PolicyHistory};
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Serialize)]
struct ResultRow<'a> {
    method: &'a str,
    dataset: &'a str,
    model: &'a str,
    fold: usize,
    seed: u64,
    accuracy: f64,
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    method: &'a str,
    dataset: &'a str,
    model: &'a str,
    runs: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct ClassifierLogRow<'a> {
    method: &'a str,
    seed: u64,
    epoch: usize,
    loss: f64,
    val_accuracy: f64,
}

#[derive(Serialize)]
struct PairRow {
    pair_id: usize,
    label1: usize,
    label2: usize,
    s: f64,
    correct: bool,
}

pub fn write_rows<S: Serialize>(path: &Path, rows: impl IntoIterator<Item = S>) -> Result<()> {
    let csv_err = |source| Error::Csv { path: path.into(), source };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for row in rows {
        w.serialize(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// One row per run: method, dataset, model, fold, seed, accuracy.
pub fn write_results(path: &Path, reports: &[EvalReport]) -> Result<()> {
    write_rows(
        path,
        reports.iter().flat_map(|r| {
            r.entries.iter().map(move |e| ResultRow {
                method: &r.method,
                dataset: &r.dataset,
                model: &r.model,
                fold: e.fold,
                seed: e.seed,
                accuracy: e.accuracy,
            })
        }),
    )
}

/// One row per method with mean and population standard deviation.
pub fn write_summary(path: &Path, reports: &[EvalReport]) -> Result<()> {
    write_rows(
        path,
        reports.iter().map(|r| SummaryRow {
            method: &r.method,
            dataset: &r.dataset,
            model: &r.model,
            runs: r.entries.len(),
            mean: r.mean,
            std: r.std,
        }),
    )
}

pub fn summary_table(reports: &[EvalReport]) -> String {
    let width = reports.iter().map(|r| r.method.len()).max().unwrap_or(6).max(6);
    let mut out = format!("{:<width$}  {:>5}  {:>7}  {:>7}\n", "method", "runs", "mean", "std");
    for r in reports {
        out.push_str(&format!("{:<width$}  {:>5}  {:>7.4}  {:>7.4}\n", r.method, r.entries.len(), r.mean, r.std));
    }
    out
}

pub fn write_classifier_log(path: &Path, runs: &[(String, u64, ClassifierRun)]) -> Result<()> {
    write_rows(
        path,
        runs.iter().flat_map(|(method, seed, run)| {
            run.history.iter().map(move |e| ClassifierLogRow {
                method,
                seed: *seed,
                epoch: e.epoch,
                loss: e.loss,
                val_accuracy: e.val_accuracy,
            })
        }),
    )
}

pub fn write_reward_log(path: &Path, history: &RewardHistory) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
    }
    write_rows(path, history.epoch_loss.iter().enumerate().map(|(epoch, &loss)| Row { epoch, loss }))
}

pub fn write_policy_log(path: &Path, history: &PolicyHistory) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        epoch: usize,
        loss: f64,
        mean_reward: f64,
    }
    write_rows(
        path,
        history
            .epoch_loss
            .iter()
            .zip(&history.epoch_mean_reward)
            .enumerate()
            .map(|(epoch, (&loss, &mean_reward))| Row { epoch, loss, mean_reward }),
    )
}

pub fn write_pair_eval(path: &Path, evals: &[PairEval]) -> Result<()> {
    write_rows(
        path,
        evals.iter().map(|e| PairRow {
            pair_id: e.pair_id,
            label1: e.label1,
            label2: e.label2,
            s: e.score,
            correct: e.correct,
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use graphaug_core::trainer::RunEntry;

    #[test]
    fn results_have_the_documented_columns() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.csv");
        let report = EvalReport::new(
            "none",
            "colors",
            "gin",
            vec![RunEntry { fold: 0, seed: 1, accuracy: 0.5 }, RunEntry { fold: 0, seed: 2, accuracy: 0.25 }],
        );
        write_results(&path, std::slice::from_ref(&report)).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text,
            "method,dataset,model,fold,seed,accuracy\nnone,colors,gin,0,1,0.5\nnone,colors,gin,0,2,0.25\n"
        );
        assert!(summary_table(&[report]).contains("0.3750"));
    }
}
