//! Stratified k-fold cross-validation with validation-based grid search.
//!
//! For each outer fold, one of the remaining folds (drawn once per outer fold)
//! is held out for validation. Every grid point is trained on the rest and
//! scored on the validation fold; the winner is retrained on all non-test
//! graphs and scored on the test fold.

use std::path::Path;

use log::info;
use serde::{Deserialize, Serialize};

use crate::data::{stratified_folds, DatasetBundle, FoldAssignment};
use crate::error::{Error, Result};
use crate::trainer::{Classifier, TrainConfig};

/// Candidate values for λ and the number of kernel scales.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub lambdas: Vec<f64>,
    pub scale_counts: Vec<usize>,
}

impl Default for HyperGrid {
    fn default() -> Self {
        Self {
            lambdas: vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0],
            scale_counts: vec![1, 2],
        }
    }
}

impl HyperGrid {
    pub fn new(lambdas: Vec<f64>, scale_counts: Vec<usize>) -> Result<Self> {
        if lambdas.is_empty() || scale_counts.is_empty() {
            return Err(Error::Empty("hyper-parameter grid"));
        }
        if let Some(l) = lambdas.iter().find(|&&l| !(l >= 0.0)) {
            return Err(Error::InvalidParameter(format!("lambda {l} must be non-negative")));
        }
        if scale_counts.contains(&0) {
            return Err(Error::InvalidParameter("scale count must be at least 1".into()));
        }
        Ok(Self { lambdas, scale_counts })
    }

    /// The single configuration λ = 0.5, s = 2.
    pub fn fast() -> Self {
        Self {
            lambdas: vec![0.5],
            scale_counts: vec![2],
        }
    }

    /// All `(λ, s)` combinations, λ-major.
    pub fn points(&self) -> Vec<(f64, usize)> {
        self.lambdas
            .iter()
            .flat_map(|&l| self.scale_counts.iter().map(move |&s| (l, s)))
            .collect()
    }
}

/// Outcome of one outer fold.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldRecord {
    pub fold: usize,
    pub lambda: f64,
    pub s: usize,
    /// Validation accuracy of the chosen point; `None` when the grid had a
    /// single point and no search ran.
    pub validation_accuracy: Option<f64>,
    pub test_accuracy: f64,
}

/// Per-fold results with their mean and population standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub per_fold: Vec<FoldRecord>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.iter().all(|&v| v == values[0]) {
        return (values[0], 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl CvReport {
    pub const CSV_HEADER: &'static str = "fold,lambda,s,test_accuracy";

    pub fn from_folds(per_fold: Vec<FoldRecord>) -> Result<Self> {
        if per_fold.is_empty() {
            return Err(Error::Empty("cross-validation folds"));
        }
        let accs: Vec<f64> = per_fold.iter().map(|r| r.test_accuracy).collect();
        let (mean_accuracy, std_accuracy) = mean_std(&accs);
        Ok(Self {
            per_fold,
            mean_accuracy,
            std_accuracy,
        })
    }

    /// Fold rows under [`Self::CSV_HEADER`], then a `mean,std` line and the
    /// summary values.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.per_fold {
            out.push_str(&format!("{},{},{},{}\n", r.fold, r.lambda, r.s, r.test_accuracy));
        }
        out.push_str("mean,std\n");
        out.push_str(&format!("{},{}\n", self.mean_accuracy, self.std_accuracy));
        out
    }

    /// Parses [`Self::to_csv`] output, checking the summary against the
    /// fold rows.
    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: String| Error::Parse {
            path: "<report>".into(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = reader
            .records()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(0, e.to_string()))?;
        let field = |rec: &csv::StringRecord, i: usize, line: usize| -> Result<String> {
            rec.get(i)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| bad(line, format!("missing field {i}")))
        };
        let num = |s: String, line: usize| -> Result<f64> { s.parse().map_err(|_| bad(line, format!("not a number: {s:?}"))) };
        let int = |s: String, line: usize| -> Result<usize> { s.parse().map_err(|_| bad(line, format!("not an integer: {s:?}"))) };

        let header: Vec<&str> = records.first().map(|r| r.iter().collect()).unwrap_or_default();
        if header.join(",") != Self::CSV_HEADER {
            return Err(bad(1, format!("expected header {:?}", Self::CSV_HEADER)));
        }
        let summary_at = records
            .iter()
            .position(|r| r.get(0) == Some("mean"))
            .ok_or_else(|| bad(records.len(), "missing mean,std summary".into()))?;
        let mut per_fold = Vec::new();
        for (i, rec) in records[1..summary_at].iter().enumerate() {
            let line = i + 2;
            per_fold.push(FoldRecord {
                fold: int(field(rec, 0, line)?, line)?,
                lambda: num(field(rec, 1, line)?, line)?,
                s: int(field(rec, 2, line)?, line)?,
                validation_accuracy: None,
                test_accuracy: num(field(rec, 3, line)?, line)?,
            });
        }
        let line = summary_at + 2;
        let values = records.get(summary_at + 1).ok_or_else(|| bad(line, "missing summary values".into()))?;
        let mean = num(field(values, 0, line)?, line)?;
        let std = num(field(values, 1, line)?, line)?;
        let report = Self::from_folds(per_fold)?;
        if (report.mean_accuracy - mean).abs() > 1e-12 || (report.std_accuracy - std).abs() > 1e-12 {
            return Err(bad(line, format!("summary {mean},{std} disagrees with fold rows")));
        }
        Ok(Self {
            mean_accuracy: mean,
            std_accuracy: std,
            ..report
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Fraction of predictions equal to the truth.
pub fn accuracy(predictions: &[u8], truth: &[u8]) -> Result<f64> {
    if predictions.len() != truth.len() {
        return Err(Error::dims("predictions", truth.len(), predictions.len()));
    }
    if truth.is_empty() {
        return Err(Error::Empty("accuracy over no predictions"));
    }
    let hits = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Seed for the training job `(fold, job)` of a run seeded with `seed`.
pub fn job_seed(seed: u64, fold: usize, job: usize) -> u64 {
    // splitmix64 finalizer over a combined key
    let mut z = seed
        .wrapping_add((fold as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((job as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Job index of the final retraining within a fold.
const FINAL_JOB: usize = usize::MAX;

fn fit_and_score(
    bundle: &DatasetBundle,
    train: &[usize],
    eval: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    let (train_graphs, train_labels) = bundle.select(train);
    let (eval_graphs, eval_labels) = bundle.select(eval);
    let model = Classifier::fit(config, &train_graphs, &train_labels, bundle.alphabet_size)?;
    accuracy(&model.predict(&eval_graphs)?, &eval_labels)
}

/// Index of the best point: highest accuracy, ties to smallest λ then smallest s.
fn select_point(points: &[(f64, usize)], scores: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..points.len() {
        let better = scores[i] > scores[best]
            || (scores[i] == scores[best]
                && (points[i].0 < points[best].0 || (points[i].0 == points[best].0 && points[i].1 < points[best].1)));
        if better {
            best = i;
        }
    }
    best
}

/// Grid search on the validation fold of `fold_index`, then retraining on
/// all non-test graphs and scoring on the test fold.
///
/// Training jobs take their seeds from [`job_seed`]; `config`'s own seed,
/// λ, and s are overridden.
pub fn run_fold(
    bundle: &DatasetBundle,
    folds: &FoldAssignment,
    fold_index: usize,
    grid: &HyperGrid,
    config: &TrainConfig,
    seed: u64,
) -> Result<FoldRecord> {
    if fold_index >= folds.k {
        return Err(Error::IndexOutOfRange {
            index: fold_index,
            len: folds.k,
        });
    }
    if folds.test_fold_of.len() != bundle.len() {
        return Err(Error::dims("fold assignment", bundle.len(), folds.test_fold_of.len()));
    }
    let points = grid.points();
    let job_config = |job: usize, (lambda, s): (f64, usize)| TrainConfig {
        lambda,
        scale_count: s,
        seed: job_seed(seed, fold_index, job),
        ..config.clone()
    };

    let (chosen, validation_accuracy) = if points.len() == 1 {
        (points[0], None)
    } else {
        let train = folds.train_indices(fold_index);
        let val = folds.validation_indices(fold_index);
        let mut scores = Vec::with_capacity(points.len());
        for (job, &point) in points.iter().enumerate() {
            let acc = fit_and_score(bundle, &train, &val, &job_config(job, point))?;
            info!("fold {fold_index}: lambda {} s {} validation accuracy {acc:.4}", point.0, point.1);
            scores.push(acc);
        }
        let best = select_point(&points, &scores);
        (points[best], Some(scores[best]))
    };

    let test_accuracy = fit_and_score(
        bundle,
        &folds.non_test_indices(fold_index),
        &folds.test_indices(fold_index),
        &job_config(FINAL_JOB, chosen),
    )?;
    info!("fold {fold_index}: chose lambda {} s {}, test accuracy {test_accuracy:.4}", chosen.0, chosen.1);
    Ok(FoldRecord {
        fold: fold_index,
        lambda: chosen.0,
        s: chosen.1,
        validation_accuracy,
        test_accuracy,
    })
}

/// Full k-fold run with stratified folds drawn from `seed`.
pub fn run_cv(bundle: &DatasetBundle, k: usize, grid: &HyperGrid, config: &TrainConfig, seed: u64) -> Result<CvReport> {
    let folds = stratified_folds(&bundle.class_labels, k, seed)?;
    run_cv_with_folds(bundle, &folds, grid, config, seed)
}

/// Cross-validation over a given fold assignment.
pub fn run_cv_with_folds(
    bundle: &DatasetBundle,
    folds: &FoldAssignment,
    grid: &HyperGrid,
    config: &TrainConfig,
    seed: u64,
) -> Result<CvReport> {
    let per_fold = (0..folds.k)
        .map(|f| run_fold(bundle, folds, f, grid, config, seed))
        .collect::<Result<Vec<_>>>()?;
    CvReport::from_folds(per_fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(fold: usize, acc: f64) -> FoldRecord {
        FoldRecord {
            fold,
            lambda: 0.5,
            s: 2,
            validation_accuracy: None,
            test_accuracy: acc,
        }
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(accuracy(&[0], &[0, 1]).is_err());
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn equal_accuracies_have_zero_std() {
        let report = CvReport::from_folds((0..10).map(|f| record(f, 0.8)).collect()).unwrap();
        assert_eq!(report.std_accuracy, 0.0);
        assert_eq!(report.mean_accuracy, 0.8);
    }

    #[test]
    fn population_std() {
        let report = CvReport::from_folds(vec![record(0, 0.5), record(1, 1.0)]).unwrap();
        assert_eq!(report.mean_accuracy, 0.75);
        assert_eq!(report.std_accuracy, 0.25);
    }

    #[test]
    fn csv_round_trip() {
        let report = CvReport::from_folds(vec![
            record(0, 0.8947368421052632),
            FoldRecord {
                fold: 1,
                lambda: 0.0,
                s: 1,
                validation_accuracy: Some(0.9),
                test_accuracy: 2.0 / 3.0,
            },
        ])
        .unwrap();
        let text = report.to_csv();
        assert!(text.starts_with("fold,lambda,s,test_accuracy\n0,0.5,2,0.8947368421052632\n1,0,1,"));
        let back = CvReport::from_csv(&text).unwrap();
        assert_eq!(back.to_csv(), text);
        assert_eq!(back.mean_accuracy.to_bits(), report.mean_accuracy.to_bits());

        let tampered = text.replace("mean,std\n0.", "mean,std\n1.");
        assert!(CvReport::from_csv(&tampered).is_err());
        assert!(CvReport::from_csv("nope\n").is_err());
    }

    #[test]
    fn selection_tie_breaking() {
        let points = [(1.0, 2), (0.5, 2), (0.5, 1), (2.0, 1)];
        assert_eq!(select_point(&points, &[0.8, 0.8, 0.8, 0.8]), 2);
        assert_eq!(select_point(&points, &[0.8, 0.9, 0.7, 0.9]), 1);
        assert_eq!(select_point(&points, &[0.8, 0.7, 0.7, 0.9]), 3);
        assert_eq!(select_point(&points[..1], &[0.1]), 0);
    }

    #[test]
    fn grid_points() {
        assert_eq!(HyperGrid::default().points().len(), 14);
        assert_eq!(HyperGrid::fast().points(), vec![(0.5, 2)]);
        assert!(HyperGrid::new(vec![], vec![1]).is_err());
        assert!(HyperGrid::new(vec![-1.0], vec![1]).is_err());
        assert!(HyperGrid::new(vec![1.0], vec![0]).is_err());
    }

    #[test]
    fn job_seeds_differ() {
        let seeds: std::collections::BTreeSet<u64> = (0..10)
            .flat_map(|f| (0..15).map(move |j| job_seed(42, f, j)))
            .chain((0..10).map(|f| job_seed(42, f, FINAL_JOB)))
            .collect();
        assert_eq!(seeds.len(), 160);
        assert_eq!(job_seed(1, 2, 3), job_seed(1, 2, 3));
    }
}
