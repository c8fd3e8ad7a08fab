//! Stratified k-fold cross-validation and pooled classification metrics.
//!
//! Predictions from every fold are pooled into one confusion matrix and all
//! metrics are computed from it. The single-number precision, recall and
//! F-measure are support-weighted over the two classes, which makes weighted
//! recall equal to accuracy.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, Ticker};
use crate::features::Label;
use crate::learners::{train, Hyperparams, ModelKind, TrainError};

pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("fold count must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("cross-validation needs at least 2 records of each class (got {halal} Halal, {haram} Haram)")]
    TooFewRecords { halal: usize, haram: usize },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("comparison needs at least 2 reports, got {0}")]
    TooFewReports(usize),
    #[error("reports cover different datasets ({0} vs {1})")]
    DatasetMismatch(String, String),
    #[error("reports use different fold settings ({0} vs {1})")]
    SettingsMismatch(String, String),
}

fn class_index(l: Label) -> usize {
    match l {
        Label::Halal => 0,
        Label::Haram => 1,
    }
}

const CLASSES: [Label; 2] = [Label::Halal, Label::Haram];

/// Fold count actually used: `k`, lowered to the smaller class size when a
/// class has fewer than `k` members.
pub fn effective_k(d: &Dataset, k: usize) -> Result<usize, EvalError> {
    if k < 2 {
        return Err(EvalError::InvalidK(k));
    }
    let (halal, haram) = (d.count(Label::Halal), d.count(Label::Haram));
    let smallest = halal.min(haram);
    if smallest < 2 {
        return Err(EvalError::TooFewRecords { halal, haram });
    }
    if smallest < k {
        log::warn!("smallest class has {smallest} records; using {smallest} folds instead of {k}");
        return Ok(smallest);
    }
    Ok(k)
}

/// Splits record indices into folds. Each class is shuffled with a ChaCha8
/// stream seeded by `seed` (Halal first, then Haram), then dealt round-robin;
/// the fold counter carries over from one class to the next so fold sizes
/// stay within one of each other.
pub fn stratified_folds(d: &Dataset, k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    let k = effective_k(d, k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in CLASSES {
        let mut idx: Vec<usize> = (0..d.len()).filter(|&i| d.records()[i].ruling == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Rows are the actual class, columns the predicted class; index 0 is Halal.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[usize; 2]; 2]);

impl ConfusionMatrix {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut m = ConfusionMatrix::default();
        for (actual, predicted) in pairs {
            m.add(actual, predicted);
        }
        m
    }

    pub fn add(&mut self, actual: Label, predicted: Label) {
        self.0[class_index(actual)][class_index(predicted)] += 1;
    }

    pub fn get(&self, actual: Label, predicted: Label) -> usize {
        self.0[class_index(actual)][class_index(predicted)]
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().sum()
    }

    pub fn support(&self, class: Label) -> usize {
        self.0[class_index(class)].iter().sum()
    }

    pub fn predicted(&self, class: Label) -> usize {
        let c = class_index(class);
        self.0[0][c] + self.0[1][c]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub halal: ClassMetrics,
    pub haram: ClassMetrics,
    pub weighted: WeightedMetrics,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    /// Empty denominators yield 0 for the affected precision/recall/F1.
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let n = m.total();
        let per_class = |c: Label| {
            let tp = m.get(c, c);
            let precision = ratio(tp, m.predicted(c));
            let recall = ratio(tp, m.support(c));
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support: m.support(c),
            }
        };
        let (halal, haram) = (per_class(Label::Halal), per_class(Label::Haram));
        let weigh = |a: f64, b: f64| {
            if n == 0 {
                0.0
            } else {
                (a * halal.support as f64 + b * haram.support as f64) / n as f64
            }
        };
        let correct = m.get(Label::Halal, Label::Halal) + m.get(Label::Haram, Label::Haram);
        Metrics {
            accuracy: ratio(correct, n),
            halal,
            haram,
            weighted: WeightedMetrics {
                precision: weigh(halal.precision, haram.precision),
                // sum_c (support_c / n) * (tp_c / support_c) = correct / n, taken
                // from the counts so it equals accuracy exactly
                recall: ratio(correct, n),
                f1: weigh(halal.f1, haram.f1),
            },
        }
    }

    pub fn class(&self, c: Label) -> &ClassMetrics {
        match c {
            Label::Halal => &self.halal,
            Label::Haram => &self.haram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Misclassified {
    pub ticker: Ticker,
    pub actual: Label,
    pub predicted: Label,
    pub score: f64,
    pub fold: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    pub dataset_hash: String,
    pub n_records: usize,
    pub folds: usize,
    pub seed: u64,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    /// In dataset order.
    pub misclassified: Vec<Misclassified>,
}

/// Trains on each fold's complement and predicts the held-out fold. Folds run
/// in parallel; results are assembled by record index, so the report does not
/// depend on completion order.
pub fn cross_validate(
    d: &Dataset,
    hp: Hyperparams,
    k: usize,
    seed: u64,
) -> Result<EvaluationReport, EvalError> {
    let folds = stratified_folds(d, k, seed)?;
    let per_fold: Vec<Vec<(usize, Label, f64)>> = folds
        .par_iter()
        .map(|test| {
            let mut in_test = vec![false; d.len()];
            for &i in test {
                in_test[i] = true;
            }
            let train_idx: Vec<usize> = (0..d.len()).filter(|&i| !in_test[i]).collect();
            let model = train(&d.subset(&train_idx), hp)?;
            Ok(test
                .iter()
                .map(|&i| {
                    let p = model.predict(&d.records()[i].features);
                    (i, p.label, p.score)
                })
                .collect())
        })
        .collect::<Result<_, TrainError>>()?;

    let mut predictions: Vec<Option<(Label, f64, usize)>> = vec![None; d.len()];
    for (fold, preds) in per_fold.into_iter().enumerate() {
        for (i, label, score) in preds {
            predictions[i] = Some((label, score, fold));
        }
    }
    let mut confusion = ConfusionMatrix::default();
    let mut misclassified = Vec::new();
    for (r, p) in d.records().iter().zip(predictions) {
        let (predicted, score, fold) = p.expect("folds partition the dataset");
        confusion.add(r.ruling, predicted);
        if predicted != r.ruling {
            misclassified.push(Misclassified {
                ticker: r.ticker.clone(),
                actual: r.ruling,
                predicted,
                score,
                fold,
            });
        }
    }
    Ok(EvaluationReport {
        model: hp.kind(),
        hyperparams: hp,
        dataset_hash: d.content_hash(),
        n_records: d.len(),
        folds: folds.len(),
        seed,
        metrics: Metrics::from_confusion(&confusion),
        confusion,
        misclassified,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2} %", x * 100.0)
}

impl fmt::Display for EvaluationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.metrics;
        let c = &self.confusion;
        writeln!(f, "model       {} ({})", self.model.display_name(), self.hyperparams)?;
        writeln!(
            f,
            "dataset     {} records ({} Halal, {} Haram), sha256 {}",
            self.n_records,
            c.support(Label::Halal),
            c.support(Label::Haram),
            self.dataset_hash
        )?;
        writeln!(f, "validation  stratified {}-fold, seed {}", self.folds, self.seed)?;
        writeln!(f)?;
        writeln!(f, "confusion matrix (rows actual, columns predicted)")?;
        writeln!(f, "            {:>7} {:>7}", "Halal", "Haram")?;
        for a in CLASSES {
            writeln!(
                f,
                "  {:<9} {:>7} {:>7}",
                a.as_str(),
                c.get(a, Label::Halal),
                c.get(a, Label::Haram)
            )?;
        }
        writeln!(f)?;
        writeln!(f, "accuracy    {}", pct(m.accuracy))?;
        writeln!(f, "{:<10} {:>9} {:>9} {:>9} {:>8}", "class", "precision", "recall", "f-measure", "support")?;
        for cl in CLASSES {
            let x = m.class(cl);
            writeln!(
                f,
                "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
                cl.as_str(),
                x.precision,
                x.recall,
                x.f1,
                x.support
            )?;
        }
        writeln!(
            f,
            "{:<10} {:>9.4} {:>9.4} {:>9.4} {:>8}",
            "weighted", m.weighted.precision, m.weighted.recall, m.weighted.f1, self.n_records
        )?;
        writeln!(f)?;
        writeln!(f, "misclassified ({})", self.misclassified.len())?;
        for e in &self.misclassified {
            writeln!(
                f,
                "  {:<12} actual {:<5} predicted {:<5} score {:+.4} fold {}",
                e.ticker.as_str(),
                e.actual.as_str(),
                e.predicted.as_str(),
                e.score,
                e.fold
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub model: ModelKind,
    pub hyperparams: Hyperparams,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
    /// Index of the best row: highest accuracy, then highest weighted
    /// precision, then earliest.
    pub winner: usize,
    /// Other rows with exactly the winner's accuracy and precision.
    pub tied_with: Vec<usize>,
}

impl Comparison {
    pub fn is_tie(&self) -> bool {
        !self.tied_with.is_empty()
    }
}

pub fn compare_report(reports: &[EvaluationReport]) -> Result<Comparison, EvalError> {
    if reports.len() < 2 {
        return Err(EvalError::TooFewReports(reports.len()));
    }
    let first = &reports[0];
    for r in &reports[1..] {
        if r.dataset_hash != first.dataset_hash {
            return Err(EvalError::DatasetMismatch(first.dataset_hash.clone(), r.dataset_hash.clone()));
        }
        if (r.folds, r.seed) != (first.folds, first.seed) {
            return Err(EvalError::SettingsMismatch(
                format!("{} folds, seed {}", first.folds, first.seed),
                format!("{} folds, seed {}", r.folds, r.seed),
            ));
        }
    }
    let rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|r| ComparisonRow {
            model: r.model,
            hyperparams: r.hyperparams,
            accuracy: r.metrics.accuracy,
            precision: r.metrics.weighted.precision,
            recall: r.metrics.weighted.recall,
            f1: r.metrics.weighted.f1,
        })
        .collect();
    Ok(compare_rows(rows))
}

/// Ranking used by [`compare_report`], exposed for callers holding only the
/// metric rows.
pub fn compare_rows(rows: Vec<ComparisonRow>) -> Comparison {
    let mut winner = 0;
    for (i, r) in rows.iter().enumerate().skip(1) {
        let w = &rows[winner];
        if r.accuracy > w.accuracy || (r.accuracy == w.accuracy && r.precision > w.precision) {
            winner = i;
        }
    }
    let w = &rows[winner];
    let tied_with = rows
        .iter()
        .enumerate()
        .filter(|(i, r)| *i != winner && r.accuracy == w.accuracy && r.precision == w.precision)
        .map(|(i, _)| i)
        .collect();
    Comparison {
        rows,
        winner,
        tied_with,
    }
}

impl Comparison {
    /// Metrics as rows and models as columns, in percent.
    pub fn metric_table(&self) -> MetricTable<'_> {
        MetricTable(self)
    }
}

pub struct MetricTable<'a>(&'a Comparison);

impl fmt::Display for MetricTable<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = &self.0.rows;
        write!(f, "{:<14}", "Parameter")?;
        for r in rows {
            write!(f, " {:>8}", r.model.display_name())?;
        }
        writeln!(f)?;
        let lines: [(&str, fn(&ComparisonRow) -> f64); 4] = [
            ("Accuracy (%)", |r| r.accuracy),
            ("Precision (%)", |r| r.precision),
            ("Recall (%)", |r| r.recall),
            ("F-Measure (%)", |r| r.f1),
        ];
        for (label, get) in lines {
            write!(f, "{label:<14}")?;
            for r in rows {
                write!(f, " {:>8.2}", get(r) * 100.0)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "  {:<6} {:>9} {:>10} {:>8} {:>10}",
            "model", "accuracy", "precision", "recall", "f-measure"
        )?;
        for (i, r) in self.rows.iter().enumerate() {
            let mark = if i == self.winner {
                "*"
            } else if self.tied_with.contains(&i) {
                "="
            } else {
                " "
            };
            writeln!(
                f,
                "{mark} {:<6} {:>9} {:>10.4} {:>8.4} {:>10.4}",
                r.model.display_name(),
                pct(r.accuracy),
                r.precision,
                r.recall,
                r.f1
            )?;
        }
        let w = &self.rows[self.winner];
        if self.is_tie() {
            let names: Vec<&str> = std::iter::once(self.winner)
                .chain(self.tied_with.iter().copied())
                .map(|i| self.rows[i].model.display_name())
                .collect();
            writeln!(f, "tie between {} (identical accuracy and precision)", names.join(", "))
        } else {
            writeln!(f, "best: {} ({})", w.model.display_name(), pct(w.accuracy))
        }
    }
}
