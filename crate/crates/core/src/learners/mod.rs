//! Bernoulli naive Bayes, ridge logistic regression and a linear soft-margin
//! SVM over the 18 binary features, behind one `TrainedModel` type.
//!
//! Training is deterministic: rows are put in a canonical order (by feature
//! bits, then label) before any floating-point accumulation, so permuting the
//! input dataset produces a bit-identical model. Haram is the positive class
//! everywhere and every threshold tie resolves to Haram.

mod io;
mod lr;
mod nb;
mod svm;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::features::{DimensionError, FeatureVector, Label, FEATURE_COUNT};

pub use io::{from_bytes, load_model, save_model, to_bytes, ModelIoError, FORMAT_VERSION, MAGIC};
pub use lr::{lr_gradient, lr_loss, train_lr_traced, LrParams, LrTrace};
pub use nb::NbParams;
pub use svm::{train_svm_traced, SvmParams, SvmTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Nb,
    Lr,
    Svm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Svm, ModelKind::Nb, ModelKind::Lr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Nb => "nb",
            ModelKind::Lr => "lr",
            ModelKind::Svm => "svm",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            ModelKind::Nb => "NB",
            ModelKind::Lr => "LR",
            ModelKind::Svm => "SVM",
        }
    }

    pub fn default_hyperparams(self) -> Hyperparams {
        match self {
            ModelKind::Nb => Hyperparams::Nb { alpha: 1.0 },
            ModelKind::Lr => Hyperparams::Lr {
                lambda: 1e-8,
                max_iter: 10_000,
                tol: 1e-6,
            },
            ModelKind::Svm => Hyperparams::Svm {
                c: 1.0,
                epochs: 2000,
                seed: 42,
            },
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "nb" => Ok(ModelKind::Nb),
            "lr" => Ok(ModelKind::Lr),
            "svm" => Ok(ModelKind::Svm),
            other => Err(format!("unknown model `{other}` (expected nb, lr or svm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Hyperparams {
    Nb {
        alpha: f64,
    },
    Lr {
        lambda: f64,
        max_iter: usize,
        tol: f64,
    },
    /// `epochs` bounds the optimizer at `epochs * n` pair updates. `seed` is
    /// recorded but unused: training is full-batch and deterministic.
    Svm {
        c: f64,
        epochs: usize,
        seed: u64,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Nb { .. } => ModelKind::Nb,
            Hyperparams::Lr { .. } => ModelKind::Lr,
            Hyperparams::Svm { .. } => ModelKind::Svm,
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Nb { alpha } => write!(f, "alpha={alpha}"),
            Hyperparams::Lr {
                lambda,
                max_iter,
                tol,
            } => write!(f, "lambda={lambda:e} max_iter={max_iter} tol={tol:e}"),
            Hyperparams::Svm { c, epochs, seed } => write!(f, "C={c} epochs={epochs} seed={seed}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("training data needs both classes (got {halal} Halal, {haram} Haram)")]
    SingleClass { halal: usize, haram: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub dataset_hash: String,
    pub n_records: usize,
    pub n_halal: usize,
    pub n_haram: usize,
    pub hyperparams: Hyperparams,
    /// Optimizer reached its tolerance (always true for NB).
    pub converged: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum ModelParams {
    Nb(NbParams),
    Lr(LrParams),
    Svm(SvmParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub params: ModelParams,
    pub meta: TrainingMeta,
}

/// A label and the model's raw score: NB log-posterior margin
/// (Haram minus Halal), LR probability of Haram, SVM decision value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub label: Label,
    pub score: f64,
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self.params {
            ModelParams::Nb(_) => ModelKind::Nb,
            ModelParams::Lr(_) => ModelKind::Lr,
            ModelParams::Svm(_) => ModelKind::Svm,
        }
    }

    pub fn predict(&self, fv: &FeatureVector) -> Prediction {
        let x = fv.as_f64();
        match &self.params {
            ModelParams::Nb(p) => {
                let score = p.log_margin(&x);
                Prediction {
                    label: if score >= 0.0 { Label::Haram } else { Label::Halal },
                    score,
                }
            }
            ModelParams::Lr(p) => {
                let prob = p.probability(&x);
                Prediction {
                    label: if prob >= 0.5 { Label::Haram } else { Label::Halal },
                    score: prob,
                }
            }
            ModelParams::Svm(p) => {
                let score = p.decision(&x);
                Prediction {
                    label: if score >= 0.0 { Label::Haram } else { Label::Halal },
                    score,
                }
            }
        }
    }

    /// Predicts from raw 0/1 values, checking length and binarity.
    pub fn predict_values(&self, xs: &[u8]) -> Result<Prediction, DimensionError> {
        Ok(self.predict(&FeatureVector::from_slice(xs)?))
    }
}

pub fn train(d: &Dataset, hp: Hyperparams) -> Result<TrainedModel, TrainError> {
    match hp {
        Hyperparams::Nb { alpha } => train_nb(d, alpha),
        Hyperparams::Lr {
            lambda,
            max_iter,
            tol,
        } => train_lr(d, lambda, max_iter, tol),
        Hyperparams::Svm { c, epochs, seed } => train_svm(d, c, epochs, seed),
    }
}

pub fn train_nb(d: &Dataset, alpha: f64) -> Result<TrainedModel, TrainError> {
    let data = TrainingData::new(d)?;
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(TrainError::InvalidHyperparameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    let params = nb::fit(&data, alpha);
    Ok(TrainedModel {
        params: ModelParams::Nb(params),
        meta: data.meta(Hyperparams::Nb { alpha }, true, 1),
    })
}

pub fn train_lr(
    d: &Dataset,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<TrainedModel, TrainError> {
    train_lr_traced(d, lambda, max_iter, tol).map(|(m, _)| m)
}

pub fn train_svm(d: &Dataset, c: f64, epochs: usize, seed: u64) -> Result<TrainedModel, TrainError> {
    train_svm_traced(d, c, epochs, seed).map(|(m, _)| m)
}

/// Rows in canonical order, features as f64, labels as 0/1 (Haram = 1).
pub(crate) struct TrainingData {
    pub x: Vec<[f64; FEATURE_COUNT]>,
    pub haram: Vec<bool>,
    hash: String,
    n_halal: usize,
    n_haram: usize,
}

impl TrainingData {
    pub fn new(d: &Dataset) -> Result<Self, TrainError> {
        let n_halal = d.count(Label::Halal);
        let n_haram = d.count(Label::Haram);
        if n_halal == 0 || n_haram == 0 {
            return Err(TrainError::SingleClass {
                halal: n_halal,
                haram: n_haram,
            });
        }
        let mut rows: Vec<([bool; FEATURE_COUNT], bool)> = d
            .records()
            .iter()
            .map(|r| (*r.features.bits(), r.ruling.is_haram()))
            .collect();
        rows.sort_unstable();
        Ok(TrainingData {
            x: rows
                .iter()
                .map(|(b, _)| b.map(|v| if v { 1.0 } else { 0.0 }))
                .collect(),
            haram: rows.iter().map(|(_, y)| *y).collect(),
            hash: d.content_hash(),
            n_halal,
            n_haram,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    fn meta(&self, hyperparams: Hyperparams, converged: bool, iterations: usize) -> TrainingMeta {
        TrainingMeta {
            dataset_hash: self.hash.clone(),
            n_records: self.len(),
            n_halal: self.n_halal,
            n_haram: self.n_haram,
            hyperparams,
            converged,
            iterations,
        }
    }
}

pub(crate) fn dot(a: &[f64; FEATURE_COUNT], b: &[f64; FEATURE_COUNT]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{synthesize_fixture, CoinRecord, Ticker};
    use crate::features::FeatureId;

    fn rec(t: &str, set: &[FeatureId], ruling: Label) -> CoinRecord {
        CoinRecord {
            ticker: Ticker::new(t).unwrap(),
            name: None,
            features: FeatureVector::from_set(set),
            ruling,
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let d = Dataset::new(vec![rec("A", &[], Label::Halal), rec("B", &[], Label::Halal)]).unwrap();
        for kind in ModelKind::ALL {
            assert_eq!(
                train(&d, kind.default_hyperparams()).unwrap_err(),
                TrainError::SingleClass { halal: 2, haram: 0 }
            );
        }
    }

    #[test]
    fn permuting_rows_gives_identical_models() {
        let d = synthesize_fixture(20, 18, 5).unwrap();
        let mut recs = d.records().to_vec();
        recs.reverse();
        recs.swap(0, 7);
        let p = Dataset::new(recs).unwrap();
        for kind in ModelKind::ALL {
            let a = train(&d, kind.default_hyperparams()).unwrap();
            let b = train(&p, kind.default_hyperparams()).unwrap();
            assert_eq!(a, b, "{kind}");
        }
    }

    #[test]
    fn high_priority_separator_predicts_haram() {
        // Margin alone separates the classes.
        let mut recs = Vec::new();
        for i in 0..8 {
            let mut set = vec![FeatureId::Margin];
            if i % 2 == 0 {
                set.push(FeatureId::DeFi);
            }
            recs.push(rec(&format!("H{i}"), &set, Label::Haram));
            let mut set = vec![];
            if i % 3 == 0 {
                set.push(FeatureId::DeFi);
            }
            if i % 2 == 1 {
                set.push(FeatureId::Staking);
            }
            recs.push(rec(&format!("L{i}"), &set, Label::Halal));
        }
        let d = Dataset::new(recs).unwrap();
        for kind in ModelKind::ALL {
            let m = train(&d, kind.default_hyperparams()).unwrap();
            for bits in 0u32..(1 << 4) {
                let mut fv = FeatureVector::from_set(&[FeatureId::Margin]);
                for (k, f) in [FeatureId::DeFi, FeatureId::Staking, FeatureId::PoS, FeatureId::Governance]
                    .into_iter()
                    .enumerate()
                {
                    fv.set(f, bits >> k & 1 == 1);
                }
                assert_eq!(m.predict(&fv).label, Label::Haram, "{kind} {bits:04b}");
            }
        }
    }

    #[test]
    fn predict_is_deterministic_and_checks_dimensions() {
        let d = synthesize_fixture(10, 10, 1).unwrap();
        for kind in ModelKind::ALL {
            let m = train(&d, kind.default_hyperparams()).unwrap();
            let fv = &d.records()[0].features;
            assert_eq!(m.predict(fv), m.predict(fv));
            assert_eq!(m.predict_values(&[0; 17]), Err(DimensionError::Length(17)));
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("SVM".parse::<ModelKind>().unwrap(), ModelKind::Svm);
        assert!("rf".parse::<ModelKind>().is_err());
    }
}
