//! The four supervised classifiers behind the relevance filter, under a
//! single train / predict / confidence contract, plus grid search.

mod forest;
mod grid;
mod linear;
mod naive_bayes;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::Label;
use crate::error::{Error, Result};
use crate::textpipe::SparseVector;

pub use forest::{ForestParams, Tree};
pub use grid::{grid_search, GridRow, ParamGrid};
pub use linear::{logistic_gradient, logistic_loss, LinearParams};
pub use naive_bayes::NaiveBayesParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "NAIVE_BAYES")]
    NaiveBayes,
    #[serde(rename = "LOGISTIC_REGRESSION")]
    LogisticRegression,
    #[serde(rename = "LINEAR_SVM")]
    LinearSvm,
    #[serde(rename = "RANDOM_FOREST")]
    RandomForest,
}

/// How many candidate features a forest node examines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturesPerSplit {
    Sqrt,
    All,
    #[serde(untagged)]
    Count(usize),
}

fn default_pos_weight() -> f64 {
    1.0
}

/// Per-kind hyperparameters. The variant determines the model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Hyperparams {
    #[serde(rename = "NAIVE_BAYES")]
    NaiveBayes { alpha: f64 },
    #[serde(rename = "LOGISTIC_REGRESSION")]
    LogisticRegression {
        l2_lambda: f64,
        max_epochs: usize,
        learning_rate: f64,
        #[serde(default = "default_pos_weight")]
        pos_weight: f64,
    },
    #[serde(rename = "LINEAR_SVM")]
    LinearSvm {
        c: f64,
        max_epochs: usize,
        #[serde(default = "default_pos_weight")]
        pos_weight: f64,
    },
    #[serde(rename = "RANDOM_FOREST")]
    RandomForest {
        n_trees: usize,
        max_depth: Option<usize>,
        features_per_split: FeaturesPerSplit,
        min_leaf: usize,
        rng_seed: Option<u64>,
    },
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::NaiveBayes { .. } => ModelKind::NaiveBayes,
            Hyperparams::LogisticRegression { .. } => ModelKind::LogisticRegression,
            Hyperparams::LinearSvm { .. } => ModelKind::LinearSvm,
            Hyperparams::RandomForest { .. } => ModelKind::RandomForest,
        }
    }

    pub fn default_for(kind: ModelKind) -> Self {
        match kind {
            ModelKind::NaiveBayes => Hyperparams::NaiveBayes { alpha: 1.0 },
            ModelKind::LogisticRegression => Hyperparams::LogisticRegression {
                l2_lambda: 1e-4,
                max_epochs: 20,
                learning_rate: 0.5,
                pos_weight: 1.0,
            },
            ModelKind::LinearSvm => Hyperparams::LinearSvm { c: 1.0, max_epochs: 20, pos_weight: 1.0 },
            ModelKind::RandomForest => Hyperparams::RandomForest {
                n_trees: 50,
                max_depth: Some(25),
                features_per_split: FeaturesPerSplit::Sqrt,
                min_leaf: 1,
                rng_seed: None,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        match self {
            Hyperparams::NaiveBayes { alpha } => {
                if *alpha <= 0.0 {
                    return bad(format!("alpha must be > 0, got {alpha}"));
                }
            }
            Hyperparams::LogisticRegression { l2_lambda, max_epochs, learning_rate, pos_weight } => {
                if *l2_lambda < 0.0 {
                    return bad(format!("l2_lambda must be >= 0, got {l2_lambda}"));
                }
                if *max_epochs == 0 {
                    return bad("max_epochs must be >= 1".into());
                }
                if *learning_rate <= 0.0 {
                    return bad(format!("learning_rate must be > 0, got {learning_rate}"));
                }
                if *pos_weight <= 0.0 {
                    return bad(format!("pos_weight must be > 0, got {pos_weight}"));
                }
            }
            Hyperparams::LinearSvm { c, max_epochs, pos_weight } => {
                if *c <= 0.0 {
                    return bad(format!("C must be > 0, got {c}"));
                }
                if *max_epochs == 0 {
                    return bad("max_epochs must be >= 1".into());
                }
                if *pos_weight <= 0.0 {
                    return bad(format!("pos_weight must be > 0, got {pos_weight}"));
                }
            }
            Hyperparams::RandomForest { n_trees, min_leaf, .. } => {
                if *n_trees == 0 {
                    return bad("n_trees must be >= 1".into());
                }
                if *min_leaf == 0 {
                    return bad("min_leaf must be >= 1".into());
                }
            }
        }
        Ok(())
    }
}

/// Learned state, one variant per family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    NaiveBayes(NaiveBayesParams),
    Linear(LinearParams),
    Forest(ForestParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_labeled: usize,
    /// Fraction of RELEVANT examples in the training set.
    pub class_prior: f64,
    pub hyperparams: Hyperparams,
    pub seed: u64,
}

/// A trained classifier. Prediction only accepts vectors whose dimension
/// matches the training dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    kind: ModelKind,
    params: ModelParams,
    feature_dimension: usize,
    pub training_meta: TrainingMeta,
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn feature_dimension(&self) -> usize {
        self.feature_dimension
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn check_dimension(&self, x: &SparseVector) -> Result<()> {
        if x.dimension() != self.feature_dimension {
            return Err(Error::InvalidInput(format!(
                "vector dimension {} does not match model dimension {}",
                x.dimension(),
                self.feature_dimension
            )));
        }
        Ok(())
    }
}

fn check_training_set(x: &[SparseVector], y: &[Label]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "{} vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 training examples".into()));
    }
    let dim = x[0].dimension();
    if x.iter().any(|v| v.dimension() != dim) {
        return Err(Error::InvalidInput("training vectors have mixed dimensions".into()));
    }
    let mut has_rel = false;
    let mut has_not = false;
    for label in y {
        match label {
            Label::Relevant => has_rel = true,
            Label::NotRelevant => has_not = true,
            Label::Unlabeled => {
                return Err(Error::InvalidInput("UNLABELED example in training set".into()))
            }
        }
    }
    if !has_rel || !has_not {
        return Err(Error::InvalidInput("training set contains a single class".into()));
    }
    Ok(dim)
}

/// Train a classifier. Deterministic given identical inputs, hyperparameters
/// and seed.
pub fn train(x: &[SparseVector], y: &[Label], hp: &Hyperparams, seed: u64) -> Result<Model> {
    hp.validate()?;
    let dim = check_training_set(x, y)?;
    let n_rel = y.iter().filter(|l| **l == Label::Relevant).count();
    let params = match hp {
        Hyperparams::NaiveBayes { alpha } => {
            ModelParams::NaiveBayes(naive_bayes::train(x, y, *alpha))
        }
        Hyperparams::LogisticRegression { l2_lambda, max_epochs, learning_rate, pos_weight } => {
            ModelParams::Linear(linear::train_logistic(
                x, y, *l2_lambda, *max_epochs, *learning_rate, *pos_weight, seed,
            ))
        }
        Hyperparams::LinearSvm { c, max_epochs, pos_weight } => {
            ModelParams::Linear(linear::train_svm(x, y, *c, *max_epochs, *pos_weight, seed))
        }
        Hyperparams::RandomForest { n_trees, max_depth, features_per_split, min_leaf, rng_seed } => {
            ModelParams::Forest(forest::train(
                x,
                y,
                *n_trees,
                *max_depth,
                *features_per_split,
                *min_leaf,
                rng_seed.unwrap_or(seed),
            ))
        }
    };
    Ok(Model {
        kind: hp.kind(),
        params,
        feature_dimension: dim,
        training_meta: TrainingMeta {
            n_labeled: x.len(),
            class_prior: n_rel as f64 / x.len() as f64,
            hyperparams: hp.clone(),
            seed,
        },
    })
}

/// Probability-like score for label RELEVANT, in [0, 1].
pub fn predict_confidence(model: &Model, x: &SparseVector) -> Result<f64> {
    model.check_dimension(x)?;
    Ok(match &model.params {
        ModelParams::NaiveBayes(nb) => nb.posterior_relevant(x),
        ModelParams::Linear(lin) => lin.confidence(x),
        ModelParams::Forest(f) => f.vote_fraction(x),
    })
}

/// Argmax of the decision score; a score exactly at the threshold breaks
/// toward NOT_RELEVANT.
pub fn predict(model: &Model, x: &SparseVector) -> Result<Label> {
    let conf = predict_confidence(model, x)?;
    Ok(if conf > 0.5 { Label::Relevant } else { Label::NotRelevant })
}

pub fn predict_batch(model: &Model, xs: &[SparseVector]) -> Result<Vec<Label>> {
    xs.iter().map(|x| predict(model, x)).collect()
}

const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct VersionedModel {
    version: u32,
    model: Model,
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let wrapped = VersionedModel { version: MODEL_VERSION, model: model.clone() };
    let json = serde_json::to_string(&wrapped)
        .map_err(|e| Error::InvalidInput(format!("serialization failed: {e}")))?;
    std::fs::write(path.as_ref(), json).map_err(|e| Error::io(path.as_ref(), e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    let wrapped: VersionedModel = serde_json::from_str(&text)
        .map_err(|e| Error::InvalidInput(format!("bad model file: {e}")))?;
    if wrapped.version != MODEL_VERSION {
        return Err(Error::VersionMismatch { expected: MODEL_VERSION, found: wrapped.version });
    }
    Ok(wrapped.model)
}


#[cfg(test)]
mod tests {
    use super::test_util::*;
    use super::*;

    #[test]
    fn separable_two_point_problem_fits_every_kind() {
        let x = vec![one_hot(2, 0), one_hot(2, 1)];
        let y = vec![Label::Relevant, Label::NotRelevant];
        for hp in all_kinds() {
            let model = train(&x, &y, &hp, 42).unwrap();
            assert_eq!(predict(&model, &x[0]).unwrap(), Label::Relevant, "{:?}", hp.kind());
            assert_eq!(predict(&model, &x[1]).unwrap(), Label::NotRelevant, "{:?}", hp.kind());
        }
    }

    #[test]
    fn single_class_training_set_rejected() {
        let x = vec![one_hot(2, 0), one_hot(2, 1)];
        let y = vec![Label::Relevant, Label::Relevant];
        for hp in all_kinds() {
            assert!(train(&x, &y, &hp, 1).is_err());
        }
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let x = vec![one_hot(2, 0), one_hot(3, 1)];
        let y = vec![Label::Relevant, Label::NotRelevant];
        assert!(train(&x, &y, &Hyperparams::default_for(ModelKind::NaiveBayes), 1).is_err());

        let x = vec![one_hot(2, 0), one_hot(2, 1)];
        let model = train(&x, &y[..2], &Hyperparams::default_for(ModelKind::NaiveBayes), 1).unwrap();
        assert!(predict(&model, &one_hot(5, 0)).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let x = vec![
            counts(4, &[(0, 2.0), (1, 1.0)]),
            counts(4, &[(1, 1.0), (2, 2.0)]),
            counts(4, &[(0, 1.0), (3, 1.0)]),
            counts(4, &[(2, 1.0), (3, 2.0)]),
        ];
        let y = vec![Label::Relevant, Label::NotRelevant, Label::Relevant, Label::NotRelevant];
        for hp in all_kinds() {
            let a = train(&x, &y, &hp, 7).unwrap();
            let b = train(&x, &y, &hp, 7).unwrap();
            assert_eq!(
                serde_json::to_string(&a).unwrap(),
                serde_json::to_string(&b).unwrap(),
                "{:?}",
                hp.kind()
            );
        }
    }

    #[test]
    fn predict_agrees_with_confidence_everywhere() {
        let x = vec![
            counts(4, &[(0, 2.0), (1, 1.0)]),
            counts(4, &[(2, 2.0)]),
            counts(4, &[(0, 1.0)]),
            counts(4, &[(2, 1.0), (3, 1.0)]),
        ];
        let y = vec![Label::Relevant, Label::NotRelevant, Label::Relevant, Label::NotRelevant];
        let probes = [
            counts(4, &[(0, 1.0), (2, 1.0)]),
            counts(4, &[(1, 3.0)]),
            SparseVector::zero(4),
            counts(4, &[(3, 0.5)]),
        ];
        for hp in all_kinds() {
            let model = train(&x, &y, &hp, 3).unwrap();
            for p in &probes {
                let conf = predict_confidence(&model, p).unwrap();
                let label = predict(&model, p).unwrap();
                assert_eq!(label == Label::Relevant, conf > 0.5);
                assert!((0.0..=1.0).contains(&conf));
            }
        }
    }

    #[test]
    fn model_file_round_trip_and_version_gate() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let x = vec![one_hot(2, 0), one_hot(2, 1)];
        let y = vec![Label::Relevant, Label::NotRelevant];
        let model = train(&x, &y, &Hyperparams::default_for(ModelKind::NaiveBayes), 1).unwrap();
        save_model(&model, &path).unwrap();
        let loaded = load_model(&path).unwrap();
        assert_eq!(loaded, model);

        let text = std::fs::read_to_string(&path).unwrap().replacen("\"version\":1", "\"version\":3", 1);
        std::fs::write(&path, text).unwrap();
        assert!(matches!(load_model(&path), Err(Error::VersionMismatch { .. })));
    }

    #[test]
    fn hyperparams_config_shape() {
        let hp: Hyperparams =
            serde_json::from_str(r#"{"kind":"LINEAR_SVM","c":2.0,"max_epochs":10}"#).unwrap();
        assert_eq!(hp, Hyperparams::LinearSvm { c: 2.0, max_epochs: 10, pos_weight: 1.0 });
        let hp: Hyperparams = serde_json::from_str(
            r#"{"kind":"RANDOM_FOREST","n_trees":5,"max_depth":null,"features_per_split":"all","min_leaf":1,"rng_seed":null}"#,
        )
        .unwrap();
        assert_eq!(hp.kind(), ModelKind::RandomForest);
        let hp: Hyperparams = serde_json::from_str(
            r#"{"kind":"RANDOM_FOREST","n_trees":5,"max_depth":3,"features_per_split":7,"min_leaf":2,"rng_seed":9}"#,
        )
        .unwrap();
        match hp {
            Hyperparams::RandomForest { features_per_split, .. } => {
                assert_eq!(features_per_split, FeaturesPerSplit::Count(7))
            }
            _ => panic!(),
        }
    }
}
