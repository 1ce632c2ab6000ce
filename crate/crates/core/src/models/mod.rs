//! Small-footprint regressors for the compound HRV method.
//!
//! All trainers are deterministic functions of `(dataset, hyperparameters,
//! seed)`, and trained models are immutable: share them freely across
//! threads. Decision trees and forests consume raw features; KNN and the MLP
//! standardise each feature with statistics from their training data.

mod bench;
pub mod codec;
mod dataset;
pub mod knn;
pub mod mlp;
mod search;
pub mod tree;

use std::fmt;
use std::ops::RangeInclusive;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bench::{bench_inference, LatencyStats};
pub use codec::{decode, encode, serialized_size};
pub use dataset::{build_hr_dataset, build_hrv_dataset, chronological_split, Dataset, Sample, Target};
pub use knn::KnnModel;
pub use mlp::{MlpModel, MlpTrainingConfig, Network};
pub use search::{random_search, CandidateResult, SearchOutcome};
pub use tree::RegressionTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dt,
    Rf,
    Knn,
    Mlp,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Dt, ModelKind::Rf, ModelKind::Knn, ModelKind::Mlp];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dt => "dt",
            ModelKind::Rf => "rf",
            ModelKind::Knn => "knn",
            ModelKind::Mlp => "mlp",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(ModelKind::Dt),
            "rf" => Ok(ModelKind::Rf),
            "knn" => Ok(ModelKind::Knn),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(Error::InvalidConfig(format!("unknown model kind `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Distance {
    Manhattan,
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation output `a`.
    #[inline]
    pub fn derivative_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Hyperparams {
    Dt { max_depth: usize },
    Rf { trees: usize, max_depth: usize },
    Knn { k: usize, distance: Distance },
    Mlp { hidden: Vec<usize>, activation: Activation },
}

impl Hyperparams {
    pub fn kind(&self) -> ModelKind {
        match self {
            Hyperparams::Dt { .. } => ModelKind::Dt,
            Hyperparams::Rf { .. } => ModelKind::Rf,
            Hyperparams::Knn { .. } => ModelKind::Knn,
            Hyperparams::Mlp { .. } => ModelKind::Mlp,
        }
    }
}

impl fmt::Display for Hyperparams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Hyperparams::Dt { max_depth } => write!(f, "dt(max_depth={max_depth})"),
            Hyperparams::Rf { trees, max_depth } => write!(f, "rf(trees={trees}, max_depth={max_depth})"),
            Hyperparams::Knn { k, distance } => write!(f, "knn(k={k}, distance={distance:?})"),
            Hyperparams::Mlp { hidden, activation } => write!(f, "mlp(hidden={hidden:?}, activation={activation:?})"),
        }
    }
}

/// Hyperparameter ranges sampled by [`random_search`].
#[derive(Debug, Clone, PartialEq)]
pub struct HyperparamSpace {
    pub dt_max_depth: RangeInclusive<usize>,
    pub rf_trees: RangeInclusive<usize>,
    pub rf_max_depth: RangeInclusive<usize>,
    pub knn_k: RangeInclusive<usize>,
    pub mlp_layers: RangeInclusive<usize>,
    pub mlp_neurons: RangeInclusive<usize>,
}

impl Default for HyperparamSpace {
    fn default() -> Self {
        Self {
            dt_max_depth: 3..=20,
            rf_trees: 2..=128,
            rf_max_depth: 3..=20,
            knn_k: 2..=30,
            mlp_layers: 1..=5,
            mlp_neurons: 1..=100,
        }
    }
}

fn within(inner: &RangeInclusive<usize>, outer: &RangeInclusive<usize>) -> bool {
    !inner.is_empty() && inner.start() >= outer.start() && inner.end() <= outer.end()
}

impl HyperparamSpace {
    /// Checks that every range is non-empty and inside the default space.
    pub fn validate(&self) -> Result<()> {
        let full = HyperparamSpace::default();
        let ok = within(&self.dt_max_depth, &full.dt_max_depth)
            && within(&self.rf_trees, &full.rf_trees)
            && within(&self.rf_max_depth, &full.rf_max_depth)
            && within(&self.knn_k, &full.knn_k)
            && within(&self.mlp_layers, &full.mlp_layers)
            && within(&self.mlp_neurons, &full.mlp_neurons);
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "hyperparameter space {self:?} exceeds the supported ranges"
            )))
        }
    }

    pub fn contains(&self, hp: &Hyperparams) -> bool {
        match hp {
            Hyperparams::Dt { max_depth } => self.dt_max_depth.contains(max_depth),
            Hyperparams::Rf { trees, max_depth } => {
                self.rf_trees.contains(trees) && self.rf_max_depth.contains(max_depth)
            }
            Hyperparams::Knn { k, .. } => self.knn_k.contains(k),
            Hyperparams::Mlp { hidden, .. } => {
                self.mlp_layers.contains(&hidden.len()) && hidden.iter().all(|n| self.mlp_neurons.contains(n))
            }
        }
    }

    /// Uniform draw; `max_k` further caps the neighbour count (training size).
    pub fn sample<R: Rng + ?Sized>(&self, kind: ModelKind, max_k: usize, rng: &mut R) -> Hyperparams {
        match kind {
            ModelKind::Dt => Hyperparams::Dt {
                max_depth: rng.random_range(self.dt_max_depth.clone()),
            },
            ModelKind::Rf => Hyperparams::Rf {
                trees: rng.random_range(self.rf_trees.clone()),
                max_depth: rng.random_range(self.rf_max_depth.clone()),
            },
            ModelKind::Knn => {
                let hi = (*self.knn_k.end()).min(max_k).max(*self.knn_k.start());
                Hyperparams::Knn {
                    k: rng.random_range(*self.knn_k.start()..=hi),
                    distance: if rng.random_bool(0.5) {
                        Distance::Manhattan
                    } else {
                        Distance::Euclidean
                    },
                }
            }
            ModelKind::Mlp => {
                let layers = rng.random_range(self.mlp_layers.clone());
                Hyperparams::Mlp {
                    hidden: (0..layers)
                        .map(|_| rng.random_range(self.mlp_neurons.clone()))
                        .collect(),
                    activation: if rng.random_bool(0.5) {
                        Activation::Relu
                    } else {
                        Activation::Tanh
                    },
                }
            }
        }
    }
}

/// Per-feature z-normalisation. Constant features get a unit scale.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(matrix: &[f64], n_features: usize) -> Self {
        let rows = matrix.len() / n_features.max(1);
        let mut mean = vec![0.0; n_features];
        for row in matrix.chunks_exact(n_features) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows as f64);
        let mut var = vec![0.0; n_features];
        for row in matrix.chunks_exact(n_features) {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / rows as f64).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn identity(n_features: usize) -> Self {
        Self {
            mean: vec![0.0; n_features],
            scale: vec![1.0; n_features],
        }
    }

    pub fn transform_into(&self, x: &[f64], out: &mut [f64]) {
        for (((o, v), m), s) in out.iter_mut().zip(x).zip(&self.mean).zip(&self.scale) {
            *o = (v - m) / s;
        }
    }

    pub fn transform(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.transform_into(x, &mut out);
        out
    }
}

/// Provenance stored alongside the learned parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub hyperparams: Hyperparams,
    pub seed: u64,
    pub n_features: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelParams {
    Tree(RegressionTree),
    Forest(Vec<RegressionTree>),
    Knn(KnnModel),
    Mlp(MlpModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    meta: ModelMeta,
    params: ModelParams,
}

impl TrainedModel {
    pub(crate) fn from_parts(meta: ModelMeta, params: ModelParams) -> Self {
        Self { meta, params }
    }

    pub fn kind(&self) -> ModelKind {
        self.meta.hyperparams.kind()
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn n_features(&self) -> usize {
        self.meta.n_features
    }

    pub fn predict(&self, features: &[f64]) -> Result<f64> {
        if features.len() != self.meta.n_features {
            return Err(Error::FeatureLengthMismatch {
                expected: self.meta.n_features,
                actual: features.len(),
            });
        }
        Ok(self.predict_unchecked(features))
    }

    pub fn predict_many(&self, rows: &[Sample]) -> Result<Vec<f64>> {
        rows.iter().map(|s| self.predict(&s.features)).collect()
    }

    pub(crate) fn predict_unchecked(&self, features: &[f64]) -> f64 {
        match &self.params {
            ModelParams::Tree(t) => t.predict(features),
            ModelParams::Forest(trees) => trees.iter().map(|t| t.predict(features)).sum::<f64>() / trees.len() as f64,
            ModelParams::Knn(m) => m.predict(features),
            ModelParams::Mlp(m) => m.predict(features),
        }
    }
}

/// Free-function form of [`TrainedModel::predict`].
pub fn predict(model: &TrainedModel, features: &[f64]) -> Result<f64> {
    model.predict(features)
}

fn check_range(name: &str, value: usize, range: RangeInclusive<usize>) -> Result<()> {
    if range.contains(&value) {
        Ok(())
    } else {
        Err(Error::InvalidHyperparams(format!(
            "{name} = {value} outside {}..={}",
            range.start(),
            range.end()
        )))
    }
}

/// CART regression tree with `max_depth` in 3..=20.
pub fn train_dt(train: &Dataset, max_depth: usize, seed: u64) -> Result<TrainedModel> {
    check_range("max_depth", max_depth, 3..=20)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let tree = RegressionTree::fit(&train.feature_matrix(), &train.labels(), train.n_features(), max_depth)?;
    Ok(TrainedModel::from_parts(
        ModelMeta {
            hyperparams: Hyperparams::Dt { max_depth },
            seed,
            n_features: train.n_features(),
        },
        ModelParams::Tree(tree),
    ))
}

/// Bagged CART trees; tree `i` uses a bootstrap drawn from a seed derived
/// from `(seed, i)`.
pub fn train_rf(train: &Dataset, trees: usize, max_depth: usize, seed: u64) -> Result<TrainedModel> {
    check_range("trees", trees, 2..=128)?;
    check_range("max_depth", max_depth, 3..=20)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let forest = tree::fit_forest(
        &train.feature_matrix(),
        &train.labels(),
        train.n_features(),
        trees,
        max_depth,
        seed,
    )?;
    Ok(TrainedModel::from_parts(
        ModelMeta {
            hyperparams: Hyperparams::Rf { trees, max_depth },
            seed,
            n_features: train.n_features(),
        },
        ModelParams::Forest(forest),
    ))
}

/// Unweighted mean of the `k` nearest training labels in standardised space.
pub fn train_knn(train: &Dataset, k: usize, distance: Distance) -> Result<TrainedModel> {
    check_range("k", k, 2..=30)?;
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if k > train.len() {
        return Err(Error::KTooLarge {
            k,
            available: train.len(),
        });
    }
    let model = KnnModel::fit(
        &train.feature_matrix(),
        &train.labels(),
        train.n_features(),
        k,
        distance,
    );
    Ok(TrainedModel::from_parts(
        ModelMeta {
            hyperparams: Hyperparams::Knn { k, distance },
            seed: 0,
            n_features: train.n_features(),
        },
        ModelParams::Knn(model),
    ))
}

/// Fully connected regressor with 1..=5 hidden layers of 1..=100 units.
pub fn train_mlp(
    train: &Dataset,
    hidden: &[usize],
    activation: Activation,
    cfg: &MlpTrainingConfig,
    seed: u64,
) -> Result<TrainedModel> {
    check_range("hidden layers", hidden.len(), 1..=5)?;
    for &h in hidden {
        check_range("neurons", h, 1..=100)?;
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let model = MlpModel::fit(
        &train.feature_matrix(),
        &train.labels(),
        train.n_features(),
        hidden,
        activation,
        cfg,
        seed,
    )?;
    Ok(TrainedModel::from_parts(
        ModelMeta {
            hyperparams: Hyperparams::Mlp {
                hidden: hidden.to_vec(),
                activation,
            },
            seed,
            n_features: train.n_features(),
        },
        ModelParams::Mlp(model),
    ))
}

/// Dispatches to the trainer matching `hp`.
pub fn train(train_set: &Dataset, hp: &Hyperparams, mlp_cfg: &MlpTrainingConfig, seed: u64) -> Result<TrainedModel> {
    match hp {
        Hyperparams::Dt { max_depth } => train_dt(train_set, *max_depth, seed),
        Hyperparams::Rf { trees, max_depth } => train_rf(train_set, *trees, *max_depth, seed),
        Hyperparams::Knn { k, distance } => train_knn(train_set, *k, *distance),
        Hyperparams::Mlp { hidden, activation } => train_mlp(train_set, hidden, *activation, mlp_cfg, seed),
    }
}
