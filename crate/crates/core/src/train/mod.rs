//! Classifier training: Pegasos-style linear and RBF-kernel SVMs, and a
//! two-layer ReLU network. All three expose the same predictor contract:
//! a raw real-valued score and a hard {0,1} prediction with
//! `predict(x) = 1 ⇔ raw_score(x) >= 0`.

mod pegasos;
mod relu;
pub mod norms;

pub use pegasos::{
    pegasos_objective, train_linear_svm, train_rbf_svm, LinearSvmConfig, RbfSvmConfig,
};
pub use relu::{loss_and_grad, train_relu_net, ReluNetConfig, ReluParams};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabeledDataset;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training loss became non-finite (learning rate too high?)")]
    NonFiniteLoss,
    #[error("empty training set")]
    EmptyTrainSet,
    #[error("model io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("model decode error: {0}")]
    Decode(#[from] serde_json::Error),
    #[error("unsupported model format version {0}")]
    BadVersion(u32),
}

/// Anything that scores feature vectors. Ties at score 0 predict 1.
pub trait Predictor {
    fn raw_score(&self, x: &[f64]) -> f64;

    fn predict(&self, x: &[f64]) -> u8 {
        if self.raw_score(x) >= 0.0 {
            1
        } else {
            0
        }
    }
}

/// A trained model with a kind tag and its numeric payload. Serializes to
/// a versioned JSON document that round-trips scores bit-exactly.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind")]
pub enum PredictorModel {
    LinearSvm {
        weights: Vec<f64>,
        bias: f64,
        /// Set when all training labels were identical; the model is a
        /// constant predictor in that case.
        degenerate: bool,
    },
    RbfSvm {
        gamma: f64,
        support: Vec<Vec<f64>>,
        /// Signed coefficients: score(x) = Σ coef_i · K(s_i, x).
        coefs: Vec<f64>,
        degenerate: bool,
    },
    ReluNet {
        /// Hidden weights, row-major `hidden x dim`.
        w1: Vec<f64>,
        /// Output weights, length `hidden`.
        w2: Vec<f64>,
        hidden: usize,
        dim: usize,
    },
}

const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    #[serde(flatten)]
    model: PredictorModel,
}

impl PredictorModel {
    pub fn kind_name(&self) -> &'static str {
        match self {
            PredictorModel::LinearSvm { .. } => "LinearSVM",
            PredictorModel::RbfSvm { .. } => "RbfSVM",
            PredictorModel::ReluNet { .. } => "ReluNet",
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<(), TrainError> {
        let file = ModelFile {
            version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&file)?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<PredictorModel, TrainError> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        if file.version != MODEL_FORMAT_VERSION {
            return Err(TrainError::BadVersion(file.version));
        }
        Ok(file.model)
    }

    /// Fraction of examples whose hard prediction matches the label.
    pub fn accuracy(&self, ds: &LabeledDataset) -> f64 {
        if ds.is_empty() {
            return 0.0;
        }
        let hits = ds
            .examples
            .iter()
            .filter(|ex| self.predict(&ex.features) == ex.label)
            .count();
        hits as f64 / ds.len() as f64
    }
}

impl Predictor for PredictorModel {
    fn raw_score(&self, x: &[f64]) -> f64 {
        match self {
            PredictorModel::LinearSvm { weights, bias, .. } => {
                dot(weights, x) + bias
            }
            PredictorModel::RbfSvm {
                gamma,
                support,
                coefs,
                ..
            } => support
                .iter()
                .zip(coefs)
                .map(|(s, c)| c * rbf_kernel(*gamma, s, x))
                .sum(),
            PredictorModel::ReluNet { w1, w2, hidden, dim } => {
                relu::forward(w1, w2, *hidden, *dim, x)
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// K(x, x') = exp(-gamma * ||x - x'||^2).
pub fn rbf_kernel(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    (-gamma * squared_distance(a, b)).exp()
}

/// Map a {0,1} label to the ±1 convention trainers use internally.
pub(crate) fn signed_label(label: u8) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}
