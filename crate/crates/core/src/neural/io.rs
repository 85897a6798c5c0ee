use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::mlp::{Layer, MlpModel, ModelMeta, TrainingFingerprint};
use crate::dataset::Problem;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;
use crate::normalize::NormalizationSpec;
use crate::optics::Grid;
use crate::scalar::Scalar;

pub const MODEL_SCHEMA_VERSION: u32 = 1;

/// On-disk form of an [`MlpModel`]. Weights are row-major
/// `fan_out x fan_in` per layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub schema_version: u32,
    pub layer_dims: Vec<usize>,
    pub activation: Activation,
    pub output_activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    #[serde(default)]
    pub problem: Option<Problem>,
    #[serde(default)]
    pub normalization: Option<NormalizationSpec>,
    #[serde(default)]
    pub grid: Option<Grid>,
    #[serde(default)]
    pub training_fingerprint: Option<TrainingFingerprint>,
}

impl<S: Scalar> MlpModel<S> {
    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            schema_version: MODEL_SCHEMA_VERSION,
            layer_dims: self.layer_dims().to_vec(),
            activation: self.hidden_activation(),
            output_activation: self.output_activation(),
            weights: self
                .layers()
                .iter()
                .map(|l| l.weights.as_slice().iter().map(|v| v.as_f64()).collect())
                .collect(),
            biases: self
                .layers()
                .iter()
                .map(|l| l.bias.iter().map(|v| v.as_f64()).collect())
                .collect(),
            problem: self.meta.problem,
            normalization: self.meta.normalization.clone(),
            grid: self.meta.grid,
            training_fingerprint: self.meta.training_fingerprint.clone(),
        }
    }

    pub fn from_file(file: ModelFile) -> Result<Self> {
        if file.schema_version != MODEL_SCHEMA_VERSION {
            return Err(Error::Schema {
                expected: MODEL_SCHEMA_VERSION,
                found: file.schema_version,
            });
        }
        let depth = file.layer_dims.len().saturating_sub(1);
        if depth == 0 || file.weights.len() != depth || file.biases.len() != depth {
            return Err(Error::shape("model layer count", depth, file.weights.len()));
        }
        let layers = file
            .layer_dims
            .windows(2)
            .zip(file.weights.into_iter().zip(file.biases))
            .map(|(dims, (w, b))| {
                let (fan_in, fan_out) = (dims[0], dims[1]);
                if w.len() != fan_in * fan_out {
                    return Err(Error::shape("weight count", fan_in * fan_out, w.len()));
                }
                if b.len() != fan_out {
                    return Err(Error::shape("bias count", fan_out, b.len()));
                }
                Ok(Layer {
                    weights: Matrix::from_vec(fan_out, fan_in, w.into_iter().map(S::lit).collect()),
                    bias: b.into_iter().map(S::lit).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut model = MlpModel::from_layers(layers, file.activation, file.output_activation)?;
        if !model.is_finite() {
            return Err(Error::Numeric("model file contains non-finite parameters".into()));
        }
        model.meta = ModelMeta {
            problem: file.problem,
            normalization: file.normalization,
            grid: file.grid,
            training_fingerprint: file.training_fingerprint,
        };
        Ok(model)
    }
}

/// Parses a versioned JSON document, checking `schema_version` before the
/// full structure so version mismatches are reported as such.
pub(crate) fn read_versioned<T: DeserializeOwned>(path: &Path, expected: u32) -> Result<T> {
    let text = fs::read_to_string(path)?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    match value.get("schema_version").and_then(|v| v.as_u64()) {
        Some(v) if v == expected as u64 => Ok(serde_json::from_value(value)?),
        Some(v) => Err(Error::Schema {
            expected,
            found: v as u32,
        }),
        None => Err(Error::Metadata(format!(
            "{} has no schema_version field",
            path.display()
        ))),
    }
}

pub fn save_model<S: Scalar>(model: &MlpModel<S>, path: &Path) -> Result<()> {
    let json = serde_json::to_vec_pretty(&model.to_file())?;
    write_atomic(path, &json)
}

pub fn load_model<S: Scalar>(path: &Path) -> Result<MlpModel<S>> {
    MlpModel::from_file(read_versioned(path, MODEL_SCHEMA_VERSION)?)
}
