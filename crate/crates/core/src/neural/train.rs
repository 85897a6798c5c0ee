use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{AdamConfig, AdamState};
use super::loss::mse_with_grad;
use super::mlp::{ForwardCache, GradTargets, Gradients, Layer, MlpModel};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Mini-batch training settings. Defaults follow the reference table:
/// Adam, learning rate 1e-3, batch 200, patience 30.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 200,
            patience: 30,
            max_epochs: 1000,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_by: StopReason,
    /// Whether the weights were rolled back to the best validation epoch.
    pub restored_best: bool,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch]
    }
}

/// Features and labels for every sample; splits refer to rows by index.
#[derive(Clone, Copy, Debug)]
pub struct Supervised<'a, S> {
    pub features: &'a Matrix<S>,
    pub labels: &'a Matrix<S>,
}

impl<'a, S: Scalar> Supervised<'a, S> {
    pub fn new(features: &'a Matrix<S>, labels: &'a Matrix<S>) -> Result<Self> {
        if features.rows() != labels.rows() {
            return Err(Error::shape("supervised rows", features.rows(), labels.rows()));
        }
        Ok(Self { features, labels })
    }
}

const EVAL_CHUNK: usize = 1024;

/// Mean MSE and MAE of `model` over the indexed rows.
pub fn evaluate<S: Scalar>(model: &MlpModel<S>, data: Supervised<'_, S>, indices: &[usize]) -> Result<(f64, f64)> {
    let maes = per_sample_errors(model, data, indices)?;
    if maes.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = maes.len() as f64;
    let mse = maes.iter().map(|e| e.0).sum::<f64>() / n;
    let mae = maes.iter().map(|e| e.1).sum::<f64>() / n;
    Ok((mse, mae))
}

/// Per-sample `(mse, mae)` over the indexed rows, in index order.
pub fn per_sample_errors<S: Scalar>(
    model: &MlpModel<S>,
    data: Supervised<'_, S>,
    indices: &[usize],
) -> Result<Vec<(f64, f64)>> {
    if data.labels.cols() != model.output_dim() {
        return Err(Error::shape("label width", model.output_dim(), data.labels.cols()));
    }
    let mut out = Vec::with_capacity(indices.len());
    let mut x = Matrix::zeros(0, 0);
    for chunk in indices.chunks(EVAL_CHUNK) {
        x.gather_rows(data.features, chunk);
        let pred = model.forward_batch(&x)?;
        for (r, &i) in chunk.iter().enumerate() {
            let (mut se, mut ae) = (0.0, 0.0);
            for (&p, &t) in pred.row(r).iter().zip(data.labels.row(i)) {
                let d = (p - t).as_f64();
                se += d * d;
                ae += d.abs();
            }
            let k = pred.cols() as f64;
            out.push((se / k, ae / k));
        }
    }
    Ok(out)
}

/// Trains with shuffled mini-batches and early stopping on validation MSE,
/// then restores the best-validation weights.
pub fn train<S: Scalar>(
    model: &mut MlpModel<S>,
    data: Supervised<'_, S>,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
) -> Result<TrainReport> {
    train_with_observer(model, data, train_idx, val_idx, config, |_| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with_observer<S: Scalar>(
    model: &mut MlpModel<S>,
    data: Supervised<'_, S>,
    train_idx: &[usize],
    val_idx: &[usize],
    config: &TrainConfig,
    mut observer: impl FnMut(&EpochRecord),
) -> Result<TrainReport> {
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::DegenerateSplit(
            "training needs nonempty training and validation sets".into(),
        ));
    }
    if config.batch_size == 0 || config.max_epochs == 0 {
        return Err(Error::InvalidParams(
            "batch size and max epochs must be positive".into(),
        ));
    }
    if data.features.cols() != model.input_dim() {
        return Err(Error::shape("feature width", model.input_dim(), data.features.cols()));
    }
    if data.labels.cols() != model.output_dim() {
        return Err(Error::shape("label width", model.output_dim(), data.labels.cols()));
    }

    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order = train_idx.to_vec();
    let mut adam = AdamState::new(model.tensors().map(<[S]>::len).collect::<Vec<_>>());
    let mut grads = Gradients::zeros_like(model);
    let mut cache = ForwardCache::default();
    let (mut bx, mut by, mut d_out) = (Matrix::zeros(0, 0), Matrix::zeros(0, 0), Matrix::zeros(0, 0));

    let mut epochs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Layer<S>>)> = None;
    let mut since_best = 0;
    let mut stopped_by = StopReason::MaxEpochs;

    for epoch in 0..config.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(config.batch_size).enumerate() {
            bx.gather_rows(data.features, batch);
            by.gather_rows(data.labels, batch);
            model.forward_cached(&bx, &mut cache)?;
            let loss = mse_with_grad(cache.output(), &by, &mut d_out)?.as_f64();
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged: loss {loss} at epoch {epoch}, batch {b}"
                )));
            }
            loss_sum += loss * batch.len() as f64;
            model.backward(&cache, &d_out, &mut grads, GradTargets::Params)?;
            adam.step(&config.adam, model.tensors_mut(), grads.tensors());
        }
        let train_loss = loss_sum / order.len() as f64;
        let (val_loss, val_mae) = evaluate(model, data, val_idx)?;
        if !val_loss.is_finite() {
            return Err(Error::Numeric(format!("validation loss {val_loss} at epoch {epoch}")));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_mae,
        };
        observer(&record);
        epochs.push(record);

        if best.as_ref().is_none_or(|(_, b, _)| val_loss < *b) {
            best = Some((epoch, val_loss, model.layers().to_vec()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                stopped_by = StopReason::Patience;
                break;
            }
        }
    }

    let (best_epoch, best_val_loss, best_layers) = best.expect("at least one epoch ran");
    let restored_best = best_epoch + 1 != epochs.len();
    if restored_best {
        model.layers_mut().clone_from_slice(&best_layers);
    }
    Ok(TrainReport {
        epochs,
        best_epoch,
        best_val_loss,
        stopped_by,
        restored_best,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}
