//! β-variational autoencoder over transmission spectra, the supervised
//! (F, δ₀) bottleneck autoencoder, and latent-structure analysis.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{DataSplit, Dataset, Problem};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;
use crate::neural::{
    evaluate, read_versioned, train, Activation, AdamConfig, AdamState, ForwardCache, GradTargets, Gradients, MlpModel,
    ModelFile, Supervised, TrainConfig, TrainReport,
};
use crate::scalar::Scalar;

pub const VAE_SCHEMA_VERSION: u32 = 1;

/// Mean per-dimension KL at or above which a latent dimension counts as
/// informative.
pub const INFORMATIVE_KL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeConfig {
    pub beta: f64,
    /// Decoder variance constant `c` in `(x - f(z))^2 / 2c`.
    pub recon_scale: f64,
    pub latent_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            beta: 0.01,
            recon_scale: 1.0,
            latent_dim: 5,
            hidden: vec![100; 4],
            activation: Activation::Swish,
            batch_size: 100,
            epochs: 100,
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !(self.recon_scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "beta and recon_scale must be positive, got {} and {}",
                self.beta, self.recon_scale
            )));
        }
        if self.latent_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::InvalidParams(
                "latent_dim, batch_size and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Encoder `x -> (mu, logvar)` and decoder `z -> x`.
#[derive(Clone, Debug, PartialEq)]
pub struct VaeModel<S> {
    pub encoder: MlpModel<S>,
    pub decoder: MlpModel<S>,
    latent_dim: usize,
}

/// Loss of one batch, each term averaged over the batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeLoss {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Gradients for both halves of a [`VaeModel`].
#[derive(Clone, Debug)]
pub struct VaeGradients<S> {
    pub encoder: Gradients<S>,
    pub decoder: Gradients<S>,
}

impl<S: Scalar> VaeGradients<S> {
    pub fn zeros_like(model: &VaeModel<S>) -> Self {
        Self {
            encoder: Gradients::zeros_like(&model.encoder),
            decoder: Gradients::zeros_like(&model.decoder),
        }
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[S]> {
        self.encoder.tensors().chain(self.decoder.tensors())
    }
}

impl<S: Scalar> VaeModel<S> {
    pub fn new(encoder: MlpModel<S>, decoder: MlpModel<S>) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        if encoder.output_dim() != 2 * latent_dim {
            return Err(Error::shape("encoder output", 2 * latent_dim, encoder.output_dim()));
        }
        if decoder.output_dim() != encoder.input_dim() {
            return Err(Error::shape(
                "decoder output",
                encoder.input_dim(),
                decoder.output_dim(),
            ));
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
        })
    }

    pub fn glorot<R: Rng + ?Sized>(input_dim: usize, config: &VaeConfig, rng: &mut R) -> Result<Self> {
        let l = config.latent_dim;
        let encoder = MlpModel::glorot(
            &MlpModel::<S>::dims(input_dim, &config.hidden, 2 * l),
            config.activation,
            rng,
        )?;
        let decoder = MlpModel::glorot(
            &MlpModel::<S>::dims(l, &config.hidden, input_dim),
            config.activation,
            rng,
        )?;
        Self::new(encoder, decoder)
    }

    pub fn zeros(input_dim: usize, config: &VaeConfig) -> Result<Self> {
        let l = config.latent_dim;
        Self::new(
            MlpModel::zeros(
                &MlpModel::<S>::dims(input_dim, &config.hidden, 2 * l),
                config.activation,
            )?,
            MlpModel::zeros(&MlpModel::<S>::dims(l, &config.hidden, input_dim), config.activation)?,
        )
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut [S]> {
        self.encoder.tensors_mut().chain(self.decoder.tensors_mut())
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[S]> {
        self.encoder.tensors().chain(self.decoder.tensors())
    }

    /// Encodes one spectrum into `(mu, logvar)`.
    pub fn encode(&self, spectrum: &[S]) -> Result<(Vec<S>, Vec<S>)> {
        let mut h = self.encoder.forward(spectrum)?;
        let logvar = h.split_off(self.latent_dim);
        Ok((h, logvar))
    }

    /// Encodes a batch; returns `(mu, logvar)` matrices.
    pub fn encode_batch(&self, x: &Matrix<S>) -> Result<(Matrix<S>, Matrix<S>)> {
        let h = self.encoder.forward_batch(x)?;
        Ok(split_halves(&h, self.latent_dim))
    }

    pub fn decode(&self, z: &[S]) -> Result<Vec<S>> {
        self.decoder.forward(z)
    }

    /// Deterministic reconstruction through the posterior means.
    pub fn reconstruct_batch(&self, x: &Matrix<S>) -> Result<Matrix<S>> {
        let (mu, _) = self.encode_batch(x)?;
        self.decoder.forward_batch(&mu)
    }
}

fn split_halves<S: Scalar>(h: &Matrix<S>, l: usize) -> (Matrix<S>, Matrix<S>) {
    let mut mu = Matrix::zeros(h.rows(), l);
    let mut lv = Matrix::zeros(h.rows(), l);
    for r in 0..h.rows() {
        mu.row_mut(r).copy_from_slice(&h.row(r)[..l]);
        lv.row_mut(r).copy_from_slice(&h.row(r)[l..]);
    }
    (mu, lv)
}

/// `z = mu + noise * exp(logvar / 2)`.
pub fn reparameterize<S: Scalar>(mu: &[S], logvar: &[S], noise: &[S]) -> Result<Vec<S>> {
    if mu.len() != logvar.len() || mu.len() != noise.len() {
        return Err(Error::shape("reparameterize", mu.len(), logvar.len().max(noise.len())));
    }
    let half = S::lit(0.5);
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(noise)
        .map(|((&m, &lv), &e)| m + e * (half * lv).exp())
        .collect())
}

/// KL divergence of `N(mu, exp(logvar))` from the standard normal, per
/// dimension.
pub fn kl_per_dim<S: Scalar>(mu: S, logvar: S) -> S {
    S::lit(0.5) * (mu * mu + logvar.exp() - logvar - S::one())
}

/// `0.5 * sum(mu^2 + exp(logvar) - logvar - 1)`.
pub fn kl_unit_gaussian<S: Scalar>(mu: &[S], logvar: &[S]) -> Result<S> {
    if mu.len() != logvar.len() {
        return Err(Error::shape("kl", mu.len(), logvar.len()));
    }
    Ok(mu.iter().zip(logvar).map(|(&m, &lv)| kl_per_dim(m, lv)).sum())
}

/// Buffers reused across [`vae_loss_grad`] calls.
#[derive(Clone, Debug)]
pub struct VaeWorkspace<S> {
    enc: ForwardCache<S>,
    dec: ForwardCache<S>,
    z: Matrix<S>,
    d_out: Matrix<S>,
    d_h: Matrix<S>,
}

impl<S: Scalar> Default for VaeWorkspace<S> {
    fn default() -> Self {
        Self {
            enc: ForwardCache::default(),
            dec: ForwardCache::default(),
            z: Matrix::zeros(0, 0),
            d_out: Matrix::zeros(0, 0),
            d_h: Matrix::zeros(0, 0),
        }
    }
}

/// Batch loss with a fixed noise draw (`noise` is `batch x latent_dim`).
pub fn vae_loss<S: Scalar>(
    model: &VaeModel<S>,
    batch: &Matrix<S>,
    noise: &Matrix<S>,
    beta: f64,
    recon_scale: f64,
) -> Result<VaeLoss> {
    let mut ws = VaeWorkspace::default();
    loss_impl(model, batch, noise, beta, recon_scale, &mut ws, None)
}

/// Batch loss and its gradient with respect to every encoder and decoder
/// parameter; the noise is held fixed.
pub fn vae_loss_grad<S: Scalar>(
    model: &VaeModel<S>,
    batch: &Matrix<S>,
    noise: &Matrix<S>,
    beta: f64,
    recon_scale: f64,
    ws: &mut VaeWorkspace<S>,
    grads: &mut VaeGradients<S>,
) -> Result<VaeLoss> {
    loss_impl(model, batch, noise, beta, recon_scale, ws, Some(grads))
}

fn loss_impl<S: Scalar>(
    model: &VaeModel<S>,
    x: &Matrix<S>,
    noise: &Matrix<S>,
    beta: f64,
    recon_scale: f64,
    ws: &mut VaeWorkspace<S>,
    grads: Option<&mut VaeGradients<S>>,
) -> Result<VaeLoss> {
    let l = model.latent_dim;
    let b = x.rows();
    if b == 0 {
        return Err(Error::EmptyDataset);
    }
    if (noise.rows(), noise.cols()) != (b, l) {
        return Err(Error::shape("vae noise", l, noise.cols()));
    }
    model.encoder.forward_cached(x, &mut ws.enc)?;
    let h = ws.enc.output();
    ws.z.resize(b, l);
    let half = S::lit(0.5);
    let mut kl = 0.0;
    for r in 0..b {
        let hr = h.row(r);
        for j in 0..l {
            let (m, lv) = (hr[j], hr[l + j]);
            ws.z.set(r, j, m + noise.get(r, j) * (half * lv).exp());
            kl += kl_per_dim(m, lv).as_f64();
        }
    }
    model.decoder.forward_cached(&ws.z, &mut ws.dec)?;
    let y = ws.dec.output();
    let mut recon = 0.0;
    for (&p, &t) in y.as_slice().iter().zip(x.as_slice()) {
        let d = (p - t).as_f64();
        recon += d * d;
    }
    let bf = b as f64;
    let recon = recon / (2.0 * recon_scale * bf);
    let kl = kl / bf;
    let loss = VaeLoss {
        total: recon + beta * kl,
        recon,
        kl,
    };
    let Some(grads) = grads else {
        return Ok(loss);
    };

    let scale = S::lit(1.0 / (recon_scale * bf));
    ws.d_out.resize(b, y.cols());
    for ((d, &p), &t) in ws.d_out.as_mut_slice().iter_mut().zip(y.as_slice()).zip(x.as_slice()) {
        *d = (p - t) * scale;
    }
    model
        .decoder
        .backward(&ws.dec, &ws.d_out, &mut grads.decoder, GradTargets::Both)?;
    let dz = &grads.decoder.input;
    let kb = S::lit(beta / bf);
    let h = ws.enc.output();
    ws.d_h.resize(b, 2 * l);
    for r in 0..b {
        for j in 0..l {
            let (m, lv) = (h.get(r, j), h.get(r, l + j));
            let sigma = (half * lv).exp();
            let g = dz.get(r, j);
            ws.d_h.set(r, j, g + kb * m);
            ws.d_h.set(
                r,
                l + j,
                g * noise.get(r, j) * half * sigma + kb * half * (lv.exp() - S::one()),
            );
        }
    }
    model
        .encoder
        .backward(&ws.enc, &ws.d_h, &mut grads.encoder, GradTargets::Params)?;
    Ok(loss)
}

/// Per-epoch training averages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEpoch {
    pub epoch: usize,
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeReport {
    pub epochs: Vec<VaeEpoch>,
    pub wall_clock_secs: f64,
}

impl VaeReport {
    pub fn final_loss(&self) -> Option<&VaeEpoch> {
        self.epochs.last()
    }
}

fn fill_normal<S: Scalar, R: Rng + ?Sized>(m: &mut Matrix<S>, rng: &mut R) {
    for v in m.as_mut_slice() {
        let e: f64 = rng.sample(StandardNormal);
        *v = S::lit(e);
    }
}

/// Fixed-length training with Adam and shuffled mini-batches; one noise draw
/// per sample per step. No early stopping.
pub fn train_vae<S: Scalar>(
    spectra: &Matrix<S>,
    train_idx: &[usize],
    config: &VaeConfig,
) -> Result<(VaeModel<S>, VaeReport)> {
    train_vae_with_observer(spectra, train_idx, config, |_| {})
}

pub fn train_vae_with_observer<S: Scalar>(
    spectra: &Matrix<S>,
    train_idx: &[usize],
    config: &VaeConfig,
    mut observer: impl FnMut(&VaeEpoch),
) -> Result<(VaeModel<S>, VaeReport)> {
    config.validate()?;
    if train_idx.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = VaeModel::<S>::glorot(spectra.cols(), config, &mut rng)?;
    let mut adam = AdamState::new(model.tensors().map(<[S]>::len).collect::<Vec<_>>());
    let mut grads = VaeGradients::zeros_like(&model);
    let mut ws = VaeWorkspace::default();
    let (mut bx, mut noise) = (Matrix::zeros(0, 0), Matrix::zeros(0, 0));
    let mut order = train_idx.to_vec();
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut total, mut recon, mut kl) = (0.0, 0.0, 0.0);
        for batch in order.chunks(config.batch_size) {
            bx.gather_rows(spectra, batch);
            noise.resize(batch.len(), config.latent_dim);
            fill_normal(&mut noise, &mut rng);
            let loss = vae_loss_grad(
                &model,
                &bx,
                &noise,
                config.beta,
                config.recon_scale,
                &mut ws,
                &mut grads,
            )?;
            if !loss.total.is_finite() {
                return Err(Error::Numeric(format!(
                    "VAE training diverged at epoch {epoch}: loss {}",
                    loss.total
                )));
            }
            let w = batch.len() as f64;
            total += loss.total * w;
            recon += loss.recon * w;
            kl += loss.kl * w;
            adam.step(&config.adam, model.tensors_mut(), grads.tensors());
        }
        let n = order.len() as f64;
        let record = VaeEpoch {
            epoch,
            total: total / n,
            recon: recon / n,
            kl: kl / n,
        };
        observer(&record);
        epochs.push(record);
    }
    Ok((
        model,
        VaeReport {
            epochs,
            wall_clock_secs: start.elapsed().as_secs_f64(),
        },
    ))
}

/// Reconstruction MAE (through the posterior means) and mean KL per latent
/// dimension over the indexed rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEvaluation {
    pub recon_mae: f64,
    pub kl_per_dim: Vec<f64>,
}

impl VaeEvaluation {
    pub fn informative_dims(&self) -> usize {
        self.kl_per_dim.iter().filter(|&&k| k >= INFORMATIVE_KL).count()
    }

    pub fn total_kl(&self) -> f64 {
        self.kl_per_dim.iter().sum()
    }
}

const CHUNK: usize = 1024;

pub fn evaluate_vae<S: Scalar>(model: &VaeModel<S>, spectra: &Matrix<S>, idx: &[usize]) -> Result<VaeEvaluation> {
    let l = model.latent_dim;
    let mut kl = vec![0.0; l];
    let mut mae = 0.0;
    let mut x = Matrix::zeros(0, 0);
    for chunk in idx.chunks(CHUNK) {
        x.gather_rows(spectra, chunk);
        let (mu, lv) = model.encode_batch(&x)?;
        let y = model.decoder.forward_batch(&mu)?;
        for r in 0..chunk.len() {
            for (j, k) in kl.iter_mut().enumerate() {
                *k += kl_per_dim(mu.get(r, j), lv.get(r, j)).as_f64();
            }
            let row: f64 = y
                .row(r)
                .iter()
                .zip(x.row(r))
                .map(|(&p, &t)| (p - t).as_f64().abs())
                .sum();
            mae += row / y.cols() as f64;
        }
    }
    let n = idx.len().max(1) as f64;
    Ok(VaeEvaluation {
        recon_mae: mae / n,
        kl_per_dim: kl.into_iter().map(|k| k / n).collect(),
    })
}

/// Pearson correlation; NaN when either input has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return f64::NAN;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a[..n].iter().zip(&b[..n]) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

/// Latent means and per-sample KL next to the physical parameters of each
/// sample, plus summary correlations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatentStats {
    pub kl_per_dim: Vec<f64>,
    /// `[r(mu_d, F), r(mu_d, delta0), r(mu_d, 1/(1+F))]` per dimension.
    pub correlations: Vec<[f64; 3]>,
    pub sample_ids: Vec<usize>,
    pub f_coeff: Vec<f64>,
    pub delta0: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub kl: Vec<Vec<f64>>,
}

impl LatentStats {
    pub fn informative_dims(&self) -> Vec<usize> {
        (0..self.kl_per_dim.len())
            .filter(|&d| self.kl_per_dim[d] >= INFORMATIVE_KL)
            .collect()
    }

    /// Largest `|r(mu_d, 1/(1+F))|` over all dimensions (NaN entries skipped).
    pub fn max_abs_r_inverse_f(&self) -> f64 {
        self.correlations
            .iter()
            .map(|c| c[2].abs())
            .filter(|r| r.is_finite())
            .fold(f64::NAN, f64::max)
    }

    /// CSV with columns `sample_id, F, delta0, one_over_1_plus_F, mu_1..,
    /// kl_1..`. Undefined values are written as `NaN`.
    pub fn write_scatter_csv(&self, path: &Path) -> Result<()> {
        let l = self.kl_per_dim.len();
        let mut out = Vec::new();
        let mut header = vec![
            "sample_id".to_string(),
            "F".into(),
            "delta0".into(),
            "one_over_1_plus_F".into(),
        ];
        header.extend((1..=l).map(|d| format!("mu_{d}")));
        header.extend((1..=l).map(|d| format!("kl_{d}")));
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.sample_ids.len() {
            let f = self.f_coeff[i];
            let mut row = vec![
                self.sample_ids[i].to_string(),
                f.to_string(),
                self.delta0[i].to_string(),
                (1.0 / (1.0 + f)).to_string(),
            ];
            row.extend(self.mu[i].iter().chain(&self.kl[i]).map(|v| v.to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        write_atomic(path, &out)
    }
}

/// Encodes the indexed spectra and correlates each latent mean with `F`,
/// `delta0` and `1/(1+F)`. `params[i]` holds `(F, delta0)` of row `i`.
pub fn latent_analysis<S: Scalar>(
    model: &VaeModel<S>,
    spectra: &Matrix<S>,
    params: &[(f64, f64)],
    idx: &[usize],
) -> Result<LatentStats> {
    if params.len() != spectra.rows() {
        return Err(Error::shape("latent params", spectra.rows(), params.len()));
    }
    let l = model.latent_dim;
    let mut stats = LatentStats {
        kl_per_dim: vec![0.0; l],
        correlations: Vec::new(),
        sample_ids: idx.to_vec(),
        f_coeff: idx.iter().map(|&i| params[i].0).collect(),
        delta0: idx.iter().map(|&i| params[i].1).collect(),
        mu: Vec::with_capacity(idx.len()),
        kl: Vec::with_capacity(idx.len()),
    };
    let mut x = Matrix::zeros(0, 0);
    for chunk in idx.chunks(CHUNK) {
        x.gather_rows(spectra, chunk);
        let (mu, lv) = model.encode_batch(&x)?;
        for r in 0..chunk.len() {
            let kl: Vec<f64> = (0..l)
                .map(|j| kl_per_dim(mu.get(r, j), lv.get(r, j)).as_f64())
                .collect();
            for (acc, k) in stats.kl_per_dim.iter_mut().zip(&kl) {
                *acc += k;
            }
            stats.kl.push(kl);
            stats.mu.push(mu.row(r).iter().map(|v| v.as_f64()).collect());
        }
    }
    let n = idx.len().max(1) as f64;
    stats.kl_per_dim.iter_mut().for_each(|k| *k /= n);
    let inv_f: Vec<f64> = stats.f_coeff.iter().map(|f| 1.0 / (1.0 + f)).collect();
    for d in 0..l {
        let col: Vec<f64> = stats.mu.iter().map(|m| m[d]).collect();
        stats.correlations.push([
            pearson(&col, &stats.f_coeff),
            pearson(&col, &stats.delta0),
            pearson(&col, &inv_f),
        ]);
    }
    Ok(stats)
}

/// Two supervised halves: spectrum -> normalized (F, delta0) and back.
#[derive(Clone, Debug)]
pub struct SupervisedAutoencoder<S> {
    pub encoder: MlpModel<S>,
    pub decoder: MlpModel<S>,
    pub encoder_report: TrainReport,
    pub decoder_report: TrainReport,
    /// Test MAE of decoder(encoder(x)) against x.
    pub composed_test_mae: f64,
    /// Test MAE of the decoder fed the true (F, delta0).
    pub decoder_test_mae: f64,
    /// Per-test-sample composed MAE, in `split.test` order.
    pub composed_per_sample: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupervisedAeConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub train: TrainConfig,
}

impl Default for SupervisedAeConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100; 4],
            activation: Activation::Swish,
            train: TrainConfig::default(),
        }
    }
}

/// Trains the encoder and decoder independently by regression on an
/// (F, delta0) dataset, then scores their composition on the test split.
pub fn supervised_autoencoder<S: Scalar>(
    fd: &Dataset,
    split: &DataSplit,
    config: &SupervisedAeConfig,
) -> Result<SupervisedAutoencoder<S>> {
    if fd.problem != Problem::Simplified {
        return Err(Error::Metadata(format!(
            "supervised autoencoder needs an fd dataset, got {}",
            fd.problem.name()
        )));
    }
    let params = fd.features_matrix::<S>();
    let spectra = fd.labels_matrix::<S>();
    let mut rng = ChaCha8Rng::seed_from_u64(config.train.seed);
    let k = params.cols();
    let w = spectra.cols();

    let mut encoder = MlpModel::glorot(&MlpModel::<S>::dims(w, &config.hidden, k), config.activation, &mut rng)?;
    let encoder_report = train(
        &mut encoder,
        Supervised::new(&spectra, &params)?,
        &split.train,
        &split.validation,
        &config.train,
    )?;
    let mut decoder = MlpModel::glorot(&MlpModel::<S>::dims(k, &config.hidden, w), config.activation, &mut rng)?;
    decoder.meta.problem = Some(Problem::Simplified);
    decoder.meta.normalization = Some(fd.normalization.clone());
    decoder.meta.grid = Some(fd.grid);
    let decoder_report = train(
        &mut decoder,
        Supervised::new(&params, &spectra)?,
        &split.train,
        &split.validation,
        &config.train,
    )?;
    let (_, decoder_test_mae) = evaluate(&decoder, Supervised::new(&params, &spectra)?, &split.test)?;

    let mut x = Matrix::zeros(0, 0);
    x.gather_rows(&spectra, &split.test);
    let code = encoder.forward_batch(&x)?;
    let recon = decoder.forward_batch(&code)?;
    let composed_per_sample: Vec<f64> = (0..split.test.len())
        .map(|r| {
            recon
                .row(r)
                .iter()
                .zip(x.row(r))
                .map(|(&p, &t)| (p - t).as_f64().abs())
                .sum::<f64>()
                / w as f64
        })
        .collect();
    let composed_test_mae = composed_per_sample.iter().sum::<f64>() / composed_per_sample.len().max(1) as f64;
    Ok(SupervisedAutoencoder {
        encoder,
        decoder,
        encoder_report,
        decoder_report,
        composed_test_mae,
        decoder_test_mae,
        composed_per_sample,
    })
}

#[derive(Serialize, Deserialize)]
struct VaeFile {
    schema_version: u32,
    latent_dim: usize,
    #[serde(default)]
    config: Option<VaeConfig>,
    encoder: ModelFile,
    decoder: ModelFile,
}

pub fn save_vae<S: Scalar>(model: &VaeModel<S>, config: Option<&VaeConfig>, path: &Path) -> Result<()> {
    let file = VaeFile {
        schema_version: VAE_SCHEMA_VERSION,
        latent_dim: model.latent_dim,
        config: config.cloned(),
        encoder: model.encoder.to_file(),
        decoder: model.decoder.to_file(),
    };
    write_atomic(path, &serde_json::to_vec(&file)?)
}

pub fn load_vae<S: Scalar>(path: &Path) -> Result<(VaeModel<S>, Option<VaeConfig>)> {
    let file: VaeFile = read_versioned(path, VAE_SCHEMA_VERSION)?;
    let model = VaeModel::new(MlpModel::from_file(file.encoder)?, MlpModel::from_file(file.decoder)?)?;
    if model.latent_dim != file.latent_dim {
        return Err(Error::shape("latent dim", file.latent_dim, model.latent_dim));
    }
    Ok((model, file.config))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, proptest};

    fn small_config() -> VaeConfig {
        VaeConfig {
            latent_dim: 3,
            hidden: vec![12, 8],
            ..VaeConfig::default()
        }
    }

    #[test]
    fn zero_encoder_gives_prior() {
        let m = VaeModel::<f64>::zeros(200, &VaeConfig::default()).unwrap();
        let (mu, lv) = m.encode(&[0.4; 200]).unwrap();
        assert_eq!(mu, vec![0.0; 5]);
        assert_eq!(lv, vec![0.0; 5]);
        assert_eq!(kl_unit_gaussian(&mu, &lv).unwrap(), 0.0);
    }

    #[test]
    fn reparameterize_examples() {
        let mu = [0.3, -1.0];
        assert_eq!(reparameterize(&mu, &[0.7, -2.0], &[0.0, 0.0]).unwrap(), mu.to_vec());
        assert_eq!(reparameterize(&mu, &[0.0, 0.0], &[1.0, 1.0]).unwrap(), vec![1.3, 0.0]);
        assert!(reparameterize(&mu, &[0.0], &[1.0, 1.0]).is_err());
    }

    #[test]
    fn reparameterize_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = 3;
        let draws: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let e: Vec<f64> = (0..dims).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                reparameterize(&[0.0; 3], &[0.0; 3], &e).unwrap()
            })
            .collect();
        for d in 0..dims {
            let mean = draws.iter().map(|z| z[d]).sum::<f64>() / 1e4;
            let var = draws.iter().map(|z| (z[d] - mean).powi(2)).sum::<f64>() / 1e4;
            assert!(mean.abs() < 0.05 && (var - 1.0).abs() < 0.05, "{mean} {var}");
        }
    }

    #[test]
    fn kl_examples() {
        assert_eq!(kl_unit_gaussian(&[0.0f64], &[0.0]).unwrap(), 0.0);
        assert!((kl_unit_gaussian(&[1.0f64], &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let lv = 4f64.ln();
        assert!((kl_unit_gaussian(&[0.0], &[lv]).unwrap() - 0.5 * (4.0 - lv - 1.0)).abs() < 1e-15);
        assert!((0.5 * (4.0 - lv - 1.0) - 0.8068528194400546f64).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn kl_is_nonnegative(mu in -5.0f64..5.0, lv in -8.0f64..4.0) {
            let k = kl_per_dim(mu, lv);
            prop_assert!(k >= 0.0);
            if mu.abs() > 1e-3 || lv.abs() > 1e-3 {
                prop_assert!(k > 0.0);
            }
        }
    }

    #[test]
    fn loss_scaling_properties() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = VaeModel::<f64>::glorot(20, &cfg, &mut rng).unwrap();
        let x = Matrix::from_vec(4, 20, (0..80).map(|i| (i as f64 * 0.37).sin().abs()).collect());
        let mut noise = Matrix::zeros(4, 3);
        fill_normal(&mut noise, &mut rng);
        let a = vae_loss(&m, &x, &noise, 0.1, 1.0).unwrap();
        let b = vae_loss(&m, &x, &noise, 0.1, 2.0).unwrap();
        assert!((b.recon - a.recon / 2.0).abs() < 1e-12 * a.recon);
        assert!((a.total - a.recon - 0.1 * a.kl).abs() < 1e-12);
        let tiny = vae_loss(&m, &x, &noise, 1e-12, 1.0).unwrap();
        assert!((tiny.total - tiny.recon).abs() < 1e-9);
    }

    #[test]
    fn perfect_decoder_at_prior_has_zero_loss() {
        // Zero encoder (prior), zero noise, decoder that outputs a constant
        // spectrum through its bias.
        let cfg = VaeConfig {
            latent_dim: 2,
            hidden: vec![],
            ..VaeConfig::default()
        };
        let mut m = VaeModel::<f64>::zeros(6, &cfg).unwrap();
        let target = [0.1, 0.9, 0.5, 0.5, 0.3, 1.0];
        m.decoder.layers_mut()[0].bias.copy_from_slice(&target);
        let x = Matrix::from_rows(&[target, target]);
        let loss = vae_loss(&m, &x, &Matrix::zeros(2, 2), 0.5, 1.0).unwrap();
        assert_eq!(loss.total, 0.0);
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut m = VaeModel::<f64>::glorot(20, &cfg, &mut rng).unwrap();
        let x = Matrix::from_vec(5, 20, (0..100).map(|i| (i as f64 * 0.11).cos().abs()).collect());
        let mut noise = Matrix::zeros(5, 3);
        fill_normal(&mut noise, &mut rng);
        let (beta, c) = (0.3, 0.7);
        let mut ws = VaeWorkspace::default();
        let mut g = VaeGradients::zeros_like(&m);
        vae_loss_grad(&m, &x, &noise, beta, c, &mut ws, &mut g).unwrap();
        let analytic: Vec<Vec<f64>> = g.tensors().map(<[f64]>::to_vec).collect();
        let h = 1e-5;
        let mut probes = 0;
        for (t, grad) in analytic.iter().enumerate() {
            for k in (0..grad.len()).step_by(7) {
                let orig = m.tensors().nth(t).unwrap()[k];
                m.tensors_mut().nth(t).unwrap()[k] = orig + h;
                let up = vae_loss(&m, &x, &noise, beta, c).unwrap().total;
                m.tensors_mut().nth(t).unwrap()[k] = orig - h;
                let down = vae_loss(&m, &x, &noise, beta, c).unwrap().total;
                m.tensors_mut().nth(t).unwrap()[k] = orig;
                let numeric = (up - down) / (2.0 * h);
                let rel = (numeric - grad[k]).abs() / (numeric.abs() + grad[k].abs()).max(1e-8);
                assert!(rel < 1e-4, "tensor {t}[{k}]: {numeric} vs {}", grad[k]);
                probes += 1;
            }
        }
        assert!(probes >= 100);
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let spectra = Matrix::from_vec(
            60,
            20,
            (0..1200)
                .map(|i| {
                    let (r, c) = (i / 20, i % 20);
                    0.5 + 0.4 * ((r as f64 * 0.1 + 1.0) * c as f64 * 0.3).sin()
                })
                .collect(),
        );
        let idx: Vec<usize> = (0..60).collect();
        let cfg = VaeConfig {
            epochs: 30,
            batch_size: 10,
            adam: AdamConfig::with_learning_rate(3e-3),
            ..small_config()
        };
        let (m1, r1) = train_vae(&spectra, &idx, &cfg).unwrap();
        let (m2, r2) = train_vae(&spectra, &idx, &cfg).unwrap();
        assert_eq!(r1.final_loss().unwrap().total, r2.final_loss().unwrap().total);
        assert_eq!(m1, m2);
        assert!(r1.epochs.last().unwrap().total < 0.5 * r1.epochs[0].total);
        let ev = evaluate_vae(&m1, &spectra, &idx).unwrap();
        assert_eq!(ev.kl_per_dim.len(), 3);
        assert!(ev.kl_per_dim.iter().all(|&k| k >= 0.0));
    }

    #[test]
    fn pearson_self_and_constant() {
        let a = [1.0, 2.0, 4.0, 8.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -3.0 * v + 1.0).collect();
        assert!((pearson(&a, &neg) + 1.0).abs() < 1e-15);
        assert!(pearson(&a, &[2.0; 4]).is_nan());
    }

    #[test]
    fn untrained_zero_model_has_degenerate_correlations() {
        let cfg = small_config();
        let m = VaeModel::<f64>::zeros(20, &cfg).unwrap();
        let spectra = Matrix::from_vec(4, 20, (0..80).map(|i| i as f64 / 80.0).collect());
        let params = [(0.1, 600.0), (1.0, 900.0), (5.0, 1200.0), (20.0, 3000.0)];
        let stats = latent_analysis(&m, &spectra, &params, &[0, 1, 2, 3]).unwrap();
        assert!(stats.correlations.iter().flatten().all(|r| r.is_nan()));
        assert!(stats.informative_dims().is_empty());
        assert!(stats.max_abs_r_inverse_f().is_nan());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scatter.csv");
        stats.write_scatter_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "sample_id,F,delta0,one_over_1_plus_F,mu_1,mu_2,mu_3,kl_1,kl_2,kl_3"
        );
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn save_load_round_trip() {
        let cfg = small_config();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = VaeModel::<f64>::glorot(20, &cfg, &mut rng).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.json");
        save_vae(&m, Some(&cfg), &path).unwrap();
        let (back, c) = load_vae::<f64>(&path).unwrap();
        assert_eq!(c, Some(cfg));
        let x: Vec<f64> = (0..20).map(|i| i as f64 / 20.0).collect();
        let (a, b) = (m.encode(&x).unwrap(), back.encode(&x).unwrap());
        for (p, q) in a.0.iter().chain(&a.1).zip(b.0.iter().chain(&b.1)) {
            assert!((p - q).abs() < 1e-12);
        }
    }
}
