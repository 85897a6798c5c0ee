//! Inverse design by gradient descent on the inputs of a frozen surrogate,
//! with section-search initialization and periodic re-initialization.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Problem};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;
use crate::neural::{
    mae_metric, mse_loss, mse_with_grad, AdamConfig, AdamState, ForwardCache, GradTargets, Gradients, MlpModel,
};
use crate::normalize::TargetInterval;
use crate::optics::WavelengthGrid;
use crate::scalar::Scalar;
use crate::spectral::{fourier_mse, LossWeights, LowDft, PowerSpectrum};

/// Secondary loss used by the section searches.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitLoss {
    Mse,
    Fourier,
    Combined,
}

impl InitLoss {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mse" | "transmission_mse" => Some(InitLoss::Mse),
            "fourier" | "fourier_mse" => Some(InitLoss::Fourier),
            "combined" => Some(InitLoss::Combined),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InitLoss::Mse => "mse",
            InitLoss::Fourier => "fourier",
            InitLoss::Combined => "combined",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseConfig {
    pub init_loss: InitLoss,
    /// Re-run the section searches every this many steps; 0 disables.
    pub reinit_every: usize,
    pub max_iters: usize,
    pub learning_rate: f64,
    pub grid_points: usize,
    pub clamp_to_range: bool,
    pub seed: u64,
    #[serde(default)]
    pub loss_weights: LossWeights,
    /// Normalized starting point; skips the initial section searches.
    #[serde(default)]
    pub initial_params: Option<Vec<f64>>,
}

impl Default for InverseConfig {
    fn default() -> Self {
        Self {
            init_loss: InitLoss::Combined,
            reinit_every: 100,
            max_iters: 1000,
            learning_rate: 0.01,
            grid_points: 200,
            clamp_to_range: true,
            seed: 0,
            loss_weights: LossWeights::default(),
            initial_params: None,
        }
    }
}

impl InverseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_points < 2 {
            return Err(Error::InvalidParams(format!(
                "grid_points must be at least 2, got {}",
                self.grid_points
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidParams(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TargetSource {
    TestSet { index: usize },
    File { path: PathBuf },
    Inline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetSpectrum {
    pub values: Vec<f64>,
    pub source: TargetSource,
}

impl TargetSpectrum {
    pub fn inline(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Target("target contains non-finite values".into()));
        }
        Ok(Self {
            values,
            source: TargetSource::Inline,
        })
    }

    /// Label of test row `index` of `ds`, with its normalized features as the
    /// known truth.
    pub fn from_dataset(ds: &Dataset, index: usize) -> Result<(Self, Vec<f64>)> {
        let rec = ds
            .records
            .get(index)
            .ok_or_else(|| Error::Target(format!("sample {index} out of range ({} records)", ds.len())))?;
        Ok((
            Self {
                values: rec.label.clone(),
                source: TargetSource::TestSet { index },
            },
            rec.features.clone(),
        ))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub iter: usize,
    /// Normalized parameters at which `mse` was evaluated.
    pub params: Vec<f64>,
    pub mse: f64,
    /// Whether a re-initialization happened just before this point.
    pub reinit: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseResult {
    pub trajectory: Vec<TrajectoryPoint>,
    /// Trajectory index with the lowest transmission MSE.
    pub best_iter: usize,
    pub initial_mse: f64,
    pub final_params: Vec<f64>,
    pub final_physical: Option<Vec<f64>>,
    pub final_spectrum: Vec<f64>,
    pub final_mse: f64,
    pub final_mae: f64,
    /// MAE of the surrogate at the true parameters, when known.
    pub baseline_mae: Option<f64>,
    pub true_params: Option<Vec<f64>>,
}

impl InverseResult {
    /// `final_mae - baseline_mae`.
    pub fn delta_mae(&self) -> Option<f64> {
        self.baseline_mae.map(|b| self.final_mae - b)
    }

    /// Records the known truth (normalized) and the surrogate's MAE there.
    pub fn set_truth<S: Scalar>(
        &mut self,
        model: &MlpModel<S>,
        target: &TargetSpectrum,
        true_params: &[f64],
    ) -> Result<()> {
        self.baseline_mae = Some(baseline_mae(model, target, true_params)?);
        self.true_params = Some(true_params.to_vec());
        Ok(())
    }

    /// CSV with columns `iter, <param names>..., mse`.
    pub fn write_trajectory_csv(&self, names: &[String], path: &Path) -> Result<()> {
        let mut out = String::from("iter");
        for n in names {
            out.push(',');
            out.push_str(n);
        }
        out.push_str(",mse,reinit\n");
        for p in &self.trajectory {
            write!(out, "{}", p.iter).unwrap();
            for v in &p.params {
                write!(out, ",{v}").unwrap();
            }
            writeln!(out, ",{},{}", p.mse, u8::from(p.reinit)).unwrap();
        }
        write_atomic(path, out.as_bytes())
    }
}

/// MAE between the surrogate's prediction at `params` and the target.
pub fn baseline_mae<S: Scalar>(model: &MlpModel<S>, target: &TargetSpectrum, params: &[f64]) -> Result<f64> {
    let x: Vec<S> = params.iter().map(|&v| S::lit(v)).collect();
    let pred: Vec<f64> = model.forward(&x)?.into_iter().map(S::as_f64).collect();
    mae_metric(&pred, &target.values)
}

/// Display names of the model inputs.
pub fn param_names<S: Scalar>(model: &MlpModel<S>) -> Vec<String> {
    match &model.meta.normalization {
        Some(n) => n.names().into_iter().map(String::from).collect(),
        None => (1..=model.input_dim()).map(|i| format!("p{i}")).collect(),
    }
}

fn normalized_bounds<S: Scalar>(model: &MlpModel<S>) -> (f64, f64) {
    model
        .meta
        .normalization
        .as_ref()
        .map_or(TargetInterval::Symmetric, |n| n.target)
        .bounds()
}

/// Transmission MSE of `model(params)` against `target` and its gradient
/// with respect to `params`.
pub fn objective_grad<S: Scalar>(model: &MlpModel<S>, params: &[S], target: &[S]) -> Result<(S, Vec<S>)> {
    let mut cache = ForwardCache::default();
    let mut grads = Gradients::zeros_like(model);
    let mut d_out = Matrix::zeros(0, 0);
    objective_grad_with(model, params, target, &mut cache, &mut grads, &mut d_out)
}

fn objective_grad_with<S: Scalar>(
    model: &MlpModel<S>,
    params: &[S],
    target: &[S],
    cache: &mut ForwardCache<S>,
    grads: &mut Gradients<S>,
    d_out: &mut Matrix<S>,
) -> Result<(S, Vec<S>)> {
    if target.len() != model.output_dim() {
        return Err(Error::shape("inverse target", model.output_dim(), target.len()));
    }
    let x = Matrix::from_vec(1, params.len(), params.to_vec());
    model.forward_cached(&x, cache)?;
    let t = Matrix::from_vec(1, target.len(), target.to_vec());
    let mse = mse_with_grad(cache.output(), &t, d_out)?;
    model.backward(cache, d_out, grads, GradTargets::Input)?;
    Ok((mse, grads.input.row(0).to_vec()))
}

/// Shared state for one inversion run.
struct Inverter<'a, S> {
    model: &'a MlpModel<S>,
    config: &'a InverseConfig,
    target: Vec<S>,
    target_f64: Vec<f64>,
    target_ps: PowerSpectrum,
    dft: LowDft,
    lo: f64,
    hi: f64,
    cache: ForwardCache<S>,
    grads: Gradients<S>,
    d_out: Matrix<S>,
}

impl<'a, S: Scalar> Inverter<'a, S> {
    fn new(model: &'a MlpModel<S>, target: &[f64], config: &'a InverseConfig) -> Result<Self> {
        config.validate()?;
        if target.len() != model.output_dim() {
            return Err(Error::shape("inverse target", model.output_dim(), target.len()));
        }
        let dft = LowDft::new(target.len())?;
        let (lo, hi) = normalized_bounds(model);
        Ok(Self {
            model,
            config,
            target: target.iter().map(|&v| S::lit(v)).collect(),
            target_f64: target.to_vec(),
            target_ps: dft.power_spectrum(target)?,
            dft,
            lo,
            hi,
            cache: ForwardCache::default(),
            grads: Gradients::zeros_like(model),
            d_out: Matrix::zeros(0, 0),
        })
    }

    fn init_loss(&self, pred: &[S]) -> Result<f64> {
        let mse = || -> Result<f64> { Ok(mse_loss(pred, &self.target)?.as_f64()) };
        let fourier = || -> Result<f64> { Ok(fourier_mse(&self.dft.power_spectrum(pred)?, &self.target_ps)) };
        let w = self.config.loss_weights;
        Ok(match self.config.init_loss {
            InitLoss::Mse => mse()?,
            InitLoss::Fourier => fourier()?,
            InitLoss::Combined => w.transmission * mse()? + w.fourier * fourier()?,
        })
    }

    /// Minimizes the secondary loss along `coord` over `grid_points` evenly
    /// spaced normalized values, others fixed at `base`. Ties go to the
    /// smallest value.
    fn section(&self, base: &[S], coord: usize) -> Result<S> {
        let g = self.config.grid_points;
        let k = base.len();
        let mut x = Matrix::zeros(g, k);
        let value = |i: usize| self.lo + (self.hi - self.lo) * i as f64 / (g - 1) as f64;
        for i in 0..g {
            let row = x.row_mut(i);
            row.copy_from_slice(base);
            row[coord] = S::lit(value(i));
        }
        let pred = self.model.forward_batch(&x)?;
        let mut best = (0, f64::INFINITY);
        for i in 0..g {
            let l = self.init_loss(pred.row(i))?;
            if l < best.1 {
                best = (i, l);
            }
        }
        Ok(S::lit(value(best.0)))
    }

    fn random_coord<R: Rng>(&self, rng: &mut R) -> S {
        S::lit(rng.random_range(self.lo..=self.hi))
    }

    fn clamp(&self, p: &mut [S]) {
        let (lo, hi) = (S::lit(self.lo), S::lit(self.hi));
        for v in p {
            *v = v.max(lo).min(hi);
        }
    }

    /// Adam on transmission MSE from `p`, calling `reinit` every
    /// `reinit_every` steps. The result is the best trajectory point.
    fn descend(
        mut self,
        mut p: Vec<S>,
        mut reinit: impl FnMut(&Self, &mut Vec<S>) -> Result<()>,
    ) -> Result<InverseResult> {
        let adam_cfg = AdamConfig::with_learning_rate(self.config.learning_rate);
        let mut adam = AdamState::new([p.len()]);
        let mut trajectory = Vec::with_capacity(self.config.max_iters + 1);
        for iter in 0..=self.config.max_iters {
            let every = self.config.reinit_every;
            let reinit_now = every > 0 && iter > 0 && iter % every == 0;
            if reinit_now {
                reinit(&self, &mut p)?;
                adam.reset();
            }
            let (mse, grad) = objective_grad_with(
                self.model,
                &p,
                &self.target,
                &mut self.cache,
                &mut self.grads,
                &mut self.d_out,
            )?;
            let mse = mse.as_f64();
            if !mse.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!(
                    "inversion produced non-finite loss at step {iter}"
                )));
            }
            trajectory.push(TrajectoryPoint {
                iter,
                params: p.iter().map(|v| v.as_f64()).collect(),
                mse,
                reinit: reinit_now,
            });
            if iter == self.config.max_iters {
                break;
            }
            adam.step(&adam_cfg, [p.as_mut_slice()], [grad.as_slice()]);
            if self.config.clamp_to_range {
                self.clamp(&mut p);
            }
        }
        let mut best_iter = 0;
        for (i, t) in trajectory.iter().enumerate() {
            if t.mse < trajectory[best_iter].mse {
                best_iter = i;
            }
        }
        let final_params = trajectory[best_iter].params.clone();
        let x: Vec<S> = final_params.iter().map(|&v| S::lit(v)).collect();
        let final_spectrum: Vec<f64> = self.model.forward(&x)?.into_iter().map(S::as_f64).collect();
        let final_mae = mae_metric(&final_spectrum, &self.target_f64)?;
        let final_physical = match &self.model.meta.normalization {
            Some(n) => Some(n.denormalize(&final_params)?),
            None => None,
        };
        Ok(InverseResult {
            initial_mse: trajectory[0].mse,
            final_mse: trajectory[best_iter].mse,
            best_iter,
            trajectory,
            final_params,
            final_physical,
            final_spectrum,
            final_mae,
            baseline_mae: None,
            true_params: None,
        })
    }

    fn initial(&self) -> Result<Option<Vec<S>>> {
        match &self.config.initial_params {
            None => Ok(None),
            Some(p) if p.len() == self.model.input_dim() => Ok(Some(p.iter().map(|&v| S::lit(v)).collect())),
            Some(p) => Err(Error::shape("initial params", self.model.input_dim(), p.len())),
        }
    }
}

/// Section search over normalized `delta0` with `F` held at `f_fixed`
/// (both normalized).
pub fn grid_init_delta0<S: Scalar>(
    model: &MlpModel<S>,
    target: &[f64],
    f_fixed: f64,
    config: &InverseConfig,
) -> Result<f64> {
    check_arity(model, 2)?;
    let inv = Inverter::new(model, target, config)?;
    Ok(inv.section(&[S::lit(f_fixed), S::zero()], 1)?.as_f64())
}

/// Section search along one normalized coordinate with the others fixed.
pub fn section_search<S: Scalar>(
    model: &MlpModel<S>,
    target: &[f64],
    base: &[f64],
    coord: usize,
    config: &InverseConfig,
) -> Result<f64> {
    if base.len() != model.input_dim() || coord >= base.len() {
        return Err(Error::shape("section base", model.input_dim(), base.len()));
    }
    let inv = Inverter::new(model, target, config)?;
    let base: Vec<S> = base.iter().map(|&v| S::lit(v)).collect();
    Ok(inv.section(&base, coord)?.as_f64())
}

fn check_arity<S: Scalar>(model: &MlpModel<S>, arity: usize) -> Result<()> {
    if model.input_dim() != arity {
        return Err(Error::shape("surrogate input arity", arity, model.input_dim()));
    }
    Ok(())
}

/// Inversion through an `(F, delta0)` surrogate: F starts at the normalized
/// midpoint, delta0 by section search; delta0 is re-selected at the current
/// F every `reinit_every` steps.
pub fn invert_fd<S: Scalar>(
    model: &MlpModel<S>,
    target: &TargetSpectrum,
    config: &InverseConfig,
) -> Result<InverseResult> {
    check_arity(model, 2)?;
    let inv = Inverter::new(model, &target.values, config)?;
    let p = match inv.initial()? {
        Some(p) => p,
        None => {
            let f = S::lit(0.5 * (inv.lo + inv.hi));
            vec![f, inv.section(&[f, S::zero()], 1)?]
        }
    };
    inv.descend(p, |inv, p| {
        p[1] = inv.section(p, 1)?;
        Ok(())
    })
}

/// Inversion through a `(theta, n, l)` surrogate with the three-step
/// initialization: theta for random n and l, then n for a fresh random l,
/// then l. Re-initialization repeats the three searches from the current
/// point.
pub fn invert_mat<S: Scalar>(
    model: &MlpModel<S>,
    target: &TargetSpectrum,
    config: &InverseConfig,
) -> Result<InverseResult> {
    check_arity(model, 3)?;
    let inv = Inverter::new(model, &target.values, config)?;
    let p = match inv.initial()? {
        Some(p) => p,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut p = vec![S::zero(), inv.random_coord(&mut rng), inv.random_coord(&mut rng)];
            p[0] = inv.section(&p, 0)?;
            p[2] = inv.random_coord(&mut rng);
            p[1] = inv.section(&p, 1)?;
            p[2] = inv.section(&p, 2)?;
            p
        }
    };
    inv.descend(p, |inv, p| {
        for c in 0..3 {
            p[c] = inv.section(p, c)?;
        }
        Ok(())
    })
}

/// Dispatches on surrogate arity: 2 inputs for `(F, delta0)`, 3 for
/// `(theta, n, l)`.
pub fn invert<S: Scalar>(
    model: &MlpModel<S>,
    target: &TargetSpectrum,
    config: &InverseConfig,
) -> Result<InverseResult> {
    if model.meta.problem == Some(Problem::Theta) {
        return Err(Error::InvalidParams(
            "angle-resolved surrogates have the wavelength as an input and cannot be inverted".into(),
        ));
    }
    match model.input_dim() {
        2 => invert_fd(model, target, config),
        3 => invert_mat(model, target, config),
        k => Err(Error::InvalidParams(format!(
            "no inversion scheme for a {k}-input surrogate"
        ))),
    }
}

/// One target of a batch run.
#[derive(Clone, Debug)]
pub struct BatchTarget {
    pub id: String,
    pub target: TargetSpectrum,
    /// Normalized true parameters, when known.
    pub truth: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchRow {
    pub target_id: String,
    pub final_mae: Option<f64>,
    pub baseline_mae: Option<f64>,
    pub delta: Option<f64>,
    pub error: Option<String>,
}

/// Counts in 1-percentage-point bins `[k/100, (k+1)/100)`; values below 0
/// fall in the first bin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn from_values(values: &[f64], bin_width: f64) -> Self {
        let mut counts = vec![0usize; 1];
        for &v in values {
            let k = if v.is_finite() && v > 0.0 {
                (v / bin_width).floor() as usize
            } else {
                0
            };
            if k >= counts.len() {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn first_bin(&self) -> usize {
        self.counts[0]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("bin_low,bin_high,count\n");
        for (k, c) in self.counts.iter().enumerate() {
            let lo = k as f64 * self.bin_width;
            writeln!(out, "{},{},{}", lo, lo + self.bin_width, c).unwrap();
        }
        write_atomic(path, out.as_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct BatchReport {
    pub rows: Vec<BatchRow>,
    pub histogram: Histogram,
    /// Full result per target, `None` where the run failed.
    pub results: Vec<Option<InverseResult>>,
}

impl BatchReport {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.error.is_some()).count()
    }

    /// Fraction of successful runs in the first histogram bin.
    pub fn first_bin_fraction(&self) -> f64 {
        let n = self.histogram.total();
        if n == 0 {
            0.0
        } else {
            self.histogram.first_bin() as f64 / n as f64
        }
    }

    /// CSV with columns `target_id, final_mae, baseline_mae, delta`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let fmt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let mut out = String::from("target_id,final_mae,baseline_mae,delta,error\n");
        for r in &self.rows {
            let err = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
            writeln!(
                out,
                "{},{},{},{},{}",
                r.target_id,
                fmt(r.final_mae),
                fmt(r.baseline_mae),
                fmt(r.delta),
                err
            )
            .unwrap();
        }
        write_atomic(path, out.as_bytes())
    }
}

/// Inverts every target (in parallel over `threads` workers) and bins the
/// per-target score: `final - baseline` MAE when the truth is known, else
/// the final MAE. Target `i` runs with seed `config.seed + i`, so results do
/// not depend on the thread count. Failed runs are recorded and skipped.
pub fn evaluate_batch<S: Scalar>(
    model: &MlpModel<S>,
    targets: &[BatchTarget],
    config: &InverseConfig,
    threads: usize,
) -> Result<BatchReport> {
    config.validate()?;
    let slots: Vec<Mutex<Option<Result<InverseResult>>>> = targets.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= targets.len() {
            break;
        }
        let t = &targets[i];
        let cfg = InverseConfig {
            seed: config.seed.wrapping_add(i as u64),
            ..config.clone()
        };
        let run = invert(model, &t.target, &cfg).and_then(|mut r| {
            if let Some(truth) = &t.truth {
                r.set_truth(model, &t.target, truth)?;
            }
            Ok(r)
        });
        *slots[i].lock().unwrap() = Some(run);
    };
    let threads = threads.max(1).min(targets.len().max(1));
    if threads == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(work);
            }
        });
    }

    let mut rows = Vec::with_capacity(targets.len());
    let mut results = Vec::with_capacity(targets.len());
    let mut scores = Vec::new();
    for (t, slot) in targets.iter().zip(slots) {
        match slot.into_inner().unwrap().expect("every target ran") {
            Ok(r) => {
                let delta = r.delta_mae();
                scores.push(delta.unwrap_or(r.final_mae));
                rows.push(BatchRow {
                    target_id: t.id.clone(),
                    final_mae: Some(r.final_mae),
                    baseline_mae: r.baseline_mae,
                    delta,
                    error: None,
                });
                results.push(Some(r));
            }
            Err(e) => {
                rows.push(BatchRow {
                    target_id: t.id.clone(),
                    final_mae: None,
                    baseline_mae: None,
                    delta: None,
                    error: Some(e.to_string()),
                });
                results.push(None);
            }
        }
    }
    Ok(BatchReport {
        rows,
        histogram: Histogram::from_values(&scores, 0.01),
        results,
    })
}

/// Reads a two-column `(wavelength_nm, value)` CSV (header optional) and
/// interpolates it linearly onto `grid`; grid points outside the sampled
/// range take the nearest sample.
pub fn load_target(path: &Path, grid: &WavelengthGrid) -> Result<TargetSpectrum> {
    let text = std::fs::read_to_string(path)?;
    let values = parse_target(&text, grid).map_err(|e| match e {
        Error::Target(m) => Error::Target(format!("{}: {m}", path.display())),
        other => other,
    })?;
    Ok(TargetSpectrum {
        values,
        source: TargetSource::File {
            path: path.to_path_buf(),
        },
    })
}

fn parse_target(text: &str, grid: &WavelengthGrid) -> Result<Vec<f64>> {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split([',', ';', '\t', ' ']).filter(|s| !s.is_empty());
        let parsed = match (cols.next(), cols.next()) {
            (Some(a), Some(b)) => a.trim().parse::<f64>().ok().zip(b.trim().parse::<f64>().ok()),
            _ => None,
        };
        match parsed {
            Some((x, y)) if x.is_finite() && y.is_finite() => pts.push((x, y)),
            _ if pts.is_empty() && i == 0 => continue,
            _ => {
                return Err(Error::Target(format!(
                    "line {}: expected two numbers, got {line:?}",
                    i + 1
                )))
            }
        }
    }
    if pts.len() < 2 {
        return Err(Error::Target(format!("need at least 2 points, found {}", pts.len())));
    }
    if pts.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Target("wavelengths must be strictly increasing".into()));
    }
    Ok(grid
        .values()
        .map(|x| {
            let j = pts.partition_point(|p| p.0 <= x);
            if j == 0 {
                pts[0].1
            } else if j == pts.len() {
                pts[j - 1].1
            } else {
                let (a, b) = (pts[j - 1], pts[j]);
                a.1 + (b.1 - a.1) * (x - a.0) / (b.0 - a.0)
            }
        })
        .collect())
}
