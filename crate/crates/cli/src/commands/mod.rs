//! Command implementations. Each returns a typed outcome so the pipeline
//! can also be driven in-process.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use fabry_core::dataset::{load_csv, sidecar_path, split, DataSplit, Dataset, DatasetMeta};
use fabry_core::neural::MlpModel;
use fabry_core::Error as CoreError;

use crate::args::Command;
use crate::UsageError;

pub mod data;
pub mod invert;
pub mod train;
pub mod vae;

pub use data::{gen_data, GenDataOutcome};
pub use invert::{invert, invert_batch, InvertOutcome};
pub use train::{eval, train, EvalOutcome, TrainOutcome};
pub use vae::{analyze_latent, train_vae, SweepRow};

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(&a).map(drop),
        Command::Train(a) => train(&a).map(drop),
        Command::Eval(a) => eval(&a).map(drop),
        Command::TrainVae(a) => train_vae(&a).map(drop),
        Command::AnalyzeLatent(a) => analyze_latent(&a).map(drop),
        Command::Invert(a) => invert(&a).map(drop),
        Command::InvertBatch(a) => invert_batch(&a).map(drop),
    }
}

/// A dataset directory resolves to its `data.csv`.
pub fn data_csv(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("data.csv")
    } else {
        p.to_path_buf()
    }
}

pub struct LoadedData {
    pub csv: PathBuf,
    pub dataset: Dataset,
    pub meta: DatasetMeta,
}

impl LoadedData {
    pub fn load(p: &Path) -> Result<Self> {
        let csv = data_csv(p);
        let (dataset, meta) = load_csv(&csv).with_context(|| format!("loading dataset {}", csv.display()))?;
        Ok(Self { csv, dataset, meta })
    }

    pub fn sidecar(&self) -> PathBuf {
        sidecar_path(&self.csv)
    }

    /// Split recorded with the data; the test set depends only on the data seed.
    pub fn base_split(&self) -> Result<DataSplit> {
        Ok(split(
            self.dataset.len(),
            self.meta.split.unwrap_or_default(),
            self.meta.seed.unwrap_or(0),
        )?)
    }
}

pub fn select_split<'a>(s: &'a DataSplit, name: &str) -> Result<&'a [usize]> {
    Ok(match name {
        "train" => &s.train,
        "validation" | "val" => &s.validation,
        "test" => &s.test,
        other => bail!(UsageError(format!("unknown split {other:?} (train, validation, test)"))),
    })
}

/// `"200x6"` or `"200,100"`.
pub fn parse_layers(s: &str) -> Result<Vec<usize>> {
    let bad = || UsageError(format!("bad layer spec {s:?}; use WIDTHxDEPTH or a comma list"));
    let s = s.trim();
    let layers: Vec<usize> = if let Some((w, d)) = s.split_once(['x', 'X']) {
        let w: usize = w.trim().parse().map_err(|_| bad())?;
        let d: usize = d.trim().parse().map_err(|_| bad())?;
        vec![w; d]
    } else {
        s.split(',')
            .map(|t| t.trim().parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?
    };
    if layers.is_empty() || layers.contains(&0) {
        bail!(bad());
    }
    Ok(layers)
}

/// Comma-separated floats.
pub fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| UsageError(format!("bad {what} value {t:?}")).into())
        })
        .collect()
}

/// `out` with its extension replaced by `suffix` (`m.json` -> `m.report.csv`).
pub fn sibling(out: &Path, suffix: &str) -> PathBuf {
    out.with_extension(suffix)
}

/// `prefix` with `suffix` appended to its file name (`d/run` -> `d/run.svg`).
pub fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn ensure_parent(p: &Path) -> Result<()> {
    if let Some(d) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(d).with_context(|| format!("creating {}", d.display()))?;
    }
    Ok(())
}

/// Errors unless the model was trained on data shaped like `ds`.
pub fn check_compatible(model: &MlpModel<f64>, ds: &Dataset) -> Result<()> {
    let m = &model.meta;
    let mismatch =
        |what: &str| -> anyhow::Error { CoreError::Metadata(format!("model and dataset disagree on {what}")).into() };
    if m.problem.is_some_and(|p| p != ds.problem) {
        return Err(mismatch("the problem"));
    }
    if m.grid.is_some_and(|g| g != ds.grid) {
        return Err(mismatch("the sampling grid"));
    }
    if m.normalization.as_ref().is_some_and(|n| *n != ds.normalization) {
        return Err(mismatch("the feature normalization"));
    }
    if model.input_dim() != ds.normalization.arity() || model.output_dim() != ds.label_len() {
        return Err(CoreError::Metadata(format!(
            "model maps {} -> {} values, dataset has {} features and {} labels",
            model.input_dim(),
            model.output_dim(),
            ds.normalization.arity(),
            ds.label_len()
        ))
        .into());
    }
    Ok(())
}
