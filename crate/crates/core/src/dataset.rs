//! Reference datasets: grids over design parameters labeled by the exact
//! optics, normalization, deterministic splits and CSV persistence.
//!
//! A dataset on disk is a CSV file (one row per sample: normalized features,
//! raw parameters, label samples) plus a JSON sidecar with the grid,
//! normalization and seed.

use std::fs::File;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::matrix::Matrix;
use crate::neural::read_versioned;
use crate::normalize::{FeatureBounds, NormalizationSpec, TargetInterval};
use crate::optics::{spectrum_lambda, spectrum_theta, AngleGrid, DesignParams, Grid, SimplifiedParams, WavelengthGrid};
use crate::scalar::Scalar;

pub const DATASET_SCHEMA_VERSION: u32 = 1;

/// Which forward problem a dataset or model describes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    /// `(theta, n, l) -> T(lambda)`
    Lambda,
    /// `(lambda, n, l) -> T(theta)`
    Theta,
    /// `(F, delta0) -> T(lambda)`
    #[serde(rename = "fd")]
    Simplified,
}

impl Problem {
    pub fn raw_names(self) -> &'static [&'static str] {
        match self {
            Problem::Lambda => &["theta_deg", "n", "l_nm"],
            Problem::Theta => &["lambda_nm", "n", "l_nm"],
            Problem::Simplified => &["f_coeff", "delta0_nm"],
        }
    }

    pub fn arity(self) -> usize {
        self.raw_names().len()
    }

    pub fn name(self) -> &'static str {
        match self {
            Problem::Lambda => "lambda",
            Problem::Theta => "theta",
            Problem::Simplified => "fd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "lambda" => Some(Problem::Lambda),
            "theta" => Some(Problem::Theta),
            "fd" => Some(Problem::Simplified),
            _ => None,
        }
    }
}

/// `min, min + step, ...` up to `max` inclusive, built by integer index.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinRange {
    pub min: f64,
    pub max: f64,
    pub step: f64,
}

impl LinRange {
    pub fn new(min: f64, max: f64, step: f64) -> Self {
        Self { min, max, step }
    }

    pub fn single(v: f64) -> Self {
        Self {
            min: v,
            max: v,
            step: 1.0,
        }
    }

    pub fn count(&self) -> usize {
        if !(self.step > 0.0) || !(self.max >= self.min) {
            return 0;
        }
        ((self.max - self.min) / self.step).round() as usize + 1
    }

    pub fn value(&self, i: usize) -> f64 {
        self.min + i as f64 * self.step
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.count()).map(|i| self.value(i))
    }
}

/// Parameter grid for dataset generation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_values: Vec<f64>,
    pub n_range: LinRange,
    pub l_range: LinRange,
    /// Wavelengths for the `T(theta)` problem.
    pub lambda_range: Option<LinRange>,
}

impl GridSpec {
    /// `theta in {0, +-15, +-30, +-40, +-50, +-60, +-70}`,
    /// `n in [1.05, 3.50]` step 0.05, `l in [100, 1000]` nm step 10.
    pub fn reference_lambda() -> Self {
        Self {
            theta_values: vec![
                -70.0, -60.0, -50.0, -40.0, -30.0, -15.0, 0.0, 15.0, 30.0, 40.0, 50.0, 60.0, 70.0,
            ],
            n_range: LinRange::new(1.05, 3.50, 0.05),
            l_range: LinRange::new(100.0, 1000.0, 10.0),
            lambda_range: None,
        }
    }

    /// Same `n`, `l` grid with `lambda in [400, 452]` nm step 4.
    pub fn reference_theta() -> Self {
        Self {
            theta_values: Vec::new(),
            lambda_range: Some(LinRange::new(400.0, 452.0, 4.0)),
            ..Self::reference_lambda()
        }
    }

    fn theta_bounds(&self) -> (f64, f64) {
        let lo = self.theta_values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.theta_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    }
}

/// One labeled sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Normalized network inputs.
    pub features: Vec<f64>,
    /// Transmission samples on the dataset grid.
    pub label: Vec<f64>,
    /// Physical values of the features, before normalization.
    pub raw_params: Vec<f64>,
}

/// A labeled dataset with the metadata needed to interpret it.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub problem: Problem,
    pub grid: Grid,
    pub normalization: NormalizationSpec,
    pub records: Vec<SampleRecord>,
}

/// Bounds for one normalized axis; a single-valued axis gets a unit-wide
/// window centred on its value.
fn axis_bounds(name: &str, lo: f64, hi: f64) -> FeatureBounds {
    let (min, max) = if lo < hi { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    FeatureBounds {
        name: name.to_string(),
        min,
        max,
    }
}

fn range_bounds(name: &str, r: &LinRange) -> FeatureBounds {
    axis_bounds(name, r.min, r.value(r.count().saturating_sub(1)))
}

/// `(theta, n, l) -> T(lambda)` on the default 200-point wavelength grid,
/// features normalized to `[0, 1]`.
pub fn generate_lambda_dataset(spec: &GridSpec) -> Result<Dataset> {
    generate_lambda_dataset_on(spec, WavelengthGrid::default())
}

pub fn generate_lambda_dataset_on(spec: &GridSpec, grid: WavelengthGrid) -> Result<Dataset> {
    let total = spec.theta_values.len() * spec.n_range.count() * spec.l_range.count();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let (tlo, thi) = spec.theta_bounds();
    let normalization = NormalizationSpec::new(
        vec![
            axis_bounds("theta_deg", tlo, thi),
            range_bounds("n", &spec.n_range),
            range_bounds("l_nm", &spec.l_range),
        ],
        TargetInterval::Unit,
    )?;
    let mut records = Vec::with_capacity(total);
    for &theta in &spec.theta_values {
        for n in spec.n_range.values() {
            for l in spec.l_range.values() {
                let p = DesignParams::new(theta, n, l)?;
                let raw = vec![theta, n, l];
                records.push(SampleRecord {
                    features: normalization.normalize(&raw)?,
                    label: spectrum_lambda(&p, &grid)?.values,
                    raw_params: raw,
                });
            }
        }
    }
    Ok(Dataset {
        problem: Problem::Lambda,
        grid: Grid::Wavelength(grid),
        normalization,
        records,
    })
}

/// `(lambda, n, l) -> T(theta)` on the default 179-point angle grid,
/// features normalized to `[-1, 1]`.
pub fn generate_theta_dataset(spec: &GridSpec) -> Result<Dataset> {
    generate_theta_dataset_on(spec, AngleGrid::default())
}

pub fn generate_theta_dataset_on(spec: &GridSpec, grid: AngleGrid) -> Result<Dataset> {
    let lambdas = spec
        .lambda_range
        .ok_or_else(|| Error::InvalidParams("T(theta) dataset needs a wavelength range".into()))?;
    let total = lambdas.count() * spec.n_range.count() * spec.l_range.count();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let normalization = NormalizationSpec::new(
        vec![
            range_bounds("lambda_nm", &lambdas),
            range_bounds("n", &spec.n_range),
            range_bounds("l_nm", &spec.l_range),
        ],
        TargetInterval::Symmetric,
    )?;
    let mut records = Vec::with_capacity(total);
    for lambda in lambdas.values() {
        for n in spec.n_range.values() {
            for l in spec.l_range.values() {
                let raw = vec![lambda, n, l];
                records.push(SampleRecord {
                    features: normalization.normalize(&raw)?,
                    label: spectrum_theta(lambda, n, l, &grid)?.values,
                    raw_params: raw,
                });
            }
        }
    }
    Ok(Dataset {
        problem: Problem::Theta,
        grid: Grid::Angle(grid),
        normalization,
        records,
    })
}

/// Replaces `(theta, n, l)` features by normalized `(F, delta0)`, with
/// bounds taken from the observed data and mapped onto `[-1, 1]`. Record
/// order and labels are unchanged.
pub fn derive_simplified_dataset(lambda: &Dataset) -> Result<Dataset> {
    if lambda.problem != Problem::Lambda {
        return Err(Error::Metadata(format!(
            "simplified dataset derives from a lambda dataset, got {}",
            lambda.problem.name()
        )));
    }
    let raw: Vec<Vec<f64>> = lambda
        .records
        .iter()
        .map(|r| {
            let s = DesignParams::new(r.raw_params[0], r.raw_params[1], r.raw_params[2])?.simplified()?;
            Ok(vec![s.f_coeff, s.delta0_nm])
        })
        .collect::<Result<_>>()?;
    let normalization = NormalizationSpec::from_observed(
        Problem::Simplified.raw_names(),
        raw.iter().map(Vec::as_slice),
        TargetInterval::Symmetric,
    )?;
    let records = lambda
        .records
        .iter()
        .zip(raw)
        .map(|(r, raw)| {
            Ok(SampleRecord {
                features: normalization.normalize(&raw)?,
                label: r.label.clone(),
                raw_params: raw,
            })
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        problem: Problem::Simplified,
        grid: lambda.grid,
        normalization,
        records,
    })
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn label_len(&self) -> usize {
        self.grid.count()
    }

    /// Recomputes a record's label from its raw parameters with the exact
    /// optics.
    pub fn oracle_label(&self, record: &SampleRecord) -> Result<Vec<f64>> {
        let r = &record.raw_params;
        if r.len() != self.problem.arity() {
            return Err(Error::shape("raw params", self.problem.arity(), r.len()));
        }
        match (self.problem, self.grid) {
            (Problem::Lambda, Grid::Wavelength(g)) => {
                Ok(spectrum_lambda(&DesignParams::new(r[0], r[1], r[2])?, &g)?.values)
            }
            (Problem::Theta, Grid::Angle(g)) => Ok(spectrum_theta(r[0], r[1], r[2], &g)?.values),
            (Problem::Simplified, Grid::Wavelength(g)) => Ok(SimplifiedParams::new(r[0], r[1])?.spectrum(&g).values),
            (p, _) => Err(Error::Metadata(format!(
                "problem {} does not match grid axis {}",
                p.name(),
                self.grid.axis()
            ))),
        }
    }

    pub fn features_matrix<S: Scalar>(&self) -> Matrix<S> {
        let cols = self.normalization.arity();
        let data = self
            .records
            .iter()
            .flat_map(|r| r.features.iter().map(|&v| S::lit(v)))
            .collect();
        Matrix::from_vec(self.records.len(), cols, data)
    }

    pub fn labels_matrix<S: Scalar>(&self) -> Matrix<S> {
        let data = self
            .records
            .iter()
            .flat_map(|r| r.label.iter().map(|&v| S::lit(v)))
            .collect();
        Matrix::from_vec(self.records.len(), self.label_len(), data)
    }
}

/// Split proportions: the test set is carved first, validation is a
/// fraction of the remainder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub test_fraction: f64,
    pub val_fraction_of_rest: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_fraction: 0.10,
            val_fraction_of_rest: 0.15,
        }
    }
}

/// Disjoint train/validation/test row indices. The test set depends only on
/// `test_seed`; train and validation are reshuffled per training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    /// Sorted ascending, so `test[i]` addresses are stable.
    pub test: Vec<usize>,
    pub test_seed: u64,
    pub shuffle_seed: u64,
    pub config: SplitConfig,
}

const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

fn portion(fraction: f64, n: usize) -> usize {
    (fraction * n as f64).round() as usize
}

/// Shuffles `0..n` with `seed`, takes the test set, then validation from the
/// remainder. Uses `seed` for both the test carve and the train/validation
/// shuffle; see [`DataSplit::reshuffle`] to vary only the latter.
pub fn split(n: usize, config: SplitConfig, seed: u64) -> Result<DataSplit> {
    for (name, f) in [
        ("test fraction", config.test_fraction),
        ("validation fraction", config.val_fraction_of_rest),
    ] {
        if !(f > 0.0 && f < 1.0) {
            return Err(Error::DegenerateSplit(format!("{name} must lie in (0, 1), got {f}")));
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = portion(config.test_fraction, n);
    let mut test = order[..n_test.min(n)].to_vec();
    test.sort_unstable();
    let mut rest = order[n_test.min(n)..].to_vec();
    rest.sort_unstable();
    build(rest, test, config, seed, seed)
}

fn build(
    mut rest: Vec<usize>,
    test: Vec<usize>,
    config: SplitConfig,
    test_seed: u64,
    shuffle_seed: u64,
) -> Result<DataSplit> {
    rest.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed ^ SHUFFLE_STREAM));
    let n_val = portion(config.val_fraction_of_rest, rest.len());
    let train = rest.split_off(n_val);
    let validation = rest;
    if train.is_empty() || validation.is_empty() || test.is_empty() {
        return Err(Error::DegenerateSplit(format!(
            "empty partition (train {}, validation {}, test {})",
            train.len(),
            validation.len(),
            test.len()
        )));
    }
    Ok(DataSplit {
        train,
        validation,
        test,
        test_seed,
        shuffle_seed,
        config,
    })
}

impl DataSplit {
    /// Keeps the test set and redraws train/validation from the rest.
    pub fn reshuffle(&self, shuffle_seed: u64) -> Result<DataSplit> {
        let mut rest: Vec<usize> = self.train.iter().chain(&self.validation).copied().collect();
        rest.sort_unstable();
        build(rest, self.test.clone(), self.config, self.test_seed, shuffle_seed)
    }

    pub fn total(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// JSON sidecar stored next to a dataset CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub schema_version: u32,
    pub problem: Problem,
    pub count: usize,
    pub grid: Grid,
    pub normalization: NormalizationSpec,
    pub raw_names: Vec<String>,
    #[serde(default)]
    pub grid_spec: Option<GridSpec>,
    /// Seed that fixes the test split.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub split: Option<SplitConfig>,
}

/// `data.csv` -> `data.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("meta.json")
}

fn header(ds: &Dataset) -> Vec<String> {
    let mut h: Vec<String> = ds
        .normalization
        .names()
        .iter()
        .map(|n| format!("feature:{n}"))
        .collect();
    h.extend(ds.problem.raw_names().iter().map(|n| format!("raw:{n}")));
    h.extend((0..ds.grid.count()).map(|i| format!("label:{}={}", ds.grid.axis(), ds.grid.value(i))));
    h
}

/// Writes the CSV and its sidecar. Values are written in shortest
/// round-trip form, so loading reproduces them exactly.
pub fn save_csv(ds: &Dataset, path: &Path, grid_spec: Option<&GridSpec>, seed: Option<u64>) -> Result<DatasetMeta> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Csv {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    };
    w.write_record(header(ds)).map_err(csv_err)?;
    let mut row = Vec::new();
    for r in &ds.records {
        row.clear();
        row.extend(
            r.features
                .iter()
                .chain(&r.raw_params)
                .chain(&r.label)
                .map(|v| v.to_string()),
        );
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_atomic(path, &bytes)?;
    let meta = DatasetMeta {
        schema_version: DATASET_SCHEMA_VERSION,
        problem: ds.problem,
        count: ds.len(),
        grid: ds.grid,
        normalization: ds.normalization.clone(),
        raw_names: ds.problem.raw_names().iter().map(|s| s.to_string()).collect(),
        grid_spec: grid_spec.cloned(),
        seed,
        split: seed.map(|_| SplitConfig::default()),
    };
    write_atomic(&sidecar_path(path), &serde_json::to_vec_pretty(&meta)?)?;
    Ok(meta)
}

pub fn load_meta(csv_path: &Path) -> Result<DatasetMeta> {
    read_versioned(&sidecar_path(csv_path), DATASET_SCHEMA_VERSION)
}

/// Loads a CSV written by [`save_csv`], validating every row against the
/// sidecar metadata.
pub fn load_csv(path: &Path) -> Result<(Dataset, DatasetMeta)> {
    let meta = load_meta(path)?;
    let n_feat = meta.normalization.arity();
    let n_raw = meta.problem.arity();
    let n_label = meta.grid.count();
    let err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(File::open(path)?);
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    if headers.len() != n_feat + n_raw + n_label {
        return Err(err(
            1,
            format!(
                "header has {} columns, expected {} features + {} raw + {} labels",
                headers.len(),
                n_feat,
                n_raw,
                n_label
            ),
        ));
    }
    let mut records = Vec::with_capacity(meta.count);
    for row in reader.records() {
        let row = row.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let values = row
            .iter()
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| err(line, format!("cannot parse {s:?} as a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() < n_feat + n_raw {
            return Err(err(line, format!("row has only {} columns", values.len())));
        }
        let found = values.len() - n_feat - n_raw;
        if found != n_label {
            return Err(err(
                line,
                format!("label length mismatch: expected {n_label}, found {found}"),
            ));
        }
        records.push(SampleRecord {
            features: values[..n_feat].to_vec(),
            raw_params: values[n_feat..n_feat + n_raw].to_vec(),
            label: values[n_feat + n_raw..].to_vec(),
        });
    }
    if records.len() != meta.count {
        return Err(Error::Metadata(format!(
            "{} declares {} records, file has {}",
            sidecar_path(path).display(),
            meta.count,
            records.len()
        )));
    }
    let ds = Dataset {
        problem: meta.problem,
        grid: meta.grid,
        normalization: meta.normalization.clone(),
        records,
    };
    Ok((ds, meta))
}
