//! Support code for the end-to-end acceptance run in `tests/acceptance.rs`.

use std::path::{Path, PathBuf};

use fabry_cli::args::{GenDataArgs, TrainArgs};
use fabry_cli::commands::{self, LoadedData};
use fabry_cli::manifest::{manifest_path, RunManifest};
use fabry_core::neural::{evaluate, load_model, Supervised};
use fabry_core::Mlp;

/// Outcome of one acceptance criterion.
pub struct Verdict {
    pub pass: bool,
    pub detail: String,
}

impl Verdict {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

/// Artifact directory of a run. With `reuse`, datasets and surrogates
/// already present are loaded instead of regenerated.
pub struct Workspace {
    pub dir: PathBuf,
    pub reuse: bool,
}

impl Workspace {
    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Reference dataset of `problem` (data seed 0); returns its directory.
    pub fn dataset(&self, problem: &str) -> PathBuf {
        let out = self.path(&format!("data-{problem}"));
        if !(self.reuse && out.join("data.csv").exists()) {
            commands::gen_data(&GenDataArgs {
                problem: problem.into(),
                out: out.clone(),
                seed: 0,
            })
            .expect("dataset generation");
        }
        out
    }

    /// Trains a Swish surrogate with the reference optimizer settings;
    /// returns the model, its test MAE and the training wall clock.
    pub fn surrogate(&self, data: &Path, name: &str, layers: &str, max_epochs: usize) -> (Mlp, f64, f64) {
        let out = self.path(&format!("{name}.json"));
        if !(self.reuse && out.exists()) {
            commands::train(&TrainArgs {
                data: data.to_path_buf(),
                layers: layers.into(),
                activation: "swish".into(),
                patience: 30,
                max_epochs,
                batch_size: 200,
                lr: 1e-3,
                seed: 0,
                out: out.clone(),
                log_every: 25,
            })
            .expect("training");
        }
        let manifest: RunManifest =
            serde_json::from_slice(&std::fs::read(manifest_path(&out)).unwrap()).expect("train manifest");
        let model: Mlp = load_model(&out).unwrap();
        let loaded = LoadedData::load(data).unwrap();
        let sp = loaded.base_split().unwrap().reshuffle(0).unwrap();
        let (x, y) = (
            loaded.dataset.features_matrix::<f64>(),
            loaded.dataset.labels_matrix::<f64>(),
        );
        let (_, mae) = evaluate(&model, Supervised::new(&x, &y).unwrap(), &sp.test).unwrap();
        (model, mae, manifest.wall_clock_secs)
    }
}

pub fn pct(v: f64) -> String {
    format!("{:.3}%", 100.0 * v)
}
