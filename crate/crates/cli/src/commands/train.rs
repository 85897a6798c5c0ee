use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fabry_core::neural::{
    evaluate, load_model, per_sample_errors, save_model, train_with_observer, Activation, AdamConfig, ModelMeta,
    Supervised, TrainConfig, TrainReport, TrainingFingerprint,
};
use fabry_core::{write_atomic, Mlp};

use super::{check_compatible, ensure_parent, parse_layers, select_split, sibling, suffixed, LoadedData};
use crate::args::{EvalArgs, TrainArgs};
use crate::manifest::{manifest_path, Recorder};
use crate::svg::{figure, Panel, Series, PALETTE};
use crate::UsageError;

pub struct TrainOutcome {
    pub model: Mlp,
    pub report: TrainReport,
    pub test_mse: f64,
    pub test_mae: f64,
    pub model_path: PathBuf,
}

pub fn train(a: &TrainArgs) -> Result<TrainOutcome> {
    let hidden = parse_layers(&a.layers)?;
    let Some(act) = Activation::parse(&a.activation) else {
        bail!(UsageError(format!("unknown activation {:?}", a.activation)));
    };
    if a.batch_size == 0 || a.max_epochs == 0 || a.lr.is_nan() || a.lr <= 0.0 {
        bail!(UsageError(
            "batch size, max epochs and learning rate must be positive".into()
        ));
    }
    let mut rec = Recorder::new("train", a, Some(a.seed))?;
    let data = LoadedData::load(&a.data)?;
    rec.input(&data.csv);
    rec.input(&data.sidecar());
    let ds = &data.dataset;
    let split = data.base_split()?.reshuffle(a.seed)?;
    let x = ds.features_matrix::<f64>();
    let y = ds.labels_matrix::<f64>();
    let sup = Supervised::new(&x, &y)?;

    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let mut model = Mlp::glorot(&Mlp::dims(x.cols(), &hidden, y.cols()), act, &mut rng)?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        patience: a.patience,
        max_epochs: a.max_epochs,
        seed: a.seed,
        adam: AdamConfig::with_learning_rate(a.lr),
    };
    let report = train_with_observer(&mut model, sup, &split.train, &split.validation, &cfg, |e| {
        if a.log_every > 0 && e.epoch % a.log_every == 0 {
            eprintln!(
                "epoch {:>4}  train {:.6}  val {:.6}  val MAE {:.4}%",
                e.epoch,
                e.train_loss,
                e.val_loss,
                100.0 * e.val_mae
            );
        }
    })?;
    let (test_mse, test_mae) = evaluate(&model, sup, &split.test)?;

    model.meta = ModelMeta {
        problem: Some(ds.problem),
        normalization: Some(ds.normalization.clone()),
        grid: Some(ds.grid),
        training_fingerprint: Some(TrainingFingerprint {
            data_seed: data.meta.seed,
            train_seed: Some(a.seed),
            config_sha256: Some(rec.config_sha256()),
            best_epoch: Some(report.best_epoch),
            note: None,
        }),
    };
    ensure_parent(&a.out)?;
    save_model(&model, &a.out)?;
    rec.output(&a.out);

    let csv_path = sibling(&a.out, "report.csv");
    let mut csv = String::from("epoch,train_loss,val_loss,val_mae\n");
    for e in &report.epochs {
        writeln!(csv, "{},{},{},{}", e.epoch, e.train_loss, e.val_loss, e.val_mae)?;
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    rec.output(&csv_path);

    let pts = |f: fn(&fabry_core::neural::EpochRecord) -> f64| -> Vec<(f64, f64)> {
        report.epochs.iter().map(|e| (e.epoch as f64, f(e))).collect()
    };
    let svg_path = sibling(&a.out, "loss.svg");
    let svg = figure(
        &[
            Panel::lines(
                "Loss",
                "epoch",
                "MSE",
                vec![
                    Series::new("training", pts(|e| e.train_loss), PALETTE[0]),
                    Series::new("validation", pts(|e| e.val_loss), PALETTE[1]).dashed(),
                ],
            )
            .log_y(),
            Panel::lines(
                "Validation MAE",
                "epoch",
                "MAE",
                vec![Series::new("validation", pts(|e| e.val_mae), PALETTE[1])],
            )
            .log_y(),
        ],
        2,
    );
    write_atomic(&svg_path, svg.as_bytes())?;
    rec.output(&svg_path);
    rec.finish(&manifest_path(&a.out))?;

    println!(
        "epochs {} (best {}, stopped by {:?}), {:.1} s",
        report.epochs.len(),
        report.best_epoch,
        report.stopped_by,
        report.wall_clock_secs
    );
    println!("validation MAE {:.4}%", 100.0 * report.best().val_mae);
    println!("test MSE {test_mse:.6e}");
    println!("test MAE {:.4}%", 100.0 * test_mae);
    Ok(TrainOutcome {
        model,
        report,
        test_mse,
        test_mae,
        model_path: a.out.clone(),
    })
}

pub struct EvalOutcome {
    pub mse: f64,
    pub mae: f64,
    /// `(dataset row, mse, mae)`.
    pub per_sample: Vec<(usize, f64, f64)>,
    pub csv_path: PathBuf,
    pub svg_path: PathBuf,
}

pub fn eval(a: &EvalArgs) -> Result<EvalOutcome> {
    let mut rec = Recorder::new("eval", a, None)?;
    let model: Mlp = load_model(&a.model)?;
    rec.input(&a.model);
    let data = LoadedData::load(&a.data)?;
    rec.input(&data.csv);
    check_compatible(&model, &data.dataset)?;
    let base = data.base_split()?;
    let split = match model.meta.training_fingerprint.as_ref().and_then(|f| f.train_seed) {
        Some(s) => base.reshuffle(s)?,
        None => base,
    };
    let idx = select_split(&split, &a.split)?;
    let ds = &data.dataset;
    let x = ds.features_matrix::<f64>();
    let y = ds.labels_matrix::<f64>();
    let errs = per_sample_errors(&model, Supervised::new(&x, &y)?, idx)?;
    let n = errs.len().max(1) as f64;
    let mse = errs.iter().map(|e| e.0).sum::<f64>() / n;
    let mae = errs.iter().map(|e| e.1).sum::<f64>() / n;
    let per_sample: Vec<(usize, f64, f64)> = idx.iter().zip(&errs).map(|(&i, e)| (i, e.0, e.1)).collect();

    let prefix = a
        .out
        .clone()
        .unwrap_or_else(|| sibling(&a.model, &format!("eval-{}", a.split)));
    ensure_parent(&prefix)?;
    let csv_path = suffixed(&prefix, "csv");
    let mut csv = String::from("position,row,mse,mae\n");
    for (k, (i, se, ae)) in per_sample.iter().enumerate() {
        writeln!(csv, "{k},{i},{se},{ae}")?;
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    rec.output(&csv_path);

    let shown = a.samples.min(idx.len());
    let mut panels = Vec::with_capacity(shown);
    for k in 0..shown {
        let pos = k * idx.len() / shown;
        let rec_ = &ds.records[idx[pos]];
        let pred = model.forward(&rec_.features)?;
        let axis: Vec<f64> = (0..ds.grid.count()).map(|i| ds.grid.value(i)).collect();
        let params = ds
            .problem
            .raw_names()
            .iter()
            .zip(&rec_.raw_params)
            .map(|(n, v)| format!("{n}={v:.4}"))
            .collect::<Vec<_>>()
            .join(" ");
        panels.push(Panel::lines(
            &params,
            ds.grid.axis(),
            "T",
            vec![
                Series::new(
                    "true",
                    axis.iter().copied().zip(rec_.label.iter().copied()).collect(),
                    PALETTE[0],
                ),
                Series::new("predicted", axis.iter().copied().zip(pred).collect(), PALETTE[1]).dashed(),
            ],
        ));
    }
    let svg_path = suffixed(&prefix, "svg");
    write_atomic(&svg_path, figure(&panels, 2).as_bytes())?;
    rec.output(&svg_path);
    rec.finish(&suffixed(&prefix, "manifest.json"))?;

    println!("{} split: {} samples", a.split, errs.len());
    println!("MSE {mse:.6e}");
    println!("MAE {:.4}%", 100.0 * mae);
    Ok(EvalOutcome {
        mse,
        mae,
        per_sample,
        csv_path,
        svg_path,
    })
}
