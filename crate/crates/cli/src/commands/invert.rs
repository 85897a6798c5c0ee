use std::path::{Path, PathBuf};

use anyhow::{bail, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use fabry_core::inverse::{
    self, evaluate_batch, load_target, param_names, BatchReport, BatchTarget, InitLoss, InverseConfig, InverseResult,
    TargetSpectrum,
};
use fabry_core::neural::load_model;
use fabry_core::optics::Grid;
use fabry_core::{write_atomic, Error as CoreError, Mlp};

use super::{check_compatible, ensure_parent, parse_floats, suffixed, LoadedData};
use crate::args::{InvertArgs, InvertBatchArgs};
use crate::manifest::Recorder;
use crate::svg::{figure, Panel, Series, PALETTE};
use crate::UsageError;

fn init_loss(s: &str) -> Result<InitLoss> {
    InitLoss::parse(s).ok_or_else(|| UsageError(format!("unknown init loss {s:?} (mse, fourier, combined)")).into())
}

fn axis_values(model: &Mlp, n: usize) -> (Vec<f64>, &'static str) {
    match model.meta.grid {
        Some(g) if g.count() == n => ((0..n).map(|i| g.value(i)).collect(), g.axis()),
        _ => ((0..n).map(|i| i as f64).collect(), "index"),
    }
}

/// Target-vs-prediction panel and normalized parameter trajectories.
pub fn inversion_figure(model: &Mlp, target: &TargetSpectrum, r: &InverseResult) -> Result<String> {
    let (x, axis) = axis_values(model, target.values.len());
    let zip = |v: &[f64]| x.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    let mut spectra = vec![
        Series::new("target", zip(&target.values), PALETTE[0]),
        Series::new("inverse design", zip(&r.final_spectrum), PALETTE[1]).dashed(),
    ];
    if let Some(t) = &r.true_params {
        let at_truth = model.forward(t)?;
        spectra.push(Series::new("surrogate at truth", zip(&at_truth), PALETTE[2]).dashed());
    }
    let names = param_names(model);
    let traj: Vec<Series> = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            Series::new(
                n.as_str(),
                r.trajectory.iter().map(|p| (p.iter as f64, p.params[k])).collect(),
                PALETTE[k % PALETTE.len()],
            )
        })
        .collect();
    Ok(figure(
        &[
            Panel::lines(
                &format!("Transmission (MAE {:.3}%)", 100.0 * r.final_mae),
                axis,
                "T",
                spectra,
            ),
            Panel::lines("Design parameters", "step", "normalized value", traj),
        ],
        2,
    ))
}

pub struct InvertOutcome {
    pub result: InverseResult,
    pub target: TargetSpectrum,
    pub trajectory_csv: PathBuf,
    pub svg: PathBuf,
}

pub fn invert(a: &InvertArgs) -> Result<InvertOutcome> {
    let mut rec = Recorder::new("invert", a, Some(a.seed))?;
    let model: Mlp = load_model(&a.model)?;
    rec.input(&a.model);
    let (target, truth) = if let Some(idx) = a.target.strip_prefix("test:") {
        let idx: usize = idx
            .parse()
            .map_err(|_| UsageError(format!("bad test index in {:?}", a.target)))?;
        let Some(dp) = &a.data else {
            bail!(UsageError("test: targets need --data".into()));
        };
        let data = LoadedData::load(dp)?;
        rec.input(&data.csv);
        check_compatible(&model, &data.dataset)?;
        let split = data.base_split()?;
        let Some(&row) = split.test.get(idx) else {
            bail!(CoreError::Target(format!(
                "test index {idx} out of range ({} test samples)",
                split.test.len()
            )));
        };
        let (t, truth) = TargetSpectrum::from_dataset(&data.dataset, row)?;
        (t, Some(truth))
    } else {
        let path = Path::new(&a.target);
        let grid = match model.meta.grid {
            Some(Grid::Wavelength(g)) => g,
            _ => bail!(CoreError::Metadata(
                "file targets need a model sampled over wavelength".into()
            )),
        };
        rec.input(path);
        (load_target(path, &grid)?, None)
    };
    if target.values.len() != model.output_dim() {
        bail!(CoreError::Target(format!(
            "target has {} points, model predicts {}",
            target.values.len(),
            model.output_dim()
        )));
    }
    let cfg = InverseConfig {
        init_loss: init_loss(&a.init_loss)?,
        reinit_every: a.reinit,
        max_iters: a.iters,
        learning_rate: a.lr,
        grid_points: a.grid_points,
        clamp_to_range: !a.no_clamp,
        seed: a.seed,
        initial_params: a
            .init_params
            .as_deref()
            .map(|s| parse_floats(s, "init-params"))
            .transpose()?,
        ..InverseConfig::default()
    };
    let mut result = inverse::invert(&model, &target, &cfg)?;
    if let Some(t) = &truth {
        result.set_truth(&model, &target, t)?;
    }

    let prefix = a
        .out
        .clone()
        .unwrap_or_else(|| a.model.parent().unwrap_or(Path::new(".")).join("invert"));
    ensure_parent(&prefix)?;
    let names = param_names(&model);
    let trajectory_csv = suffixed(&prefix, "trajectory.csv");
    result.write_trajectory_csv(&names, &trajectory_csv)?;
    rec.output(&trajectory_csv);
    let result_json = suffixed(&prefix, "result.json");
    write_atomic(&result_json, &serde_json::to_vec_pretty(&result)?)?;
    rec.output(&result_json);
    let svg = suffixed(&prefix, "svg");
    write_atomic(&svg, inversion_figure(&model, &target, &result)?.as_bytes())?;
    rec.output(&svg);
    rec.finish(&suffixed(&prefix, "manifest.json"))?;

    println!("initial MSE {:.6e}", result.initial_mse);
    println!("final MSE {:.6e} (step {})", result.final_mse, result.best_iter);
    println!("final MAE {:.4}%", 100.0 * result.final_mae);
    if let Some(phys) = &result.final_physical {
        let shown: Vec<String> = names.iter().zip(phys).map(|(n, v)| format!("{n}={v:.6}")).collect();
        println!("parameters {}", shown.join(" "));
    }
    if let (Some(b), Some(d)) = (result.baseline_mae, result.delta_mae()) {
        println!("baseline MAE {:.4}%", 100.0 * b);
        println!("delta MAE {:.4}%", 100.0 * d);
    }
    Ok(InvertOutcome {
        result,
        target,
        trajectory_csv,
        svg,
    })
}

/// Picks `count` test-split positions with `seed`.
pub fn pick_targets(n_test: usize, count: usize, seed: u64) -> Vec<usize> {
    let mut pos: Vec<usize> = (0..n_test).collect();
    pos.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    pos.truncate(count);
    pos
}

pub fn invert_batch(a: &InvertBatchArgs) -> Result<BatchReport> {
    let mut rec = Recorder::new("invert-batch", a, Some(a.seed))?;
    let model: Mlp = load_model(&a.model)?;
    rec.input(&a.model);
    let data = LoadedData::load(&a.data)?;
    rec.input(&data.csv);
    check_compatible(&model, &data.dataset)?;
    let split = data.base_split()?;
    let mut targets = Vec::new();
    for k in pick_targets(split.test.len(), a.count, a.seed) {
        let (target, truth) = TargetSpectrum::from_dataset(&data.dataset, split.test[k])?;
        targets.push(BatchTarget {
            id: format!("test:{k}"),
            target,
            truth: Some(truth),
        });
    }
    let cfg = InverseConfig {
        init_loss: init_loss(&a.init_loss)?,
        reinit_every: a.reinit,
        max_iters: a.iters,
        learning_rate: a.lr,
        grid_points: a.grid_points,
        seed: a.seed,
        ..InverseConfig::default()
    };
    let report = evaluate_batch(&model, &targets, &cfg, a.threads)?;

    let prefix = a
        .out
        .clone()
        .unwrap_or_else(|| a.model.parent().unwrap_or(Path::new(".")).join("batch"));
    ensure_parent(&prefix)?;
    let csv = suffixed(&prefix, "csv");
    report.write_csv(&csv)?;
    rec.output(&csv);
    let hist_csv = suffixed(&prefix, "hist.csv");
    report.histogram.write_csv(&hist_csv)?;
    rec.output(&hist_csv);
    let h = &report.histogram;
    let svg = figure(
        &[Panel::bars(
            &format!(
                "{} targets, init loss {}, re-init {}",
                targets.len(),
                a.init_loss,
                a.reinit
            ),
            "final MAE minus baseline MAE (%)",
            "targets",
            (0..h.counts.len()).map(|k| format!("{k}")).collect(),
            h.counts.iter().map(|&c| c as f64).collect(),
        )],
        1,
    );
    let hist_svg = suffixed(&prefix, "hist.svg");
    write_atomic(&hist_svg, svg.as_bytes())?;
    rec.output(&hist_svg);
    rec.finish(&suffixed(&prefix, "manifest.json"))?;

    let failed = report.failures();
    let ran = report.rows.len() - failed;
    println!("targets {}, completed {ran}, failed {failed}", report.rows.len());
    println!(
        "first bin (< 1%): {} ({:.1}%)",
        h.first_bin(),
        100.0 * report.first_bin_fraction()
    );
    if ran * 10 < report.rows.len() * 9 {
        bail!(CoreError::Numeric(format!(
            "only {ran} of {} inversions completed",
            report.rows.len()
        )));
    }
    Ok(report)
}
