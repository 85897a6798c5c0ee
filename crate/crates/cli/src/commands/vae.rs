use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};

use fabry_core::dataset::{derive_simplified_dataset, Dataset, Problem};
use fabry_core::neural::AdamConfig;
use fabry_core::vae::{
    evaluate_vae, latent_analysis, load_vae, save_vae, train_vae_with_observer, LatentStats, VaeConfig, INFORMATIVE_KL,
};
use fabry_core::{write_atomic, Error as CoreError, Vae};

use super::{ensure_parent, parse_floats, select_split, sibling, suffixed, LoadedData};
use crate::args::{AnalyzeLatentArgs, TrainVaeArgs};
use crate::manifest::{manifest_path, Recorder};
use crate::svg::{figure, Panel, Series, PALETTE};
use crate::UsageError;

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub beta: f64,
    pub model_path: PathBuf,
    pub recon_mae: f64,
    pub kl_per_dim: Vec<f64>,
    pub final_loss: f64,
}

impl SweepRow {
    pub fn informative_dims(&self) -> usize {
        self.kl_per_dim.iter().filter(|&&k| k >= INFORMATIVE_KL).count()
    }

    pub fn total_kl(&self) -> f64 {
        self.kl_per_dim.iter().sum()
    }
}

/// Trains one VAE per beta (same seed) and scores each on the test split.
pub fn train_vae(a: &TrainVaeArgs) -> Result<Vec<SweepRow>> {
    let betas = parse_floats(&a.beta, "beta")?;
    if betas.is_empty() {
        bail!(UsageError("no beta given".into()));
    }
    let mut rec = Recorder::new("train-vae", a, Some(a.seed))?;
    let data = LoadedData::load(&a.data)?;
    rec.input(&data.csv);
    let ds = &data.dataset;
    let split = data.base_split()?.reshuffle(a.seed)?;
    let spectra = ds.labels_matrix::<f64>();
    ensure_parent(&a.out)?;

    let mut rows = Vec::with_capacity(betas.len());
    for &beta in &betas {
        let cfg = VaeConfig {
            beta,
            recon_scale: a.recon_scale,
            latent_dim: a.latent_dim,
            batch_size: a.batch_size,
            epochs: a.epochs,
            seed: a.seed,
            adam: AdamConfig::with_learning_rate(a.lr),
            ..VaeConfig::default()
        };
        cfg.validate().map_err(|e| UsageError(e.to_string()))?;
        let (mut model, report) = train_vae_with_observer(&spectra, &split.train, &cfg, |e| {
            if a.log_every > 0 && e.epoch % a.log_every == 0 {
                eprintln!(
                    "beta {beta:e} epoch {:>3}  loss {:.5}  recon {:.5}  kl {:.5}",
                    e.epoch, e.total, e.recon, e.kl
                );
            }
        })?;
        for half in [&mut model.encoder, &mut model.decoder] {
            half.meta.grid = Some(ds.grid);
        }
        let ev = evaluate_vae(&model, &spectra, &split.test)?;
        let path = if betas.len() == 1 {
            a.out.clone()
        } else {
            sibling(&a.out, &format!("beta{beta:e}.json"))
        };
        save_vae(&model, Some(&cfg), &path)?;
        rec.output(&path);
        println!(
            "beta {beta:e}: test reconstruction MAE {:.4}%, informative dims {}, KL per dim {:?}",
            100.0 * ev.recon_mae,
            ev.informative_dims(),
            ev.kl_per_dim
                .iter()
                .map(|k| (k * 1e4).round() / 1e4)
                .collect::<Vec<_>>()
        );
        rows.push(SweepRow {
            beta,
            model_path: path,
            recon_mae: ev.recon_mae,
            kl_per_dim: ev.kl_per_dim,
            final_loss: report.final_loss().map_or(f64::NAN, |e| e.total),
        });
    }

    let csv_path = sibling(&a.out, "sweep.csv");
    let mut csv = String::from("beta,recon_mae,total_kl,informative_dims,final_loss");
    for d in 1..=a.latent_dim {
        write!(csv, ",kl_{d}")?;
    }
    csv.push('\n');
    for r in &rows {
        write!(
            csv,
            "{},{},{},{},{}",
            r.beta,
            r.recon_mae,
            r.total_kl(),
            r.informative_dims(),
            r.final_loss
        )?;
        for k in &r.kl_per_dim {
            write!(csv, ",{k}")?;
        }
        csv.push('\n');
    }
    write_atomic(&csv_path, csv.as_bytes())?;
    rec.output(&csv_path);

    let svg_path = sibling(&a.out, "sweep.svg");
    let mut pts: Vec<(f64, f64)> = rows.iter().map(|r| (r.beta.log10(), r.recon_mae)).collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let svg = figure(
        &[Panel::lines(
            "Reconstruction MAE",
            "log10 beta",
            "test MAE",
            vec![Series::new("MAE", pts, PALETTE[0])],
        )],
        1,
    );
    write_atomic(&svg_path, svg.as_bytes())?;
    rec.output(&svg_path);
    rec.finish(&manifest_path(&a.out))?;
    Ok(rows)
}

/// `(F, delta0)` of every row, from an fd dataset or derived from a lambda one.
fn fd_params(ds: &Dataset) -> Result<Vec<(f64, f64)>> {
    let fd;
    let src = match ds.problem {
        Problem::Simplified => ds,
        Problem::Lambda => {
            fd = derive_simplified_dataset(ds)?;
            &fd
        }
        Problem::Theta => {
            return Err(CoreError::Metadata("latent analysis needs a lambda or fd dataset".into()).into())
        }
    };
    Ok(src.records.iter().map(|r| (r.raw_params[0], r.raw_params[1])).collect())
}

fn fmt_r(r: f64) -> String {
    if r.is_finite() {
        format!("{r:>+10.4}")
    } else {
        format!("{:>10}", "degenerate")
    }
}

pub fn analyze_latent(a: &AnalyzeLatentArgs) -> Result<LatentStats> {
    let mut rec = Recorder::new("analyze-latent", a, None)?;
    let (model, cfg): (Vae, _) = load_vae(&a.model)?;
    rec.input(&a.model);
    let data = LoadedData::load(&a.data)?;
    rec.input(&data.csv);
    let ds = &data.dataset;
    if model.input_dim() != ds.label_len() || model.encoder.meta.grid.is_some_and(|g| g != ds.grid) {
        return Err(CoreError::Metadata("VAE and dataset disagree on the spectral grid".into()).into());
    }
    let base = data.base_split()?;
    let split = match &cfg {
        Some(c) => base.reshuffle(c.seed)?,
        None => base,
    };
    let idx = select_split(&split, &a.split)?;
    let params = fd_params(ds)?;
    let spectra = ds.labels_matrix::<f64>();
    let stats = latent_analysis(&model, &spectra, &params, idx)?;

    let prefix = a.out.clone().unwrap_or_else(|| sibling(&a.model, "latent"));
    ensure_parent(&prefix)?;
    let csv_path = suffixed(&prefix, "scatter.csv");
    stats.write_scatter_csv(&csv_path)?;
    rec.output(&csv_path);

    let l = stats.kl_per_dim.len();
    let svg_path = suffixed(&prefix, "kl.svg");
    let kl_panel = Panel::bars(
        "Mean KL per latent dimension",
        "dimension",
        "KL (nats)",
        (1..=l).map(|d| d.to_string()).collect(),
        stats.kl_per_dim.clone(),
    )
    .with_threshold(INFORMATIVE_KL);
    let mut panels = vec![kl_panel];
    if let Some(best) = (0..l)
        .filter(|&d| stats.correlations[d][2].is_finite())
        .max_by(|&x, &y| {
            stats.correlations[x][2]
                .abs()
                .total_cmp(&stats.correlations[y][2].abs())
        })
    {
        let pts: Vec<(f64, f64)> = stats
            .f_coeff
            .iter()
            .zip(&stats.mu)
            .map(|(f, m)| (1.0 / (1.0 + f), m[best]))
            .collect();
        panels.push(Panel::lines(
            &format!("mu_{} against 1/(1+F)", best + 1),
            "1/(1+F)",
            &format!("mu_{}", best + 1),
            vec![Series::new("samples", pts, PALETTE[2]).markers()],
        ));
    }
    write_atomic(&svg_path, figure(&panels, 2).as_bytes())?;
    rec.output(&svg_path);
    rec.finish(&suffixed(&prefix, "manifest.json"))?;

    let informative = stats.informative_dims();
    println!(
        "informative dims (KL >= {INFORMATIVE_KL}): {} {:?}",
        informative.len(),
        informative.iter().map(|d| d + 1).collect::<Vec<_>>()
    );
    println!(
        "{:>4} {:>10} {:>10} {:>10} {:>10}",
        "dim", "KL", "r(F)", "r(delta0)", "r(1/(1+F))"
    );
    for d in 0..l {
        let c = stats.correlations[d];
        println!(
            "{:>4} {:>10.4} {} {} {}",
            d + 1,
            stats.kl_per_dim[d],
            fmt_r(c[0]),
            fmt_r(c[1]),
            fmt_r(c[2])
        );
    }
    Ok(stats)
}
