//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero
//! exit if any fails.
//!
//! Artifacts go to `$FABRY_ACCEPTANCE_DIR` (default: a directory under the
//! cargo target dir). Setting `FABRY_ACCEPTANCE_REUSE=1` keeps datasets and
//! trained surrogates from a previous run instead of retraining; without it
//! the directory is wiped first.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use fabry_cli::args::InvertArgs;
use fabry_cli::commands::{self, LoadedData};
use fabry_core::dataset::{generate_lambda_dataset, generate_theta_dataset, split, GridSpec, Problem, SplitConfig};
use fabry_core::inverse::{evaluate_batch, BatchReport, BatchTarget, InitLoss, InverseConfig, TargetSpectrum};
use fabry_core::neural::{mse_with_grad, Activation, ForwardCache, GradTargets, Gradients, TrainConfig};
use fabry_core::optics::{finesse, partial_wave_oracle, transmission};
use fabry_core::vae::{
    evaluate_vae, latent_analysis, supervised_autoencoder, train_vae, vae_loss, vae_loss_grad, SupervisedAeConfig,
    VaeConfig, VaeGradients, VaeWorkspace,
};
use fabry_core::{Matrix, Mlp, Vae};
use fabry_validation::{pct, Verdict, Workspace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Epoch cap for the full-size surrogates; keeps each run inside the
/// hour budget on one CPU core.
const FULL_MAX_EPOCHS: usize = 400;
const HOUR: f64 = 3600.0;

fn c1_oracle() -> Verdict {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let r: f64 = rng.random_range(0.0..=0.9);
        let delta: f64 = rng.random_range(0.0..=20.0 * PI);
        let closed = transmission(finesse(r).unwrap(), delta / 2.0);
        worst = worst.max((partial_wave_oracle(r, delta, 500) - closed).abs());
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        worst < 1e-8 && secs < 1.0,
        format!("max |oracle - closed form| {worst:.2e} (< 1e-8) over 10^4 draws in {secs:.3} s (< 1 s)"),
    )
}

fn c2_cardinalities() -> Verdict {
    let lam = generate_lambda_dataset(&GridSpec::reference_lambda()).unwrap().len();
    let theta = generate_theta_dataset(&GridSpec::reference_theta()).unwrap().len();
    let sizes = |n| {
        let s = split(n, SplitConfig::default(), 0).unwrap();
        (s.train.len(), s.validation.len(), s.test.len())
    };
    let (sl, st) = (sizes(lam), sizes(theta));
    Verdict::new(
        lam == 59150 && theta == 63700 && sl == (45250, 7985, 5915) && st == (48730, 8600, 6370),
        format!("lambda {lam} split {sl:?}, theta {theta} split {st:?}"),
    )
}

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-7)
}

fn c6_gradients() -> Verdict {
    let t = Instant::now();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    let mut probes = 0;

    // Plain MSE through a Swish network: weights, biases and inputs.
    let mut m = Mlp::glorot(&Mlp::dims(3, &[16, 16], 5), Activation::Swish, &mut rng).unwrap();
    let x = Matrix::from_vec(4, 3, (0..12).map(|_| rng.random_range(-1.0..1.0)).collect());
    let y = Matrix::from_vec(4, 5, (0..20).map(|_| rng.random_range(0.0..1.0)).collect());
    let loss = |m: &Mlp, x: &Matrix| {
        let mut d = Matrix::zeros(0, 0);
        mse_with_grad(&m.forward_batch(x).unwrap(), &y, &mut d).unwrap()
    };
    let mut cache = ForwardCache::default();
    let mut g = Gradients::zeros_like(&m);
    let mut d = Matrix::zeros(0, 0);
    m.forward_cached(&x, &mut cache).unwrap();
    mse_with_grad(cache.output(), &y, &mut d).unwrap();
    m.backward(&cache, &d, &mut g, GradTargets::Both).unwrap();
    let analytic: Vec<Vec<f64>> = g.tensors().map(<[f64]>::to_vec).collect();
    for _ in 0..60 {
        let ti = rng.random_range(0..analytic.len());
        let k = rng.random_range(0..analytic[ti].len());
        let orig = m.tensors().nth(ti).unwrap()[k];
        m.tensors_mut().nth(ti).unwrap()[k] = orig + h;
        let up = loss(&m, &x);
        m.tensors_mut().nth(ti).unwrap()[k] = orig - h;
        let down = loss(&m, &x);
        m.tensors_mut().nth(ti).unwrap()[k] = orig;
        worst = worst.max(rel_err(analytic[ti][k], (up - down) / (2.0 * h)));
        probes += 1;
    }
    for i in 0..4 {
        for j in 0..3 {
            let mut xp = x.clone();
            xp.set(i, j, x.get(i, j) + h);
            let up = loss(&m, &xp);
            xp.set(i, j, x.get(i, j) - h);
            let down = loss(&m, &xp);
            worst = worst.max(rel_err(g.input.get(i, j), (up - down) / (2.0 * h)));
            probes += 1;
        }
    }

    // VAE loss with frozen noise.
    let cfg = VaeConfig {
        latent_dim: 3,
        hidden: vec![16, 16],
        ..VaeConfig::default()
    };
    let mut vae = Vae::glorot(20, &cfg, &mut rng).unwrap();
    let xb = Matrix::from_vec(6, 20, (0..120).map(|_| rng.random_range(0.0..1.0)).collect());
    let noise = Matrix::from_vec(6, 3, (0..18).map(|_| rng.sample::<f64, _>(StandardNormal)).collect());
    let (beta, c) = (0.5, 1.0);
    let mut vg = VaeGradients::zeros_like(&vae);
    vae_loss_grad(&vae, &xb, &noise, beta, c, &mut VaeWorkspace::default(), &mut vg).unwrap();
    let analytic: Vec<Vec<f64>> = vg.tensors().map(<[f64]>::to_vec).collect();
    for _ in 0..60 {
        let ti = rng.random_range(0..analytic.len());
        let k = rng.random_range(0..analytic[ti].len());
        let orig = vae.tensors().nth(ti).unwrap()[k];
        vae.tensors_mut().nth(ti).unwrap()[k] = orig + h;
        let up = vae_loss(&vae, &xb, &noise, beta, c).unwrap().total;
        vae.tensors_mut().nth(ti).unwrap()[k] = orig - h;
        let down = vae_loss(&vae, &xb, &noise, beta, c).unwrap().total;
        vae.tensors_mut().nth(ti).unwrap()[k] = orig;
        worst = worst.max(rel_err(analytic[ti][k], (up - down) / (2.0 * h)));
        probes += 1;
    }
    let secs = t.elapsed().as_secs_f64();
    Verdict::new(
        worst < 1e-4 && probes >= 100 && secs < 30.0,
        format!("max relative error {worst:.2e} (< 1e-4) over {probes} probes in {secs:.2} s"),
    )
}

/// Test targets of a dataset picked with `seed`, with their truth.
fn batch_targets(data: &LoadedData, count: usize, seed: u64) -> Vec<BatchTarget> {
    let sp = data.base_split().unwrap();
    commands::invert::pick_targets(sp.test.len(), count, seed)
        .into_iter()
        .map(|k| {
            let (target, truth) = TargetSpectrum::from_dataset(&data.dataset, sp.test[k]).unwrap();
            BatchTarget {
                id: format!("test:{k}"),
                target,
                truth: Some(truth),
            }
        })
        .collect()
}

fn batch(model: &Mlp, targets: &[BatchTarget], init_loss: InitLoss, reinit: usize, seed: u64) -> BatchReport {
    let cfg = InverseConfig {
        init_loss,
        reinit_every: reinit,
        seed,
        ..InverseConfig::default()
    };
    evaluate_batch(model, targets, &cfg, 1).unwrap()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len().max(1) as f64
}

fn main() -> ExitCode {
    let dir = std::env::var_os("FABRY_ACCEPTANCE_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance"));
    let reuse = std::env::var("FABRY_ACCEPTANCE_REUSE").is_ok_and(|v| v == "1");
    if !reuse && dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    std::fs::create_dir_all(&dir).unwrap();
    let ctx = Workspace { dir, reuse };
    println!("acceptance artifacts in {}", ctx.dir.display());

    let mut verdicts: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut report = |id: u32, name: &'static str, v: Verdict| {
        println!(
            "criterion {id:>2} {} {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        verdicts.push((id, name, v));
    };

    report(1, "oracle equivalence", c1_oracle());
    report(2, "dataset cardinalities and splits", c2_cardinalities());
    report(6, "gradient correctness", c6_gradients());

    let lam_dir = ctx.dataset("lambda");
    let fd_dir = ctx.dataset("fd");

    // Reduced CI run first, then the full lambda surrogate.
    let (_, small_mae, small_secs) = ctx.surrogate(&lam_dir, "lambda-3x200-ci", "200x3", 20);
    let (lam_model, lam_mae, lam_secs) = ctx.surrogate(&lam_dir, "lambda-6x200", "200x6", FULL_MAX_EPOCHS);
    report(
        3,
        "forward surrogate T(lambda)",
        Verdict::new(
            lam_mae <= 0.015 && lam_secs <= HOUR && small_mae <= 0.04 && small_secs <= 300.0,
            format!(
                "6x200 test MAE {} (<= 1.5%) in {:.0} s (<= 3600 s); 3x200/20 epochs MAE {} (<= 4%) in {:.0} s (<= 300 s)",
                pct(lam_mae),
                lam_secs,
                pct(small_mae),
                small_secs
            ),
        ),
    );

    let (fd_model, fd_mae, fd_secs) = ctx.surrogate(&fd_dir, "fd-6x200", "200x6", FULL_MAX_EPOCHS);
    report(
        5,
        "simplified surrogate (F, delta0)",
        Verdict::new(
            fd_mae <= 0.009 && fd_mae < lam_mae,
            format!(
                "test MAE {} (<= 0.9%, and < (theta, n, l) model's {}) in {:.0} s",
                pct(fd_mae),
                pct(lam_mae),
                fd_secs
            ),
        ),
    );

    // Inverse design through the (F, delta0) surrogate.
    let fd_data = LoadedData::load(&fd_dir).unwrap();
    let t = Instant::now();
    let main_targets = batch_targets(&fd_data, 50, 0);
    let main_run = batch(&fd_model, &main_targets, InitLoss::Combined, 100, 0);
    let secs = t.elapsed().as_secs_f64();
    main_run
        .write_csv(&ctx.path("fd-batch-combined-reinit-seed0.csv"))
        .unwrap();
    main_run
        .histogram
        .write_csv(&ctx.path("fd-batch-combined-reinit-seed0.hist.csv"))
        .unwrap();
    let frac = main_run.first_bin_fraction();
    report(
        10,
        "inversion (F, delta0)",
        Verdict::new(
            frac >= 0.8 && main_run.failures() == 0 && secs <= 600.0,
            format!(
                "{} of {} targets within 1% of baseline ({:.0}%, >= 80%) in {secs:.0} s (<= 600 s)",
                main_run.histogram.first_bin(),
                main_run.rows.len(),
                100.0 * frac
            ),
        ),
    );

    let mut counts = [[0.0f64; 3]; 4];
    for seed in 0..3u64 {
        let targets = batch_targets(&fd_data, 50, seed);
        let runs = [
            (InitLoss::Combined, 100),
            (InitLoss::Combined, 0),
            (InitLoss::Fourier, 100),
            (InitLoss::Mse, 100),
        ];
        for (k, (loss, reinit)) in runs.into_iter().enumerate() {
            let r = if seed == 0 && k == 0 {
                main_run.clone()
            } else {
                batch(&fd_model, &targets, loss, reinit, seed)
            };
            r.histogram
                .write_csv(&ctx.path(&format!("fd-batch-{}-reinit{reinit}-seed{seed}.hist.csv", loss.name())))
                .unwrap();
            counts[k][seed as usize] = r.histogram.first_bin() as f64;
        }
    }
    let m: Vec<f64> = counts.iter().map(|c| mean(c)).collect();
    let local_targets = batch_targets(&fd_data, 10, 7);
    let local_cfg = InverseConfig {
        init_loss: InitLoss::Mse,
        reinit_every: 0,
        initial_params: Some(vec![0.0, -1.0]),
        ..InverseConfig::default()
    };
    let local = evaluate_batch(&fd_model, &local_targets, &local_cfg, 1).unwrap();
    local.write_csv(&ctx.path("fd-local-minimum.csv")).unwrap();
    let stuck = local.rows.iter().filter(|r| r.delta.is_some_and(|d| d > 0.05)).count();
    report(
        11,
        "inversion ablations",
        Verdict::new(
            m[0] >= m[1] && m[0] >= m[2] && m[0] >= m[3] && stuck >= 1,
            format!(
                "mean first-bin counts over 3 seeds: combined+reinit {:.1}, no reinit {:.1}, fourier {:.1}, mse {:.1}; \
                 local-minimum runs (delta > 5%) {stuck} of 10",
                m[0], m[1], m[2], m[3]
            ),
        ),
    );

    // Inverse design through the (theta, n, l) surrogate.
    let lam_data = LoadedData::load(&lam_dir).unwrap();
    let targets = batch_targets(&lam_data, 50, 0);
    let run = batch(&lam_model, &targets, InitLoss::Combined, 100, 0);
    run.write_csv(&ctx.path("mat-batch.csv")).unwrap();
    let norm = lam_model.meta.normalization.clone().unwrap();
    let span: Vec<f64> = norm.features.iter().map(|b| b.max - b.min).collect();
    let mut witnesses = Vec::new();
    for (row, res) in run.rows.iter().zip(&run.results).take(20) {
        let (Some(res), Some(delta)) = (res, row.delta) else {
            continue;
        };
        let truth = norm.denormalize(res.true_params.as_ref().unwrap()).unwrap();
        let found = res.final_physical.as_ref().unwrap();
        let differs = truth.iter().zip(found).zip(&span).any(|((t, f), s)| {
            let scale = if t.abs() > 0.0 { t.abs() } else { *s };
            (f - t).abs() / scale > 0.05
        });
        if differs && delta < 0.01 {
            witnesses.push(format!("{} true {truth:.3?} found {found:.3?}", row.target_id));
        }
    }
    let frac = run.first_bin_fraction();
    report(
        12,
        "inversion (theta, n, l)",
        Verdict::new(
            frac >= 0.7 && !witnesses.is_empty(),
            format!(
                "{:.0}% of 50 targets in the first bin (>= 70%); {} non-uniqueness witnesses among 20{}",
                100.0 * frac,
                witnesses.len(),
                witnesses.first().map_or(String::new(), |w| format!(", e.g. {w}"))
            ),
        ),
    );

    // Block pulse through the command-line inversion.
    let pulse = ctx.path("block-pulse.csv");
    let mut csv = String::from("wavelength_nm,T\n");
    for i in 0..200 {
        let l = 400.0 + 2.0 * i as f64;
        writeln!(csv, "{l},{}", if (550.0..=650.0).contains(&l) { 1 } else { 0 }).unwrap();
    }
    std::fs::write(&pulse, csv).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for name in ["fd-6x200", "lambda-6x200"] {
        let out = commands::invert(&InvertArgs {
            model: ctx.path(&format!("{name}.json")),
            target: pulse.to_string_lossy().into_owned(),
            data: None,
            init_loss: "combined".into(),
            reinit: 100,
            iters: 1000,
            lr: 0.01,
            grid_points: 200,
            no_clamp: false,
            init_params: None,
            seed: 0,
            out: Some(ctx.path(&format!("block-pulse-{name}"))),
        });
        match out {
            Ok(o) => {
                let svg = std::fs::read_to_string(&o.svg).unwrap_or_default();
                let panels = roxmltree::Document::parse(&svg).map_or(0, |d| {
                    d.descendants()
                        .filter(|n| n.has_tag_name("rect") && n.attribute("fill") == Some("none"))
                        .count()
                });
                let r = &o.result;
                pass &= panels == 2 && o.trajectory_csv.exists() && r.final_mse <= r.initial_mse;
                detail.push(format!(
                    "{name}: final MSE {:.4e} <= initial {:.4e}, {panels}-panel figure",
                    r.final_mse, r.initial_mse
                ));
            }
            Err(e) => {
                pass = false;
                detail.push(format!("{name}: inversion failed: {e:#}"));
            }
        }
    }
    report(13, "block-pulse inversion", Verdict::new(pass, detail.join("; ")));

    // Angle-resolved surrogate.
    let theta_dir = ctx.dataset("theta");
    let (_, theta_mae, theta_secs) = ctx.surrogate(&theta_dir, "theta-6x200", "200x6", FULL_MAX_EPOCHS);
    report(
        4,
        "forward surrogate T(theta)",
        Verdict::new(
            theta_mae <= 0.018,
            format!("test MAE {} (<= 1.8%) in {theta_secs:.0} s", pct(theta_mae)),
        ),
    );

    // Supervised autoencoder.
    let sp = fd_data.base_split().unwrap().reshuffle(0).unwrap();
    let ae_cfg = SupervisedAeConfig {
        train: TrainConfig {
            max_epochs: FULL_MAX_EPOCHS,
            ..TrainConfig::default()
        },
        ..SupervisedAeConfig::default()
    };
    let ae = supervised_autoencoder::<f64>(&fd_data.dataset, &sp, &ae_cfg).unwrap();
    report(
        7,
        "supervised autoencoder",
        Verdict::new(
            ae.composed_test_mae <= 0.05,
            format!(
                "composed test MAE {} (<= 5%); decoder alone {}",
                pct(ae.composed_test_mae),
                pct(ae.decoder_test_mae)
            ),
        ),
    );

    // Beta-VAE sweep.
    let spectra = fd_data.dataset.labels_matrix::<f64>();
    let params: Vec<(f64, f64)> = fd_data
        .dataset
        .records
        .iter()
        .map(|r| (r.raw_params[0], r.raw_params[1]))
        .collect();
    assert_eq!(fd_data.dataset.problem, Problem::Simplified);
    let vae_run = |beta: f64, seed: u64| {
        let cfg = VaeConfig {
            beta,
            seed,
            ..VaeConfig::default()
        };
        let split = fd_data.base_split().unwrap().reshuffle(seed).unwrap();
        let (model, _) = train_vae(&spectra, &split.train, &cfg).unwrap();
        let ev = evaluate_vae(&model, &spectra, &split.test).unwrap();
        (model, ev, split)
    };
    let first_betas = [0.1, 0.01, 0.001, 0.0001];
    let mut sweep: Vec<(f64, Vae, fabry_core::vae::VaeEvaluation)> = Vec::new();
    for b in first_betas {
        let (m, ev, _) = vae_run(b, 0);
        println!(
            "  beta {b:e}: recon MAE {}, KL per dim {:.4?}",
            pct(ev.recon_mae),
            ev.kl_per_dim
        );
        sweep.push((b, m, ev));
    }
    let regimes = |s: &[(f64, Vae, fabry_core::vae::VaeEvaluation)]| {
        let collapse = s.iter().find(|e| e.2.informative_dims() == 0).map(|e| e.0);
        let partial = s
            .iter()
            .find(|e| (1..=2).contains(&e.2.informative_dims()))
            .map(|e| e.0);
        let full = s
            .iter()
            .find(|e| e.2.informative_dims() >= 4 && e.2.recon_mae <= 0.05)
            .map(|e| e.0);
        (collapse, partial, full)
    };
    let mut found = regimes(&sweep);
    if found.0.is_none() || found.1.is_none() || found.2.is_none() {
        for k in 0..=6 {
            let b = 10f64.powi(-k);
            if sweep.iter().any(|e| (e.0 / b - 1.0).abs() < 1e-9) {
                continue;
            }
            let (m, ev, _) = vae_run(b, 0);
            println!(
                "  beta {b:e}: recon MAE {}, KL per dim {:.4?}",
                pct(ev.recon_mae),
                ev.kl_per_dim
            );
            sweep.push((b, m, ev));
        }
        sweep.sort_by(|a, b| b.0.total_cmp(&a.0));
        found = regimes(&sweep);
    }
    let mut sweep_csv = String::from("beta,recon_mae,total_kl,informative_dims\n");
    for (b, _, ev) in &sweep {
        writeln!(
            sweep_csv,
            "{b},{},{},{}",
            ev.recon_mae,
            ev.total_kl(),
            ev.informative_dims()
        )
        .unwrap();
    }
    std::fs::write(ctx.path("vae-sweep.csv"), sweep_csv).unwrap();
    let monotone = sweep.windows(2).all(|w| w[1].2.recon_mae <= w[0].2.recon_mae);
    let show = |b: Option<f64>| b.map_or("none".to_string(), |b| format!("{b:e}"));
    report(
        8,
        "beta-VAE regimes",
        Verdict::new(
            found.0.is_some() && found.1.is_some() && found.2.is_some() && monotone,
            format!(
                "collapse at beta {}, partial at {}, full use at {}; MAE non-increasing as beta decreases: {monotone}",
                show(found.0),
                show(found.1),
                show(found.2)
            ),
        ),
    );

    // Latent discovery of F in the partial regime.
    let v = match found.1 {
        None => Verdict::new(false, "no partial regime found"),
        Some(b) => {
            let mut best = Vec::new();
            for seed in 0..3u64 {
                let (model, split) = if seed == 0 {
                    let m = sweep.iter().find(|e| e.0 == b).unwrap().1.clone();
                    (m, fd_data.base_split().unwrap().reshuffle(0).unwrap())
                } else {
                    let (m, _, s) = vae_run(b, seed);
                    (m, s)
                };
                let stats = latent_analysis(&model, &spectra, &params, &split.test).unwrap();
                stats
                    .write_scatter_csv(&ctx.path(&format!("latent-beta{b:e}-seed{seed}.csv")))
                    .unwrap();
                best.push(stats.max_abs_r_inverse_f());
                if best.last().is_some_and(|&r| r >= 0.8) {
                    break;
                }
            }
            let hit = best.iter().any(|&r| r >= 0.8);
            Verdict::new(
                hit,
                format!("beta {b:e}: max |r(mu, 1/(1+F))| per seed {best:.3?} (>= 0.8)"),
            )
        }
    };
    report(9, "latent discovery of F", v);

    verdicts.sort_by_key(|v| v.0);
    let failed: Vec<u32> = verdicts.iter().filter(|v| !v.2.pass).map(|v| v.0).collect();
    println!();
    println!("summary:");
    for (id, name, v) in &verdicts {
        println!("  {id:>2} {} {name}", if v.pass { "PASS" } else { "FAIL" });
    }
    if failed.is_empty() {
        println!("all {} criteria passed", verdicts.len());
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
