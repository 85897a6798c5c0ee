use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fabry_core::dataset::{
    derive_simplified_dataset, generate_lambda_dataset, generate_theta_dataset, save_csv, GridSpec, LinRange,
};
use fabry_core::vae::{save_vae, VaeConfig};
use fabry_core::Vae;
use tempfile::TempDir;

fn fabry(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fabry")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: Output) -> String {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
    stdout(&o)
}

fn small_spec() -> GridSpec {
    GridSpec {
        theta_values: vec![0.0, 30.0, 60.0],
        n_range: LinRange::new(1.5, 3.5, 0.5),
        l_range: LinRange::new(200.0, 400.0, 20.0),
        lambda_range: None,
    }
}

/// Writes a small lambda dataset and its fd derivative.
fn small_data(dir: &Path) -> (PathBuf, PathBuf) {
    let lam = generate_lambda_dataset(&small_spec()).unwrap();
    let fd = derive_simplified_dataset(&lam).unwrap();
    let (a, b) = (dir.join("lam.csv"), dir.join("fd.csv"));
    save_csv(&lam, &a, Some(&small_spec()), Some(0)).unwrap();
    save_csv(&fd, &b, None, Some(0)).unwrap();
    (a, b)
}

fn valid_svg(p: &Path) -> String {
    let text = std::fs::read_to_string(p).unwrap();
    roxmltree::Document::parse(&text).unwrap();
    assert!(!text.contains("href"));
    text
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn train_small(data: &Path, out: &Path, extra: &[&str]) -> String {
    let mut args = vec![
        "train",
        "--data",
        s(data),
        "--layers",
        "30x2",
        "--max-epochs",
        "4",
        "--batch-size",
        "20",
        "--seed",
        "1",
        "--out",
        s(out),
        "--log-every",
        "0",
    ];
    args.extend_from_slice(extra);
    ok(fabry(&args))
}

#[test]
fn gen_data_reference_cardinalities() {
    let dir = TempDir::new().unwrap();
    for (problem, rows, features) in [("lambda", 59150, 3), ("theta", 63700, 3), ("fd", 59150, 2)] {
        let out = dir.path().join(problem);
        let text = ok(fabry(&[
            "gen-data",
            "--problem",
            problem,
            "--out",
            s(&out),
            "--seed",
            "0",
        ]));
        assert!(text.contains(&format!("{rows} records")), "{text}");
        let csv = std::fs::read_to_string(out.join("data.csv")).unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(header.matches("feature:").count(), features);
        assert_eq!(lines.count(), rows);
        assert!(out.join("data.meta.json").exists() && out.join("manifest.json").exists());
        std::fs::remove_dir_all(&out).unwrap();
    }
}

#[test]
fn train_eval_and_manifest_replay() {
    let dir = TempDir::new().unwrap();
    let (lam, _) = small_data(dir.path());
    let model = dir.path().join("m.json");
    let text = train_small(&lam, &model, &[]);
    assert!(text.contains("test MAE"));
    valid_svg(&dir.path().join("m.loss.svg"));
    let report = std::fs::read_to_string(dir.path().join("m.report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5);

    // Replaying the manifest's config reproduces the numbers exactly.
    let replay = dir.path().join("r.json");
    ok(fabry(&[
        "train",
        "--config",
        s(&dir.path().join("m.manifest.json")),
        "--out",
        s(&replay),
    ]));
    assert_eq!(
        report,
        std::fs::read_to_string(dir.path().join("r.report.csv")).unwrap()
    );

    let text = ok(fabry(&[
        "eval",
        "--model",
        s(&model),
        "--data",
        s(&lam),
        "--split",
        "test",
        "--samples",
        "4",
    ]));
    assert!(text.contains("MAE"));
    let svg = valid_svg(&dir.path().join("m.eval-test.svg"));
    assert_eq!(svg.matches("<polyline").count(), 8);
    let per = std::fs::read_to_string(dir.path().join("m.eval-test.csv")).unwrap();
    assert_eq!(per.lines().next().unwrap(), "position,row,mse,mae");
}

#[test]
fn eval_rejects_mismatched_grid() {
    let dir = TempDir::new().unwrap();
    let (lam, _) = small_data(dir.path());
    let model = dir.path().join("m.json");
    train_small(&lam, &model, &[]);
    let spec = GridSpec {
        lambda_range: Some(LinRange::new(400.0, 452.0, 4.0)),
        ..small_spec()
    };
    let theta = dir.path().join("theta.csv");
    save_csv(&generate_theta_dataset(&spec).unwrap(), &theta, None, Some(0)).unwrap();
    let o = fabry(&["eval", "--model", s(&model), "--data", s(&theta)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("disagree"));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let (lam, _) = small_data(dir.path());
    let out = dir.path().join("m.json");
    let o = fabry(&["train", "--data", s(&lam), "--activation", "nope", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(fabry(&["train", "--data", s(&lam)]).status.code(), Some(1));
    assert_eq!(fabry(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(fabry(&["--help"]).status.code(), Some(0));
    let missing = dir.path().join("absent.csv");
    assert_eq!(
        fabry(&["train", "--data", s(&missing), "--out", s(&out)]).status.code(),
        Some(2)
    );
    let o = fabry(&[
        "train",
        "--data",
        s(&lam),
        "--layers",
        "30x2",
        "--lr",
        "1e300",
        "--max-epochs",
        "5",
        "--out",
        s(&out),
        "--log-every",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn vae_sweep_and_latent_analysis() {
    let dir = TempDir::new().unwrap();
    let (lam, fd) = small_data(dir.path());
    let out = dir.path().join("vae.json");
    ok(fabry(&[
        "train-vae",
        "--data",
        s(&lam),
        "--beta",
        "0.1,0.01",
        "--epochs",
        "2",
        "--batch-size",
        "20",
        "--out",
        s(&out),
        "--log-every",
        "0",
    ]));
    let sweep = std::fs::read_to_string(dir.path().join("vae.sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 3);
    assert!(sweep.starts_with("beta,recon_mae,total_kl,informative_dims"));
    valid_svg(&dir.path().join("vae.sweep.svg"));
    let model = dir.path().join("vae.beta1e-2.json");
    assert!(model.exists());

    let text = ok(fabry(&["analyze-latent", "--model", s(&model), "--data", s(&fd)]));
    assert!(text.contains("informative dims"));
    let scatter = std::fs::read_to_string(dir.path().join("vae.beta1e-2.latent.scatter.csv")).unwrap();
    assert_eq!(
        scatter.lines().next().unwrap(),
        "sample_id,F,delta0,one_over_1_plus_F,mu_1,mu_2,mu_3,mu_4,mu_5,kl_1,kl_2,kl_3,kl_4,kl_5"
    );
    valid_svg(&dir.path().join("vae.beta1e-2.latent.kl.svg"));

    // An untrained zero model has constant latent means.
    let zero = dir.path().join("zero.json");
    save_vae(&Vae::zeros(200, &VaeConfig::default()).unwrap(), None, &zero).unwrap();
    let text = ok(fabry(&["analyze-latent", "--model", s(&zero), "--data", s(&lam)]));
    assert!(text.contains("informative dims (KL >= 0.05): 0"));
    assert!(text.contains("degenerate"));
}

#[test]
fn invert_single_targets() {
    let dir = TempDir::new().unwrap();
    let (_, fd) = small_data(dir.path());
    let model = dir.path().join("fd.json");
    train_small(&fd, &model, &[]);

    let prefix = dir.path().join("inv");
    let text = ok(fabry(&[
        "invert",
        "--model",
        s(&model),
        "--target",
        "test:0",
        "--data",
        s(&fd),
        "--iters",
        "150",
        "--out",
        s(&prefix),
    ]));
    assert!(text.contains("delta MAE"));
    let traj = std::fs::read_to_string(dir.path().join("inv.trajectory.csv")).unwrap();
    assert_eq!(traj.lines().next().unwrap(), "iter,f_coeff,delta0_nm,mse,reinit");
    assert_eq!(traj.lines().count(), 152);
    let svg = valid_svg(&dir.path().join("inv.svg"));
    assert!(svg.contains("surrogate at truth"));

    let pulse = dir.path().join("pulse.csv");
    std::fs::write(&pulse, "wavelength,T\n400,0\n549.9,0\n550,1\n650,1\n650.1,0\n798,0\n").unwrap();
    let prefix = dir.path().join("pulse");
    let text = ok(fabry(&[
        "invert",
        "--model",
        s(&model),
        "--target",
        s(&pulse),
        "--iters",
        "50",
        "--out",
        s(&prefix),
    ]));
    assert!(!text.contains("delta MAE"));
    valid_svg(&dir.path().join("pulse.svg"));

    ok(fabry(&[
        "invert",
        "--model",
        s(&model),
        "--target",
        "test:1",
        "--data",
        s(&fd),
        "--init-loss",
        "mse",
        "--reinit",
        "0",
        "--iters",
        "20",
        "--init-params",
        "0,-1",
        "--out",
        s(&prefix),
    ]));

    std::fs::write(&pulse, "400,1\n").unwrap();
    let o = fabry(&["invert", "--model", s(&model), "--target", s(&pulse)]);
    assert_eq!(o.status.code(), Some(2));
    let o = fabry(&["invert", "--model", s(&model), "--target", "test:0"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn invert_batch_reports() {
    let dir = TempDir::new().unwrap();
    let (_, fd) = small_data(dir.path());
    let model = dir.path().join("fd.json");
    train_small(&fd, &model, &[]);
    let prefix = dir.path().join("b");
    let text = ok(fabry(&[
        "invert-batch",
        "--model",
        s(&model),
        "--data",
        s(&fd),
        "--count",
        "3",
        "--iters",
        "30",
        "--threads",
        "2",
        "--out",
        s(&prefix),
    ]));
    assert!(text.contains("completed 3"));
    let rows = std::fs::read_to_string(dir.path().join("b.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
    let hist = std::fs::read_to_string(dir.path().join("b.hist.csv")).unwrap();
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 3);
    valid_svg(&dir.path().join("b.hist.svg"));

    let text = ok(fabry(&[
        "invert-batch",
        "--model",
        s(&model),
        "--data",
        s(&fd),
        "--count",
        "0",
        "--out",
        s(&prefix),
    ]));
    assert!(text.contains("targets 0"));
    assert_eq!(
        std::fs::read_to_string(dir.path().join("b.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}
