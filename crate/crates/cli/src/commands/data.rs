use anyhow::{bail, Context, Result};

use fabry_core::dataset::{
    derive_simplified_dataset, generate_lambda_dataset, generate_theta_dataset, save_csv, DatasetMeta, GridSpec,
    Problem,
};

use crate::args::GenDataArgs;
use crate::manifest::Recorder;
use crate::UsageError;

pub struct GenDataOutcome {
    pub meta: DatasetMeta,
}

pub fn gen_data(a: &GenDataArgs) -> Result<GenDataOutcome> {
    let Some(problem) = Problem::parse(&a.problem) else {
        bail!(UsageError(format!(
            "unknown problem {:?} (lambda, theta, fd)",
            a.problem
        )));
    };
    let mut rec = Recorder::new("gen-data", a, Some(a.seed))?;
    let (ds, spec) = match problem {
        Problem::Lambda => {
            let spec = GridSpec::reference_lambda();
            (generate_lambda_dataset(&spec)?, spec)
        }
        Problem::Theta => {
            let spec = GridSpec::reference_theta();
            (generate_theta_dataset(&spec)?, spec)
        }
        Problem::Simplified => {
            let spec = GridSpec::reference_lambda();
            (derive_simplified_dataset(&generate_lambda_dataset(&spec)?)?, spec)
        }
    };
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let csv = a.out.join("data.csv");
    let meta = save_csv(&ds, &csv, Some(&spec), Some(a.seed))?;
    rec.output(&csv);
    rec.output(&fabry_core::dataset::sidecar_path(&csv));
    rec.finish(&a.out.join("manifest.json"))?;

    println!(
        "problem {}: {} records, {} grid points",
        problem.name(),
        meta.count,
        meta.grid.count()
    );
    for b in &meta.normalization.features {
        println!("  {:<8} [{}, {}]", b.name, b.min, b.max);
    }
    let (lo, hi) = meta.normalization.target.bounds();
    println!("  normalized to [{lo}, {hi}]");
    Ok(GenDataOutcome { meta })
}
