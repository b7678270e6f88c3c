//! `repcap toy`: sample the 2D constellation, fit it, and print the fitted,
//! analytic, and convex-hull capacities.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use repcap_core::{toy_capacity_experiment, Mat, ToySpec};

use crate::report::{usage, write_json, CmdResult};

#[derive(Debug, Args, Serialize)]
pub struct ToyArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of identity classes to sample.
    #[arg(long, default_value_t = 100)]
    pub classes: usize,
    #[arg(long = "samples-per-class", default_value_t = 100)]
    pub samples_per_class: usize,
    /// Lower bound of the per-class covariance scale factor.
    #[arg(long = "jitter-lo", default_value_t = 0.5)]
    pub jitter_lo: f64,
    /// Upper bound of the per-class covariance scale factor.
    #[arg(long = "jitter-hi", default_value_t = 1.0)]
    pub jitter_hi: f64,
    /// Write a JSON report here in addition to stdout.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct ToyReport<'a> {
    provenance: &'a ToyArgs,
    result: repcap_core::synth::ToyCapacityResult,
}

fn fmt_mat(m: &Mat) -> String {
    format!(
        "[[{:.4}, {:.4}], [{:.4}, {:.4}]]",
        m[(0, 0)],
        m[(0, 1)],
        m[(1, 0)],
        m[(1, 1)]
    )
}

pub fn run(args: ToyArgs) -> CmdResult<()> {
    if args.classes < 2 {
        return Err(usage(
            "toy",
            format!("need at least 2 classes, got {}", args.classes),
        ));
    }
    if args.samples_per_class < 3 {
        return Err(usage(
            "toy",
            format!(
                "need at least 3 samples per class, got {}",
                args.samples_per_class
            ),
        ));
    }
    let spec = ToySpec {
        n_classes: args.classes,
        samples_per_class: args.samples_per_class,
        seed: args.seed,
        class_cov_jitter: (args.jitter_lo, args.jitter_hi),
        ..ToySpec::default()
    };
    let result = toy_capacity_experiment(&spec).map_err(|source| crate::report::CmdError {
        stage: "toy",
        source,
    })?;

    println!(
        "population covariance   estimate {}",
        fmt_mat(&result.est_population_cov)
    );
    println!(
        "                        truth    {}",
        fmt_mat(&spec.population_cov)
    );
    println!(
        "max-area class ({})  estimate {}",
        result.max_class_label,
        fmt_mat(&result.est_max_class_cov)
    );
    println!(
        "                        template {}",
        fmt_mat(&spec.class_cov_template)
    );
    println!(
        "unit-radius areas       population {:.4} (truth {:.4})  class {:.4} (template {:.4})",
        result.est_population_area,
        result.gt_population_area,
        result.est_max_class_area,
        result.gt_template_area
    );
    println!(
        "hull areas              population {:.4}  max class {:.4}",
        result.hull_population_area, result.hull_max_class_area
    );
    println!("estimated capacity      {:.4}", result.estimated_capacity);
    println!(
        "ground-truth capacity   {:.4}",
        result.ground_truth_capacity
    );
    println!("convex-hull capacity    {:.4}", result.hull_capacity);

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| usage("toy", format!("create {}: {e}", dir.display())))?;
        let report = ToyReport {
            provenance: &args,
            result,
        };
        write_json(&dir.join("toy_report.json"), &report, "toy")?;
    }
    Ok(())
}
