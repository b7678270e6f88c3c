//! `repcap pipeline`: the six-step estimation run. Step 1 learns (or
//! selects) the projection, step 2 trains the dropout student on frozen
//! teacher targets, steps 3-4 aggregate Monte-Carlo uncertainty into class
//! and population statistics, steps 5-6 convert FARs to radii and report
//! capacity. Artifacts are cached in the output directory so `sweep` and
//! `eval` can reuse them.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use repcap_core::student::derive_seed;
use repcap_core::{
    capacity, checkpoint, class_statistics, far_to_radius, fit_pca, fraction_to_radius,
    generate_synthetic_teacher, mc_infer_set, oracle_capacity, population_statistics,
    project_batch, select_canonical_class, train_projection, train_student, CanonicalSelector,
    CapacityReport, ClassStatistics, DistanceConvention, EmbeddingSet, LatentGroundTruth,
    LrSchedule, Mat, OptimizerKind, Parameterization, ProjectorOptions, StudentArchitecture,
    StudentLossWeights, SyntheticTeacherSpec, TrainConfig,
};

use super::{ParamArg, SelectorArg};
use crate::report::{usage, write_json, write_text, CmdResult, Stage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleArg {
    Constant,
    Cosine,
}

#[derive(Debug, Args, Serialize)]
pub struct PipelineArgs {
    /// Embedding file (label,f0,...,f{p-1}).
    #[arg(long, conflicts_with = "synth")]
    pub input: Option<PathBuf>,
    /// Use a synthetic teacher instead of an input file ("default").
    #[arg(long)]
    pub synth: Option<String>,
    #[arg(long = "synth-classes")]
    pub synth_classes: Option<usize>,
    #[arg(long = "synth-samples")]
    pub synth_samples: Option<usize>,
    #[arg(long = "synth-latent-dim")]
    pub synth_latent_dim: Option<usize>,
    #[arg(long = "synth-ambient-dim")]
    pub synth_ambient_dim: Option<usize>,
    /// Within-class variance scale of the synthetic latent structure.
    #[arg(long = "synth-within-scale")]
    pub synth_within_scale: Option<f64>,
    #[arg(long = "out-dir", default_value = "repcap-out")]
    pub out_dir: PathBuf,

    /// Target dimension of the unfolded space (defaults to the synthetic
    /// latent dimension, else 16).
    #[arg(long = "proj-dim")]
    pub proj_dim: Option<usize>,
    #[arg(long = "proj-width", default_value_t = 512)]
    pub proj_width: usize,
    #[arg(long = "proj-blocks", default_value_t = 2)]
    pub proj_blocks: usize,
    /// Weight regularizer of the projection objective.
    #[arg(long = "proj-reg", default_value_t = 3e-4)]
    pub proj_reg: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 3e-4)]
    pub lr: f64,
    #[arg(long = "batch-pairs", default_value_t = 256)]
    pub batch_pairs: usize,
    /// Use the printed one-plus-cosine distance instead of one-minus.
    #[arg(long = "one-plus-cos")]
    pub one_plus_cos: bool,

    #[arg(long = "student-width", default_value_t = 128)]
    pub student_width: usize,
    #[arg(long = "student-blocks", default_value_t = 2)]
    pub student_blocks: usize,
    /// Dropout rate on every student trunk layer.
    #[arg(long, default_value_t = 0.2)]
    pub dropout: f64,
    #[arg(long = "student-epochs")]
    pub student_epochs: Option<usize>,
    #[arg(long = "student-lr", default_value_t = 1e-3)]
    pub student_lr: f64,
    #[arg(long = "student-batch", default_value_t = 64)]
    pub student_batch: usize,
    /// Population-likelihood loss weight.
    #[arg(long, default_value_t = 0.1)]
    pub lambda: f64,
    /// Aleatoric variance regularizer weight.
    #[arg(long, default_value_t = 1e-3)]
    pub gamma: f64,
    /// Population variance regularizer weight.
    #[arg(long, default_value_t = 1e-3)]
    pub delta: f64,

    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long = "lr-schedule", value_enum, default_value_t = ScheduleArg::Cosine)]
    pub lr_schedule: ScheduleArg,

    /// Monte-Carlo dropout passes per sample.
    #[arg(long = "mc-passes", default_value_t = 1000)]
    pub mc_passes: usize,
    /// Operating FAR(s); repeatable.
    #[arg(long = "far")]
    pub far: Vec<f64>,
    #[arg(long = "population-fraction", default_value_t = 0.99)]
    pub population_fraction: f64,
    /// Force the population fraction to 1 - FAR so the radii coincide.
    #[arg(long = "shannon-pairing")]
    pub shannon_pairing: bool,
    #[arg(long, value_enum, default_value_t = SelectorArg::Max)]
    pub selector: SelectorArg,
    #[arg(long, value_enum, default_value_t = ParamArg::Full)]
    pub param: ParamArg,
    /// Minimum samples per class for the statistics.
    #[arg(long = "min-samples", default_value_t = 5)]
    pub min_samples: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Replace the learned projection with the linear principal-component
    /// baseline.
    #[arg(long, conflicts_with = "skip_projection")]
    pub pca: bool,
    /// Feed raw embeddings to the student without any projection.
    #[arg(long = "skip-projection")]
    pub skip_projection: bool,
}

/// Statistics cache written for `sweep`.
#[derive(Serialize, Deserialize)]
pub struct StatisticsFile {
    pub provenance: serde_json::Value,
    pub proj_dim: usize,
    pub classes: Vec<ClassStatistics>,
    pub dropped_classes: Vec<String>,
}

#[derive(Serialize)]
struct PipelineReport<'a> {
    provenance: &'a PipelineArgs,
    proj_dim: usize,
    n_records: usize,
    n_classes_kept: usize,
    dropped_classes: Vec<String>,
    canonical_class_id: String,
    projector_val_losses: Option<Vec<f64>>,
    student_val_losses: Vec<f64>,
    reports: Vec<CapacityReport>,
    oracle: Option<Vec<CapacityReport>>,
}

pub fn resolved_fars(fars: &[f64]) -> CmdResult<Vec<f64>> {
    let mut list = if fars.is_empty() {
        vec![0.01]
    } else {
        fars.to_vec()
    };
    for &q in &list {
        if !(q > 0.0 && q < 1.0) {
            return Err(usage("step5/radii", format!("FAR {q} outside (0, 1)")));
        }
    }
    list.sort_by(|a, b| a.partial_cmp(b).unwrap());
    list.dedup();
    Ok(list)
}

fn synth_spec(args: &PipelineArgs) -> CmdResult<SyntheticTeacherSpec> {
    let preset = args.synth.as_deref().unwrap_or("default");
    if preset != "default" {
        return Err(usage(
            "step0/input",
            format!("unknown synth preset '{preset}' (expected 'default')"),
        ));
    }
    let mut spec = SyntheticTeacherSpec::default_bench(args.seed);
    if let Some(c) = args.synth_classes {
        spec.n_classes = c;
    }
    if let Some(s) = args.synth_samples {
        spec.samples_per_class = s;
    }
    if let Some(m) = args.synth_latent_dim {
        spec.latent_dim = m;
        spec.between_class_cov = Mat::identity(m);
        spec.within_class_cov = Mat::identity(m).scale(0.05);
    }
    if let Some(p) = args.synth_ambient_dim {
        spec.ambient_dim = p;
    }
    if let Some(w) = args.synth_within_scale {
        spec.within_class_cov = Mat::identity(spec.latent_dim).scale(w);
    }
    Ok(spec)
}

struct LoadedData {
    embeddings: EmbeddingSet,
    ground_truth: Option<LatentGroundTruth>,
}

fn load_data(args: &PipelineArgs, out_dir: &Path) -> CmdResult<LoadedData> {
    match (&args.input, &args.synth) {
        (Some(path), None) => {
            if !path.exists() {
                return Err(usage(
                    "step0/input",
                    format!("input file not found: {}", path.display()),
                ));
            }
            let embeddings = EmbeddingSet::load(path).stage("step0/input")?;
            Ok(LoadedData {
                embeddings,
                ground_truth: None,
            })
        }
        (None, Some(_)) => {
            let spec = synth_spec(args)?;
            let (embeddings, gt) = generate_synthetic_teacher(&spec).stage("step0/synth")?;
            embeddings
                .save(&out_dir.join("embeddings.csv"))
                .stage("step0/synth")?;
            write_json(&out_dir.join("ground_truth.json"), &gt, "step0/synth")?;
            Ok(LoadedData {
                embeddings,
                ground_truth: Some(gt),
            })
        }
        _ => Err(usage(
            "step0/input",
            "exactly one of --input or --synth is required".into(),
        )),
    }
}

pub fn run(args: PipelineArgs) -> CmdResult<()> {
    if !(0.0..1.0).contains(&args.dropout) {
        return Err(usage(
            "step0/input",
            format!("dropout {} outside [0, 1)", args.dropout),
        ));
    }
    for (name, value) in [
        ("proj-width", args.proj_width),
        ("student-width", args.student_width),
        ("mc-passes", args.mc_passes),
    ] {
        if value == 0 {
            return Err(usage("step0/input", format!("--{name} must be positive")));
        }
    }
    // Fail fast on bad operating points and training knobs, before any data
    // generation or training begins.
    let fars = resolved_fars(&args.far)?;
    if !(args.population_fraction > 0.0 && args.population_fraction < 1.0) {
        return Err(usage(
            "step0/input",
            format!(
                "population fraction {} outside (0, 1)",
                args.population_fraction
            ),
        ));
    }
    let optimizer = match args.optimizer {
        OptimizerArg::Adam => OptimizerKind::adam(),
        OptimizerArg::Sgd => OptimizerKind::sgd_momentum(),
    };
    let schedule = match args.lr_schedule {
        ScheduleArg::Cosine => LrSchedule::CosineAnnealing,
        ScheduleArg::Constant => LrSchedule::Constant,
    };
    let projector_cfg = TrainConfig {
        learning_rate: args.lr,
        batch_pairs: args.batch_pairs,
        epochs: args.epochs,
        reg_lambda: args.proj_reg,
        optimizer,
        lr_schedule: schedule,
        seed: args.seed,
    };
    projector_cfg.validate().stage("step0/input")?;
    let student_cfg = TrainConfig {
        learning_rate: args.student_lr,
        batch_pairs: args.student_batch,
        epochs: args.student_epochs.unwrap_or(args.epochs),
        reg_lambda: 0.0,
        optimizer,
        lr_schedule: schedule,
        seed: derive_seed(args.seed, 0x57D, 0),
    };
    student_cfg.validate().stage("step0/input")?;
    let weights = StudentLossWeights {
        lambda: args.lambda,
        gamma: args.gamma,
        delta: args.delta,
    };
    weights.validate().stage("step0/input")?;

    std::fs::create_dir_all(&args.out_dir).map_err(|e| {
        usage(
            "step0/input",
            format!("create {}: {e}", args.out_dir.display()),
        )
    })?;
    let data = load_data(&args, &args.out_dir)?;
    let set = &data.embeddings;
    let p = set.dim();
    println!("step 0: {} records, dimension {}", set.len(), p);

    // Step 1: projection (learned, linear, or skipped).
    let proj_dim = if args.skip_projection {
        p
    } else {
        args.proj_dim
            .or_else(|| data.ground_truth.as_ref().map(|g| g.latent_dim))
            .unwrap_or_else(|| 16.min(p.saturating_sub(1)).max(1))
    };
    let inputs: Vec<Vec<f64>> = set.records().iter().map(|r| r.vector.clone()).collect();
    let mut projector_val_losses = None;
    let targets: Vec<Vec<f64>> = if args.skip_projection {
        println!("step 1: projection skipped (targets are raw embeddings)");
        inputs.clone()
    } else if args.pca {
        let proj = fit_pca(set, proj_dim).stage("step1/pca")?;
        write_json(&args.out_dir.join("pca.json"), &proj, "step1/pca")?;
        println!("step 1: linear principal-component projection to {proj_dim} dims");
        inputs
            .iter()
            .map(|x| proj.project(x))
            .collect::<repcap_core::Result<_>>()
            .stage("step1/pca")?
    } else {
        let options = ProjectorOptions {
            width: args.proj_width,
            residual_blocks: args.proj_blocks,
            convention: if args.one_plus_cos {
                DistanceConvention::OnePlusCos
            } else {
                DistanceConvention::OneMinusCos
            },
            pairs_per_epoch: None,
        };
        let (net, log) =
            train_projection(set, proj_dim, &projector_cfg, &options).stage("step1/projector")?;
        checkpoint::save_projector(&net, &args.out_dir.join("projector.ckpt"))
            .stage("step1/projector")?;
        println!(
            "step 1: projector trained to {} dims (val stress {:.6} -> {:.6})",
            proj_dim,
            log.val_losses.first().unwrap(),
            log.val_losses.last().unwrap()
        );
        projector_val_losses = Some(log.val_losses);
        project_batch(&net, &inputs).stage("step1/projector")?
    };

    // Step 2: student on frozen teacher targets.
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = inputs
        .iter()
        .cloned()
        .zip(targets.iter().cloned())
        .collect();
    let arch = StudentArchitecture {
        width: args.student_width,
        residual_blocks: args.student_blocks,
        dropout: args.dropout,
    };
    let (student, population_model, student_log) =
        train_student(&pairs, proj_dim, arch, &student_cfg, &weights).stage("step2/student")?;
    let l_g: Vec<f64> = population_model
        .covariance
        .diag()
        .iter()
        .map(|v| v.max(1e-300).ln())
        .collect();
    checkpoint::save_student(
        &student,
        &population_model.mean,
        &l_g,
        &args.out_dir.join("student.ckpt"),
    )
    .stage("step2/student")?;
    println!(
        "step 2: student trained (val loss {:.6} -> {:.6})",
        student_log.val_losses.first().unwrap(),
        student_log.val_losses.last().unwrap()
    );

    // Steps 3-4: Monte-Carlo uncertainty, class and population statistics.
    let estimates = mc_infer_set(
        &student,
        &inputs,
        args.mc_passes,
        derive_seed(args.seed, 0x3C, 0),
    )
    .stage("step3/mc-inference")?;
    let groups: Vec<(String, Vec<repcap_core::UncertaintyEstimate>)> = set
        .group_by_label()
        .into_iter()
        .map(|(label, idx)| {
            let ests = idx.iter().map(|&i| estimates[i].clone()).collect();
            (label, ests)
        })
        .collect();
    let (classes, dropped) =
        class_statistics(&groups, args.min_samples).stage("step4/class-statistics")?;
    println!(
        "steps 3-4: {} classes kept, {} dropped (min {} samples, T = {})",
        classes.len(),
        dropped.len(),
        args.min_samples,
        args.mc_passes
    );
    let provenance_json = serde_json::to_value(&args).map_err(|e| {
        usage(
            "step4/class-statistics",
            format!("serialize provenance: {e}"),
        )
    })?;
    let stats_file = StatisticsFile {
        provenance: provenance_json,
        proj_dim,
        classes,
        dropped_classes: dropped,
    };
    write_json(
        &args.out_dir.join("statistics.json"),
        &stats_file,
        "step4/class-statistics",
    )?;

    // Steps 5-6: radii and capacity per FAR.
    let selector: CanonicalSelector = args.selector.into();
    let param: Parameterization = args.param.into();
    let canonical =
        select_canonical_class(&stats_file.classes, selector).stage("step5/canonical")?;
    let pop = population_statistics(&stats_file.classes, &canonical).stage("step5/population")?;
    let mut reports = Vec::with_capacity(fars.len());
    let mut oracle_reports = Vec::new();
    for &q in &fars {
        let frac = if args.shannon_pairing {
            1.0 - q
        } else {
            args.population_fraction
        };
        let r_y = fraction_to_radius(frac, proj_dim).stage("step5/radii")?;
        let r_z = far_to_radius(q, proj_dim).stage("step5/radii")?;
        let mut report =
            capacity(&pop, &canonical, r_y, r_z, param, selector).stage("step6/capacity")?;
        report.far = q;
        report.population_fraction = frac;
        if let Some(gt) = &data.ground_truth {
            let oracle = oracle_capacity(gt, q, frac, selector, param).stage("step6/oracle")?;
            println!(
                "steps 5-6: FAR {q}: log10 capacity {:.4} (oracle {:.4})",
                report.log10_capacity, oracle.log10_capacity
            );
            oracle_reports.push(oracle);
        } else {
            println!(
                "steps 5-6: FAR {q}: log10 capacity {:.4} (capacity {:.6e})",
                report.log10_capacity, report.capacity
            );
        }
        reports.push(report);
    }

    let mut csv = String::from(CapacityReport::csv_header());
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    write_text(&args.out_dir.join("sweep.csv"), &csv, "step6/capacity")?;

    let report = PipelineReport {
        provenance: &args,
        proj_dim,
        n_records: set.len(),
        n_classes_kept: stats_file.classes.len(),
        dropped_classes: stats_file.dropped_classes.clone(),
        canonical_class_id: canonical.class_id.clone(),
        projector_val_losses,
        student_val_losses: student_log.val_losses,
        reports,
        oracle: if oracle_reports.is_empty() {
            None
        } else {
            Some(oracle_reports)
        },
    };
    write_json(&args.out_dir.join("report.json"), &report, "step6/capacity")?;
    println!("report: {}", args.out_dir.join("report.json").display());
    Ok(())
}
