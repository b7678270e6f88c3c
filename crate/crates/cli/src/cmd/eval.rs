//! `repcap eval`: verification ROC of the teacher projection against the
//! student's Monte-Carlo mean, plus the rank correlation of their pairwise
//! distance scores.

use std::path::PathBuf;

use clap::Args;
use serde::Serialize;

use repcap_core::student::derive_seed;
use repcap_core::synth::{roc_from_scores, sample_verification_pairs, spearman, RocPoint};
use repcap_core::{checkpoint, mc_infer_set, project_batch, EmbeddingSet};

use crate::report::{usage, write_json, write_text, CmdResult, Stage};

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Embedding file to evaluate on.
    #[arg(long)]
    pub input: PathBuf,
    /// Projector checkpoint for the teacher path; omit with
    /// --skip-projection.
    #[arg(long)]
    pub projector: Option<PathBuf>,
    /// Student checkpoint.
    #[arg(long)]
    pub student: PathBuf,
    /// Teacher path uses the raw embeddings.
    #[arg(long = "skip-projection", conflicts_with = "projector")]
    pub skip_projection: bool,
    /// Genuine (and impostor) pair count.
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// FAR grid for the ROC rows; repeatable.
    #[arg(long = "far")]
    pub far: Vec<f64>,
    #[arg(long = "mc-passes", default_value_t = 1000)]
    pub mc_passes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Optional directory for roc.csv and eval.json.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalReport<'a> {
    provenance: &'a EvalArgs,
    spearman: f64,
    teacher_roc: Vec<RocPoint>,
    student_roc: Vec<RocPoint>,
}

fn pairwise_scores(vectors: &[Vec<f64>], pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(i, j)| {
            vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum()
        })
        .collect()
}

pub fn run(args: EvalArgs) -> CmdResult<()> {
    if !args.input.exists() {
        return Err(usage(
            "eval",
            format!("input file not found: {}", args.input.display()),
        ));
    }
    let set = EmbeddingSet::load(&args.input).stage("eval")?;
    let inputs: Vec<Vec<f64>> = set.records().iter().map(|r| r.vector.clone()).collect();

    // Teacher path.
    let teacher: Vec<Vec<f64>> = if args.skip_projection {
        inputs.clone()
    } else {
        let path = args.projector.as_ref().ok_or_else(|| {
            usage(
                "eval",
                "either --projector or --skip-projection is required".into(),
            )
        })?;
        let net = checkpoint::load_projector(path).stage("eval")?;
        if net.input_dim() != set.dim() {
            return Err(usage(
                "eval",
                format!(
                    "projector expects dimension {}, embeddings have {}",
                    net.input_dim(),
                    set.dim()
                ),
            ));
        }
        project_batch(&net, &inputs).stage("eval")?
    };

    // Student path: Monte-Carlo mean embedding.
    let (student, _mu_g, _l_g) = checkpoint::load_student(&args.student).stage("eval")?;
    if student.input_dim() != set.dim() {
        return Err(usage(
            "eval",
            format!(
                "student expects dimension {}, embeddings have {}",
                student.input_dim(),
                set.dim()
            ),
        ));
    }
    if student.output_dim() != teacher[0].len() {
        return Err(usage(
            "eval",
            format!(
                "student outputs dimension {}, teacher path has {}",
                student.output_dim(),
                teacher[0].len()
            ),
        ));
    }
    let estimates = mc_infer_set(
        &student,
        &inputs,
        args.mc_passes,
        derive_seed(args.seed, 0xE7A, 1),
    )
    .stage("eval")?;
    let student_mu: Vec<Vec<f64>> = estimates.into_iter().map(|e| e.mu_hat).collect();

    // Identical seeded pairs for both paths.
    let pairs = sample_verification_pairs(&set, args.pairs, args.seed).stage("eval")?;
    let n_genuine = args.pairs;
    let teacher_scores = pairwise_scores(&teacher, &pairs);
    let student_scores = pairwise_scores(&student_mu, &pairs);
    let rho = spearman(&teacher_scores, &student_scores);

    let far_grid = if args.far.is_empty() {
        vec![0.001, 0.01, 0.05, 0.1, 0.3]
    } else {
        let mut grid = args.far.clone();
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid
    };
    let teacher_roc = roc_from_scores(
        &teacher_scores[..n_genuine],
        &teacher_scores[n_genuine..],
        &far_grid,
    )
    .stage("eval")?;
    let student_roc = roc_from_scores(
        &student_scores[..n_genuine],
        &student_scores[n_genuine..],
        &far_grid,
    )
    .stage("eval")?;

    let provenance = serde_json::to_string(&args)
        .map_err(|e| usage("eval", format!("serialize provenance: {e}")))?;
    println!("config: {provenance}");
    println!("spearman(teacher, student) = {rho:.6}");
    let mut csv = String::from("far,tar_teacher,tar_student\n");
    for (t, s) in teacher_roc.iter().zip(&student_roc) {
        println!(
            "FAR {:>10}: TAR teacher {:.4}  student {:.4}",
            t.far, t.tar, s.tar
        );
        csv.push_str(&format!("{},{},{}\n", t.far, t.tar, s.tar));
    }

    if let Some(dir) = &args.out_dir {
        std::fs::create_dir_all(dir)
            .map_err(|e| usage("eval", format!("create {}: {e}", dir.display())))?;
        write_text(&dir.join("roc.csv"), &csv, "eval")?;
        let report = EvalReport {
            provenance: &args,
            spearman: rho,
            teacher_roc,
            student_roc,
        };
        write_json(&dir.join("eval.json"), &report, "eval")?;
    }
    Ok(())
}
