//! Cross-module checks: projector geometry preservation, class-covariance
//! recovery from synthetic uncertainty estimates, and a miniature run of the
//! whole estimation chain through the library API.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use repcap_core::student::{derive_seed, mc_infer_set, train_student, StudentArchitecture};
use repcap_core::{
    class_statistics, estimate_gaussian, far_to_radius, fraction_to_radius,
    generate_synthetic_teacher, high_dim_distance, population_statistics, project_batch,
    select_canonical_class, spearman, train_projection, CanonicalSelector, DistanceConvention,
    LiftSpec, Mat, Parameterization, ProjectorOptions, StudentLossWeights, SyntheticTeacherSpec,
    TrainConfig, UncertaintyEstimate,
};

#[test]
fn projector_preserves_distance_ranking_on_heldout_pairs() {
    // Train on 25 samples per class, evaluate the d_H vs projected-distance
    // rank correlation on pairs of never-seen samples.
    let train_spec = SyntheticTeacherSpec {
        latent_dim: 4,
        ambient_dim: 32,
        n_classes: 40,
        samples_per_class: 25,
        between_class_cov: Mat::identity(4),
        within_class_cov: Mat::identity(4).scale(0.2),
        lift: LiftSpec::Smooth {
            gain: 2.0,
            normalize: true,
        },
        seed: 6,
    };
    let (train_set, _) = generate_synthetic_teacher(&train_spec).unwrap();
    let extended_spec = SyntheticTeacherSpec {
        samples_per_class: 30,
        ..train_spec.clone()
    };
    let (extended, _) = generate_synthetic_teacher(&extended_spec).unwrap();
    let heldout: Vec<Vec<f64>> = extended
        .records()
        .chunks(30)
        .flat_map(|class| class[25..].iter().map(|r| r.vector.clone()))
        .collect();

    let cfg = TrainConfig {
        epochs: 30,
        batch_pairs: 128,
        learning_rate: 1e-3,
        seed: 17,
        ..TrainConfig::projector_default()
    };
    let options = ProjectorOptions {
        width: 64,
        residual_blocks: 1,
        pairs_per_epoch: Some(2000),
        ..ProjectorOptions::default()
    };
    let (net, log) = train_projection(&train_set, 4, &cfg, &options).unwrap();
    assert!(
        log.val_losses.last().unwrap() < &(0.9 * log.val_losses[0]),
        "validation stress should drop: {:?}",
        (log.val_losses.first(), log.val_losses.last())
    );

    let projected = project_batch(&net, &heldout).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut dh = Vec::with_capacity(10_000);
    let mut dl = Vec::with_capacity(10_000);
    for _ in 0..10_000 {
        let i = rng.gen_range(0..heldout.len());
        let mut j = rng.gen_range(0..heldout.len());
        while j == i {
            j = rng.gen_range(0..heldout.len());
        }
        dh.push(
            high_dim_distance(&heldout[i], &heldout[j], DistanceConvention::OneMinusCos).unwrap(),
        );
        let d: f64 = projected[i]
            .iter()
            .zip(&projected[j])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        dl.push(d);
    }
    let rho = spearman(&dh, &dl);
    assert!(rho >= 0.8, "rank correlation {rho}");
}

#[test]
fn class_covariance_recovered_from_synthetic_estimates() {
    // Per-sample estimates built like the Monte-Carlo aggregator builds
    // them, with draws around a known within-class covariance; the class
    // statistic has to land near that covariance.
    let m = 4;
    let w_diag = [0.2, 0.35, 0.15, 0.25];
    let w = Mat::from_diag(&w_diag);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = 20;
    let members: Vec<UncertaintyEstimate> = (0..50)
        .map(|_| {
            // Half the variance arrives through the spread of per-pass
            // means, half through the per-pass aleatoric diagonals.
            let mut mus: Vec<Vec<f64>> = Vec::with_capacity(t);
            for _ in 0..t {
                mus.push(
                    (0..m)
                        .map(|j| {
                            (0.5 * w_diag[j]).sqrt()
                                * rng.sample::<f64, _>(rand_distr::StandardNormal)
                        })
                        .collect(),
                );
            }
            let mut mu_hat = vec![0.0; m];
            for mu in &mus {
                for (s, v) in mu_hat.iter_mut().zip(mu) {
                    *s += v / t as f64;
                }
            }
            let mut epistemic = Mat::zeros(m, m);
            for mu in &mus {
                let dev: Vec<f64> = mu.iter().zip(&mu_hat).map(|(a, b)| a - b).collect();
                epistemic.add_outer(&dev, 1.0 / t as f64);
            }
            let aleatoric = Mat::from_diag(
                &w_diag
                    .iter()
                    .map(|v| 0.5 * v * rng.gen_range(0.85..1.15))
                    .collect::<Vec<_>>(),
            );
            UncertaintyEstimate {
                mu_hat,
                sigma_hat: epistemic.add(&aleatoric),
                epistemic,
                aleatoric,
                passes: t,
            }
        })
        .collect();
    let groups = vec![("c0".to_string(), members)];
    let (classes, _) = class_statistics(&groups, 5).unwrap();
    let err = classes[0].sigma_z_c.sub(&w).frobenius_norm() / w.frobenius_norm();
    assert!(err < 0.25, "relative Frobenius error {err}");
}

#[test]
fn library_level_mini_pipeline_produces_consistent_capacity() {
    let spec = SyntheticTeacherSpec {
        latent_dim: 2,
        ambient_dim: 12,
        n_classes: 20,
        samples_per_class: 20,
        between_class_cov: Mat::identity(2),
        within_class_cov: Mat::identity(2).scale(0.2),
        lift: LiftSpec::Smooth {
            gain: 2.0,
            normalize: true,
        },
        seed: 4,
    };
    let (set, gt) = generate_synthetic_teacher(&spec).unwrap();
    let inputs: Vec<Vec<f64>> = set.records().iter().map(|r| r.vector.clone()).collect();

    let cfg = TrainConfig {
        epochs: 20,
        batch_pairs: 64,
        learning_rate: 1e-3,
        seed: 2,
        ..TrainConfig::projector_default()
    };
    let options = ProjectorOptions {
        width: 32,
        residual_blocks: 1,
        ..ProjectorOptions::default()
    };
    let (proj, _) = train_projection(&set, 2, &cfg, &options).unwrap();
    let targets = project_batch(&proj, &inputs).unwrap();

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = inputs.iter().cloned().zip(targets).collect();
    let student_cfg = TrainConfig {
        epochs: 30,
        batch_pairs: 32,
        learning_rate: 2e-3,
        seed: derive_seed(2, 0x57D, 0),
        ..TrainConfig::student_default()
    };
    let arch = StudentArchitecture {
        width: 32,
        residual_blocks: 1,
        dropout: 0.2,
    };
    let (studnet, _, _) = train_student(
        &pairs,
        2,
        arch,
        &student_cfg,
        &StudentLossWeights::default(),
    )
    .unwrap();

    let estimates = mc_infer_set(&studnet, &inputs, 60, 9).unwrap();
    let groups: Vec<(String, Vec<UncertaintyEstimate>)> = set
        .group_by_label()
        .into_iter()
        .map(|(label, idx)| (label, idx.iter().map(|&i| estimates[i].clone()).collect()))
        .collect();
    let (classes, dropped) = class_statistics(&groups, 5).unwrap();
    assert!(dropped.is_empty());
    assert_eq!(classes.len(), 20);
    let canonical = select_canonical_class(&classes, CanonicalSelector::Mean).unwrap();
    let pop = population_statistics(&classes, &canonical).unwrap();
    let r_y = fraction_to_radius(0.99, 2).unwrap();
    let r_z = far_to_radius(0.01, 2).unwrap();
    let report = repcap_core::capacity(
        &pop,
        &canonical,
        r_y,
        r_z,
        Parameterization::FullEllipsoid,
        CanonicalSelector::Mean,
    )
    .unwrap();
    assert!(report.capacity.is_finite());
    assert!(report.capacity > 1.0);

    // Sanity anchor: the latent-truth value at the same operating point.
    let oracle = repcap_core::oracle_capacity(
        &gt,
        0.01,
        0.99,
        CanonicalSelector::Mean,
        Parameterization::FullEllipsoid,
    )
    .unwrap();
    let gap = (report.log10_capacity - oracle.log10_capacity).abs();
    assert!(
        gap < 1.5,
        "mini pipeline {} vs oracle {}",
        report.log10_capacity,
        oracle.log10_capacity
    );

    // The latent-space fit agrees with the generative parameters too.
    let fitted_between = estimate_gaussian(&gt.centers, Parameterization::FullEllipsoid).unwrap();
    let scatter_err = fitted_between
        .covariance
        .sub(&gt.between_class_cov)
        .frobenius_norm()
        / gt.between_class_cov.frobenius_norm();
    assert!(
        scatter_err < 0.5,
        "between-class covariance error {scatter_err}"
    );
}
