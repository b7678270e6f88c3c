//! Ground-truth generators and oracles: the 2D toy constellation with a
//! convex-hull baseline, a synthetic high-dimensional teacher with known
//! latent Gaussian structure, and a verification-ROC harness.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::capacity::{
    capacity, CanonicalSelector, CapacityReport, ClassStatistics, PopulationStatistics,
};
use crate::embedding::{EmbeddingSet, Record};
use crate::error::{Error, Result};
use crate::hull::convex_hull_area_2d;
use crate::linalg::{random_orthonormal, Mat};
use crate::stats::{cholesky_logdet, estimate_gaussian, GaussianModel, Parameterization};
use crate::student::derive_seed;

/// Factor (zero-safe) used to draw correlated Gaussian samples; the zero
/// matrix maps every draw to the mean.
fn sampling_factor(cov: &Mat) -> Result<Mat> {
    if cov.frobenius_norm() == 0.0 {
        return Ok(Mat::zeros(cov.rows(), cov.cols()));
    }
    Ok(cholesky_logdet(cov)?.lower().clone())
}

fn draw_gaussian<R: Rng>(mean: &[f64], factor: &Mat, rng: &mut R) -> Vec<f64> {
    let d = mean.len();
    let z: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    let mut x = factor.matvec(&z);
    for (xi, m) in x.iter_mut().zip(mean) {
        *xi += m;
    }
    x
}

/// 2D toy constellation: class centers from a population Gaussian, per-class
/// samples from scaled-and-rotated copies of a template covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToySpec {
    pub population_cov: Mat,
    pub class_cov_template: Mat,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub seed: u64,
    /// Uniform range for the per-class covariance scale factor.
    pub class_cov_jitter: (f64, f64),
}

impl Default for ToySpec {
    fn default() -> Self {
        Self {
            population_cov: Mat::from_rows(&[vec![10.34, 0.71], vec![0.71, 11.79]]),
            class_cov_template: Mat::from_rows(&[vec![4.18, 0.97], vec![0.97, 5.86]]),
            n_classes: 100,
            samples_per_class: 100,
            seed: 0,
            // Upper factor 1.0 keeps the largest class at the template scale.
            class_cov_jitter: (0.5, 1.0),
        }
    }
}

impl ToySpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::InsufficientClasses {
                need: 2,
                got: self.n_classes,
            });
        }
        if self.samples_per_class < 2 {
            return Err(Error::InsufficientSamples {
                need: 2,
                got: self.samples_per_class,
            });
        }
        let (lo, hi) = self.class_cov_jitter;
        if !(lo > 0.0 && hi >= lo) {
            return Err(Error::InvalidConfig(format!(
                "jitter range ({lo}, {hi}) must satisfy 0 < lo <= hi"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyClass {
    pub label: String,
    pub center: Vec<f64>,
    pub true_cov: Mat,
    pub samples: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyData {
    pub classes: Vec<ToyClass>,
    /// Generative population model (zero mean, the configured covariance).
    pub population: GaussianModel,
}

/// Sample the toy constellation. Each class derives its own RNG stream from
/// the configured seed, so regeneration is bitwise identical and classes are
/// independent.
pub fn generate_toy(spec: &ToySpec) -> Result<ToyData> {
    spec.validate()?;
    let pop_factor = sampling_factor(&spec.population_cov)?;
    let (lo, hi) = spec.class_cov_jitter;
    let classes = (0..spec.n_classes)
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, c as u64, 0));
            let center = draw_gaussian(&[0.0, 0.0], &pop_factor, &mut rng);
            let scale = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            let angle = rng.gen_range(0.0..std::f64::consts::TAU);
            let (s, co) = angle.sin_cos();
            let rot = Mat::from_rows(&[vec![co, -s], vec![s, co]]);
            let true_cov = spec.class_cov_template.scale(scale).conjugate(&rot);
            let class_factor = sampling_factor(&true_cov)?;
            let samples = (0..spec.samples_per_class)
                .map(|_| draw_gaussian(&center, &class_factor, &mut rng))
                .collect();
            Ok(ToyClass {
                label: format!("c{c:03}"),
                center,
                true_cov,
                samples,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let population = GaussianModel::new(
        vec![0.0, 0.0],
        spec.population_cov.clone(),
        Parameterization::FullEllipsoid,
    )?;
    Ok(ToyData {
        classes,
        population,
    })
}

/// Table-style toy outcome: the fitted-Gaussian estimate, the analytic
/// ground truth, and the convex-hull baseline.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyCapacityResult {
    pub estimated_capacity: f64,
    pub ground_truth_capacity: f64,
    pub hull_capacity: f64,
    pub est_population_cov: Mat,
    pub est_max_class_cov: Mat,
    pub max_class_label: String,
    /// Ellipse areas at unit radius (pi sqrt det).
    pub est_population_area: f64,
    pub est_max_class_area: f64,
    pub gt_population_area: f64,
    pub gt_template_area: f64,
    pub hull_population_area: f64,
    pub hull_max_class_area: f64,
}

fn unit_ellipse_area(cov: &Mat) -> Result<f64> {
    Ok(std::f64::consts::PI * (0.5 * cholesky_logdet(cov)?.log_det).exp())
}

/// Run the toy experiment. The population covariance itself is the
/// numerator here (the table convention), not the scatter-plus-class sum
/// used by the estimation pipeline; the class is the one with the largest
/// fitted area.
pub fn toy_capacity_experiment(spec: &ToySpec) -> Result<ToyCapacityResult> {
    let data = generate_toy(spec)?;

    // Fit each class and the population of fitted class means.
    let fitted: Vec<GaussianModel> = data
        .classes
        .iter()
        .map(|c| estimate_gaussian(&c.samples, Parameterization::FullEllipsoid))
        .collect::<Result<Vec<_>>>()?;
    let means: Vec<Vec<f64>> = fitted.iter().map(|g| g.mean.clone()).collect();
    let pop_fit = estimate_gaussian(&means, Parameterization::FullEllipsoid)?;

    let log_dets: Vec<f64> = fitted
        .iter()
        .map(|g| Ok(cholesky_logdet(&g.covariance)?.log_det))
        .collect::<Result<Vec<_>>>()?;
    let max_idx = (0..fitted.len())
        .max_by(|&a, &b| log_dets[a].partial_cmp(&log_dets[b]).unwrap())
        .unwrap();

    // Half-log-det ratio through the capacity engine with r_y = r_z: the
    // population component is arranged so the enclosing covariance equals
    // the fitted population covariance directly.
    let canonical = ClassStatistics {
        class_id: data.classes[max_idx].label.clone(),
        n_samples: spec.samples_per_class,
        mu_c: fitted[max_idx].mean.clone(),
        sigma_c_avg: fitted[max_idx].covariance.clone(),
        sigma_z_c: fitted[max_idx].covariance.clone(),
        log_det_z: log_dets[max_idx],
    };
    let pop_stats = PopulationStatistics {
        mu_y: pop_fit.mean.clone(),
        scatter_b: pop_fit.covariance.clone(),
        sigma_y: pop_fit.covariance.sub(&canonical.sigma_z_c),
        n_classes: spec.n_classes,
    };
    let estimated = capacity(
        &pop_stats,
        &canonical,
        1.0,
        1.0,
        Parameterization::FullEllipsoid,
        CanonicalSelector::Max,
    )?
    .capacity;

    // Analytic value from the generative covariances.
    let gt_log_pop = cholesky_logdet(&spec.population_cov)?.log_det;
    let gt_log_class = cholesky_logdet(&spec.class_cov_template)?.log_det;
    let ground_truth = (0.5 * (gt_log_pop - gt_log_class)).exp();

    // Convex-hull baseline: all samples against the largest class hull.
    let all_points: Vec<[f64; 2]> = data
        .classes
        .iter()
        .flat_map(|c| c.samples.iter().map(|s| [s[0], s[1]]))
        .collect();
    let hull_population_area = convex_hull_area_2d(&all_points)?;
    let class_hulls: Vec<f64> = data
        .classes
        .iter()
        .map(|c| {
            let pts: Vec<[f64; 2]> = c.samples.iter().map(|s| [s[0], s[1]]).collect();
            convex_hull_area_2d(&pts)
        })
        .collect::<Result<Vec<_>>>()?;
    let hull_max_class_area = class_hulls.iter().cloned().fold(f64::MIN, f64::max);
    let hull_capacity = hull_population_area / hull_max_class_area;

    Ok(ToyCapacityResult {
        estimated_capacity: estimated,
        ground_truth_capacity: ground_truth,
        hull_capacity,
        est_population_cov: pop_fit.covariance.clone(),
        est_max_class_cov: fitted[max_idx].covariance.clone(),
        max_class_label: data.classes[max_idx].label.clone(),
        est_population_area: unit_ellipse_area(&pop_fit.covariance)?,
        est_max_class_area: unit_ellipse_area(&fitted[max_idx].covariance)?,
        gt_population_area: unit_ellipse_area(&spec.population_cov)?,
        gt_template_area: unit_ellipse_area(&spec.class_cov_template)?,
        hull_population_area,
        hull_max_class_area,
    })
}

/// How latent points become ambient embeddings.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub enum LiftSpec {
    /// Ambient equals latent (requires equal dimensions).
    Identity,
    /// tanh(gain * Q z) through a random orthonormal frame, optionally
    /// normalized to the unit sphere.
    Smooth { gain: f64, normalize: bool },
}

/// Synthetic stand-in for a frozen embedding model: known latent Gaussian
/// class structure lifted into a higher-dimensional ambient space.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticTeacherSpec {
    pub latent_dim: usize,
    pub ambient_dim: usize,
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub between_class_cov: Mat,
    pub within_class_cov: Mat,
    pub lift: LiftSpec,
    pub seed: u64,
}

impl SyntheticTeacherSpec {
    /// Desk-scale default: 8 latent dimensions lifted into 64, 100 classes
    /// of 50 samples, isotropic latent structure with within-class variance
    /// at 0.2 of the between-class variance (large enough for the student's
    /// uncertainty floor to track it).
    pub fn default_bench(seed: u64) -> Self {
        let m = 8;
        Self {
            latent_dim: m,
            ambient_dim: 64,
            n_classes: 100,
            samples_per_class: 50,
            between_class_cov: Mat::identity(m),
            within_class_cov: Mat::identity(m).scale(0.2),
            lift: LiftSpec::Smooth {
                gain: 2.0,
                normalize: true,
            },
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.lift {
            LiftSpec::Identity => {
                if self.latent_dim != self.ambient_dim {
                    return Err(Error::InvalidConfig(
                        "identity lift needs equal latent and ambient dims".into(),
                    ));
                }
            }
            LiftSpec::Smooth { .. } => {
                if self.latent_dim >= self.ambient_dim {
                    return Err(Error::InvalidTargetDim {
                        target: self.latent_dim,
                        input: self.ambient_dim,
                    });
                }
            }
        }
        if self.n_classes < 2 {
            return Err(Error::InsufficientClasses {
                need: 2,
                got: self.n_classes,
            });
        }
        if self.samples_per_class < 1 {
            return Err(Error::InsufficientSamples {
                need: 1,
                got: self.samples_per_class,
            });
        }
        if self.between_class_cov.rows() != self.latent_dim
            || self.within_class_cov.rows() != self.latent_dim
        {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim,
                got: self.between_class_cov.rows(),
            });
        }
        Ok(())
    }
}

/// Retained generative parameters for oracle evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatentGroundTruth {
    pub latent_dim: usize,
    pub centers: Vec<Vec<f64>>,
    /// Per-class latent samples, aligned with the ambient records.
    pub latent: Vec<(String, Vec<Vec<f64>>)>,
    pub between_class_cov: Mat,
    pub within_class_cov: Mat,
}

/// Generate ambient embeddings plus the latent truth behind them. Per-class
/// RNG streams keep regeneration bitwise identical.
pub fn generate_synthetic_teacher(
    spec: &SyntheticTeacherSpec,
) -> Result<(EmbeddingSet, LatentGroundTruth)> {
    spec.validate()?;
    let between_factor = sampling_factor(&spec.between_class_cov)?;
    let within_factor = sampling_factor(&spec.within_class_cov)?;
    let m = spec.latent_dim;
    let frame = match spec.lift {
        LiftSpec::Identity => None,
        LiftSpec::Smooth { .. } => {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 0xF00D, 0));
            Some(random_orthonormal(spec.ambient_dim, m, &mut rng))
        }
    };
    let lift = |z: &[f64]| -> Vec<f64> {
        match spec.lift {
            LiftSpec::Identity => z.to_vec(),
            LiftSpec::Smooth { gain, normalize } => {
                let mut u = frame.as_ref().unwrap().matvec(z);
                for v in u.iter_mut() {
                    *v = (gain * *v).tanh();
                }
                if normalize {
                    let n = crate::linalg::norm(&u);
                    if n > 0.0 {
                        for v in u.iter_mut() {
                            *v /= n;
                        }
                    }
                }
                u
            }
        }
    };

    let zero = vec![0.0; m];
    let mut records = Vec::with_capacity(spec.n_classes * spec.samples_per_class);
    let mut centers = Vec::with_capacity(spec.n_classes);
    let mut latent = Vec::with_capacity(spec.n_classes);
    for c in 0..spec.n_classes {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, c as u64, 1));
        let center = draw_gaussian(&zero, &between_factor, &mut rng);
        let label = format!("c{c:03}");
        let mut class_latent = Vec::with_capacity(spec.samples_per_class);
        for _ in 0..spec.samples_per_class {
            let z = draw_gaussian(&center, &within_factor, &mut rng);
            records.push(Record {
                label: label.clone(),
                vector: lift(&z),
            });
            class_latent.push(z);
        }
        centers.push(center);
        latent.push((label, class_latent));
    }
    let ambient = EmbeddingSet::new(spec.ambient_dim, records)?;
    Ok((
        ambient,
        LatentGroundTruth {
            latent_dim: m,
            centers,
            latent,
            between_class_cov: spec.between_class_cov.clone(),
            within_class_cov: spec.within_class_cov.clone(),
        },
    ))
}

/// Capacity straight from the generative latent covariances: the enclosing
/// covariance is between + within, the class covariance is within. No
/// learning or estimation is involved, so the lift never enters.
pub fn oracle_capacity(
    gt: &LatentGroundTruth,
    far: f64,
    frac: f64,
    selector: CanonicalSelector,
    param: Parameterization,
) -> Result<CapacityReport> {
    let d = gt.latent_dim;
    let canonical = ClassStatistics {
        class_id: "oracle".into(),
        n_samples: gt.latent.first().map(|(_, s)| s.len()).unwrap_or(0),
        mu_c: vec![0.0; d],
        sigma_c_avg: gt.within_class_cov.clone(),
        sigma_z_c: gt.within_class_cov.clone(),
        log_det_z: cholesky_logdet(&gt.within_class_cov)?.log_det,
    };
    let pop = PopulationStatistics {
        mu_y: vec![0.0; d],
        scatter_b: gt.between_class_cov.clone(),
        sigma_y: gt.between_class_cov.clone(),
        n_classes: gt.centers.len(),
    };
    let r_y = crate::capacity::fraction_to_radius(frac, d)?;
    let r_z = crate::capacity::far_to_radius(far, d)?;
    let mut report = capacity(&pop, &canonical, r_y, r_z, param, selector)?;
    report.far = far;
    report.population_fraction = frac;
    Ok(report)
}

/// Fraction of latent samples whose nearest true center matches their label.
pub fn nearest_center_accuracy(gt: &LatentGroundTruth) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for (ci, (_, samples)) in gt.latent.iter().enumerate() {
        for z in samples {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (cj, center) in gt.centers.iter().enumerate() {
                let d: f64 = z.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if d < best_d {
                    best_d = d;
                    best = cj;
                }
            }
            if best == ci {
                correct += 1;
            }
            total += 1;
        }
    }
    correct as f64 / total as f64
}

/// One ROC operating point.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RocPoint {
    pub far: f64,
    pub tar: f64,
}

/// Verification harness: sample `pair_count` genuine and `pair_count`
/// impostor pairs, score them by squared Euclidean distance, and report the
/// true accept rate at each requested FAR (impostor-score quantile
/// thresholds).
pub fn verification_eval(
    embeddings: &EmbeddingSet,
    pair_count: usize,
    far_grid: &[f64],
    seed: u64,
) -> Result<Vec<RocPoint>> {
    let scores = verification_scores(embeddings, pair_count, seed)?;
    roc_from_scores(&scores.genuine, &scores.impostor, far_grid)
}

/// Genuine and impostor squared-distance scores on seeded pairs.
#[derive(Debug, Clone)]
pub struct VerificationScores {
    pub genuine: Vec<f64>,
    pub impostor: Vec<f64>,
    /// The sampled index pairs, genuine first, for score-correlation studies.
    pub pairs: Vec<(usize, usize)>,
}

pub fn verification_scores(
    embeddings: &EmbeddingSet,
    pair_count: usize,
    seed: u64,
) -> Result<VerificationScores> {
    let pairs = sample_verification_pairs(embeddings, pair_count, seed)?;
    let records = embeddings.records();
    let mut genuine = Vec::with_capacity(pair_count);
    let mut impostor = Vec::with_capacity(pair_count);
    for &(i, j) in &pairs {
        let d: f64 = records[i]
            .vector
            .iter()
            .zip(&records[j].vector)
            .map(|(a, b)| (a - b) * (a - b))
            .sum();
        if records[i].label == records[j].label {
            genuine.push(d);
        } else {
            impostor.push(d);
        }
    }
    Ok(VerificationScores {
        genuine,
        impostor,
        pairs,
    })
}

/// Seeded genuine/impostor pair sampling: `pair_count` of each kind.
pub fn sample_verification_pairs(
    embeddings: &EmbeddingSet,
    pair_count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    let groups = embeddings.group_by_label();
    if groups.len() < 2 {
        return Err(Error::InsufficientClasses {
            need: 2,
            got: groups.len(),
        });
    }
    let multi: Vec<&(String, Vec<usize>)> = groups.iter().filter(|(_, v)| v.len() >= 2).collect();
    if multi.is_empty() {
        return Err(Error::InsufficientSamples { need: 2, got: 1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xE7A1, 0));
    let mut pairs = Vec::with_capacity(2 * pair_count);
    for _ in 0..pair_count {
        let (_, members) = multi[rng.gen_range(0..multi.len())];
        let a = members[rng.gen_range(0..members.len())];
        let mut b = members[rng.gen_range(0..members.len())];
        while b == a {
            b = members[rng.gen_range(0..members.len())];
        }
        pairs.push((a, b));
    }
    for _ in 0..pair_count {
        let gi = rng.gen_range(0..groups.len());
        let mut gj = rng.gen_range(0..groups.len());
        while gj == gi {
            gj = rng.gen_range(0..groups.len());
        }
        let a = groups[gi].1[rng.gen_range(0..groups[gi].1.len())];
        let b = groups[gj].1[rng.gen_range(0..groups[gj].1.len())];
        pairs.push((a, b));
    }
    Ok(pairs)
}

/// TAR at each FAR, thresholding at the impostor-score quantile.
pub fn roc_from_scores(
    genuine: &[f64],
    impostor: &[f64],
    far_grid: &[f64],
) -> Result<Vec<RocPoint>> {
    if genuine.is_empty() || impostor.is_empty() {
        return Err(Error::InsufficientSamples { need: 1, got: 0 });
    }
    let mut sorted = impostor.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    far_grid
        .iter()
        .map(|&far| {
            if !(0.0..=1.0).contains(&far) {
                return Err(Error::InvalidProbability { value: far });
            }
            let k = ((far * sorted.len() as f64) as usize).min(sorted.len().saturating_sub(1));
            let threshold = sorted[k];
            let tar =
                genuine.iter().filter(|&&g| g <= threshold).count() as f64 / genuine.len() as f64;
            Ok(RocPoint { far, tar })
        })
        .collect()
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    assert!(a.len() >= 2, "need at least two observations");
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    let n = a.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for (x, y) in ra.iter().zip(&rb) {
        num += (x - mean) * (y - mean);
        da += (x - mean) * (x - mean);
        db += (y - mean) * (y - mean);
    }
    if da == 0.0 || db == 0.0 {
        return 0.0;
    }
    num / (da * db).sqrt()
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Convenience for tests: shuffle the labels of a set, seeded.
pub fn shuffle_labels(set: &EmbeddingSet, seed: u64) -> EmbeddingSet {
    let mut labels: Vec<String> = set.records().iter().map(|r| r.label.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    labels.shuffle(&mut rng);
    let records = set
        .records()
        .iter()
        .zip(labels)
        .map(|(r, label)| Record {
            label,
            vector: r.vector.clone(),
        })
        .collect();
    EmbeddingSet::new(set.dim(), records).unwrap()
}
