//! Gaussian manifold models: covariance estimation, Cholesky log-determinants,
//! Mahalanobis distances, and hyper-ellipsoid volumes in the log domain.

use serde::{Deserialize, Serialize};

use crate::chi2::ln_gamma;
use crate::error::{Error, Result};
use crate::linalg::Mat;

/// Shape family assumed for a Gaussian support.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Parameterization {
    /// Hyper-sphere: covariance σ²·I.
    Isotropic,
    /// Axis-aligned hyper-ellipsoid: diagonal covariance.
    AxisAligned,
    /// Unconstrained hyper-ellipsoid: full covariance.
    #[default]
    FullEllipsoid,
}

impl Parameterization {
    /// Reduce a full covariance to this family.
    pub fn reduce(&self, cov: &Mat) -> Mat {
        let d = cov.rows();
        match self {
            Parameterization::Isotropic => {
                let sigma2 = cov.trace() / d as f64;
                Mat::from_diag(&vec![sigma2; d])
            }
            Parameterization::AxisAligned => Mat::from_diag(&cov.diag()),
            Parameterization::FullEllipsoid => cov.clone(),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Parameterization::Isotropic => "sphere",
            Parameterization::AxisAligned => "axis",
            Parameterization::FullEllipsoid => "full",
        }
    }
}

/// Escalating diagonal jitter multipliers applied before declaring a
/// covariance not positive definite.
pub const JITTER_LADDER: [f64; 4] = [1e-12, 1e-10, 1e-8, 1e-6];

/// Mean vector plus covariance under a declared parameterization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianModel {
    pub mean: Vec<f64>,
    pub covariance: Mat,
    pub parameterization: Parameterization,
}

impl GaussianModel {
    /// Build a model: reduces the covariance to `param`, symmetrizes it, and
    /// applies the jitter ladder so the stored matrix factorizes.
    pub fn new(mean: Vec<f64>, covariance: Mat, param: Parameterization) -> Result<Self> {
        if covariance.rows() != mean.len() || covariance.cols() != mean.len() {
            return Err(Error::DimensionMismatch {
                expected: mean.len(),
                got: covariance.rows(),
            });
        }
        let mut cov = param.reduce(&covariance);
        cov.symmetrize();
        let cov = ensure_factorizable(&cov)?;
        Ok(Self {
            mean,
            covariance: cov,
            parameterization: param,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// Lower-triangular Cholesky factor with its log-determinant.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    lower: Mat,
    pub log_det: f64,
}

impl CholeskyFactor {
    pub fn lower(&self) -> &Mat {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// Solve L z = b by forward substitution.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(b.len(), n);
        let mut z = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for (j, zj) in z.iter().enumerate().take(i) {
                s -= self.lower[(i, j)] * zj;
            }
            z[i] = s / self.lower[(i, i)];
        }
        z
    }
}

// Plain Cholesky; returns None on a non-positive pivot.
fn try_cholesky(a: &Mat) -> Option<CholeskyFactor> {
    let n = a.rows();
    let mut l = Mat::zeros(n, n);
    let mut log_det = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                let r = s.sqrt();
                l[(i, i)] = r;
                log_det += 2.0 * r.ln();
            } else {
                l[(i, j)] = s / l[(j, j)];
            }
        }
    }
    Some(CholeskyFactor { lower: l, log_det })
}

// Jitter scale: mean diagonal, falling back to 1 for all-zero matrices.
fn jitter_scale(a: &Mat) -> f64 {
    let d = a.rows();
    let mean_diag = a.trace() / d as f64;
    if mean_diag > 0.0 {
        mean_diag
    } else {
        1.0
    }
}

// Return a factorizable matrix: the input, or the input plus the smallest
// ladder jitter that factorizes.
fn ensure_factorizable(a: &Mat) -> Result<Mat> {
    if try_cholesky(a).is_some() {
        return Ok(a.clone());
    }
    let scale = jitter_scale(a);
    for eps in JITTER_LADDER {
        let mut jittered = a.clone();
        let bump = eps * scale;
        for i in 0..a.rows() {
            jittered[(i, i)] += bump;
        }
        if try_cholesky(&jittered).is_some() {
            return Ok(jittered);
        }
    }
    Err(Error::NotPositiveDefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale,
    })
}

/// Cholesky factorization with log-determinant, climbing the jitter ladder
/// when a pivot fails.
pub fn cholesky_logdet(cov: &Mat) -> Result<CholeskyFactor> {
    if !cov.is_square() {
        return Err(Error::DimensionMismatch {
            expected: cov.rows(),
            got: cov.cols(),
        });
    }
    if let Some(f) = try_cholesky(cov) {
        return Ok(f);
    }
    let scale = jitter_scale(cov);
    for eps in JITTER_LADDER {
        let mut jittered = cov.clone();
        let bump = eps * scale;
        for i in 0..cov.rows() {
            jittered[(i, i)] += bump;
        }
        if let Some(f) = try_cholesky(&jittered) {
            return Ok(f);
        }
    }
    Err(Error::NotPositiveDefinite {
        max_jitter: JITTER_LADDER[JITTER_LADDER.len() - 1] * scale,
    })
}

/// Sample mean and biased (1/N) covariance, reduced to `param`.
pub fn estimate_gaussian(samples: &[Vec<f64>], param: Parameterization) -> Result<GaussianModel> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            need: 2,
            got: samples.len(),
        });
    }
    let d = samples[0].len();
    for s in samples {
        if s.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: s.len(),
            });
        }
    }
    let n = samples.len() as f64;
    let mut mean = vec![0.0; d];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut cov = Mat::zeros(d, d);
    let mut dev = vec![0.0; d];
    for s in samples {
        for ((dv, v), m) in dev.iter_mut().zip(s).zip(&mean) {
            *dv = v - m;
        }
        cov.add_outer(&dev, 1.0 / n);
    }
    GaussianModel::new(mean, cov, param)
}

/// Squared Mahalanobis distance (x − μ)ᵀ Σ⁻¹ (x − μ) via triangular solves.
pub fn mahalanobis_sq(x: &[f64], g: &GaussianModel) -> Result<f64> {
    if x.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            got: x.len(),
        });
    }
    let factor = cholesky_logdet(&g.covariance)?;
    let delta: Vec<f64> = x.iter().zip(&g.mean).map(|(a, b)| a - b).collect();
    let z = factor.forward_solve(&delta);
    Ok(z.iter().map(|v| v * v).sum())
}

/// log of the volume of the hyper-ellipsoid {x : (x−μ)ᵀΣ⁻¹(x−μ) ≤ r²}:
/// log V_d + ½ log|Σ| + d log r, with V_d the unit-ball volume.
pub fn ellipsoid_log_volume(g: &GaussianModel, r: f64) -> Result<f64> {
    assert!(r > 0.0, "radius must be positive");
    let d = g.dim() as f64;
    let factor = cholesky_logdet(&g.covariance)?;
    let log_unit_ball = (d / 2.0) * std::f64::consts::PI.ln() - ln_gamma(d / 2.0 + 1.0);
    Ok(log_unit_ball + 0.5 * factor.log_det + d * r.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::random_orthonormal;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn table1_population() -> Mat {
        Mat::from_rows(&[vec![10.34, 0.71], vec![0.71, 11.79]])
    }

    #[test]
    fn four_point_configuration() {
        let samples = vec![
            vec![0.0, 0.0],
            vec![2.0, 0.0],
            vec![0.0, 2.0],
            vec![2.0, 2.0],
        ];
        let g = estimate_gaussian(&samples, Parameterization::FullEllipsoid).unwrap();
        assert_eq!(g.mean, vec![1.0, 1.0]);
        assert_eq!(g.covariance[(0, 0)], 1.0);
        assert_eq!(g.covariance[(1, 1)], 1.0);
        assert_eq!(g.covariance[(0, 1)], 0.0);
    }

    #[test]
    fn identical_samples_jittered() {
        let samples = vec![vec![3.0, -1.0]; 5];
        for param in [
            Parameterization::Isotropic,
            Parameterization::AxisAligned,
            Parameterization::FullEllipsoid,
        ] {
            let g = estimate_gaussian(&samples, param).unwrap();
            // Zero covariance lands on the first ladder rung with unit scale.
            assert_eq!(g.covariance[(0, 0)], 1e-12);
            assert_eq!(g.covariance[(1, 1)], 1e-12);
            assert_eq!(g.covariance[(0, 1)], 0.0);
        }
    }

    #[test]
    fn estimate_recovers_table1_covariance() {
        // Draw 10^4 samples from the known 2x2 Gaussian and re-estimate it.
        let truth = table1_population();
        let f = cholesky_logdet(&truth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let samples: Vec<Vec<f64>> = (0..10_000)
            .map(|_| {
                let z = [
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ];
                vec![
                    f.lower()[(0, 0)] * z[0],
                    f.lower()[(1, 0)] * z[0] + f.lower()[(1, 1)] * z[1],
                ]
            })
            .collect();
        let g = estimate_gaussian(&samples, Parameterization::FullEllipsoid).unwrap();
        // Entry error normalized by sqrt(sigma_ii * sigma_jj), the entry's own scale.
        for i in 0..2 {
            for j in 0..2 {
                let scale = (truth[(i, i)] * truth[(j, j)]).sqrt();
                let rel = (g.covariance[(i, j)] - truth[(i, j)]).abs() / scale;
                assert!(rel < 0.05, "entry ({i},{j}) off by {rel}");
            }
        }
    }

    #[test]
    fn too_few_samples() {
        let e = estimate_gaussian(&[vec![1.0, 2.0]], Parameterization::FullEllipsoid);
        assert!(matches!(e, Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn dimension_mismatch_detected() {
        let e = estimate_gaussian(
            &[vec![1.0, 2.0], vec![1.0]],
            Parameterization::FullEllipsoid,
        );
        assert!(matches!(e, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn axis_aligned_equals_full_with_zeroed_offdiagonals() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<Vec<f64>> = (0..200)
            .map(|_| {
                (0..4)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let full = estimate_gaussian(&samples, Parameterization::FullEllipsoid).unwrap();
        let axis = estimate_gaussian(&samples, Parameterization::AxisAligned).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { full.covariance[(i, j)] } else { 0.0 };
                assert_eq!(axis.covariance[(i, j)], want);
            }
        }
    }

    #[test]
    fn cholesky_identity_logdet_zero() {
        let f = cholesky_logdet(&Mat::identity(3)).unwrap();
        assert_eq!(f.log_det, 0.0);
    }

    #[test]
    fn cholesky_diagonal_product() {
        let f = cholesky_logdet(&Mat::from_diag(&[4.0, 9.0])).unwrap();
        assert!((f.log_det - 36.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_table1_determinant_by_hand() {
        // det = 10.34 * 11.79 - 0.71^2 = 121.4045
        let f = cholesky_logdet(&table1_population()).unwrap();
        assert!((f.log_det - 121.4045f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn cholesky_reconstructs_input() {
        let cov = table1_population();
        let f = cholesky_logdet(&cov).unwrap();
        let rebuilt = f.lower().matmul(&f.lower().transpose());
        let rel = rebuilt.sub(&cov).frobenius_norm() / cov.frobenius_norm();
        assert!(rel < 1e-8);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = Mat::from_rows(&[vec![1.0, 2.0], vec![2.0, 1.0]]); // eigenvalues 3, -1
        assert!(matches!(
            cholesky_logdet(&m),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn mahalanobis_at_center_is_zero() {
        let g = GaussianModel::new(
            vec![1.0, -2.0],
            table1_population(),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        assert_eq!(mahalanobis_sq(&[1.0, -2.0], &g).unwrap(), 0.0);
    }

    #[test]
    fn mahalanobis_diag_components() {
        let g = GaussianModel::new(
            vec![0.0, 0.0],
            Mat::from_diag(&[4.0, 1.0]),
            Parameterization::AxisAligned,
        )
        .unwrap();
        assert!((mahalanobis_sq(&[2.0, 0.0], &g).unwrap() - 1.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn mahalanobis_identity_cov_is_squared_euclidean(
            x in proptest::collection::vec(-50.0f64..50.0, 3),
            mu in proptest::collection::vec(-50.0f64..50.0, 3),
        ) {
            let g = GaussianModel::new(mu.clone(), Mat::identity(3), Parameterization::FullEllipsoid).unwrap();
            let want: f64 = x.iter().zip(&mu).map(|(a, b)| (a - b) * (a - b)).sum();
            let got = mahalanobis_sq(&x, &g).unwrap();
            prop_assert!((got - want).abs() <= 1e-12 * want.max(1.0));
        }
    }

    #[test]
    fn unit_disk_log_volume() {
        let g = GaussianModel::new(
            vec![0.0, 0.0],
            Mat::identity(2),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        let v = ellipsoid_log_volume(&g, 1.0).unwrap();
        assert!((v - std::f64::consts::PI.ln()).abs() < 1e-12);
    }

    #[test]
    fn volume_scaling_law() {
        let g = GaussianModel::new(
            vec![0.0, 0.0, 0.0],
            Mat::from_diag(&[2.0, 3.0, 0.5]),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        let s = 1.7f64;
        let scaled = GaussianModel::new(
            vec![0.0, 0.0, 0.0],
            g.covariance.scale(s * s),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        let v0 = ellipsoid_log_volume(&g, 1.0).unwrap();
        let v1 = ellipsoid_log_volume(&scaled, 1.0).unwrap();
        assert!((v1 - v0 - 3.0 * s.ln()).abs() < 1e-12);
    }

    #[test]
    fn table1_population_area() {
        let g = GaussianModel::new(
            vec![0.0, 0.0],
            table1_population(),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        let v = ellipsoid_log_volume(&g, 1.0).unwrap();
        assert!((v - 34.62f64.ln()).abs() < 1e-3);
    }

    #[test]
    fn log_volume_rotation_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let base = Mat::from_diag(&[3.0, 1.0, 0.4, 2.2]);
        let g0 = GaussianModel::new(vec![0.0; 4], base.clone(), Parameterization::FullEllipsoid)
            .unwrap();
        let v0 = ellipsoid_log_volume(&g0, 2.0).unwrap();
        for _ in 0..10 {
            let q = random_orthonormal(4, 4, &mut rng);
            let rotated = base.conjugate(&q);
            let g =
                GaussianModel::new(vec![0.0; 4], rotated, Parameterization::FullEllipsoid).unwrap();
            let v = ellipsoid_log_volume(&g, 2.0).unwrap();
            assert!((v - v0).abs() < 1e-9);
        }
    }

    #[test]
    fn unit_disk_area_matches_rejection_sampling() {
        // Monte-Carlo oracle for the d=2 unit-covariance volume at r=1.
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let mut inside = 0usize;
        for _ in 0..n {
            let x: f64 = rng.gen_range(-1.0..1.0);
            let y: f64 = rng.gen_range(-1.0..1.0);
            if x * x + y * y <= 1.0 {
                inside += 1;
            }
        }
        let mc_area = 4.0 * inside as f64 / n as f64;
        let g = GaussianModel::new(
            vec![0.0, 0.0],
            Mat::identity(2),
            Parameterization::FullEllipsoid,
        )
        .unwrap();
        let area = ellipsoid_log_volume(&g, 1.0).unwrap().exp();
        assert!((area - mc_area).abs() / mc_area < 0.01);
    }
}
