//! Capacity as a log-domain hyper-ellipsoid volume ratio: per-class and
//! population statistics from Monte-Carlo uncertainty estimates, canonical
//! class selection, and FAR-to-radius conversion.

use serde::{Deserialize, Serialize};

use crate::chi2::{chi2_cdf, chi2_inverse_cdf};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::stats::{cholesky_logdet, Parameterization};
use crate::student::UncertaintyEstimate;

/// Which class stands in for the canonical identity, ranked by the
/// log-determinant of the class covariance (a volume proxy).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CanonicalSelector {
    Min,
    Mean,
    Median,
    #[default]
    Max,
}

impl CanonicalSelector {
    pub fn label(&self) -> &'static str {
        match self {
            CanonicalSelector::Min => "min",
            CanonicalSelector::Mean => "mean",
            CanonicalSelector::Median => "median",
            CanonicalSelector::Max => "max",
        }
    }
}

/// Aggregated uncertainty of one identity class.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStatistics {
    pub class_id: String,
    pub n_samples: usize,
    /// Mean of the member means.
    pub mu_c: Vec<f64>,
    /// Mean of the member total covariances.
    pub sigma_c_avg: Mat,
    /// Class-specific covariance: the same mean, since each member's total
    /// covariance already combines its spread and aleatoric terms.
    pub sigma_z_c: Mat,
    pub log_det_z: f64,
}

/// Between-class structure of the population.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PopulationStatistics {
    /// Mean of class means.
    pub mu_y: Vec<f64>,
    /// Between-class scatter of class means around mu_y.
    pub scatter_b: Mat,
    /// Population covariance component: paired with the canonical class so
    /// that sigma_y + sigma_z(canonical) = sigma_c_avg(canonical) + scatter_b.
    pub sigma_y: Mat,
    pub n_classes: usize,
}

/// One capacity evaluation at a fixed operating point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CapacityReport {
    pub far: f64,
    pub population_fraction: f64,
    pub r_y: f64,
    pub r_z: f64,
    pub d: usize,
    /// Natural log of the volume ratio.
    pub log_capacity: f64,
    pub log10_capacity: f64,
    /// exp(log_capacity); saturates to +inf for extreme operating points.
    pub capacity: f64,
    pub saturated: bool,
    pub parameterization: Parameterization,
    pub canonical_selector: CanonicalSelector,
    pub canonical_class_id: String,
}

impl CapacityReport {
    pub fn csv_header() -> &'static str {
        "far,r_y,r_z,log10_capacity,parameterization,selector"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.far,
            self.r_y,
            self.r_z,
            self.log10_capacity,
            self.parameterization.label(),
            self.canonical_selector.label()
        )
    }
}

/// Aggregate per-sample uncertainty estimates into per-class statistics.
/// Classes with fewer than `min_samples` members are dropped; the second
/// return value lists them.
pub fn class_statistics(
    groups: &[(String, Vec<UncertaintyEstimate>)],
    min_samples: usize,
) -> Result<(Vec<ClassStatistics>, Vec<String>)> {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for (label, members) in groups {
        if members.len() < min_samples.max(1) {
            dropped.push(label.clone());
            continue;
        }
        let m = members[0].mu_hat.len();
        let nc = members.len() as f64;
        let mut mu_c = vec![0.0; m];
        let mut sigma = Mat::zeros(m, m);
        for est in members {
            if est.mu_hat.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: est.mu_hat.len(),
                });
            }
            for (s, v) in mu_c.iter_mut().zip(&est.mu_hat) {
                *s += v;
            }
            sigma = sigma.add(&est.sigma_hat.scale(1.0 / nc));
        }
        for s in mu_c.iter_mut() {
            *s /= nc;
        }
        let log_det_z = cholesky_logdet(&sigma)?.log_det;
        kept.push(ClassStatistics {
            class_id: label.clone(),
            n_samples: members.len(),
            mu_c,
            sigma_c_avg: sigma.clone(),
            sigma_z_c: sigma,
            log_det_z,
        });
    }
    if kept.is_empty() {
        return Err(Error::NoUsableClasses {
            min_samples: min_samples.max(1),
        });
    }
    Ok((kept, dropped))
}

/// Population mean, between-class scatter, and the covariance component that
/// pairs with the canonical class.
pub fn population_statistics(
    classes: &[ClassStatistics],
    canonical: &ClassStatistics,
) -> Result<PopulationStatistics> {
    if classes.len() < 2 {
        return Err(Error::InsufficientClasses {
            need: 2,
            got: classes.len(),
        });
    }
    let m = classes[0].mu_c.len();
    let c = classes.len() as f64;
    let mut mu_y = vec![0.0; m];
    for cls in classes {
        if cls.mu_c.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: cls.mu_c.len(),
            });
        }
        for (s, v) in mu_y.iter_mut().zip(&cls.mu_c) {
            *s += v;
        }
    }
    for s in mu_y.iter_mut() {
        *s /= c;
    }
    let mut scatter_b = Mat::zeros(m, m);
    let mut dev = vec![0.0; m];
    for cls in classes {
        for ((d, v), mu) in dev.iter_mut().zip(&cls.mu_c).zip(&mu_y) {
            *d = v - mu;
        }
        scatter_b.add_outer(&dev, 1.0 / c);
    }
    let sigma_y = scatter_b
        .add(&canonical.sigma_c_avg)
        .sub(&canonical.sigma_z_c);
    Ok(PopulationStatistics {
        mu_y,
        scatter_b,
        sigma_y,
        n_classes: classes.len(),
    })
}

/// Pick the canonical class by ranking on log_det_z. Ties break toward the
/// smallest class id.
pub fn select_canonical_class(
    classes: &[ClassStatistics],
    selector: CanonicalSelector,
) -> Result<ClassStatistics> {
    if classes.is_empty() {
        return Err(Error::NoUsableClasses { min_samples: 0 });
    }
    let mut ranked: Vec<&ClassStatistics> = classes.iter().collect();
    ranked.sort_by(|a, b| {
        a.log_det_z
            .partial_cmp(&b.log_det_z)
            .unwrap()
            .then_with(|| a.class_id.cmp(&b.class_id))
    });
    let chosen = match selector {
        CanonicalSelector::Min => ranked[0],
        CanonicalSelector::Max => ranked[ranked.len() - 1],
        // Lower of the two middle ranks for even counts.
        CanonicalSelector::Median => ranked[(ranked.len() - 1) / 2],
        CanonicalSelector::Mean => {
            let mean: f64 = ranked.iter().map(|c| c.log_det_z).sum::<f64>() / ranked.len() as f64;
            ranked
                .iter()
                .min_by(|a, b| {
                    (a.log_det_z - mean)
                        .abs()
                        .partial_cmp(&(b.log_det_z - mean).abs())
                        .unwrap()
                        .then_with(|| a.class_id.cmp(&b.class_id))
                })
                .unwrap()
        }
    };
    Ok((*chosen).clone())
}

/// Class-ellipsoid radius from the false accept rate: r_z² is the (1-q)
/// quantile of chi-squared(d).
pub fn far_to_radius(q: f64, d: usize) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidProbability { value: q });
    }
    Ok(chi2_inverse_cdf(1.0 - q, d)?.sqrt())
}

/// Population-ellipsoid radius enclosing the given fraction of classes.
pub fn fraction_to_radius(frac: f64, d: usize) -> Result<f64> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::InvalidProbability { value: frac });
    }
    Ok(chi2_inverse_cdf(frac, d)?.sqrt())
}

/// Volume ratio of the enclosing and class hyper-ellipsoids in log domain:
/// ½ log|Σ_y + Σ_z| − ½ log|Σ_z| + d (log r_y − log r_z). Both covariances
/// are reduced to the requested parameterization before factorization; the
/// unit-ball volume cancels.
pub fn capacity(
    pop: &PopulationStatistics,
    canonical: &ClassStatistics,
    r_y: f64,
    r_z: f64,
    param: Parameterization,
    selector: CanonicalSelector,
) -> Result<CapacityReport> {
    assert!(r_y > 0.0 && r_z > 0.0, "radii must be positive");
    let d = pop.mu_y.len();
    let enclosing = pop.sigma_y.add(&canonical.sigma_z_c);
    let num = param.reduce(&enclosing);
    let den = param.reduce(&canonical.sigma_z_c);
    let log_det_num = cholesky_logdet(&num)?.log_det;
    let log_det_den = cholesky_logdet(&den)?.log_det;
    let log_capacity = 0.5 * (log_det_num - log_det_den) + d as f64 * (r_y.ln() - r_z.ln());
    let cap = log_capacity.exp();
    // The radii determine the operating point exactly.
    let far = 1.0 - chi2_cdf(r_z * r_z, d);
    let population_fraction = chi2_cdf(r_y * r_y, d);
    Ok(CapacityReport {
        far,
        population_fraction,
        r_y,
        r_z,
        d,
        log_capacity,
        log10_capacity: log_capacity / std::f64::consts::LN_10,
        capacity: cap,
        saturated: !cap.is_finite(),
        parameterization: param,
        canonical_selector: selector,
        canonical_class_id: canonical.class_id.clone(),
    })
}

/// One report per FAR in ascending order, sharing the population fraction.
pub fn capacity_sweep(
    pop: &PopulationStatistics,
    canonical: &ClassStatistics,
    fars: &[f64],
    frac: f64,
    param: Parameterization,
    selector: CanonicalSelector,
) -> Result<Vec<CapacityReport>> {
    if fars.is_empty() {
        return Err(Error::InvalidConfig("empty FAR list".into()));
    }
    for w in fars.windows(2) {
        if w[0] >= w[1] {
            return Err(Error::InvalidConfig(
                "FAR list must be strictly ascending".into(),
            ));
        }
    }
    let d = pop.mu_y.len();
    let r_y = fraction_to_radius(frac, d)?;
    fars.iter()
        .map(|&q| {
            let r_z = far_to_radius(q, d)?;
            let mut report = capacity(pop, canonical, r_y, r_z, param, selector)?;
            // Report the requested FAR verbatim rather than its roundtrip.
            report.far = q;
            report.population_fraction = frac;
            Ok(report)
        })
        .collect()
}
