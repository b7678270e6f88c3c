//! Identity-capacity estimation for vector-embedding representations.
//!
//! The pipeline unfolds a high-dimensional embedding into a low-dimensional
//! space with a learned distance-preserving projector, trains a dropout
//! student that mimics the frozen teacher while exposing per-sample
//! aleatoric and epistemic uncertainty, fits Gaussian hyper-ellipsoids to
//! the population and each identity class, and reports capacity — the
//! number of distinguishable identities at a target false-accept rate — as
//! a log-domain volume ratio.

pub mod capacity;
pub mod checkpoint;
pub mod chi2;
pub mod embedding;
pub mod error;
pub mod hull;
pub mod linalg;
pub mod mds;
pub mod nn;
pub mod optim;
pub mod pca;
pub mod stats;
pub mod student;
pub mod synth;

pub use capacity::{
    capacity, capacity_sweep, class_statistics, far_to_radius, fraction_to_radius,
    population_statistics, select_canonical_class, CanonicalSelector, CapacityReport,
    ClassStatistics, PopulationStatistics,
};
pub use embedding::{EmbeddingSet, Record};
pub use error::{Error, Result};
pub use hull::{convex_hull_2d, convex_hull_area_2d};
pub use linalg::Mat;
pub use mds::{
    high_dim_distance, mds_loss, project, project_batch, train_projection, DistanceConvention,
    ProjectorOptions,
};
pub use nn::{ForwardMode, MlpNetwork};
pub use optim::{LrSchedule, OptimizerKind, TrainConfig};
pub use pca::{fit_pca, LinearProjector};
pub use stats::{
    cholesky_logdet, ellipsoid_log_volume, estimate_gaussian, mahalanobis_sq, CholeskyFactor,
    GaussianModel, Parameterization,
};
pub use student::{
    mc_infer, mc_infer_set, student_loss, train_student, StudentArchitecture, StudentLossWeights,
    StudentNetwork, UncertaintyEstimate,
};
pub use synth::{
    generate_synthetic_teacher, generate_toy, oracle_capacity, spearman, toy_capacity_experiment,
    verification_eval, LatentGroundTruth, LiftSpec, RocPoint, SyntheticTeacherSpec, ToySpec,
};
