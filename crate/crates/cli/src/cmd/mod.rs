pub mod eval;
pub mod pipeline;
pub mod sweep;
pub mod toy;

use clap::ValueEnum;
use serde::Serialize;

use repcap_core::{CanonicalSelector, Parameterization};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorArg {
    Min,
    Mean,
    Median,
    Max,
}

impl From<SelectorArg> for CanonicalSelector {
    fn from(s: SelectorArg) -> Self {
        match s {
            SelectorArg::Min => CanonicalSelector::Min,
            SelectorArg::Mean => CanonicalSelector::Mean,
            SelectorArg::Median => CanonicalSelector::Median,
            SelectorArg::Max => CanonicalSelector::Max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamArg {
    /// Hyper-sphere (isotropic covariance).
    Sphere,
    /// Axis-aligned hyper-ellipsoid (diagonal covariance).
    Axis,
    /// Unconstrained hyper-ellipsoid (full covariance).
    Full,
}

impl From<ParamArg> for Parameterization {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::Sphere => Parameterization::Isotropic,
            ParamArg::Axis => Parameterization::AxisAligned,
            ParamArg::Full => Parameterization::FullEllipsoid,
        }
    }
}
