//! Shared estimation engine: weighted least squares via pivoted QR,
//! fixed-effect absorption, two-stage least squares and sandwich covariances.

mod absorb;
mod design;
mod qr;
mod result;
mod tsls;
mod wls;

pub use absorb::{absorb_fixed_effects, absorb_fixed_effects_with, AbsorbOptions, Absorbed};
pub use design::{ClusterSpec, DesignMatrix, GroupDimension, GroupLabels};
pub use qr::RANK_TOLERANCE;
pub use result::{normal_critical, CovarianceKind, RegressionResult, WaldTest};
pub use tsls::tsls_fit;
pub use wls::{
    cluster_robust_vcov, wls_fit, wls_fit_with, Covariance, FitContext, FitOptions, WlsFit,
};
