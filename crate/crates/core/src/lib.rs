//! Subgroup identification for longitudinal trajectories.
//!
//! Each subject's mean curve is expanded in a B-spline basis; a concave (MCP)
//! penalty on every pairwise difference of subject coefficients fuses
//! subjects into groups. The fused problem is solved by ADMM along a
//! warm-started lambda path, the number of groups is chosen by a modified BIC
//! or the Calinski–Harabasz index, and group curves are refit by pooled GLS
//! with pointwise sandwich confidence bands.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! unsuffixed aliases at the crate root fix `f64`.

// Negated comparisons reject NaN; index loops mirror the matrix algebra.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::too_many_arguments
)]

pub mod bspline;
pub mod covariance;
pub mod data;
pub mod error;
pub mod export;
pub mod inference;
pub mod metrics;
pub mod path;
pub mod penalty;
pub mod pipeline;
pub mod scalar;
pub mod selection;
pub mod simulate;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Dataset = data::LongitudinalDataset<f64>;
pub type Subject = data::SubjectRecord<f64>;
pub type Basis = bspline::SplineBasis<f64>;
pub type Design = bspline::DesignMatrix<f64>;
pub type Covariance = covariance::WorkingCovariance<f64>;
pub type Penalty = penalty::PenaltyConfig<f64>;
pub type State = solver::AdmmState<f64>;
pub type Problem = solver::FusionProblem<f64>;
pub type Clusters = path::ClusterResult<f64>;
pub type Band = inference::ConfidenceBand<f64>;
pub type Fit = pipeline::FitOutput<f64>;
pub type FitOptions = pipeline::FitConfig<f64>;

pub type Dataset32 = data::LongitudinalDataset<f32>;
pub type Fit32 = pipeline::FitOutput<f32>;
pub type FitOptions32 = pipeline::FitConfig<f32>;
