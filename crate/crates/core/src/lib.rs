//! Measuring decentralization of blockchain consensus and token holdings.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases below
//! fix the precision for everyday use.

pub mod cluster;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod synthlab;
pub mod windows;

pub use cluster::{ClusterMap, EntityMap, Resolver};
pub use metrics::{MetricSpec, MetricValue};
pub use model::{BalanceRecord, BlockRecord, EventLedger, MetricSeries, ResourceDistribution, StudyWindow};
pub use pipeline::{PipelineError, RunConfig};
pub use scalar::Scalar;
pub use windows::WindowConfig;

pub type Matrix = stats::Matrix<f64>;
pub type Matrix32 = stats::Matrix<f32>;
pub type DataMatrix = stats::DataMatrix<f64>;
pub type DataMatrix32 = stats::DataMatrix<f32>;
pub type FactorModel = stats::FactorModel<f64>;
pub type FactorModel32 = stats::FactorModel<f32>;
pub type Eigen = stats::Eigen<f64>;
pub type Kmo = stats::Kmo<f64>;
pub type BoxCox = stats::BoxCox<f64>;
pub type Hhi = metrics::Hhi<f64>;
pub type ConcentrationRatio = metrics::ConcentrationRatio<f64>;
