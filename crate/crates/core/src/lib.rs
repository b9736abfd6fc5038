//! Stochastic local interaction (SLI) model for interpolation of scattered data.
//!
//! The model replaces a covariance matrix by an explicitly sparse precision
//! matrix built from kernel-weighted interactions between neighbouring
//! samples. Bandwidths adapt to the local sampling density (`h_i = μ·D_{i,[k]}`),
//! parameters are fitted by leave-one-out cross validation and predictions are
//! the mode of the joint Gibbs density of data and predictand, which costs
//! `O(N)` per query point once the `O(N²)` sampling-pair normalisers are known.
//!
//! | Module | Purpose |
//! |--------|---------|
//! | [`geometry`] | point sets, exact k-NN tables, adaptive bandwidths |
//! | [`kernels`] | the five kernel families and pair weights |
//! | [`precision`] | weight tables, network matrices, precision matrix |
//! | [`energy`] | energy functional, `λ*`, profile likelihood |
//! | [`predictor`] | mode predictor and conditional standard deviation |
//! | [`inference`] | fast leave-one-out engine, bounded simplex search, fits |
//! | [`simulate`] | Matérn series and 4-D test-function generators |
//! | [`metrics`] | ME, MAE, MARE, RMSE, Pearson, Spearman |
//! | [`io`] | CSV datasets, model cards, key-value files |
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` aliases below fix the scalar to `f64`, which is what the command-line
//! tool and the accuracy checks use.

pub mod energy;
pub mod error;
pub mod geometry;
pub mod inference;
pub mod io;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod precision;
pub mod predictor;
pub mod scalar;
pub mod simulate;
pub mod sparse;

pub use error::{Result, SliError};
pub use kernels::{KernelFamily, KernelSpec};
pub use scalar::Scalar;

pub type PointSet64 = geometry::PointSet<f64>;
pub type NeighborTable64 = geometry::NeighborTable<f64>;
pub type BandwidthSet64 = geometry::BandwidthSet<f64>;
pub type SliParams64 = precision::SliParams<f64>;
pub type WeightTable64 = precision::WeightTable<f64>;
pub type NetworkMatrix64 = precision::NetworkMatrix<f64>;
pub type PrecisionMatrix64 = precision::PrecisionMatrix<f64>;
pub type EnergyBreakdown64 = energy::EnergyBreakdown<f64>;
pub type QuerySet64 = predictor::QuerySet<f64>;
pub type PredictionResult64 = predictor::PredictionResult<f64>;
pub type OptimizerConfig64 = inference::OptimizerConfig<f64>;
pub type CvReport64 = inference::CvReport<f64>;
pub type MetricReport64 = metrics::MetricReport<f64>;
