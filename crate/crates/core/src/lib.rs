//! Rare-event probability estimation with subset simulation and
//! progressively refined surrogates, plus a chance-constrained gain
//! optimizer on a linear flight-control benchmark.
//!
//! The estimation stack (`uncertainty`, `orthopoly`, `pce`, `rsm`, `mcmc`,
//! `sus`, `sbss`, `benchmarks`) is generic over [`Scalar`] (`f32` or `f64`).
//! The flight model and optimizer work in `f64`. Concrete aliases for
//! both precisions are provided below.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod benchmarks;
pub mod chance_opt;
pub mod error;
pub mod flight;
pub mod linalg;
pub mod mcmc;
pub mod orthopoly;
pub mod pce;
pub mod rsm;
pub mod sbss;
pub mod scalar;
pub mod sus;
pub mod uncertainty;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type UncertainVector64 = uncertainty::UncertainVector<f64>;
pub type UncertainVector32 = uncertainty::UncertainVector<f32>;
pub type PceModel64 = pce::PceModel<f64>;
pub type PceModel32 = pce::PceModel<f32>;
pub type RsmModel64 = rsm::RsmModel<f64>;
pub type RsmModel32 = rsm::RsmModel<f32>;
pub type PiecewiseSurrogate64 = sbss::PiecewiseSurrogate<f64>;
pub type PiecewiseSurrogate32 = sbss::PiecewiseSurrogate<f32>;
pub type EstimationResult64 = sus::EstimationResult<f64>;
pub type EstimationResult32 = sus::EstimationResult<f32>;
pub type LevelRecord64 = sus::LevelRecord<f64>;
pub type LevelRecord32 = sus::LevelRecord<f32>;
pub type RunError64 = sus::RunError<f64>;
pub type RunError32 = sus::RunError<f32>;
