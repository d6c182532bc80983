//! Long-range percolation on the hierarchical lattice `ℍ^d_L`.
//!
//! The core is generic over the scalar type ([`Real`], implemented for `f32`
//! and `f64`); the aliases below fix it to `f64`.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod estimators;
pub mod kernel;
pub mod lattice;
pub mod oracle;
pub mod parallel;
pub mod real;
pub mod rng;
pub mod samplers;

pub use error::{Error, Result};
pub use kernel::{Kernel, TailSum};
pub use lattice::{LatticeParams, PackedBall, Point};
pub use real::Real;
pub use rng::{StreamKey, StreamRng};
pub use samplers::{
    ClusterMultiset, ClusterPartition, ClusterSize, ExplorationResult, Observation, Restriction,
    SamplerKind,
};

pub type ModelParams = kernel::ModelParams<f64>;
pub type ModelParams32 = kernel::ModelParams<f32>;
pub type ExactLaw = oracle::ExactLaw<f64>;
pub type EstimateRecord = estimators::EstimateRecord<f64>;
pub type RadialTwoPoint = estimators::RadialTwoPoint<f64>;
pub type ScalingReport = estimators::ScalingReport<f64>;
