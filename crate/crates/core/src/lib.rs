//! Dynamic supernet training for weight-sharing NAS on a toy cell search space.
//!
//! The two training-side ideas live in [`calr`] (per-subnet polynomial LR decay driven by
//! parameter count) and [`optim`] (momentum buffers separated by subnet cluster). The rest
//! of the crate is the laboratory around them: a tiny autodiff engine, the search space,
//! the supernet, SPOS/FairNAS/few-shot trainers, an exhaustive stand-alone oracle, ranking
//! metrics, subnet search and an experiment harness.

pub mod autodiff;
pub mod calr;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod optim;
pub mod scalar;
pub mod search;
pub mod space;
pub mod supernet;
pub mod trainers;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tape64 = autodiff::Tape<f64>;
pub type ScheduleParams64 = calr::ScheduleParams<f64>;
pub type ClusteredMomentum64 = optim::ClusteredMomentum<f64>;
pub type ParamGrads64 = optim::ParamGrads<f64>;
pub type SupernetWeights64 = supernet::SupernetWeights<f64>;
pub type SupernetWeights32 = supernet::SupernetWeights<f32>;
pub type StandaloneNet64 = supernet::StandaloneNet<f64>;
pub type Dataset64 = data::Dataset<f64>;
