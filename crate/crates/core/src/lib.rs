//! Smoothness-regularized unsupervised domain adaptation.
//!
//! A feature generator G and classifier C are trained on labeled source
//! data while G is additionally pushed to keep target predictions stable
//! under small feature-space perturbations. The local smooth discrepancy
//! `D(C(G(x) + r), C(G(x)))` is both the training signal and an
//! evaluation metric.

pub mod config;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod numeric;
pub mod par;
pub mod perturbation;
pub mod training;

pub use error::{Result, SrdaError};
pub use model::{Model, ModelSpec};
pub use numeric::{Matrix, Rng};
pub use metrics::RunRecord;
pub use par::Execution;
pub use perturbation::{NoisePlan, PlanKind};
pub use training::{train_schedule, TrainConfig, TrainState};
