//! Pairwise preference elicitation: logistic (Bradley–Terry) preference
//! models, loss-based confidence sets refined by consistent halfspaces, the
//! elicitation policies built on them, simulated users, candidate pools,
//! diagnostics and an experiment harness.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*F64` and
//! `*F32` aliases at the crate root fix the precision.

// `!(x > 0)` style checks deliberately reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convex;
pub mod diagnostics;
pub mod domains;
pub mod elicit;
pub mod error;
pub mod eval;
pub mod prefcore;
pub mod scalar;
pub mod seeding;
pub mod simusers;
pub mod vector;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type ModelParamsF64 = prefcore::ModelParams<f64>;
pub type ModelParamsF32 = prefcore::ModelParams<f32>;
pub type CandidatePoolF64 = prefcore::CandidatePool<f64>;
pub type CandidatePoolF32 = prefcore::CandidatePool<f32>;
pub type PreferenceDatasetF64 = prefcore::PreferenceDataset<f64>;
pub type PreferenceDatasetF32 = prefcore::PreferenceDataset<f32>;
pub type ElicitationSessionF64 = elicit::ElicitationSession<f64>;
pub type ElicitationSessionF32 = elicit::ElicitationSession<f32>;
pub type UserModelF64 = simusers::UserModel<f64>;
pub type UserModelF32 = simusers::UserModel<f32>;
