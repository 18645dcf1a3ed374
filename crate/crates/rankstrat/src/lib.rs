//! Rank stratification for nonlinear models.
//!
//! The crate computes the "model rank" of a parameter point — the dimension
//! of the span of the per-parameter derivative functions — for a small zoo
//! of nonlinear models (a toy bilinear model, matrix factorization,
//! two-layer tanh networks of fully-connected and convolutional flavors,
//! and deep fully-connected stacks). On top of that sit:
//!
//! * closed-form rank hierarchies per architecture ([`rank::stratify`]),
//! * a linear-stability certificate for interpolating minimizers
//!   (empirical rank equals model rank, [`rank::is_linearly_stable`]),
//! * a full-batch gradient-descent trainer with small Gaussian
//!   initialization ([`train`]), and
//! * scripted recovery experiments — phase-transition sweeps, sampling-order
//!   studies, spectrum reports — emitting CSV/JSON ([`sweep`]).
//!
//! Numeric kernels are generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix `f64`, which the experiment layer and CLI use.

pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod rank;
pub mod rng;
pub mod scalar;
pub mod svd;
pub mod sweep;
pub mod targets;
pub mod train;

pub use error::{Error, Result};
pub use model::ModelSpec;
pub use rank::{RankReport, TargetDescriptor};
pub use scalar::Scalar;

/// Dense `f64` matrix.
pub type Matrix = matrix::MatrixT<f64>;
/// SVD of an `f64` matrix.
pub type SvdResult = svd::SvdResultT<f64>;
/// Flat `f64` parameter vector.
pub type ParamVector = model::ParamVectorT<f64>;
/// `f64` model input.
pub type InputPoint = model::InputPointT<f64>;
/// `f64` training/test dataset.
pub type Dataset = rank::DatasetT<f64>;
/// `f64` tangent matrix.
pub type TangentMatrix = rank::TangentMatrixT<f64>;
/// `f64` trainer configuration.
pub type TrainConfig = train::TrainConfigT<f64>;
/// `f64` training outcome.
pub type TrainResult = train::TrainResultT<f64>;

/// Relative singular-value threshold shared by every rank computation that
/// does not override it. The relevant spectra have gaps far wider than this
/// at desk scale.
pub const DEFAULT_REL_TOL: f64 = 1e-8;
