//! Multi-source azimuth localization from two-channel recordings.
//!
//! The pipeline estimates direct-path relative transfer function (DP-RTF)
//! observations per time-frequency region, evaluates them against the
//! predicted features of a grid of candidate directions with a complex
//! Gaussian mixture, and fits the mixture weights on the probability simplex
//! by entropy-penalized maximum likelihood. Peaks of the weight profile are
//! the detected sources.
//!
//! All numeric code is generic over [`Real`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision instantiation.

pub mod cgmm;
pub mod error;
pub mod features;
pub mod localizer;
pub mod pipeline;
pub mod scalar;
pub mod scene;
pub mod signal;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Complex64 = num_complex::Complex<f64>;
pub type AudioClip64 = signal::AudioClip<f64>;
pub type Spectrogram64 = signal::Spectrogram<f64>;
pub type FeatureSet64 = features::FeatureSet<f64>;
pub type CandidateGrid64 = cgmm::CandidateGrid<f64>;
pub type ProbMatrix64 = cgmm::ProbMatrix<f64>;
pub type WeightVector64 = solver::WeightVector<f64>;
pub type KktState64 = solver::KktState<f64>;

pub type AudioClip32 = signal::AudioClip<f32>;
pub type ProbMatrix32 = cgmm::ProbMatrix<f32>;
pub type WeightVector32 = solver::WeightVector<f32>;
