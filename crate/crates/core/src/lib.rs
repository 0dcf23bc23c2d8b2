//! Forensic analysis of synthetic images.
//!
//! * [`residual`]: noise residuals `X - f(X)` with pluggable denoisers.
//! * [`fingerprint`] and [`spectrum`]: residual averaging, centred amplitude spectra, peak detection.
//! * [`launder`]: crop / resize / JPEG laundering with per-image seeded randomness.
//! * [`specdetector`]: radial-spectrum features with a logistic-regression head.
//! * [`eval`]: AUC, thresholded accuracy, fusion, Platt calibration and reports.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`, which the command-line tool uses throughout.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod fingerprint;
pub mod image;
pub mod launder;
pub mod residual;
pub mod rng;
pub mod scalar;
pub mod selftest;
pub mod specdetector;
pub mod spectrum;

pub use crate::dataset::{Class, DatasetManifest, Label, ManifestEntry};
pub use crate::error::{Error, Result};
pub use crate::eval::{AccuracyMode, EvalReport, GeneratorResult};
pub use crate::launder::{LaunderDraw, LaunderParams, LaunderRecord};
pub use crate::rng::{derive_item_rng, SeededRng};
pub use crate::scalar::Scalar;
pub use crate::spectrum::SpectrumScale;

pub type Image = image::ImageBuffer<f64>;
pub type Residual = residual::NoiseResidual<f64>;
pub type Denoiser = residual::DenoiserConfig<f64>;
pub type Fingerprint = fingerprint::FingerprintEstimate<f64>;
pub type Spectrum = spectrum::AmplitudeSpectrum<f64>;
pub type Peak = spectrum::SpectralPeak<f64>;
pub type Features = specdetector::SpectralFeatures<f64>;
pub type Model = specdetector::LogRegModel<f64>;
pub type Scores = dataset::ScoreSet<f64>;
pub type Calibration = eval::CalibrationParams<f64>;

pub type ImageF32 = image::ImageBuffer<f32>;
pub type FingerprintF32 = fingerprint::FingerprintEstimate<f32>;
pub type SpectrumF32 = spectrum::AmplitudeSpectrum<f32>;
