//! Frequency-analysis baseline detector: azimuthally averaged log power
//! spectrum features and an L2-regularized logistic-regression head.
//!
//! Features are always taken from a central crop; images are never resized.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{Class, DatasetManifest, Label};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::scalar::{sigmoid, softplus, Scalar};
use crate::spectrum::fft2;

pub const DEFAULT_BINS: usize = 64;

/// Radial profile: shell-averaged `ln(1 + power)`, normalized to unit sum.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralFeatures<T> {
    pub radial_profile: Vec<T>,
}

impl<T: Scalar> SpectralFeatures<T> {
    pub fn len(&self) -> usize {
        self.radial_profile.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radial_profile.is_empty()
    }
}

/// Shell index of each DFT bin of an `n × n` plane, `None` for DC and for
/// radii beyond Nyquist. Shells split `[1, n/2]` into `bins` equal widths.
fn shell_map(n: usize, bins: usize) -> Vec<Option<usize>> {
    let nyquist = n as f64 / 2.0;
    let width = (nyquist - 1.0) / bins as f64;
    let signed = |k: usize| if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    let mut map = Vec::with_capacity(n * n);
    for ky in 0..n {
        for kx in 0..n {
            let r = signed(ky).hypot(signed(kx));
            map.push(if r < 1.0 || r > nyquist {
                None
            } else {
                Some((((r - 1.0) / width).floor() as usize).min(bins - 1))
            });
        }
    }
    map
}

/// Features of the central `crop × crop` window (channel mean, mean removed,
/// no window function). Empty shells contribute 0; a spectrum with no energy
/// yields the uniform profile.
pub fn spectral_features<T: Scalar>(
    image: &ImageBuffer<T>,
    crop: usize,
    bins: usize,
) -> Result<SpectralFeatures<T>> {
    if crop < 4 {
        return Err(Error::InvalidParameter(format!("crop must be >= 4, got {crop}")));
    }
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be positive".into()));
    }
    let window = image.central_crop(crop, "feature input")?;
    let mut plane = window.grayscale_plane();
    let mean = plane.iter().copied().sum::<T>() / T::of_usize(plane.len());
    for v in &mut plane {
        *v = *v - mean;
    }
    let freq = fft2(&plane, crop, crop);
    let shells = shell_map(crop, bins);
    let mut power = vec![T::zero(); bins];
    let mut counts = vec![0usize; bins];
    for (f, shell) in freq.iter().zip(&shells) {
        if let Some(s) = *shell {
            power[s] = power[s] + f.norm_sqr();
            counts[s] += 1;
        }
    }
    let mut profile: Vec<T> = power
        .iter()
        .zip(&counts)
        .map(|(&p, &c)| if c == 0 { T::zero() } else { (p / T::of_usize(c)).ln_1p() })
        .collect();
    let total: T = profile.iter().copied().sum();
    if total > T::zero() {
        for v in &mut profile {
            *v = *v / total;
        }
    } else {
        profile = vec![T::one() / T::of_usize(bins); bins];
    }
    Ok(SpectralFeatures {
        radial_profile: profile,
    })
}

/// Features of every manifest image, computed in parallel, returned in manifest order.
pub fn manifest_features<T: Scalar>(
    m: &DatasetManifest,
    crop: usize,
    bins: usize,
) -> Result<Vec<SpectralFeatures<T>>> {
    m.entries()
        .par_iter()
        .map(|e| {
            let img = ImageBuffer::load(&m.resolve(e))?;
            spectral_features(&img, crop, bins).map_err(|err| match err {
                Error::Undersized {
                    height,
                    width,
                    required,
                    ..
                } => Error::Undersized {
                    name: e.path.clone(),
                    height,
                    width,
                    required,
                },
                other => other,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingMeta<T> {
    pub iterations: usize,
    pub l2_lambda: T,
    pub final_loss: T,
}

/// `score(x) = sigmoid(w·x + b)`; higher means more likely synthetic.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRegModel<T> {
    pub weights: Vec<T>,
    pub bias: T,
    pub meta: TrainingMeta<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig<T> {
    pub l2_lambda: T,
    pub iterations: usize,
    pub learning_rate: T,
}

impl<T: Scalar> Default for TrainConfig<T> {
    fn default() -> Self {
        Self {
            l2_lambda: T::of(1e-4),
            iterations: 2000,
            learning_rate: T::of(0.5),
        }
    }
}

/// Mean logistic loss plus `(l2 / 2) |w|²` (bias unregularized) over a fixed design.
pub struct LogisticObjective<'a, T> {
    features: &'a [Vec<T>],
    targets: Vec<T>,
    l2_lambda: T,
}

impl<'a, T: Scalar> LogisticObjective<'a, T> {
    /// `targets` are 1 for synthetic and 0 for real.
    pub fn new(features: &'a [Vec<T>], targets: Vec<T>, l2_lambda: T) -> Result<Self> {
        if features.len() != targets.len() || features.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "{} feature rows for {} targets",
                features.len(),
                targets.len()
            )));
        }
        let k = features[0].len();
        if let Some(bad) = features.iter().find(|f| f.len() != k) {
            return Err(Error::DimensionMismatch {
                expected: k,
                actual: bad.len(),
            });
        }
        Ok(Self {
            features,
            targets,
            l2_lambda,
        })
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn loss(&self, w: &[T], b: T) -> T {
        let n = T::of_usize(self.features.len());
        let data: T = self
            .features
            .iter()
            .zip(&self.targets)
            .map(|(x, &y)| {
                let z = dot(w, x) + b;
                softplus(z) - y * z
            })
            .sum();
        data / n + T::of(0.5) * self.l2_lambda * dot(w, w)
    }

    /// `(loss, d loss / d w, d loss / d b)`.
    pub fn loss_and_gradient(&self, w: &[T], b: T) -> (T, Vec<T>, T) {
        let n = T::of_usize(self.features.len());
        let mut gw = vec![T::zero(); w.len()];
        let mut gb = T::zero();
        let mut data = T::zero();
        for (x, &y) in self.features.iter().zip(&self.targets) {
            let z = dot(w, x) + b;
            data = data + softplus(z) - y * z;
            let r = sigmoid(z) - y;
            for (g, &xi) in gw.iter_mut().zip(x) {
                *g = *g + r * xi;
            }
            gb = gb + r;
        }
        for (g, &wi) in gw.iter_mut().zip(w) {
            *g = *g / n + self.l2_lambda * wi;
        }
        (
            data / n + T::of(0.5) * self.l2_lambda * dot(w, w),
            gw,
            gb / n,
        )
    }
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let synthetic = labels.iter().filter(|l| l.is_synthetic()).count();
    (labels.len() - synthetic, synthetic)
}

/// Full-batch gradient descent from zero; returns the model and the loss
/// evaluated before every update followed by the final loss.
pub fn train_with_trace<T: Scalar>(
    features: &[SpectralFeatures<T>],
    labels: &[Label],
    config: &TrainConfig<T>,
) -> Result<(LogRegModel<T>, Vec<T>)> {
    if features.len() != labels.len() {
        return Err(Error::InvalidParameter(format!(
            "{} feature vectors for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let (real, synthetic) = class_counts(labels);
    if real < 2 || synthetic < 2 {
        return Err(Error::InsufficientClasses {
            min: 2,
            real,
            synthetic,
        });
    }
    let rows: Vec<Vec<T>> = features.iter().map(|f| f.radial_profile.clone()).collect();
    let targets = labels
        .iter()
        .map(|l| T::of(l.class().target()))
        .collect();
    let objective = LogisticObjective::new(&rows, targets, config.l2_lambda)?;
    let mut w = vec![T::zero(); objective.dim()];
    let mut b = T::zero();
    let mut trace = Vec::with_capacity(config.iterations + 1);
    for iteration in 0..config.iterations {
        let (loss, gw, gb) = objective.loss_and_gradient(&w, b);
        if !loss.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        trace.push(loss);
        for (wi, g) in w.iter_mut().zip(gw) {
            *wi = *wi - config.learning_rate * g;
        }
        b = b - config.learning_rate * gb;
    }
    let final_loss = objective.loss(&w, b);
    if !final_loss.is_finite() || w.iter().any(|v| !v.is_finite()) || !b.is_finite() {
        return Err(Error::Diverged {
            iteration: config.iterations,
        });
    }
    trace.push(final_loss);
    Ok((
        LogRegModel {
            weights: w,
            bias: b,
            meta: TrainingMeta {
                iterations: config.iterations,
                l2_lambda: config.l2_lambda,
                final_loss,
            },
        },
        trace,
    ))
}

pub fn train<T: Scalar>(
    features: &[SpectralFeatures<T>],
    labels: &[Label],
    config: &TrainConfig<T>,
) -> Result<LogRegModel<T>> {
    train_with_trace(features, labels, config).map(|(m, _)| m)
}

const MODEL_MAGIC: &str = "synthprint-logreg";
const MODEL_VERSION: &str = "1";

impl<T: Scalar> LogRegModel<T> {
    /// Model with all-zero weights.
    pub fn zero(bins: usize, bias: T) -> Self {
        Self {
            weights: vec![T::zero(); bins],
            bias,
            meta: TrainingMeta {
                iterations: 0,
                l2_lambda: T::zero(),
                final_loss: T::nan(),
            },
        }
    }

    pub fn bins(&self) -> usize {
        self.weights.len()
    }

    pub fn logit(&self, f: &SpectralFeatures<T>) -> Result<T> {
        if f.len() != self.weights.len() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.len(),
                actual: f.len(),
            });
        }
        Ok(dot(&self.weights, &f.radial_profile) + self.bias)
    }

    pub fn score_features(&self, f: &SpectralFeatures<T>) -> Result<T> {
        self.logit(f).map(sigmoid)
    }

    /// Score of an image in `(0, 1)` using the model's bin count.
    pub fn score(&self, image: &ImageBuffer<T>, crop: usize) -> Result<T> {
        self.score_features(&spectral_features(image, crop, self.bins())?)
    }

    /// Text format: magic line, then `key value` lines, then one weight per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        let f = |v: T| v.as_f64();
        writeln!(out, "{MODEL_MAGIC} {MODEL_VERSION}").unwrap();
        writeln!(out, "bins {}", self.weights.len()).unwrap();
        writeln!(out, "bias {:?}", f(self.bias)).unwrap();
        writeln!(out, "iterations {}", self.meta.iterations).unwrap();
        writeln!(out, "l2_lambda {:?}", f(self.meta.l2_lambda)).unwrap();
        writeln!(out, "final_loss {:?}", f(self.meta.final_loss)).unwrap();
        writeln!(out, "weights").unwrap();
        for w in &self.weights {
            writeln!(out, "{:?}", f(*w)).unwrap();
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let corrupt = |message: String| Error::CorruptModel {
            path: path.to_path_buf(),
            message,
        };
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        match header.split_once(' ') {
            Some((MODEL_MAGIC, MODEL_VERSION)) => {}
            Some((MODEL_MAGIC, v)) => {
                return Err(Error::ModelVersion {
                    path: path.to_path_buf(),
                    message: format!("version {v}, expected {MODEL_VERSION}"),
                })
            }
            _ => {
                return Err(Error::ModelVersion {
                    path: path.to_path_buf(),
                    message: format!("bad magic header {header:?}"),
                })
            }
        }
        let mut field = |key: &str| -> Result<String> {
            let line = lines
                .next()
                .ok_or_else(|| corrupt(format!("missing {key}")))?;
            match line.split_once(' ') {
                Some((k, v)) if k == key => Ok(v.to_string()),
                _ if line == key => Ok(String::new()),
                _ => Err(corrupt(format!("expected {key}, found {line:?}"))),
            }
        };
        let num = |s: String, key: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| corrupt(format!("{key}: {s:?} is not a number")))
        };
        let bins: usize = field("bins")?
            .trim()
            .parse()
            .map_err(|_| corrupt("bins is not an integer".into()))?;
        let bias = num(field("bias")?, "bias")?;
        let iterations: usize = field("iterations")?
            .trim()
            .parse()
            .map_err(|_| corrupt("iterations is not an integer".into()))?;
        let l2 = num(field("l2_lambda")?, "l2_lambda")?;
        let final_loss = num(field("final_loss")?, "final_loss")?;
        field("weights")?;
        let weights = lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| num(l.to_string(), "weight").map(T::of))
            .collect::<Result<Vec<T>>>()?;
        if weights.len() != bins {
            return Err(corrupt(format!("{} weights for {bins} bins", weights.len())));
        }
        if !bias.is_finite() || weights.iter().any(|w| !w.is_finite()) {
            return Err(corrupt("non-finite parameter".into()));
        }
        Ok(Self {
            weights,
            bias: T::of(bias),
            meta: TrainingMeta {
                iterations,
                l2_lambda: T::of(l2),
                final_loss: T::of(final_loss),
            },
        })
    }
}

/// Class decided at the probability threshold 0.5 (ties go to real).
pub fn decide<T: Scalar>(score: T) -> Class {
    if score > T::of(0.5) {
        Class::Synthetic
    } else {
        Class::Real
    }
}
