//! Artificial-fingerprint estimation: the running mean of many noise residuals.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::dataset::DatasetManifest;
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::residual::{denoise, extract_residual, DenoiserConfig, NoiseResidual};
use crate::scalar::Scalar;
use crate::spectrum::{AmplitudeSpectrum, SpectrumScale};

/// Default side of the central analysis crop.
pub const DEFAULT_CROP: usize = 256;

/// Images decoded and denoised concurrently before being folded in order.
const BATCH: usize = 64;

/// Sum of residuals and their count. The estimate is `sum / count`.
///
/// Accumulation is a sequential fold, so the floating-point summation order
/// is exactly the insertion order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FingerprintEstimate<T> {
    sum: Vec<T>,
    count: usize,
    shape: Option<(usize, usize, usize)>,
}

impl<T: Scalar> FingerprintEstimate<T> {
    pub fn new() -> Self {
        Self {
            sum: Vec::new(),
            count: 0,
            shape: None,
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn shape(&self) -> Option<(usize, usize, usize)> {
        self.shape
    }

    pub fn sum(&self) -> &[T] {
        &self.sum
    }

    /// Adds one residual; its shape must match previously accumulated ones.
    pub fn accumulate(&mut self, residual: &NoiseResidual<T>) -> Result<()> {
        match self.shape {
            None => {
                self.shape = Some(residual.shape());
                self.sum = residual.data().to_vec();
            }
            Some(shape) if shape != residual.shape() => {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    actual: residual.shape(),
                });
            }
            Some(_) => {
                for (s, &r) in self.sum.iter_mut().zip(residual.data()) {
                    *s = *s + r;
                }
            }
        }
        self.count += 1;
        Ok(())
    }

    /// Consuming form of [`accumulate`](Self::accumulate).
    pub fn with(mut self, residual: &NoiseResidual<T>) -> Result<Self> {
        self.accumulate(residual)?;
        Ok(self)
    }

    /// `sum / count`.
    pub fn estimate(&self) -> Result<NoiseResidual<T>> {
        let (h, w, c) = self
            .shape
            .ok_or_else(|| Error::Empty("fingerprint has no accumulated residuals".into()))?;
        let n = T::of_usize(self.count);
        NoiseResidual::new(h, w, c, self.sum.iter().map(|&s| s / n).collect())
    }

    /// Folds in the central-crop residual of every image, in iteration order.
    pub fn accumulate_images<'a>(
        &mut self,
        images: impl IntoIterator<Item = &'a ImageBuffer<T>>,
        denoiser: &DenoiserConfig<T>,
        crop: usize,
    ) -> Result<()> {
        for (i, img) in images.into_iter().enumerate() {
            let r = cropped_residual(img, None, denoiser, crop, &format!("image {i}"))?;
            self.accumulate(&r)?;
        }
        Ok(())
    }
}

/// Residual of the central `crop × crop` window of `image`.
///
/// Built-in denoisers run on the crop. An external denoised copy must match
/// the full image and is cropped the same way.
pub fn cropped_residual<T: Scalar>(
    image: &ImageBuffer<T>,
    source: Option<&Path>,
    denoiser: &DenoiserConfig<T>,
    crop: usize,
    name: &str,
) -> Result<NoiseResidual<T>> {
    let window = image.central_crop(crop, name)?;
    match denoiser {
        DenoiserConfig::External { .. } => {
            let denoised = denoise(image, denoiser, source)?;
            NoiseResidual::difference(&window, &denoised.central_crop(crop, name)?)
        }
        _ => extract_residual(&window, denoiser, source),
    }
}

/// Averages the central-crop residuals of every manifest image.
///
/// Images are decoded and denoised in parallel batches; the residuals are
/// folded sequentially in manifest order, so the result is bit-identical for
/// any thread count.
pub fn estimate_fingerprint<T: Scalar>(
    manifest: &DatasetManifest,
    denoiser: &DenoiserConfig<T>,
    crop: usize,
) -> Result<FingerprintEstimate<T>> {
    if crop == 0 {
        return Err(Error::InvalidParameter("crop must be positive".into()));
    }
    denoiser.validate()?;
    let mut acc = FingerprintEstimate::new();
    for batch in manifest.entries().chunks(BATCH) {
        let residuals: Vec<Result<NoiseResidual<T>>> = batch
            .par_iter()
            .map(|entry| {
                let path: PathBuf = manifest.resolve(entry);
                let img = ImageBuffer::load(&path)?;
                cropped_residual(&img, Some(Path::new(&entry.path)), denoiser, crop, &entry.path)
            })
            .collect();
        for r in residuals {
            acc.accumulate(&r?)?;
        }
    }
    Ok(acc)
}

/// Spectrum of the fingerprint estimate: channels averaged, mean removed, DC centred.
pub fn amplitude_spectrum<T: Scalar>(
    f: &FingerprintEstimate<T>,
    scale: SpectrumScale,
) -> Result<AmplitudeSpectrum<T>> {
    let est = f.estimate()?;
    let (h, w, c) = est.shape();
    let k = T::of_usize(c);
    let plane: Vec<T> = est
        .data()
        .chunks_exact(c)
        .map(|px| px.iter().copied().sum::<T>() / k)
        .collect();
    Ok(AmplitudeSpectrum::from_plane(&plane, h, w, true, scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Label, ManifestEntry};
    use crate::spectrum::detect_peaks;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn residual(h: usize, w: usize, mut f: impl FnMut(usize, usize) -> f64) -> NoiseResidual<f64> {
        NoiseResidual::from_plane(h, w, (0..h * w).map(|i| f(i / w, i % w)).collect()).unwrap()
    }

    #[test]
    fn single_residual_is_identity() {
        let r = residual(4, 5, |y, x| y as f64 - x as f64 * 0.3);
        let f = FingerprintEstimate::new().with(&r).unwrap();
        assert_eq!(f.estimate().unwrap(), r);
        assert_eq!(f.count(), 1);
    }

    #[test]
    fn opposite_residuals_cancel() {
        let r = residual(3, 3, |y, x| (y * 3 + x) as f64 * 0.1);
        let neg = residual(3, 3, |y, x| -((y * 3 + x) as f64 * 0.1));
        let f = FingerprintEstimate::new().with(&r).unwrap().with(&neg).unwrap();
        assert!(f.estimate().unwrap().data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn shape_mismatch_and_empty() {
        let mut f = FingerprintEstimate::new();
        assert!(matches!(f.estimate(), Err(Error::Empty(_))));
        f.accumulate(&residual(3, 3, |_, _| 0.0)).unwrap();
        assert!(matches!(
            f.accumulate(&residual(3, 4, |_, _| 0.0)),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(amplitude_spectrum(&FingerprintEstimate::<f64>::new(), SpectrumScale::Linear).is_err());
    }

    #[test]
    fn averaging_recovers_pattern_under_noise() {
        let (n, count, sigma) = (32, 1000, 0.1);
        let pattern = |y: usize, x: usize| 0.02 * (((x % 8 == 0) || (y % 8 == 0)) as u8 as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut f = FingerprintEstimate::new();
        for _ in 0..count {
            f.accumulate(&residual(n, n, |y, x| pattern(y, x) + noise.sample(&mut rng))).unwrap();
        }
        let est = f.estimate().unwrap();
        let mse: f64 = (0..n * n)
            .map(|i| (est.data()[i] - pattern(i / n, i % n)).powi(2))
            .sum::<f64>()
            / (n * n) as f64;
        assert!(mse.sqrt() < 0.005, "rms {}", mse.sqrt());
    }

    fn smooth_background(rng: &mut impl Rng, n: usize) -> impl Fn(usize, usize) -> f64 {
        let (fy, fx) = (rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0));
        let (py, px) = (rng.gen_range(0.0..6.28), rng.gen_range(0.0..6.28));
        let base = rng.gen_range(0.3..0.6);
        let amp = rng.gen_range(0.05..0.2);
        let w = 2.0 * std::f64::consts::PI / n as f64;
        move |y, x| base + amp * (w * fy * y as f64 + py).sin() * (w * fx * x as f64 + px).cos()
    }

    /// Planted grid: 1 where the row or column index is a multiple of 8.
    fn grid(y: usize, x: usize) -> f64 {
        ((x % 8 == 0) || (y % 8 == 0)) as u8 as f64
    }

    /// Non-DC DFT support of the planted grid on an `n × n` crop, by direct DFT.
    fn grid_support(n: usize) -> Vec<(isize, isize)> {
        let plane: Vec<f64> = (0..n * n).map(|i| grid(i / n, i % n)).collect();
        let s = AmplitudeSpectrum::from_plane(&plane, n, n, true, SpectrumScale::Linear);
        let max = s.max_value();
        let mut bins = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if s.values()[r * n + c] > 1e-9 * max {
                    bins.push(s.offset_of(r, c));
                }
            }
        }
        bins.sort();
        bins
    }

    #[test]
    fn planted_grid_peaks_at_multiples_of_crop_over_8() {
        let (side, crop, count) = (72usize, 64usize, 1000usize);
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let images: Vec<ImageBuffer<f64>> = (0..count)
            .map(|_| {
                let bg = smooth_background(&mut rng, side);
                // Grid phase is aligned with the central crop.
                let off = (side - crop) / 2;
                ImageBuffer::from_fn(side, side, 1, |y, x, _| {
                    bg(y, x) + 0.02 * grid(y + 8 - off % 8, x + 8 - off % 8)
                })
                .unwrap()
            })
            .collect();
        let mut f = FingerprintEstimate::new();
        f.accumulate_images(&images, &DenoiserConfig::Gaussian { sigma: 1.0 }, crop).unwrap();
        let s = amplitude_spectrum(&f, SpectrumScale::Linear).unwrap();

        let support = grid_support(crop);
        assert!(support.iter().all(|&(u, v)| u % 8 == 0 && v % 8 == 0));
        // The largest non-DC bins are exactly the planted support.
        let mut ranked: Vec<((isize, isize), f64)> = (0..crop * crop)
            .map(|i| (s.offset_of(i / crop, i % crop), s.values()[i]))
            .filter(|(o, _)| *o != (0, 0))
            .collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut top: Vec<_> = ranked[..support.len()].iter().map(|(o, _)| *o).collect();
        top.sort();
        assert_eq!(top, support);

        let detected: Vec<_> = detect_peaks(&s, 5.0, 5).unwrap().iter().map(|p| (p.u, p.v)).collect();
        for bin in &support {
            assert!(detected.contains(bin), "missing {bin:?}");
        }
    }

    #[test]
    fn manifest_fingerprint_matches_in_memory_and_is_thread_independent() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut entries = Vec::new();
        let mut images = Vec::new();
        for i in 0..70 {
            let img = ImageBuffer::<f64>::from_fn(20, 24, 3, |_, _, _| rng.gen_range(0..256) as f64 / 255.0).unwrap();
            let name = format!("img{i}.png");
            img.save_png(&dir.path().join(&name)).unwrap();
            images.push(img);
            entries.push(ManifestEntry { path: name, label: Label::synthetic("g").unwrap() });
        }
        let m = DatasetManifest::new(dir.path(), entries).unwrap();
        let cfg = DenoiserConfig::Gaussian { sigma: 1.0 };
        let f = estimate_fingerprint::<f64>(&m, &cfg, 16).unwrap();
        let mut g = FingerprintEstimate::new();
        g.accumulate_images(&images, &cfg, 16).unwrap();
        assert_eq!(f, g);

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let single = pool.install(|| estimate_fingerprint::<f64>(&m, &cfg, 16).unwrap());
        assert_eq!(single, f);

        match estimate_fingerprint::<f64>(&m, &cfg, 22) {
            Err(Error::Undersized { name, .. }) => assert_eq!(name, "img0.png"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn identical_images_give_their_residual() {
        let img = ImageBuffer::<f64>::from_fn(10, 10, 1, |y, x, _| ((y * x) % 7) as f64 / 7.0).unwrap();
        let cfg = DenoiserConfig::Gaussian { sigma: 1.0 };
        let mut f = FingerprintEstimate::new();
        f.accumulate_images([&img, &img], &cfg, 8).unwrap();
        let expected = cropped_residual(&img, None, &cfg, 8, "x").unwrap();
        for (a, b) in f.estimate().unwrap().data().iter().zip(expected.data()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
