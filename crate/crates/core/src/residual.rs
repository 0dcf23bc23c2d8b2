//! Scene-content suppression: `residual = image - denoise(image)`.
//!
//! Denoisers operate on each channel independently. Border samples are
//! obtained by half-sample symmetric reflection (`... b a | a b c ... | c b ...`),
//! which keeps the Gaussian filter exactly mean-preserving.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{clamp_unit, ImageBuffer};
use crate::scalar::Scalar;

/// Denoising filter used to estimate scene content.
#[derive(Clone, Debug, PartialEq)]
pub enum DenoiserConfig<T> {
    /// Separable Gaussian blur with support radius `ceil(4 sigma)`.
    Gaussian { sigma: T },
    /// Single-level orthonormal Haar transform with soft-thresholded detail bands.
    WaveletSoft { threshold: T },
    /// Precomputed denoised images: the counterpart of `rel/name.png` is `dir/rel/name.png`.
    External { dir: PathBuf },
}

impl<T: Scalar> Default for DenoiserConfig<T> {
    fn default() -> Self {
        DenoiserConfig::Gaussian { sigma: T::one() }
    }
}

impl<T: Scalar> DenoiserConfig<T> {
    pub fn validate(&self) -> Result<()> {
        match self {
            DenoiserConfig::Gaussian { sigma } if !(*sigma > T::zero() && sigma.is_finite()) => Err(
                Error::InvalidParameter(format!("gaussian sigma must be > 0, got {sigma}")),
            ),
            DenoiserConfig::WaveletSoft { threshold }
                if !(*threshold >= T::zero() && threshold.is_finite()) =>
            {
                Err(Error::InvalidParameter(format!(
                    "wavelet threshold must be >= 0, got {threshold}"
                )))
            }
            _ => Ok(()),
        }
    }

    /// Extent (in pixels) beyond which a pixel's output ignores the image border.
    pub fn support_radius(&self) -> usize {
        match self {
            DenoiserConfig::Gaussian { sigma } => gaussian_radius(*sigma),
            DenoiserConfig::WaveletSoft { .. } => 1,
            DenoiserConfig::External { .. } => 0,
        }
    }
}

/// Noise residual with signed samples; same shape as its source image.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseResidual<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> NoiseResidual<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels || data.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "residual data length {} != {height}x{width}x{channels}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("residual sample".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Single-channel residual from a row-major plane.
    pub fn from_plane(height: usize, width: usize, plane: Vec<T>) -> Result<Self> {
        Self::new(height, width, 1, plane)
    }

    /// `a - b` elementwise, without clamping.
    pub fn difference(a: &ImageBuffer<T>, b: &ImageBuffer<T>) -> Result<Self> {
        if a.shape() != b.shape() {
            return Err(Error::ShapeMismatch {
                expected: a.shape(),
                actual: b.shape(),
            });
        }
        let (height, width, channels) = a.shape();
        let data = a
            .data()
            .iter()
            .zip(b.data())
            .map(|(&x, &y)| x - y)
            .collect();
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> T {
        self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> T {
        self.data.iter().copied().sum::<T>() / T::of_usize(self.data.len())
    }
}

/// Source index for a possibly out-of-range coordinate under half-sample symmetric extension.
#[inline]
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

pub(crate) fn gaussian_radius<T: Scalar>(sigma: T) -> usize {
    (sigma * T::of(4.0)).ceil().to_usize().unwrap_or(1).max(1)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel<T: Scalar>(sigma: T) -> Vec<T> {
    let radius = gaussian_radius(sigma) as isize;
    let two_s2 = T::of(2.0) * sigma * sigma;
    let taps: Vec<T> = (-radius..=radius)
        .map(|i| {
            let d = T::of(i as f64);
            (-(d * d) / two_s2).exp()
        })
        .collect();
    let total: T = taps.iter().copied().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable convolution of one row-major plane with a symmetric kernel.
pub(crate) fn convolve_separable<T: Scalar>(
    plane: &[T],
    height: usize,
    width: usize,
    kernel: &[T],
) -> Vec<T> {
    let r = (kernel.len() / 2) as isize;
    let mut tmp = vec![T::zero(); plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = T::zero();
            for (k, &w) in kernel.iter().enumerate() {
                let xi = reflect_index(x as isize + k as isize - r, width);
                acc = acc + w * row[xi];
            }
            tmp[y * width + x] = acc;
        }
    }
    let mut out = vec![T::zero(); plane.len()];
    for y in 0..height {
        for (k, &w) in kernel.iter().enumerate() {
            let yi = reflect_index(y as isize + k as isize - r, height);
            let src = &tmp[yi * width..(yi + 1) * width];
            let dst = &mut out[y * width..(y + 1) * width];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d = *d + w * s;
            }
        }
    }
    out
}

#[inline]
fn soft<T: Scalar>(v: T, t: T) -> T {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        T::zero()
    }
}

/// One-level orthonormal 2-D Haar analysis, soft shrinkage of the three
/// detail bands, synthesis. Odd sizes are extended by one reflected
/// row/column and cropped back afterwards.
pub(crate) fn haar_soft_plane<T: Scalar>(
    plane: &[T],
    height: usize,
    width: usize,
    threshold: T,
) -> Vec<T> {
    let (h2, w2) = (height.div_ceil(2), width.div_ceil(2));
    let sample = |y: usize, x: usize| plane[y.min(height - 1) * width + x.min(width - 1)];
    let half = T::of(0.5);
    let mut out = vec![T::zero(); plane.len()];
    for by in 0..h2 {
        for bx in 0..w2 {
            let (y0, x0) = (2 * by, 2 * bx);
            let a = sample(y0, x0);
            let b = sample(y0, x0 + 1);
            let c = sample(y0 + 1, x0);
            let d = sample(y0 + 1, x0 + 1);
            // Orthonormal 2x2 Haar: each coefficient is (±a ±b ±c ±d) / 2.
            let ll = (a + b + c + d) * half;
            let hl = soft((a - b + c - d) * half, threshold);
            let lh = soft((a + b - c - d) * half, threshold);
            let hh = soft((a - b - c + d) * half, threshold);
            let rec = [
                (ll + hl + lh + hh) * half,
                (ll - hl + lh - hh) * half,
                (ll + hl - lh - hh) * half,
                (ll - hl - lh + hh) * half,
            ];
            for (i, v) in rec.into_iter().enumerate() {
                let (y, x) = (y0 + i / 2, x0 + i % 2);
                if y < height && x < width {
                    out[y * width + x] = v;
                }
            }
        }
    }
    out
}

fn per_channel<T: Scalar>(image: &ImageBuffer<T>, f: impl Fn(&[T]) -> Vec<T>) -> ImageBuffer<T> {
    let (h, w, c) = image.shape();
    let mut data = vec![T::zero(); h * w * c];
    for ch in 0..c {
        let filtered = f(&image.channel_plane(ch));
        for (i, v) in filtered.into_iter().enumerate() {
            data[i * c + ch] = clamp_unit(v);
        }
    }
    ImageBuffer::from_raw_unchecked(h, w, c, data)
}

/// Estimates scene content.
///
/// `source` is the image's manifest-relative path; it is only consulted by
/// [`DenoiserConfig::External`]. Gaussian output is a convex combination of
/// input samples; wavelet output is clamped to `[0, 1]`.
pub fn denoise<T: Scalar>(
    image: &ImageBuffer<T>,
    config: &DenoiserConfig<T>,
    source: Option<&Path>,
) -> Result<ImageBuffer<T>> {
    config.validate()?;
    let (h, w, _) = image.shape();
    match config {
        DenoiserConfig::Gaussian { sigma } => {
            let kernel = gaussian_kernel(*sigma);
            Ok(per_channel(image, |p| convolve_separable(p, h, w, &kernel)))
        }
        DenoiserConfig::WaveletSoft { threshold } => {
            Ok(per_channel(image, |p| haar_soft_plane(p, h, w, *threshold)))
        }
        DenoiserConfig::External { dir } => {
            let key = source.ok_or_else(|| {
                Error::InvalidParameter("external denoiser needs the source image path".into())
            })?;
            let denoised = ImageBuffer::load(&dir.join(key))?;
            if denoised.shape() != image.shape() {
                return Err(Error::ShapeMismatch {
                    expected: image.shape(),
                    actual: denoised.shape(),
                });
            }
            Ok(denoised)
        }
    }
}

/// `image - denoise(image)` elementwise, no clamping.
pub fn extract_residual<T: Scalar>(
    image: &ImageBuffer<T>,
    config: &DenoiserConfig<T>,
    source: Option<&Path>,
) -> Result<NoiseResidual<T>> {
    let denoised = denoise(image, config, source)?;
    NoiseResidual::difference(image, &denoised)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn gauss(sigma: f64) -> DenoiserConfig<f64> {
        DenoiserConfig::Gaussian { sigma }
    }

    fn random_image(h: usize, w: usize, c: usize, seed: u64) -> ImageBuffer<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ImageBuffer::from_fn(h, w, c, |_, _, _| rng.gen::<f64>()).unwrap()
    }

    #[test]
    fn reflect_index_half_sample() {
        let n = 4;
        let got: Vec<usize> = (-5..9).map(|i| reflect_index(i, n)).collect();
        assert_eq!(got, [3, 3, 2, 1, 0, 0, 1, 2, 3, 3, 2, 1, 0, 0]);
        // Works for signals shorter than the kernel.
        assert_eq!(reflect_index(-3, 1), 0);
    }

    #[test]
    fn constant_is_fixed_point() {
        let img = ImageBuffer::filled(12, 9, 3, 0.5).unwrap();
        let out = denoise(&img, &gauss(1.0), None).unwrap();
        for v in out.data() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let r = extract_residual(&img, &gauss(1.0), None).unwrap();
        assert!(r.data().iter().all(|v| v.abs() < 1e-15));
        let r = extract_residual(&img, &DenoiserConfig::WaveletSoft { threshold: 0.1 }, None).unwrap();
        assert!(r.data().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn impulse_response_is_normalized_2d_gaussian() {
        let n = 21;
        let c = n / 2;
        let img = ImageBuffer::from_fn(n, n, 1, |y, x, _| if y == c && x == c { 1.0 } else { 0.0 })
            .unwrap();
        let out = denoise(&img, &gauss(1.0), None).unwrap();
        // Oracle: direct evaluation of exp(-(dx²+dy²)/2) over the 9x9 support.
        let raw = |dy: i64, dx: i64| (-((dx * dx + dy * dy) as f64) / 2.0).exp();
        let total: f64 = (-4..=4).flat_map(|dy| (-4..=4).map(move |dx| raw(dy, dx))).sum();
        for y in 0..n {
            for x in 0..n {
                let (dy, dx) = (y as i64 - c as i64, x as i64 - c as i64);
                let expected = if dy.abs() <= 4 && dx.abs() <= 4 { raw(dy, dx) / total } else { 0.0 };
                assert!((out.get(y, x, 0) - expected).abs() < 1e-10, "({y},{x})");
            }
        }
    }

    #[test]
    fn wavelet_zero_threshold_reconstructs() {
        for &(h, w) in &[(8, 8), (7, 9), (1, 5)] {
            let img = random_image(h, w, 3, 11);
            let out = denoise(&img, &DenoiserConfig::WaveletSoft { threshold: 0.0 }, None).unwrap();
            for (a, b) in img.data().iter().zip(out.data()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn wavelet_large_threshold_leaves_block_means() {
        let img = random_image(4, 4, 1, 3);
        let out = denoise(&img, &DenoiserConfig::WaveletSoft { threshold: 10.0 }, None).unwrap();
        let mean = (img.get(0, 0, 0) + img.get(0, 1, 0) + img.get(1, 0, 0) + img.get(1, 1, 0)) / 4.0;
        for (y, x) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            assert!((out.get(y, x, 0) - mean).abs() < 1e-12);
        }
    }

    /// DTFT of the symmetric kernel at angular frequency `omega`.
    fn transfer(kernel: &[f64], omega: f64) -> f64 {
        let r = (kernel.len() / 2) as f64;
        kernel
            .iter()
            .enumerate()
            .map(|(k, w)| w * (omega * (k as f64 - r)).cos())
            .sum()
    }

    #[test]
    fn checkerboard_attenuation_matches_transfer_function() {
        let (n, amp) = (48usize, 0.05);
        let bg_freq = 2.0 * std::f64::consts::PI * 2.0 / n as f64;
        let bg = |y: usize, x: usize| 0.5 + 0.2 * (bg_freq * x as f64).cos() * (bg_freq * y as f64).cos();
        let checker = |y: usize, x: usize| if (x + y) % 2 == 0 { amp } else { -amp };
        let img = ImageBuffer::from_fn(n, n, 1, |y, x, _| bg(y, x) + checker(y, x)).unwrap();
        let r = extract_residual(&img, &gauss(1.0), None).unwrap();

        // Frequency-domain oracle: each separable cosine component is scaled by
        // (1 - H(wy) H(wx)) away from the border.
        let k = gaussian_kernel(1.0f64);
        let h_bg = transfer(&k, bg_freq);
        let h_nyq = transfer(&k, std::f64::consts::PI);
        let margin = 2 * (k.len() / 2);
        for y in margin..n - margin {
            for x in margin..n - margin {
                let bg_ac = 0.2 * (bg_freq * x as f64).cos() * (bg_freq * y as f64).cos();
                let expected = (1.0 - h_bg * h_bg) * bg_ac + (1.0 - h_nyq * h_nyq) * checker(y, x);
                assert!((r.get(y, x, 0) - expected).abs() < 1e-12, "({y},{x})");
            }
        }
        // The checkerboard dominates the residual.
        assert!((1.0 - h_nyq * h_nyq) > 0.99);
    }

    #[test]
    fn shift_covariance_in_interior() {
        let img = random_image(40, 40, 1, 5);
        let shifted = ImageBuffer::from_fn(40, 40, 1, |y, x, _| {
            if y == 0 || x == 0 { 0.0 } else { img.get(y - 1, x - 1, 0) }
        })
        .unwrap();
        let cfg = gauss(1.0);
        let r0 = extract_residual(&img, &cfg, None).unwrap();
        let r1 = extract_residual(&shifted, &cfg, None).unwrap();
        let band = 2 * cfg.support_radius();
        for y in band..40 - band {
            for x in band..40 - band {
                assert!((r1.get(y, x, 0) - r0.get(y - 1, x - 1, 0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn external_denoiser() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::<f64>::from_fn(6, 5, 3, |y, x, c| ((y * 5 + x + c) % 255) as f64 / 255.0).unwrap();
        std::fs::create_dir_all(dir.path().join("sub")).unwrap();
        img.save_png(&dir.path().join("sub/a.png")).unwrap();
        let cfg = DenoiserConfig::External { dir: dir.path().to_path_buf() };
        let r = extract_residual(&img, &cfg, Some(Path::new("sub/a.png"))).unwrap();
        assert!(r.data().iter().all(|v| *v == 0.0));

        assert!(matches!(
            extract_residual(&img, &cfg, Some(Path::new("missing.png"))),
            Err(Error::Io { .. })
        ));
        let small = img.crop(0, 0, 3, 3).unwrap();
        assert!(matches!(
            extract_residual(&small, &cfg, Some(Path::new("sub/a.png"))),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(extract_residual(&img, &cfg, None).is_err());
    }

    #[test]
    fn invalid_configs() {
        let img = ImageBuffer::filled(4, 4, 1, 0.2).unwrap();
        assert!(denoise(&img, &gauss(0.0), None).is_err());
        assert!(denoise(&img, &gauss(-1.0), None).is_err());
        assert!(denoise(&img, &DenoiserConfig::WaveletSoft { threshold: -0.1 }, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn residual_is_linear(seed in any::<u64>(), alpha in 0.0f64..0.5, beta in 0.0f64..0.5,
                              h in 3usize..20, w in 3usize..20, sigma in 0.5f64..2.0) {
            let x = random_image(h, w, 1, seed);
            let y = random_image(h, w, 1, seed ^ 0xabcdef);
            let combo = ImageBuffer::new(h, w, 1,
                x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect()).unwrap();
            let cfg = gauss(sigma);
            let rx = extract_residual(&x, &cfg, None).unwrap();
            let ry = extract_residual(&y, &cfg, None).unwrap();
            let rc = extract_residual(&combo, &cfg, None).unwrap();
            for i in 0..rc.data().len() {
                let expected = alpha * rx.data()[i] + beta * ry.data()[i];
                prop_assert!((rc.data()[i] - expected).abs() < 1e-9);
            }
        }

        #[test]
        fn gaussian_residual_has_zero_mean(seed in any::<u64>(), h in 1usize..30, w in 1usize..30,
                                           sigma in 0.3f64..3.0) {
            let img = random_image(h, w, 3, seed);
            let r = extract_residual(&img, &gauss(sigma), None).unwrap();
            prop_assert!(r.mean().abs() < 1e-6);
        }
    }
}
