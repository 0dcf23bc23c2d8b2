//! Centred 2-D amplitude spectra and quasi-periodic peak detection.

use std::path::Path;

use image::GrayImage;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::scalar::{median_in_place, Scalar};

/// Unnormalized forward 2-D DFT of a real row-major plane (rows, then columns).
pub fn fft2<T: Scalar>(plane: &[T], height: usize, width: usize) -> Vec<Complex<T>> {
    assert_eq!(plane.len(), height * width, "plane size");
    let mut planner = FftPlanner::<T>::new();
    let mut buf: Vec<Complex<T>> = plane.iter().map(|&v| Complex::new(v, T::zero())).collect();
    let row_fft = planner.plan_fft_forward(width);
    for row in buf.chunks_exact_mut(width) {
        row_fft.process(row);
    }
    let col_fft = planner.plan_fft_forward(height);
    let mut col = vec![Complex::new(T::zero(), T::zero()); height];
    for x in 0..width {
        for y in 0..height {
            col[y] = buf[y * width + x];
        }
        col_fft.process(&mut col);
        for y in 0..height {
            buf[y * width + x] = col[y];
        }
    }
    buf
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Default)]
pub enum SpectrumScale {
    #[default]
    Linear,
    /// `v <- ln(1 + v)`
    Log1p,
}

impl std::str::FromStr for SpectrumScale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "linear" => Ok(SpectrumScale::Linear),
            "log1p" => Ok(SpectrumScale::Log1p),
            other => Err(format!("unknown scale {other:?} (expected linear or log1p)")),
        }
    }
}

/// DFT magnitudes in fftshift layout: the DC bin sits at row `height / 2`,
/// column `width / 2`. Signed offsets `(u, v)` are (vertical, horizontal)
/// frequency bins relative to DC.
#[derive(Clone, Debug, PartialEq)]
pub struct AmplitudeSpectrum<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
    scale: SpectrumScale,
}

impl<T: Scalar> AmplitudeSpectrum<T> {
    /// Spectrum of a real plane, optionally after removing its mean.
    pub fn from_plane(
        plane: &[T],
        height: usize,
        width: usize,
        subtract_mean: bool,
        scale: SpectrumScale,
    ) -> Self {
        let centred: Vec<T> = if subtract_mean {
            let mean = plane.iter().copied().sum::<T>() / T::of_usize(plane.len());
            plane.iter().map(|&v| v - mean).collect()
        } else {
            plane.to_vec()
        };
        let freq = fft2(&centred, height, width);
        let (ch, cw) = (height / 2, width / 2);
        let mut values = vec![T::zero(); height * width];
        for y in 0..height {
            for x in 0..width {
                let m = freq[y * width + x].norm();
                let sy = (y + ch) % height;
                let sx = (x + cw) % width;
                values[sy * width + sx] = match scale {
                    SpectrumScale::Linear => m,
                    SpectrumScale::Log1p => m.ln_1p(),
                };
            }
        }
        Self {
            height,
            width,
            values,
            scale,
        }
    }

    /// Wraps precomputed shifted magnitudes.
    pub fn from_values(height: usize, width: usize, values: Vec<T>, scale: SpectrumScale) -> Result<Self> {
        if values.len() != height * width || values.is_empty() {
            return Err(Error::InvalidParameter("spectrum size".into()));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidParameter("spectrum values must be finite and >= 0".into()));
        }
        Ok(Self {
            height,
            width,
            values,
            scale,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn scale(&self) -> SpectrumScale {
        self.scale
    }

    /// Shifted row-major magnitudes.
    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// Signed frequency offsets of a shifted storage position.
    pub fn offset_of(&self, row: usize, col: usize) -> (isize, isize) {
        (
            row as isize - (self.height / 2) as isize,
            col as isize - (self.width / 2) as isize,
        )
    }

    /// Storage position of signed offsets, wrapping periodically.
    pub fn position_of(&self, u: isize, v: isize) -> (usize, usize) {
        let row = (u + (self.height / 2) as isize).rem_euclid(self.height as isize) as usize;
        let col = (v + (self.width / 2) as isize).rem_euclid(self.width as isize) as usize;
        (row, col)
    }

    pub fn at(&self, u: isize, v: isize) -> T {
        let (r, c) = self.position_of(u, v);
        self.values[r * self.width + c]
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::zero(), T::max)
    }

    /// Multiplies every magnitude by `k > 0`.
    pub fn scaled(&self, k: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * k).collect(),
            ..self.clone()
        }
    }

    /// Sum of squared magnitudes.
    pub fn energy(&self) -> T {
        self.values.iter().map(|&v| v * v).sum()
    }
}

/// A local spectral maximum standing out from its neighbourhood.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralPeak<T> {
    pub u: isize,
    pub v: isize,
    pub magnitude: T,
    /// `magnitude / median(neighbourhood)`; infinite when the median is zero.
    pub prominence: T,
}

/// Finds bins that are the strict maximum of their `neighborhood × neighborhood`
/// window (periodic wrap), lie outside the 3×3 zone around DC and reach
/// `prominence_threshold` times the window median. Bins at rounding-noise level
/// (at most `sqrt(eps)` times the global maximum) are ignored. Sorted by
/// prominence, strongest first.
pub fn detect_peaks<T: Scalar>(
    s: &AmplitudeSpectrum<T>,
    prominence_threshold: T,
    neighborhood: usize,
) -> Result<Vec<SpectralPeak<T>>> {
    if !(prominence_threshold > T::one()) {
        return Err(Error::InvalidParameter(format!(
            "prominence threshold must be > 1, got {prominence_threshold}"
        )));
    }
    if neighborhood < 3 || neighborhood % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "neighborhood must be odd and >= 3, got {neighborhood}"
        )));
    }
    let (h, w) = (s.height, s.width);
    let half = (neighborhood / 2) as isize;
    let floor = s.max_value() * T::epsilon().sqrt();
    let mut window = Vec::with_capacity(neighborhood * neighborhood);
    let mut peaks = Vec::new();
    for row in 0..h {
        for col in 0..w {
            let (u, v) = s.offset_of(row, col);
            if u.abs() <= 1 && v.abs() <= 1 {
                continue;
            }
            let m = s.values[row * w + col];
            if m <= floor {
                continue;
            }
            window.clear();
            let mut strict = true;
            'scan: for dy in -half..=half {
                for dx in -half..=half {
                    let r = (row as isize + dy).rem_euclid(h as isize) as usize;
                    let c = (col as isize + dx).rem_euclid(w as isize) as usize;
                    let n = s.values[r * w + c];
                    if (dy != 0 || dx != 0) && (r != row || c != col) && n >= m {
                        strict = false;
                        break 'scan;
                    }
                    window.push(n);
                }
            }
            if !strict {
                continue;
            }
            let median = median_in_place(&mut window);
            let prominence = if median > T::zero() {
                m / median
            } else {
                T::infinity()
            };
            if prominence >= prominence_threshold {
                peaks.push(SpectralPeak {
                    u,
                    v,
                    magnitude: m,
                    prominence,
                });
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.prominence
            .partial_cmp(&a.prominence)
            .unwrap()
            .then(b.magnitude.partial_cmp(&a.magnitude).unwrap())
            .then((a.u, a.v).cmp(&(b.u, b.v)))
    });
    Ok(peaks)
}

/// Min-max normalizes to `[0, 255]` (a constant spectrum maps to 0) and writes a grayscale PNG.
pub fn render_spectrum<T: Scalar>(s: &AmplitudeSpectrum<T>, path: &Path) -> Result<()> {
    let lo = s.values.iter().copied().fold(T::infinity(), T::min);
    let hi = s.values.iter().copied().fold(T::neg_infinity(), T::max);
    let range = hi - lo;
    let full = T::of(255.0);
    let pixels: Vec<u8> = s
        .values
        .iter()
        .map(|&v| {
            if range > T::zero() {
                ((v - lo) / range * full).round().to_u8().unwrap_or(255)
            } else {
                0
            }
        })
        .collect();
    let img = GrayImage::from_raw(s.width as u32, s.height as u32, pixels).expect("buffer size");
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(path, io),
            other => Error::Encode(other.to_string()),
        })
}

/// Writes `u,v,magnitude,prominence` rows.
pub fn write_peaks_csv<T: Scalar>(peaks: &[SpectralPeak<T>], path: &Path) -> Result<()> {
    let mut w = crate::dataset::create_csv(path)?;
    let io = |e: csv::Error| crate::dataset::csv_error(path, e);
    w.write_record(["u", "v", "magnitude", "prominence"]).map_err(io)?;
    for p in peaks {
        w.write_record([
            p.u.to_string(),
            p.v.to_string(),
            p.magnitude.to_string(),
            p.prominence.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn cosine_plane(n: usize, period: f64) -> Vec<f64> {
        (0..n * n)
            .map(|i| (2.0 * PI * (i % n) as f64 / period).cos())
            .collect()
    }

    /// Naive O(N^4) DFT magnitude at (ky, kx).
    fn naive_dft_mag(plane: &[f64], h: usize, w: usize, ky: usize, kx: usize) -> f64 {
        let (mut re, mut im) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let ph = -2.0 * PI * ((ky * y) as f64 / h as f64 + (kx * x) as f64 / w as f64);
                re += plane[y * w + x] * ph.cos();
                im += plane[y * w + x] * ph.sin();
            }
        }
        (re * re + im * im).sqrt()
    }

    #[test]
    fn fft2_matches_naive_dft() {
        let (h, w) = (6, 10);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let plane: Vec<f64> = (0..h * w).map(|_| rng.gen::<f64>() - 0.5).collect();
        let f = fft2(&plane, h, w);
        for ky in 0..h {
            for kx in 0..w {
                let naive = naive_dft_mag(&plane, h, w, ky, kx);
                assert!((f[ky * w + kx].norm() - naive).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn pure_cosine_has_two_bins() {
        let n = 64;
        let s = AmplitudeSpectrum::from_plane(&cosine_plane(n, 8.0), n, n, true, SpectrumScale::Linear);
        let expected = (n * n) as f64 / 2.0;
        let max = s.max_value();
        let mut nonzero = Vec::new();
        for r in 0..n {
            for c in 0..n {
                if s.values()[r * n + c] > 1e-6 * max {
                    nonzero.push(s.offset_of(r, c));
                }
            }
        }
        nonzero.sort();
        assert_eq!(nonzero, [(0, -8), (0, 8)]);
        for v in [-8, 8] {
            assert!(((s.at(0, v) - expected) / expected).abs() < 1e-6);
        }
    }

    #[test]
    fn odd_size_shift_layout() {
        let s = AmplitudeSpectrum::from_plane(&[1.0f64; 15], 3, 5, false, SpectrumScale::Linear);
        // DC carries all energy and sits at (1, 2).
        assert_eq!(s.position_of(0, 0), (1, 2));
        assert!((s.at(0, 0) - 15.0).abs() < 1e-12);
    }

    #[test]
    fn zero_plane_gives_zero_spectrum_and_no_peaks() {
        let s = AmplitudeSpectrum::from_plane(&[0.0f64; 64], 8, 8, true, SpectrumScale::Log1p);
        assert!(s.values().iter().all(|&v| v == 0.0));
        assert!(detect_peaks(&s, 5.0, 3).unwrap().is_empty());
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        let s = AmplitudeSpectrum::from_values(16, 16, vec![3.0f64; 256], SpectrumScale::Linear).unwrap();
        assert!(detect_peaks(&s, 1.5, 3).unwrap().is_empty());
    }

    #[test]
    fn cosine_peaks_detected() {
        let n = 64;
        let s = AmplitudeSpectrum::from_plane(&cosine_plane(n, 8.0), n, n, true, SpectrumScale::Linear);
        let peaks = detect_peaks(&s, 5.0, 9).unwrap();
        let mut bins: Vec<_> = peaks.iter().map(|p| (p.u, p.v)).collect();
        bins.sort();
        assert_eq!(bins, [(0, -8), (0, 8)]);
    }

    #[test]
    fn dc_zone_excluded() {
        let mut vals = vec![1.0f64; 81];
        // (1, 1) offset in a 9x9 spectrum: row 5, col 5.
        vals[5 * 9 + 5] = 100.0;
        vals[7 * 9 + 7] = 100.0; // offset (3, 3)
        let s = AmplitudeSpectrum::from_values(9, 9, vals, SpectrumScale::Linear).unwrap();
        let peaks = detect_peaks(&s, 5.0, 3).unwrap();
        assert_eq!(peaks.len(), 1);
        assert_eq!((peaks[0].u, peaks[0].v), (3, 3));
        assert!((peaks[0].prominence - 100.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_parameters() {
        let s = AmplitudeSpectrum::from_values(4, 4, vec![1.0f64; 16], SpectrumScale::Linear).unwrap();
        assert!(detect_peaks(&s, 1.0, 3).is_err());
        assert!(detect_peaks(&s, 2.0, 4).is_err());
        assert!(detect_peaks(&s, 2.0, 1).is_err());
    }

    #[test]
    fn render_is_deterministic_and_normalized() {
        let n = 64;
        let s = AmplitudeSpectrum::from_plane(&cosine_plane(n, 8.0), n, n, true, SpectrumScale::Linear);
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
        render_spectrum(&s, &a).unwrap();
        render_spectrum(&s, &b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
        let img = image::open(&a).unwrap().to_luma8();
        let bright: Vec<_> = img
            .enumerate_pixels()
            .filter(|(_, _, p)| p.0[0] == 255)
            .map(|(x, y, _)| s.offset_of(y as usize, x as usize))
            .collect();
        assert_eq!(bright.len(), 2);
        assert!(img.pixels().filter(|p| p.0[0] != 255).all(|p| p.0[0] == 0));

        let zero = AmplitudeSpectrum::from_values(4, 4, vec![0.0f64; 16], SpectrumScale::Linear).unwrap();
        let z = dir.path().join("z.png");
        render_spectrum(&zero, &z).unwrap();
        assert!(image::open(&z).unwrap().to_luma8().pixels().all(|p| p.0[0] == 0));
        assert!(render_spectrum(&zero, &dir.path().join("no/such/dir.png")).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn real_input_is_centrally_symmetric(seed in any::<u64>(), h in 2usize..20, w in 2usize..20) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let plane: Vec<f64> = (0..h * w).map(|_| rng.gen::<f64>()).collect();
            let s = AmplitudeSpectrum::from_plane(&plane, h, w, true, SpectrumScale::Linear);
            let scale = s.max_value().max(1e-300);
            for r in 0..h {
                for c in 0..w {
                    let (u, v) = s.offset_of(r, c);
                    prop_assert!((s.at(u, v) - s.at(-u, -v)).abs() <= 1e-6 * scale);
                }
            }
        }

        #[test]
        fn peak_set_is_scale_invariant(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vals: Vec<f64> = (0..32 * 32).map(|_| rng.gen::<f64>().powi(4)).collect();
            let s = AmplitudeSpectrum::from_values(32, 32, vals, SpectrumScale::Linear).unwrap();
            let key = |p: &[SpectralPeak<f64>]| {
                let mut k: Vec<_> = p.iter().map(|p| (p.u, p.v)).collect();
                k.sort();
                k
            };
            let a = detect_peaks(&s, 3.0, 5).unwrap();
            let b = detect_peaks(&s.scaled(7.3), 3.0, 5).unwrap();
            prop_assert_eq!(key(&a), key(&b));
        }
    }
}
