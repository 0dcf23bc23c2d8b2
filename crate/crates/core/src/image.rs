//! Floating-point image carrier and PNG/JPEG conversion.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-major `height × width × channels` image with samples in `[0, 1]`.
///
/// Channels are interleaved: sample `(y, x, c)` lives at
/// `(y * width + x) * channels + c`. Only 1 (gray) and 3 (RGB) channels are
/// supported.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> ImageBuffer<T> {
    /// Wraps `data`, checking its length and that every sample lies in `[0, 1]`.
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        check_shape(height, width, channels, data.len())?;
        if let Some(bad) = data
            .iter()
            .position(|v| !(*v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::InvalidImage(format!(
                "sample {bad} = {} outside [0, 1]",
                data[bad]
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(y, x, c)` at every sample and clamping to `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> T,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(clamp_unit(f(y, x, c)));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Skips the range check. Callers guarantee samples are already in `[0, 1]`.
    pub(crate) fn from_raw_unchecked(
        height: usize,
        width: usize,
        channels: usize,
        data: Vec<T>,
    ) -> Self {
        debug_assert_eq!(data.len(), height * width * channels);
        Self {
            height,
            width,
            channels,
            data,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// `(height, width, channels)`.
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

    /// One channel as a row-major `height × width` plane.
    pub fn channel_plane(&self, c: usize) -> Vec<T> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    /// Channel mean as a row-major plane.
    pub fn grayscale_plane(&self) -> Vec<T> {
        if self.channels == 1 {
            return self.data.clone();
        }
        let k = T::of_usize(self.channels);
        self.data
            .chunks_exact(self.channels)
            .map(|px| px.iter().copied().sum::<T>() / k)
            .collect()
    }

    /// Rectangular window with top-left corner `(y, x)`.
    pub fn crop(&self, y: usize, x: usize, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 || y + height > self.height || x + width > self.width {
            return Err(Error::InvalidParameter(format!(
                "crop {height}x{width} at ({y}, {x}) outside {}x{} image",
                self.height, self.width
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(height * width * c);
        for row in y..y + height {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + width * c]);
        }
        Ok(Self::from_raw_unchecked(height, width, c, data))
    }

    /// Central `side × side` window; offsets are `floor((dim - side) / 2)`.
    /// Never resamples.
    pub fn central_crop(&self, side: usize, name: &str) -> Result<Self> {
        if self.height < side || self.width < side {
            return Err(Error::Undersized {
                name: name.to_string(),
                height: self.height,
                width: self.width,
                required: side,
            });
        }
        self.crop(
            (self.height - side) / 2,
            (self.width - side) / 2,
            side,
            side,
        )
    }

    /// Duplicates a gray image into three identical channels; RGB images are cloned.
    pub fn to_rgb(&self) -> Self {
        if self.channels == 3 {
            return self.clone();
        }
        let data = self.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self::from_raw_unchecked(self.height, self.width, 3, data)
    }

    /// Quantizes to 8 bits: `round(255 v)`, clamped to `[0, 255]`.
    pub fn to_u8(&self) -> Vec<u8> {
        let scale = T::of(255.0);
        self.data
            .iter()
            .map(|&v| {
                (v * scale)
                    .round()
                    .max(T::zero())
                    .min(scale)
                    .to_u8()
                    .unwrap_or(0)
            })
            .collect()
    }

    /// Converts 8-bit samples by `v / 255`.
    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        let scale = T::of(255.0);
        check_shape(height, width, channels, bytes.len())?;
        let data = bytes
            .iter()
            .map(|&b| T::from_u8(b).expect("u8 converts") / scale)
            .collect();
        Ok(Self::from_raw_unchecked(height, width, channels, data))
    }

    /// Gray images stay single-channel; anything with colour becomes RGB (alpha dropped).
    pub fn from_dynamic(img: &DynamicImage) -> Result<Self> {
        let color = img.color();
        let (w, h) = (img.width() as usize, img.height() as usize);
        match img {
            DynamicImage::ImageRgb8(rgb) => return Self::from_u8(h, w, 3, rgb.as_raw()),
            DynamicImage::ImageLuma8(gray) => return Self::from_u8(h, w, 1, gray.as_raw()),
            _ => {}
        }
        if color.has_color() {
            let rgb = img.to_rgb8();
            Self::from_u8(h, w, 3, rgb.as_raw())
        } else {
            let gray = img.to_luma8();
            Self::from_u8(h, w, 1, gray.as_raw())
        }
    }

    pub fn to_dynamic(&self) -> DynamicImage {
        let bytes = self.to_u8();
        let (w, h) = (self.width as u32, self.height as u32);
        if self.channels == 3 {
            DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("buffer size"))
        } else {
            DynamicImage::ImageLuma8(GrayImage::from_raw(w, h, bytes).expect("buffer size"))
        }
    }

    /// Reads a PNG or JPEG file (format detected from content).
    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes).map_err(|e| match e {
            Error::Decode { message, .. } => Error::Decode {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory(bytes).map_err(|e| Error::Decode {
            path: Default::default(),
            message: e.to_string(),
        })?;
        Self::from_dynamic(&img)
    }

    /// Writes a lossless PNG.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        self.to_dynamic()
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Encode(other.to_string()),
            })
    }
}

#[inline]
fn check_shape(height: usize, width: usize, channels: usize, len: usize) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidImage(format!(
            "{channels} channels (expected 1 or 3)"
        )));
    }
    if height == 0 || width == 0 {
        return Err(Error::InvalidImage("empty image".into()));
    }
    if len != height * width * channels {
        return Err(Error::InvalidImage(format!(
            "data length {len} != {height}x{width}x{channels}"
        )));
    }
    Ok(())
}

pub(crate) fn clamp_unit<T: Scalar>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_length_and_range() {
        assert!(ImageBuffer::<f64>::new(2, 2, 1, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::<f64>::new(1, 1, 1, vec![1.5]).is_err());
        assert!(ImageBuffer::<f64>::new(1, 1, 1, vec![f64::NAN]).is_err());
        assert!(ImageBuffer::<f64>::new(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(ImageBuffer::<f64>::new(1, 1, 3, vec![0.0; 3]).is_ok());
    }

    #[test]
    fn central_crop_offsets() {
        let img = ImageBuffer::<f64>::from_fn(5, 6, 1, |y, x, _| (y * 6 + x) as f64 / 30.0).unwrap();
        let c = img.central_crop(3, "t").unwrap();
        // offsets (1, 1)
        assert_eq!(c.get(0, 0, 0), img.get(1, 1, 0));
        assert_eq!(c.shape(), (3, 3, 1));
        assert!(matches!(
            img.central_crop(6, "t"),
            Err(Error::Undersized { .. })
        ));
    }

    #[test]
    fn png_round_trip_is_exact_on_8bit_grid() {
        let img = ImageBuffer::<f64>::from_fn(7, 5, 3, |y, x, c| ((y * 31 + x * 7 + c * 3) % 256) as f64 / 255.0)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.png");
        img.save_png(&p).unwrap();
        let back = ImageBuffer::<f64>::load(&p).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn grayscale_is_channel_mean() {
        let img = ImageBuffer::<f64>::new(1, 1, 3, vec![0.0, 0.3, 0.6]).unwrap();
        assert!((img.grayscale_plane()[0] - 0.3).abs() < 1e-15);
    }
}
