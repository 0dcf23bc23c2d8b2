//! Social-network laundering: random large square crop, bilinear resize,
//! random-quality baseline JPEG (4:2:0, Annex K tables scaled by quality).

use std::path::{Path, PathBuf};

use jpeg_encoder::{ColorType, Encoder, SamplingFactor};
use rand::Rng;
use rayon::prelude::*;

use crate::dataset::{DatasetManifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::image::ImageBuffer;
use crate::rng::derive_item_rng;
use crate::scalar::Scalar;

/// Smallest image side accepted by the laundering protocol.
pub const MIN_SIDE: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct LaunderParams {
    pub target_side: usize,
    pub qf_min: u8,
    pub qf_max: u8,
    /// Smallest crop side as a fraction of `min(height, width)`.
    pub min_crop_frac: f64,
    pub global_seed: u64,
}

impl Default for LaunderParams {
    fn default() -> Self {
        Self {
            target_side: 200,
            qf_min: 65,
            qf_max: 100,
            min_crop_frac: 0.625,
            global_seed: 0,
        }
    }
}

impl LaunderParams {
    pub fn validate(&self) -> Result<()> {
        if !(1 <= self.qf_min && self.qf_min <= self.qf_max && self.qf_max <= 100) {
            return Err(Error::InvalidParameter(format!(
                "need 1 <= qf_min <= qf_max <= 100, got {}..{}",
                self.qf_min, self.qf_max
            )));
        }
        if !(self.min_crop_frac > 0.0 && self.min_crop_frac <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "min_crop_frac must be in (0, 1], got {}",
                self.min_crop_frac
            )));
        }
        if self.target_side < MIN_SIDE {
            return Err(Error::InvalidParameter(format!(
                "target_side must be >= {MIN_SIDE}, got {}",
                self.target_side
            )));
        }
        Ok(())
    }

    /// Inclusive crop-side range for an image whose shorter side is `short`.
    pub fn crop_side_range(&self, short: usize) -> (usize, usize) {
        let frac = (self.min_crop_frac * short as f64).ceil() as usize;
        let lo = frac.max(self.target_side.min(short)).min(short);
        (lo, short)
    }
}

/// Random choices made for one image.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LaunderDraw {
    pub crop_x: usize,
    pub crop_y: usize,
    pub crop_side: usize,
    pub qf: u8,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LaunderRecord {
    pub source_path: String,
    pub draw: LaunderDraw,
    pub output_path: String,
}

#[derive(Clone, Debug)]
pub struct Laundered<T> {
    /// Decoded JPEG pixels.
    pub image: ImageBuffer<T>,
    /// The encoded JPEG stream.
    pub jpeg: Vec<u8>,
    pub draw: LaunderDraw,
}

/// Draws the crop window and quality factor.
///
/// Images whose shorter side is below `target_side` are center-cropped to a
/// square (and upscaled later); the position is then not random.
pub fn draw_params(height: usize, width: usize, rng: &mut impl Rng, p: &LaunderParams) -> LaunderDraw {
    let short = height.min(width);
    let (crop_side, crop_x, crop_y) = if short < p.target_side {
        (short, (width - short) / 2, (height - short) / 2)
    } else {
        let (lo, hi) = p.crop_side_range(short);
        let side = rng.gen_range(lo..=hi);
        let x = rng.gen_range(0..=width - side);
        let y = rng.gen_range(0..=height - side);
        (side, x, y)
    };
    let qf = rng.gen_range(p.qf_min..=p.qf_max);
    LaunderDraw {
        crop_x,
        crop_y,
        crop_side,
        qf,
    }
}

/// Bilinear resampling with pixel-centre alignment (`src = (dst + 0.5) * scale - 0.5`,
/// clamped to the image). Output stays in `[0, 1]` as a convex combination.
pub fn resize_bilinear<T: Scalar>(img: &ImageBuffer<T>, out_h: usize, out_w: usize) -> ImageBuffer<T> {
    let (h, w, c) = img.shape();
    let axis = |out: usize, n: usize| -> Vec<(usize, usize, T)> {
        let scale = n as f64 / out as f64;
        (0..out)
            .map(|i| {
                let s = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (n - 1) as f64);
                let i0 = s.floor() as usize;
                let i1 = (i0 + 1).min(n - 1);
                (i0, i1, T::of(s - i0 as f64))
            })
            .collect()
    };
    let ys = axis(out_h, h);
    let xs = axis(out_w, w);
    let src = img.data();
    let row_len = out_w * c;

    // Horizontal pass, only for the source rows the vertical pass touches.
    let mut slot = vec![usize::MAX; h];
    let mut rows: Vec<T> = Vec::new();
    for &(y0, y1, _) in &ys {
        for y in [y0, y1] {
            if slot[y] != usize::MAX {
                continue;
            }
            slot[y] = rows.len() / row_len.max(1);
            let line = &src[y * w * c..(y + 1) * w * c];
            for &(x0, x1, wx) in &xs {
                for ch in 0..c {
                    rows.push(line[x0 * c + ch] * (T::one() - wx) + line[x1 * c + ch] * wx);
                }
            }
        }
    }

    let mut data = Vec::with_capacity(out_h * row_len);
    for &(y0, y1, wy) in &ys {
        let top = &rows[slot[y0] * row_len..(slot[y0] + 1) * row_len];
        let bottom = &rows[slot[y1] * row_len..(slot[y1] + 1) * row_len];
        data.extend(top.iter().zip(bottom).map(|(&t, &b)| {
            let v = t * (T::one() - wy) + b * wy;
            v.max(T::zero()).min(T::one())
        }));
    }
    ImageBuffer::from_raw_unchecked(out_h, out_w, c, data)
}

/// Baseline JPEG at quality `qf`, 4:2:0 chroma subsampling. Gray images are
/// encoded as three identical channels.
pub fn encode_jpeg<T: Scalar>(img: &ImageBuffer<T>, qf: u8) -> Result<Vec<u8>> {
    let mut bytes = img.to_u8();
    if img.channels() == 1 {
        bytes = bytes.iter().flat_map(|&v| [v, v, v]).collect();
    }
    let (w, h) = (
        u16::try_from(img.width()).map_err(|_| Error::Encode("image too wide for JPEG".into()))?,
        u16::try_from(img.height()).map_err(|_| Error::Encode("image too tall for JPEG".into()))?,
    );
    let mut out = Vec::new();
    let mut encoder = Encoder::new(&mut out, qf);
    encoder.set_sampling_factor(SamplingFactor::F_2_2);
    encoder
        .encode(&bytes, w, h, ColorType::Rgb)
        .map_err(|e| Error::Encode(e.to_string()))?;
    Ok(out)
}

/// Crop, resize to `target_side × target_side`, JPEG round trip.
pub fn launder_image<T: Scalar>(
    image: &ImageBuffer<T>,
    rng: &mut impl Rng,
    p: &LaunderParams,
) -> Result<Laundered<T>> {
    p.validate()?;
    let (h, w, _) = image.shape();
    if h < MIN_SIDE || w < MIN_SIDE {
        return Err(Error::Undersized {
            name: "laundering input".into(),
            height: h,
            width: w,
            required: MIN_SIDE,
        });
    }
    let draw = draw_params(h, w, rng, p);
    let cropped = image.crop(draw.crop_y, draw.crop_x, draw.crop_side, draw.crop_side)?;
    let resized = resize_bilinear(&cropped, p.target_side, p.target_side);
    let jpeg = encode_jpeg(&resized, draw.qf)?;
    let decoded = ImageBuffer::decode(&jpeg)?;
    Ok(Laundered {
        image: decoded,
        jpeg,
        draw,
    })
}

/// Result of laundering a whole manifest.
#[derive(Debug)]
pub struct LaunderOutcome {
    /// Successfully laundered images, labels unchanged, rooted at the output directory.
    pub manifest: DatasetManifest,
    pub records: Vec<LaunderRecord>,
    /// `(source path, error)` for every image that could not be laundered.
    pub failures: Vec<(String, Error)>,
}

/// Name of the laundered file for manifest entry `index`.
pub fn output_name(index: usize, source: &str) -> String {
    let stem = Path::new(source)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "image".into());
    format!("{index:06}_{stem}.jpg")
}

/// Launders every entry with the stream derived from `(global_seed, index)`
/// and writes `out_dir/<index>_<stem>.jpg`. Entries run in parallel; results
/// are assembled in manifest order.
pub fn launder_manifest<T: Scalar>(
    m: &DatasetManifest,
    p: &LaunderParams,
    out_dir: &Path,
) -> Result<LaunderOutcome> {
    p.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let results: Vec<Result<LaunderRecord>> = m
        .entries()
        .par_iter()
        .enumerate()
        .map(|(index, entry)| {
            let img = ImageBuffer::<T>::load(&m.resolve(entry))?;
            let mut rng = derive_item_rng(p.global_seed, index as u64);
            let out = launder_image(&img, &mut rng, p)?;
            let name = output_name(index, &entry.path);
            let target: PathBuf = out_dir.join(&name);
            std::fs::write(&target, &out.jpeg).map_err(|e| Error::io(&target, e))?;
            Ok(LaunderRecord {
                source_path: entry.path.clone(),
                draw: out.draw,
                output_path: name,
            })
        })
        .collect();

    let mut entries = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (entry, result) in m.entries().iter().zip(results) {
        match result {
            Ok(rec) => {
                entries.push(ManifestEntry {
                    path: rec.output_path.clone(),
                    label: entry.label.clone(),
                });
                records.push(rec);
            }
            Err(e) => failures.push((entry.path.clone(), e)),
        }
    }
    Ok(LaunderOutcome {
        manifest: DatasetManifest::new(out_dir, entries)?,
        records,
        failures,
    })
}

/// Writes `path,crop_x,crop_y,crop_side,qf,output_path` rows.
pub fn write_records_csv(records: &[LaunderRecord], path: &Path) -> Result<()> {
    let mut w = crate::dataset::create_csv(path)?;
    let io = |e: csv::Error| crate::dataset::csv_error(path, e);
    w.write_record(["path", "crop_x", "crop_y", "crop_side", "qf", "output_path"])
        .map_err(io)?;
    for r in records {
        w.write_record([
            r.source_path.clone(),
            r.draw.crop_x.to_string(),
            r.draw.crop_y.to_string(),
            r.draw.crop_side.to_string(),
            r.draw.qf.to_string(),
            r.output_path.clone(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
