//! Grayscale image carrier, resizing, training-time augmentation and
//! test-time augmentation (TTA).

use rand::Rng;

use crate::error::{Error, Result};
use crate::ndtensor::Tensor;

/// Row-major 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != height * width {
            return Err(Error::ShapeMismatch {
                op: "Image::new",
                left: vec![height, width],
                right: vec![pixels.len()],
            });
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, value: u8) -> Self {
        Self {
            height,
            width,
            pixels: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                pixels.push(f(r, c));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn get(&self, r: usize, c: usize) -> u8 {
        self.pixels[r * self.width + c]
    }

    /// Sub-image starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Self> {
        if top + height > self.height || left + width > self.width || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({top}, {left}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        Ok(Self::from_fn(height, width, |r, c| {
            self.get(top + r, left + c)
        }))
    }

    pub fn center_crop(&self, height: usize, width: usize) -> Result<Self> {
        if height > self.height || width > self.width {
            return Err(Error::invalid(format!(
                "center crop {height}x{width} larger than {}x{} image",
                self.height, self.width
            )));
        }
        self.crop(
            (self.height - height) / 2,
            (self.width - width) / 2,
            height,
            width,
        )
    }

    /// Mirror over the central vertical line.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| {
            self.get(r, self.width - 1 - c)
        })
    }

    /// Rotation about the image center with bilinear resampling; samples
    /// falling outside the source read as 0.
    pub fn rotate(&self, degrees: f64) -> Self {
        if degrees == 0.0 {
            return self.clone();
        }
        let (s, c) = degrees.to_radians().sin_cos();
        let cy = (self.height as f64 - 1.0) / 2.0;
        let cx = (self.width as f64 - 1.0) / 2.0;
        Self::from_fn(self.height, self.width, |r, col| {
            let (y, x) = (r as f64 - cy, col as f64 - cx);
            // inverse map: rotate the output coordinate back by -degrees
            let sx = c * x + s * y + cx;
            let sy = -s * x + c * y + cy;
            to_u8(self.sample_zero_fill(sy, sx))
        })
    }

    fn sample_zero_fill(&self, y: f64, x: f64) -> f64 {
        let (y0, x0) = (y.floor(), x.floor());
        let (fy, fx) = (y - y0, x - x0);
        let px = |r: f64, c: f64| -> f64 {
            if r < 0.0 || c < 0.0 || r >= self.height as f64 || c >= self.width as f64 {
                0.0
            } else {
                self.get(r as usize, c as usize) as f64
            }
        };
        (1.0 - fy) * ((1.0 - fx) * px(y0, x0) + fx * px(y0, x0 + 1.0))
            + fy * ((1.0 - fx) * px(y0 + 1.0, x0) + fx * px(y0 + 1.0, x0 + 1.0))
    }

    /// Bilinear resample to an arbitrary size (half-pixel centers, edge clamp).
    pub fn resize(&self, height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::invalid("resize target must be non-empty"));
        }
        if height == self.height && width == self.width {
            return Ok(self.clone());
        }
        let sy = self.height as f64 / height as f64;
        let sx = self.width as f64 / width as f64;
        let clamp = |v: f64, len: usize| v.clamp(0.0, (len - 1) as f64);
        Ok(Self::from_fn(height, width, |r, c| {
            let y = clamp((r as f64 + 0.5) * sy - 0.5, self.height);
            let x = clamp((c as f64 + 0.5) * sx - 0.5, self.width);
            let (y0, x0) = (y.floor() as usize, x.floor() as usize);
            let (y1, x1) = ((y0 + 1).min(self.height - 1), (x0 + 1).min(self.width - 1));
            let (fy, fx) = (y - y0 as f64, x - x0 as f64);
            let g = |r, c| self.get(r, c) as f64;
            let top = g(y0, x0) + fx * (g(y0, x1) - g(y0, x0));
            let bottom = g(y1, x0) + fx * (g(y1, x1) - g(y1, x0));
            to_u8(top + fy * (bottom - top))
        }))
    }

    /// Intensities scaled to `[0, 1]` as a `[1, 1, h, w]` tensor.
    pub fn to_tensor(&self) -> Tensor {
        images_to_tensor(std::slice::from_ref(self)).expect("single image")
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Stacks equally sized images into a `[n, 1, h, w]` batch scaled to `[0, 1]`.
pub fn images_to_tensor(images: &[Image]) -> Result<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| Error::invalid("empty image batch"))?;
    let (h, w) = (first.height, first.width);
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.height != h || img.width != w {
            return Err(Error::ShapeMismatch {
                op: "images_to_tensor",
                left: vec![h, w],
                right: vec![img.height, img.width],
            });
        }
        data.extend(img.pixels.iter().map(|&p| p as f64 / 255.0));
    }
    Tensor::new(vec![images.len(), 1, h, w], data)
}

/// Most frequent `height / width` ratio among `(height, width)` pairs,
/// compared in reduced integer form; ties go to the smaller ratio.
pub fn most_common_aspect(dims: impl IntoIterator<Item = (usize, usize)>) -> Option<f64> {
    let mut counts = std::collections::BTreeMap::<(usize, usize), usize>::new();
    for (h, w) in dims {
        if h == 0 || w == 0 {
            continue;
        }
        let g = gcd(h, w);
        *counts.entry((h / g, w / g)).or_default() += 1;
    }
    counts
        .into_iter()
        .max_by(|(ra, ca), (rb, cb)| {
            ca.cmp(cb).then_with(|| {
                // smaller ratio wins the tie
                let (a, b) = (ra.0 as f64 / ra.1 as f64, rb.0 as f64 / rb.1 as f64);
                b.total_cmp(&a)
            })
        })
        .map(|((h, w), _)| h as f64 / w as f64)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub const DEFAULT_TARGET_WIDTH: usize = 250;

/// Resizes to `target_width` columns and `round(target_width * aspect)` rows,
/// where `aspect` is the dataset's dominant height/width ratio.
pub fn resize_width(img: &Image, target_width: usize, aspect: f64) -> Result<Image> {
    if img.width < 2 {
        return Err(Error::invalid(format!(
            "resize_width needs width >= 2, got {}",
            img.width
        )));
    }
    if !(aspect > 0.0 && aspect.is_finite()) {
        return Err(Error::invalid(format!(
            "aspect ratio must be positive, got {aspect}"
        )));
    }
    let height = ((target_width as f64 * aspect).round() as usize).max(1);
    img.resize(height, target_width)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub flip_prob: f64,
    pub max_rotation_deg: f64,
    pub crop: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip_prob: 0.5,
            max_rotation_deg: 10.0,
            crop: 236,
        }
    }
}

impl AugmentConfig {
    /// Every transform disabled; crops of `crop x crop` inputs are the input.
    pub fn identity(crop: usize) -> Self {
        Self {
            flip_prob: 0.0,
            max_rotation_deg: 0.0,
            crop,
        }
    }
}

pub fn sample_angle<R: Rng + ?Sized>(cfg: &AugmentConfig, rng: &mut R) -> f64 {
    if cfg.max_rotation_deg > 0.0 {
        rng.random_range(-cfg.max_rotation_deg..=cfg.max_rotation_deg)
    } else {
        0.0
    }
}

/// Random horizontal flip, uniform rotation in `±max_rotation_deg`, then a
/// uniformly placed `crop x crop` window.
pub fn random_augment<R: Rng + ?Sized>(
    img: &Image,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<Image> {
    if img.height < cfg.crop || img.width < cfg.crop {
        return Err(Error::invalid(format!(
            "image {}x{} smaller than {}x{} crop",
            img.height, img.width, cfg.crop, cfg.crop
        )));
    }
    let flip = rng.random::<f64>() < cfg.flip_prob;
    let angle = sample_angle(cfg, rng);
    let top = rng.random_range(0..=img.height - cfg.crop);
    let left = rng.random_range(0..=img.width - cfg.crop);
    let mut out = if flip {
        img.flip_horizontal()
    } else {
        img.clone()
    };
    out = out.rotate(angle);
    out.crop(top, left, cfg.crop, cfg.crop)
}

/// Deterministic evaluation transform.
pub fn eval_transform(img: &Image, cfg: &AugmentConfig) -> Result<Image> {
    img.center_crop(cfg.crop, cfg.crop)
}

pub const TTA_RANDOM_COPIES: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct TtaPrediction {
    pub mean: Vec<f64>,
    /// Per-copy outputs: the random copies first, the center crop last.
    pub copies: Vec<Vec<f64>>,
}

/// Per-label mean over four augmented copies and the center-cropped original.
///
/// `predict` receives all five inputs as one batch and returns one row of
/// per-label probabilities per input.
pub fn tta_predict<R: Rng + ?Sized>(
    mut predict: impl FnMut(&[Image]) -> Result<Vec<Vec<f64>>>,
    img: &Image,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<TtaPrediction> {
    let mut inputs = Vec::with_capacity(TTA_RANDOM_COPIES + 1);
    for _ in 0..TTA_RANDOM_COPIES {
        inputs.push(random_augment(img, cfg, rng)?);
    }
    inputs.push(eval_transform(img, cfg)?);
    let copies = predict(&inputs)?;
    if copies.len() != inputs.len() {
        return Err(Error::ShapeMismatch {
            op: "tta_predict",
            left: vec![inputs.len()],
            right: vec![copies.len()],
        });
    }
    Ok(TtaPrediction {
        mean: column_means(&copies),
        copies,
    })
}

/// Column-wise mean computed as `x0 + mean(x - x0)`, so identical rows give
/// back exactly their value.
pub fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    let Some(first) = rows.first() else {
        return Vec::new();
    };
    let n = rows.len() as f64;
    (0..first.len())
        .map(|k| {
            let base = first[k];
            base + rows.iter().map(|r| r[k] - base).sum::<f64>() / n
        })
        .collect()
}
