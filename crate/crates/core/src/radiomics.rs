//! Classical 79-feature image descriptor: 72 GLCM texture statistics, six
//! intensity moments and the histogram entropy.
//!
//! Feature order (see [`feature_names`]):
//!
//! 1. for offset in {1, 2, 4, 6}, for angle in {0, 45, 90}: contrast,
//!    dissimilarity, homogeneity, ASM, correlation, GLCM entropy;
//! 2. mean, std, m2, m3, m4, m5 of intensities rescaled to `[0, 1]`;
//! 3. Shannon entropy (bits) of the 256-bin histogram.
//!
//! Angle displacements in `(row, col)`: 0° = `(0, +d)`, 45° = `(-d, +d)`,
//! 90° = `(-d, 0)`.

use std::io::Write;

use crate::augment::Image;
use crate::error::{Error, Result};

pub const OFFSETS: [usize; 4] = [1, 2, 4, 6];
pub const ANGLES: [Angle; 3] = [Angle::Deg0, Angle::Deg45, Angle::Deg90];
pub const DEFAULT_LEVELS: usize = 32;
pub const GLCM_STAT_NAMES: [&str; 6] = [
    "contrast",
    "dissimilarity",
    "homogeneity",
    "asm",
    "correlation",
    "entropy",
];
pub const N_FEATURES: usize = OFFSETS.len() * ANGLES.len() * GLCM_STAT_NAMES.len() + 6 + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Angle {
    Deg0,
    Deg45,
    Deg90,
}

impl Angle {
    pub fn degrees(self) -> u32 {
        match self {
            Angle::Deg0 => 0,
            Angle::Deg45 => 45,
            Angle::Deg90 => 90,
        }
    }

    /// `(d_row, d_col)` for a displacement of `offset` pixels.
    pub fn displacement(self, offset: usize) -> (isize, isize) {
        let d = offset as isize;
        match self {
            Angle::Deg0 => (0, d),
            Angle::Deg45 => (-d, d),
            Angle::Deg90 => (-d, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlcmConfig {
    pub offsets: Vec<usize>,
    pub angles: Vec<Angle>,
    pub levels: usize,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            offsets: OFFSETS.to_vec(),
            angles: ANGLES.to_vec(),
            levels: DEFAULT_LEVELS,
        }
    }
}

/// Uniform intensity binning of 0..=255 into `levels` bins.
pub fn quantize(v: u8, levels: usize) -> usize {
    v as usize * levels / 256
}

/// Square gray-level co-occurrence matrix, row-major `levels x levels`.
#[derive(Debug, Clone, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub p: Vec<f64>,
}

impl Glcm {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }
}

/// Symmetric, normalized co-occurrence counts of quantized pixel pairs at
/// the given displacement.
pub fn glcm(img: &Image, offset: usize, angle: Angle, levels: usize) -> Result<Glcm> {
    if levels < 2 {
        return Err(Error::invalid(format!(
            "GLCM needs >= 2 levels, got {levels}"
        )));
    }
    if offset == 0 || offset >= img.height().min(img.width()) {
        return Err(Error::invalid(format!(
            "GLCM offset {offset} must be in 1..{} for a {}x{} image",
            img.height().min(img.width()),
            img.height(),
            img.width()
        )));
    }
    let (dr, dc) = angle.displacement(offset);
    let (h, w) = (img.height() as isize, img.width() as isize);
    let q: Vec<usize> = img.pixels().iter().map(|&v| quantize(v, levels)).collect();
    let mut counts = vec![0u64; levels * levels];
    let rows = (-dr).max(0)..(h - dr.max(0));
    let cols = (-dc).max(0)..(w - dc.max(0));
    for r in rows {
        for c in cols.clone() {
            let a = q[(r * w + c) as usize];
            let b = q[((r + dr) * w + c + dc) as usize];
            counts[a * levels + b] += 1;
            counts[b * levels + a] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(Glcm {
        levels,
        p: counts.iter().map(|&c| c as f64 / total as f64).collect(),
    })
}

/// `[contrast, dissimilarity, homogeneity, ASM, correlation, entropy]`.
/// Correlation is 0 when either marginal has zero variance; entropy is in bits.
pub fn glcm_stats(m: &Glcm) -> [f64; 6] {
    let l = m.levels;
    let (mut contrast, mut dissim, mut homog, mut asm, mut entropy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = m.at(i, j);
            let d = i as f64 - j as f64;
            contrast += d * d * p;
            dissim += d.abs() * p;
            homog += p / (1.0 + d * d);
            asm += p * p;
            if p > 0.0 {
                entropy -= p * p.log2();
            }
            mu_i += i as f64 * p;
            mu_j += j as f64 * p;
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..l {
        for j in 0..l {
            let p = m.at(i, j);
            let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += di * di * p;
            var_j += dj * dj * p;
            cov += di * dj * p;
        }
    }
    let correlation = if var_i > 0.0 && var_j > 0.0 {
        cov / (var_i * var_j).sqrt()
    } else {
        0.0
    };
    [contrast, dissim, homog, asm, correlation, entropy]
}

/// `[mean, std, m2, m3, m4, m5]` of intensities rescaled to `[0, 1]`, where
/// `m_k` is the k-th central moment and `std` the population deviation.
pub fn intensity_stats(img: &Image) -> [f64; 6] {
    let n = img.pixels().len() as f64;
    let xs = img.pixels().iter().map(|&v| v as f64 / 255.0);
    // shifted by the first pixel so constant images have exactly zero spread
    let x0 = img.pixels()[0] as f64 / 255.0;
    let mean = x0 + xs.clone().map(|x| x - x0).sum::<f64>() / n;
    let mut m = [0.0; 4];
    for x in xs {
        let d = x - mean;
        let d2 = d * d;
        m[0] += d2;
        m[1] += d2 * d;
        m[2] += d2 * d2;
        m[3] += d2 * d2 * d;
    }
    m.iter_mut().for_each(|v| *v /= n);
    [mean, m[0].sqrt(), m[0], m[1], m[2], m[3]]
}

/// Shannon entropy (bits) of the 256-bin intensity histogram.
pub fn entropy(img: &Image) -> f64 {
    let mut hist = [0u64; 256];
    for &v in img.pixels() {
        hist[v as usize] += 1;
    }
    let n = img.pixels().len() as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Fixed-order 79-element descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

pub fn extract_features(img: &Image) -> Result<FeatureVector> {
    extract_features_with(img, &GlcmConfig::default())
}

pub fn extract_features_with(img: &Image, cfg: &GlcmConfig) -> Result<FeatureVector> {
    let mut values = Vec::with_capacity(cfg.offsets.len() * cfg.angles.len() * 6 + 7);
    for &offset in &cfg.offsets {
        for &angle in &cfg.angles {
            values.extend(glcm_stats(&glcm(img, offset, angle, cfg.levels)?));
        }
    }
    values.extend(intensity_stats(img));
    values.push(entropy(img));
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("feature {i} is {}", values[i])));
    }
    Ok(FeatureVector(values))
}

pub fn feature_names() -> Vec<String> {
    let mut names = Vec::with_capacity(N_FEATURES);
    for offset in OFFSETS {
        for angle in ANGLES {
            for stat in GLCM_STAT_NAMES {
                names.push(format!("glcm_d{offset}_a{}_{stat}", angle.degrees()));
            }
        }
    }
    names.extend(["mean", "std", "m2", "m3", "m4", "m5", "entropy"].map(String::from));
    names
}

/// Writes `image_id,<79 feature columns>`.
pub fn write_feature_csv<'a>(
    w: impl Write,
    rows: impl IntoIterator<Item = (&'a str, &'a FeatureVector)>,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["image_id".to_string()];
    header.extend(feature_names());
    out.write_record(&header)?;
    for (id, fv) in rows {
        let mut rec = vec![id.to_string()];
        rec.extend(fv.0.iter().map(|v| format!("{v:?}")));
        out.write_record(&rec)?;
    }
    out.flush().map_err(|e| Error::io("<feature csv>", e))?;
    Ok(())
}

/// Reads a feature CSV back into `(image_id, features)` rows.
pub fn read_feature_csv(r: impl std::io::Read) -> Result<Vec<(String, FeatureVector)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_string();
        let values = rec
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                path: "<feature csv>".into(),
                line: i + 2,
                msg: e.to_string(),
            })?;
        rows.push((id, FeatureVector(values)));
    }
    Ok(rows)
}
