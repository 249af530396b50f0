//! Procedural texture benchmark for exercising transfer learning at desk
//! scale. Classes `0..SOURCE_CLASSES` form the pretraining task; the last
//! class is held out as the binary target.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ExperimentData, Manifest, ManifestRow};
use crate::augment::Image;
use crate::error::Result;

pub const N_TEXTURES: usize = 14;
pub const SOURCE_CLASSES: usize = N_TEXTURES - 1;
pub const TARGET_CLASS: usize = N_TEXTURES - 1;

fn grating(size: usize, period: f64, theta_deg: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let period = period * rng.random_range(0.9..1.1);
    let theta = (theta_deg + rng.random_range(-5.0..5.0)) * PI / 180.0;
    let phase = rng.random_range(0.0..2.0 * PI);
    let (c, s) = (theta.cos(), theta.sin());
    field(size, |r, col| {
        0.5 + 0.5 * (2.0 * PI * (col * c + r * s) / period + phase).sin()
    })
}

fn checker(size: usize, cell: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let (dr, dc) = (rng.random_range(0..cell * 2), rng.random_range(0..cell * 2));
    field(size, |r, c| {
        (((r as usize + dr) / cell + (c as usize + dc) / cell) % 2) as f64
    })
}

fn blur(v: &[f64], size: usize) -> Vec<f64> {
    let at = |r: isize, c: isize| {
        let r = r.clamp(0, size as isize - 1) as usize;
        let c = c.clamp(0, size as isize - 1) as usize;
        v[r * size + c]
    };
    field(size, |r, c| {
        let (r, c) = (r as isize, c as isize);
        let mut s = 0.0;
        for dr in -1..=1 {
            for dc in -1..=1 {
                s += at(r + dr, c + dc);
            }
        }
        s / 9.0
    })
}

fn stretch(mut v: Vec<f64>) -> Vec<f64> {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        v.iter_mut().for_each(|x| *x = (*x - lo) / (hi - lo));
    }
    v
}

fn field(size: usize, f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            v.push(f(r as f64, c as f64));
        }
    }
    v
}

fn base_pattern(class: usize, size: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let angles = [0.0, 45.0, 90.0, 135.0];
    match class {
        0..=3 => grating(size, 4.0, angles[class], rng),
        4..=7 => grating(size, 8.0, angles[class - 4], rng),
        8 => checker(size, 2, rng),
        9 => checker(size, 4, rng),
        10 => {
            let mut v = vec![0.0; size * size];
            for x in v.iter_mut() {
                if rng.random::<f64>() < 0.08 {
                    *x = 1.0;
                }
            }
            v
        }
        11 => {
            let noise: Vec<f64> = (0..size * size).map(|_| rng.random()).collect();
            stretch(blur(&blur(&noise, size), size))
        }
        12 => (0..size * size).map(|_| rng.random()).collect(),
        _ => {
            let a = grating(size, 6.0, 0.0, rng);
            let b = grating(size, 6.0, 90.0, rng);
            a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect()
        }
    }
}

/// One `size x size` sample of texture `class`, with random contrast,
/// brightness and additive Gaussian noise.
pub fn texture(class: usize, size: usize, rng: &mut ChaCha8Rng) -> Image {
    assert!(class < N_TEXTURES, "texture class {class} out of range");
    let base = base_pattern(class, size, rng);
    let contrast = rng.random_range(0.5..1.0);
    let offset = rng.random_range(0.0..1.0 - contrast);
    let noise = Normal::new(0.0, 0.08).expect("valid sigma");
    let pixels = base
        .iter()
        .map(|&x| {
            let v = offset + contrast * x + noise.sample(rng);
            (v.clamp(0.0, 1.0) * 255.0).round() as u8
        })
        .collect();
    Image::new(size, size, pixels).expect("square buffer")
}

fn rows(labels: Vec<Vec<bool>>) -> Vec<ManifestRow> {
    labels
        .into_iter()
        .enumerate()
        .map(|(i, labels)| ManifestRow {
            path: PathBuf::from(format!("synthetic/{i:05}.png")),
            labels,
        })
        .collect()
}

/// Multi-label pretraining set: `per_class` one-hot samples of each source
/// texture, interleaved by class.
pub fn source_data(per_class: usize, size: usize, seed: u64) -> Result<ExperimentData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for _ in 0..per_class {
        for class in 0..SOURCE_CLASSES {
            images.push(texture(class, size, &mut rng));
            labels.push((0..SOURCE_CLASSES).map(|k| k == class).collect());
        }
    }
    let names = (0..SOURCE_CLASSES).map(|k| format!("texture{k}")).collect();
    ExperimentData::new(Manifest::from_rows(names, rows(labels))?, images)
}

/// Binary target set: the held-out texture against negatives drawn uniformly
/// from the source textures. Rows are shuffled.
pub fn target_data(n_pos: usize, n_neg: usize, size: usize, seed: u64) -> Result<ExperimentData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos = vec![true; n_pos];
    pos.extend(vec![false; n_neg]);
    rand::seq::SliceRandom::shuffle(pos.as_mut_slice(), &mut rng);
    let images = pos
        .iter()
        .map(|&p| {
            let class = if p {
                TARGET_CLASS
            } else {
                rng.random_range(0..SOURCE_CLASSES)
            };
            texture(class, size, &mut rng)
        })
        .collect();
    let labels = pos.into_iter().map(|p| vec![p]).collect();
    ExperimentData::new(
        Manifest::from_rows(vec![format!("texture{TARGET_CLASS}")], rows(labels))?,
        images,
    )
}
