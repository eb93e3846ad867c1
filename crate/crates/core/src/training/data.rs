use std::path::Path;

use rand::Rng;

use super::TrainConfig;
use crate::codec::{degrade, list_images, load_image, rgb_to_ycbcr, ImagePlanes, Plane};
use crate::error::{Error, Result};
use crate::tensor::{Shape, Tensor};

/// Training images, already converted to YCbCr.
pub struct Dataset {
    pub images: Vec<(String, ImagePlanes)>,
    /// Files too small for the configured patch.
    pub skipped: Vec<String>,
}

impl Dataset {
    pub fn load(dir: impl AsRef<Path>, patch_size: usize) -> Result<Self> {
        let mut images = Vec::new();
        for path in list_images(dir.as_ref())? {
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            images.push((name, load_image(&path)?));
        }
        Self::from_images(images, patch_size)
    }

    pub fn from_images(images: Vec<(String, ImagePlanes)>, patch_size: usize) -> Result<Self> {
        let mut kept = Vec::new();
        let mut skipped = Vec::new();
        for (name, img) in images {
            if img.width < patch_size || img.height < patch_size {
                log::warn!("skipping {name}: {}x{} is smaller than the {patch_size} patch", img.width, img.height);
                skipped.push(name);
            } else {
                kept.push((name, rgb_to_ycbcr(&img)?));
            }
        }
        if kept.is_empty() {
            return Err(Error::Invalid(format!("no training image is at least {patch_size}x{patch_size}")));
        }
        Ok(Dataset { images: kept, skipped })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Clean and degraded patches in `[-1, 1]`, `N x C x P x P`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub hq: Tensor<f32>,
    pub lq: Tensor<f32>,
    pub qfs: Vec<u32>,
}

pub fn normalize(v: f32) -> f32 {
    v / 127.5 - 1.0
}

pub fn denormalize(v: f32) -> f32 {
    (v + 1.0) * 127.5
}

fn augment(p: &Plane, flip_h: bool, flip_v: bool, turns: usize) -> Plane {
    let mut p = if flip_h { p.flip_horizontal() } else { p.clone() };
    if flip_v {
        p = p.flip_vertical();
    }
    for _ in 0..turns {
        p = p.rotate90();
    }
    p
}

/// Copies the first `channels` planes of each image into an `N x C x H x W`
/// tensor, normalized to `[-1, 1]`.
pub fn planes_to_tensor(images: &[ImagePlanes], channels: usize) -> Result<Tensor<f32>> {
    let first = images.first().ok_or_else(|| Error::Invalid("empty image list".into()))?;
    let (w, h) = (first.width, first.height);
    let mut data = Vec::with_capacity(images.len() * channels * w * h);
    for img in images {
        if (img.width, img.height) != (w, h) {
            return Err(Error::Shape("images in a batch must share extents".into()));
        }
        let full = img.upsample_chroma()?;
        for plane in &full.planes[..channels] {
            data.extend(plane.data.iter().map(|&v| normalize(v)));
        }
    }
    Tensor::from_vec(Shape::new(images.len(), channels, h, w), data)
}

/// Draws one training batch: random crop, flips and quarter turns, then
/// degradation at a quality factor drawn from the configured set.
pub fn sample_batch(data: &Dataset, cfg: &TrainConfig, rng: &mut impl Rng) -> Result<Batch> {
    let p = cfg.patch_size;
    let mut hq = Vec::with_capacity(cfg.batch_size);
    let mut lq = Vec::with_capacity(cfg.batch_size);
    let mut qfs = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let (_, img) = &data.images[rng.random_range(0..data.images.len())];
        let x0 = rng.random_range(0..=img.width - p);
        let y0 = rng.random_range(0..=img.height - p);
        let (flip_h, flip_v) = (rng.random_bool(0.5), rng.random_bool(0.5));
        let turns = rng.random_range(0..4);
        let qf = cfg.qfs[rng.random_range(0..cfg.qfs.len())];
        let planes = img
            .planes
            .clone()
            .map(|pl| augment(&pl.crop(x0, y0, p, p), flip_h, flip_v, turns));
        let patch = ImagePlanes::new(img.colorspace, planes)?;
        lq.push(degrade(&patch, qf)?);
        hq.push(patch);
        qfs.push(qf);
    }
    Ok(Batch {
        hq: planes_to_tensor(&hq, cfg.channels)?,
        lq: planes_to_tensor(&lq, cfg.channels)?,
        qfs,
    })
}
