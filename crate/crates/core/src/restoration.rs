//! Whole-image and tiled inference with a trained generator.

use std::path::Path;

use crate::codec::{load_image, rgb_to_ycbcr, save_image, ycbcr_to_rgb, Colorspace, ImagePlanes, Plane};
use crate::error::{Error, Result};
use crate::networks::{LayerDesc, Network, NetworkKind, SUBPATCH};
use crate::tensor::{Shape, Tensor};
use crate::training::{denormalize, load_generator, normalize};

pub const DEFAULT_TILE: usize = 128;
pub const DEFAULT_OVERLAP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RestoreMode {
    Whole,
    /// Square tiles of `tile` pixels overlapping by `overlap`, blended with
    /// linear feathering across the overlap.
    Tiled { tile: usize, overlap: usize },
}

impl RestoreMode {
    pub fn tiled() -> Self {
        RestoreMode::Tiled {
            tile: DEFAULT_TILE,
            overlap: DEFAULT_OVERLAP,
        }
    }
}

/// Smallest even extent `>= n` that the generator accepts.
fn padded_extent(n: usize) -> usize {
    n.max(SUBPATCH).next_multiple_of(2)
}

/// Tile origins along one axis: evenly spaced by `tile - overlap`, the last
/// one flush with the far edge.
fn tile_starts(len: usize, tile: usize, overlap: usize) -> Vec<usize> {
    if len <= tile {
        return vec![0];
    }
    let step = tile - overlap;
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|&s| s + tile < len).collect();
    starts.push(len - tile);
    starts
}

/// Blend weight along one axis at offset `i` of a tile of length `n`. Edges
/// that touch the image border keep full weight.
fn ramp(i: usize, n: usize, overlap: usize, at_start: bool, at_end: bool) -> f32 {
    let mut w: f32 = 1.0;
    if overlap > 0 {
        if !at_start {
            w = w.min((i as f32 + 0.5) / overlap as f32);
        }
        if !at_end {
            w = w.min(((n - i) as f32 - 0.5) / overlap as f32);
        }
    }
    w.min(1.0)
}

/// Radius in input pixels of the region that influences one output pixel.
pub fn receptive_radius(layers: &[LayerDesc]) -> usize {
    fn walk(layers: &[LayerDesc], scale: &mut f64) -> f64 {
        let mut r = 0.0;
        for layer in layers {
            match layer {
                LayerDesc::Conv { kernel, stride, .. } => {
                    r += (*kernel / 2) as f64 * *scale;
                    *scale *= *stride as f64;
                }
                LayerDesc::Residual { body, .. } => r += walk(body, scale),
                LayerDesc::UpsampleNearest(f) => *scale /= *f as f64,
                LayerDesc::MeanPool(f) => {
                    r += (*f - 1) as f64 * *scale;
                    *scale *= *f as f64;
                }
            }
        }
        r
    }
    walk(layers, &mut 1.0).ceil() as usize
}

pub struct Restorer<'a> {
    generator: &'a Network<f32>,
    mode: RestoreMode,
}

impl<'a> Restorer<'a> {
    pub fn new(generator: &'a Network<f32>, mode: RestoreMode) -> Result<Self> {
        if generator.spec().kind != NetworkKind::Generator {
            return Err(Error::Invalid("restoration needs a generator network".into()));
        }
        if let RestoreMode::Tiled { tile, overlap } = mode {
            if tile < SUBPATCH || tile % 2 != 0 || overlap % 2 != 0 || overlap >= tile {
                return Err(Error::Invalid(format!(
                    "tile {tile} must be even and at least {SUBPATCH}, overlap {overlap} even and smaller than the tile"
                )));
            }
        }
        Ok(Restorer { generator, mode })
    }

    fn channels(&self) -> usize {
        self.generator.spec().in_channels
    }

    fn run(&self, x: &Tensor<f32>) -> Result<Tensor<f32>> {
        match self.mode {
            RestoreMode::Whole => self.generator.infer(x),
            RestoreMode::Tiled { tile, overlap } => self.run_tiled(x, tile, overlap),
        }
    }

    /// Each tile is inferred together with a context halo covering the
    /// receptive field, which is dropped before blending, so tile borders
    /// only differ from whole-image inference through rounding.
    fn run_tiled(&self, x: &Tensor<f32>, tile: usize, overlap: usize) -> Result<Tensor<f32>> {
        let Shape([n, c, h, w]) = x.shape();
        let halo = receptive_radius(&self.generator.spec().layers).next_multiple_of(2);
        let (th, tw) = (tile.min(h), tile.min(w));
        let ys = tile_starts(h, th, overlap);
        let xs = tile_starts(w, tw, overlap);
        let mut acc = vec![0.0f32; n * c * h * w];
        let mut weight = vec![0.0f32; h * w];
        for &y0 in &ys {
            for &x0 in &xs {
                let (wy0, wx0) = (y0.saturating_sub(halo), x0.saturating_sub(halo));
                let wh = (y0 + th + halo).min(h) - wy0;
                let ww = (x0 + tw + halo).min(w) - wx0;
                let window = Tensor::from_fn(Shape::new(n, c, wh, ww), |i| {
                    let (xx, yy, pl) = (i % ww, (i / ww) % wh, i / (ww * wh));
                    x.data()[(pl * h + wy0 + yy) * w + wx0 + xx]
                });
                let out = self.generator.infer(&window)?;
                let (oy, ox) = (y0 - wy0, x0 - wx0);
                for yy in 0..th {
                    let wy = ramp(yy, th, overlap, y0 == 0, y0 + th == h);
                    for xx in 0..tw {
                        let wt = wy * ramp(xx, tw, overlap, x0 == 0, x0 + tw == w);
                        let dst = (y0 + yy) * w + x0 + xx;
                        weight[dst] += wt;
                        for pl in 0..n * c {
                            acc[pl * h * w + dst] += wt * out.data()[(pl * wh + oy + yy) * ww + ox + xx];
                        }
                    }
                }
            }
        }
        for (i, v) in acc.iter_mut().enumerate() {
            *v /= weight[i % (h * w)];
        }
        Tensor::from_vec(x.shape(), acc)
    }

    /// Restores an image of any size; the result has the input's extents
    /// and colorspace. With a single-channel generator only luminance is
    /// processed and chroma passes through.
    pub fn restore(&self, img: &ImagePlanes) -> Result<ImagePlanes> {
        let ycc = match img.colorspace {
            Colorspace::Rgb => rgb_to_ycbcr(img)?,
            Colorspace::YCbCr => img.upsample_chroma()?,
        };
        let (w, h) = (img.width, img.height);
        let (pw, ph) = (padded_extent(w), padded_extent(h));
        let c = self.channels();
        let mut data = Vec::with_capacity(c * pw * ph);
        for p in &ycc.planes[..c] {
            data.extend(p.pad_replicate(pw, ph).data.iter().map(|&v| normalize(v)));
        }
        let x = Tensor::from_vec(Shape::new(1, c, ph, pw), data)?;
        let y = self.run(&x)?;
        let mut planes = ycc.planes.clone();
        for (k, plane) in planes[..c].iter_mut().enumerate() {
            let full = Plane::new(pw, ph, y.plane(0, k).iter().map(|&v| denormalize(v).clamp(0.0, 255.0)).collect())?;
            *plane = full.crop(0, 0, w, h);
        }
        let out = ImagePlanes::new(Colorspace::YCbCr, planes)?;
        match img.colorspace {
            Colorspace::Rgb => ycbcr_to_rgb(&out),
            Colorspace::YCbCr => Ok(out),
        }
    }
}

pub fn restore_image(generator: &Network<f32>, img: &ImagePlanes, mode: RestoreMode) -> Result<ImagePlanes> {
    Restorer::new(generator, mode)?.restore(img)
}

/// Loads a generator checkpoint, restores `input` and writes `output`.
pub fn restore_file(checkpoint: &Path, input: &Path, output: &Path, mode: RestoreMode) -> Result<()> {
    let (generator, _) = load_generator(checkpoint)?;
    let img = load_image(input)?;
    let out = restore_image(&generator, &img, mode)?;
    save_image(&out, output)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::networks::{build_discriminator, build_generator_with_blocks};

    fn image(w: usize, h: usize) -> ImagePlanes {
        let rgb: Vec<u8> = (0..w * h * 3).map(|i| ((i * 37) % 251) as u8).collect();
        ImagePlanes::from_rgb8(w, h, &rgb).unwrap()
    }

    #[test]
    fn odd_extents_round_trip() {
        assert_eq!((padded_extent(129), padded_extent(127), padded_extent(5)), (130, 128, 16));
        let g = Network::init(build_generator_with_blocks(3, 1).unwrap(), 0);
        for mode in [RestoreMode::Whole, RestoreMode::Tiled { tile: 64, overlap: 16 }] {
            let out = restore_image(&g, &image(129, 127), mode).unwrap();
            assert_eq!((out.width, out.height, out.colorspace), (129, 127, Colorspace::Rgb));
        }
        let tiny = restore_image(&g, &image(3, 9), RestoreMode::Whole).unwrap();
        assert_eq!((tiny.width, tiny.height), (3, 9));
    }

    #[test]
    fn receptive_radius_of_generator() {
        // head 1, two convs per block at half resolution 2 each, up and tail 1
        let spec = build_generator_with_blocks(1, 3).unwrap();
        assert_eq!(receptive_radius(&spec.layers), 1 + 12 + 1 + 1);
    }

    #[test]
    fn tile_layout_covers_axis() {
        assert_eq!(tile_starts(100, 128, 16), vec![0]);
        assert_eq!(tile_starts(256, 128, 16), vec![0, 112, 128]);
        assert_eq!(tile_starts(240, 128, 16), vec![0, 112]);
        assert!(ramp(0, 64, 16, true, false) == 1.0 && ramp(63, 64, 16, true, false) < 0.05);
    }

    #[test]
    fn luma_generator_keeps_chroma() {
        let g = Network::init(build_generator_with_blocks(1, 1).unwrap(), 1);
        let img = rgb_to_ycbcr(&image(32, 32)).unwrap();
        let out = restore_image(&g, &img, RestoreMode::Whole).unwrap();
        assert_eq!(out.colorspace, Colorspace::YCbCr);
        assert_eq!(out.planes[1..], img.planes[1..]);
        assert_ne!(out.planes[0], img.planes[0]);
    }

    #[test]
    fn single_tile_equals_whole() {
        let g = Network::init(build_generator_with_blocks(1, 1).unwrap(), 2);
        let img = image(48, 40);
        let whole = restore_image(&g, &img, RestoreMode::Whole).unwrap();
        let tiled = restore_image(&g, &img, RestoreMode::Tiled { tile: 64, overlap: 16 }).unwrap();
        assert_eq!(whole, tiled);
        assert_eq!(whole, restore_image(&g, &img, RestoreMode::Whole).unwrap());
    }

    #[test]
    fn rejects_bad_inputs() {
        let d = Network::init(build_discriminator(1).unwrap(), 0);
        assert!(Restorer::new(&d, RestoreMode::Whole).is_err());
        let g = Network::init(build_generator_with_blocks(1, 1).unwrap(), 0);
        assert!(Restorer::new(&g, RestoreMode::Tiled { tile: 15, overlap: 2 }).is_err());
        assert!(Restorer::new(&g, RestoreMode::Tiled { tile: 32, overlap: 32 }).is_err());
    }
}
