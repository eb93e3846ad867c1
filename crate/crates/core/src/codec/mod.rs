//! Image planes, color conversion, and a block-DCT quantization operator that
//! reproduces the artifacts of a JPEG encode/decode cycle at a given quality.

mod color;
mod dct;
mod degrade;
mod io;
mod quant;

pub use color::{rgb_to_ycbcr, ycbcr_to_rgb};
pub use dct::{block_dct8, block_idct8, Block};
pub use degrade::{degrade, degrade_plane};
pub use io::{decode_image, list_images, load_image, save_image};
pub use quant::{QuantTable, BASE_CHROMINANCE, BASE_LUMINANCE};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Colorspace {
    Rgb,
    YCbCr,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChromaLayout {
    Full,
    /// Chroma planes at `ceil(w/2) x ceil(h/2)`.
    Subsampled420,
}

/// A single channel of samples in `[0, 255]`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "plane {width}x{height} needs {} samples, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Plane { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f32) -> Self {
        Plane {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Sample with coordinates clamped into the plane.
    pub fn get_clamped(&self, x: isize, y: isize) -> f32 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.get(x, y)
    }

    pub fn crop(&self, x0: usize, y0: usize, width: usize, height: usize) -> Plane {
        let mut data = Vec::with_capacity(width * height);
        for y in y0..y0 + height {
            data.extend_from_slice(&self.data[y * self.width + x0..y * self.width + x0 + width]);
        }
        Plane { width, height, data }
    }

    /// Extends to `width x height` by replicating the last row and column.
    pub fn pad_replicate(&self, width: usize, height: usize) -> Plane {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(self.get_clamped(x as isize, y as isize));
            }
        }
        Plane { width, height, data }
    }

    pub fn map(&self, mut f: impl FnMut(f32) -> f32) -> Plane {
        Plane {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamp_to_byte_range(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 255.0));
    }

    /// Rounded to integer levels, as an 8-bit decoder would emit.
    pub fn quantized(&self) -> Plane {
        self.map(|v| v.round().clamp(0.0, 255.0))
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width) {
            data.extend(row.iter().rev());
        }
        Plane { data, ..*self }
    }

    pub fn flip_vertical(&self) -> Plane {
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks_exact(self.width).rev() {
            data.extend_from_slice(row);
        }
        Plane { data, ..*self }
    }

    /// Quarter turn counter-clockwise.
    pub fn rotate90(&self) -> Plane {
        let (w, h) = (self.width, self.height);
        let mut data = Vec::with_capacity(w * h);
        for y in 0..w {
            for x in 0..h {
                data.push(self.get(w - 1 - y, x));
            }
        }
        Plane {
            width: h,
            height: w,
            data,
        }
    }

    /// 2x2 box average; odd trailing rows/columns average what exists.
    pub fn downsample2(&self) -> Plane {
        let (w, h) = (self.width.div_ceil(2), self.height.div_ceil(2));
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let mut sum = 0.0;
                let mut count = 0.0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (sx, sy) = (2 * x + dx, 2 * y + dy);
                        if sx < self.width && sy < self.height {
                            sum += self.get(sx, sy);
                            count += 1.0;
                        }
                    }
                }
                data.push(sum / count);
            }
        }
        Plane { width: w, height: h, data }
    }

    /// Nearest-neighbour upsampling by 2, cropped to `width x height`.
    pub fn upsample2(&self, width: usize, height: usize) -> Plane {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(self.get((x / 2).min(self.width - 1), (y / 2).min(self.height - 1)));
            }
        }
        Plane { width, height, data }
    }
}

/// A decoded image: three planes tagged with their colorspace.
#[derive(Clone, Debug, PartialEq)]
pub struct ImagePlanes {
    pub width: usize,
    pub height: usize,
    pub colorspace: Colorspace,
    pub chroma_layout: ChromaLayout,
    pub planes: [Plane; 3],
}

impl ImagePlanes {
    pub fn new(colorspace: Colorspace, planes: [Plane; 3]) -> Result<Self> {
        let (width, height) = (planes[0].width, planes[0].height);
        if width == 0 || height == 0 {
            return Err(Error::Invalid("image has zero extent".into()));
        }
        let full = planes[1..].iter().all(|p| p.width == width && p.height == height);
        let sub = planes[1..]
            .iter()
            .all(|p| p.width == width.div_ceil(2) && p.height == height.div_ceil(2));
        let chroma_layout = if full {
            ChromaLayout::Full
        } else if sub && colorspace == Colorspace::YCbCr {
            ChromaLayout::Subsampled420
        } else {
            return Err(Error::Shape(format!(
                "plane extents {:?} inconsistent with a {width}x{height} image",
                planes.iter().map(|p| (p.width, p.height)).collect::<Vec<_>>()
            )));
        };
        Ok(ImagePlanes {
            width,
            height,
            colorspace,
            chroma_layout,
            planes,
        })
    }

    /// Interleaved 8-bit RGB.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}x{height} RGB needs {} bytes, got {}",
                width * height * 3,
                rgb.len()
            )));
        }
        let channel = |c: usize| Plane {
            width,
            height,
            data: rgb.iter().skip(c).step_by(3).map(|&b| b as f32).collect(),
        };
        Self::new(Colorspace::Rgb, [channel(0), channel(1), channel(2)])
    }

    pub fn from_gray8(width: usize, height: usize, gray: &[u8]) -> Result<Self> {
        let p = Plane::new(width, height, gray.iter().map(|&b| b as f32).collect())?;
        Self::new(Colorspace::Rgb, [p.clone(), p.clone(), p])
    }

    /// Rounded, clamped interleaved bytes. Requires RGB at full resolution.
    pub fn to_rgb8(&self) -> Result<Vec<u8>> {
        if self.colorspace != Colorspace::Rgb {
            return Err(Error::Invalid("to_rgb8 needs an RGB image".into()));
        }
        let mut out = Vec::with_capacity(self.width * self.height * 3);
        for i in 0..self.width * self.height {
            for p in &self.planes {
                out.push(p.data[i].round().clamp(0.0, 255.0) as u8);
            }
        }
        Ok(out)
    }

    pub fn map_planes(&self, f: impl Fn(&Plane) -> Plane) -> Result<Self> {
        let [a, b, c] = &self.planes;
        Self::new(self.colorspace, [f(a), f(b), f(c)])
    }

    /// Chroma at 4:2:0 by 2x2 box averaging (YCbCr only).
    pub fn subsample_chroma(&self) -> Result<Self> {
        if self.colorspace != Colorspace::YCbCr {
            return Err(Error::Invalid("chroma subsampling needs a YCbCr image".into()));
        }
        if self.chroma_layout == ChromaLayout::Subsampled420 {
            return Ok(self.clone());
        }
        let [y, cb, cr] = &self.planes;
        Self::new(Colorspace::YCbCr, [y.clone(), cb.downsample2(), cr.downsample2()])
    }

    /// Chroma back to full resolution by nearest-neighbour replication.
    pub fn upsample_chroma(&self) -> Result<Self> {
        if self.chroma_layout == ChromaLayout::Full {
            return Ok(self.clone());
        }
        let [y, cb, cr] = &self.planes;
        Self::new(
            self.colorspace,
            [
                y.clone(),
                cb.upsample2(self.width, self.height),
                cr.upsample2(self.width, self.height),
            ],
        )
    }

    /// Luminance rounded to 8-bit levels.
    pub fn luma8(&self) -> Result<Plane> {
        let ycc = match self.colorspace {
            Colorspace::Rgb => rgb_to_ycbcr(self)?,
            Colorspace::YCbCr => self.clone(),
        };
        Ok(ycc.planes[0].quantized())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chroma_extents_follow_layout() {
        let y = Plane::filled(5, 3, 1.0);
        let img = ImagePlanes::new(Colorspace::YCbCr, [y.clone(), y.clone(), y]).unwrap();
        let sub = img.subsample_chroma().unwrap();
        assert_eq!(sub.chroma_layout, ChromaLayout::Subsampled420);
        assert_eq!((sub.planes[1].width, sub.planes[1].height), (3, 2));
        let up = sub.upsample_chroma().unwrap();
        assert_eq!(up, img);
    }

    #[test]
    fn rotation_and_flips_are_permutations() {
        let p = Plane::new(3, 2, (0..6).map(|v| v as f32).collect()).unwrap();
        let r = p.rotate90();
        assert_eq!((r.width, r.height), (2, 3));
        assert_eq!(r.data, vec![2.0, 5.0, 1.0, 4.0, 0.0, 3.0]);
        assert_eq!(r.rotate90().rotate90().rotate90(), p);
        assert_eq!(p.flip_horizontal().data, vec![2.0, 1.0, 0.0, 5.0, 4.0, 3.0]);
        assert_eq!(p.flip_vertical().flip_vertical(), p);
    }
}
