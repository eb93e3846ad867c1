use super::{dct, rgb_to_ycbcr, ycbcr_to_rgb, ChromaLayout, Colorspace, ImagePlanes, Plane, QuantTable};
use crate::error::{Error, Result};

/// Quantize one plane blockwise with the given divisors. The plane is padded
/// by replication to a multiple of 8, and the result is cropped back, clamped
/// and rounded to integer levels.
pub fn degrade_plane(plane: &Plane, divisors: &[u16; 64]) -> Plane {
    let bw = plane.width.div_ceil(8) * 8;
    let bh = plane.height.div_ceil(8) * 8;
    let mut padded = plane.pad_replicate(bw, bh);
    let mut block = [0.0f64; 64];
    for by in (0..bh).step_by(8) {
        for bx in (0..bw).step_by(8) {
            for y in 0..8 {
                for x in 0..8 {
                    block[y * 8 + x] = padded.data[(by + y) * bw + bx + x] as f64 - 128.0;
                }
            }
            let mut coeffs = dct::block_dct8(&block);
            for (c, &q) in coeffs.iter_mut().zip(divisors) {
                let q = q as f64;
                *c = (*c / q).round() * q;
            }
            let back = dct::block_idct8(&coeffs);
            for y in 0..8 {
                for x in 0..8 {
                    let v = (back[y * 8 + x] + 128.0).clamp(0.0, 255.0);
                    padded.data[(by + y) * bw + bx + x] = v.round() as f32;
                }
            }
        }
    }
    padded.crop(0, 0, plane.width, plane.height)
}

/// Simulated JPEG encode/decode at quality `qf`. The result keeps the input's
/// colorspace, chroma layout and extents, with samples at integer levels.
pub fn degrade(img: &ImagePlanes, qf: u32) -> Result<ImagePlanes> {
    if img.width == 0 || img.height == 0 {
        return Err(Error::Invalid("cannot degrade an empty image".into()));
    }
    let table = QuantTable::for_quality(qf)?;
    let ycc = match img.colorspace {
        Colorspace::Rgb => rgb_to_ycbcr(img)?,
        Colorspace::YCbCr => img.clone(),
    };
    let sub = ycc.subsample_chroma()?;
    let [y, cb, cr] = &sub.planes;
    let coded = ImagePlanes::new(
        Colorspace::YCbCr,
        [
            degrade_plane(y, &table.luminance),
            degrade_plane(cb, &table.chrominance),
            degrade_plane(cr, &table.chrominance),
        ],
    )?;
    let out = match (img.colorspace, img.chroma_layout) {
        (Colorspace::YCbCr, ChromaLayout::Subsampled420) => coded,
        (Colorspace::YCbCr, ChromaLayout::Full) => coded.upsample_chroma()?,
        (Colorspace::Rgb, _) => ycbcr_to_rgb(&coded)?,
    };
    out.map_planes(Plane::quantized)
}
