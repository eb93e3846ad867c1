use super::{ChromaLayout, Colorspace, ImagePlanes, Plane};
use crate::error::{Error, Result};

// Full-range BT.601 (JFIF) coefficients.
const KR: f32 = 0.299;
const KG: f32 = 0.587;
const KB: f32 = 0.114;

pub fn rgb_to_ycbcr(img: &ImagePlanes) -> Result<ImagePlanes> {
    if img.colorspace != Colorspace::Rgb {
        return Err(Error::Invalid("rgb_to_ycbcr expects an RGB image".into()));
    }
    let n = img.width * img.height;
    let [r, g, b] = &img.planes;
    let mut y = Vec::with_capacity(n);
    let mut cb = Vec::with_capacity(n);
    let mut cr = Vec::with_capacity(n);
    for i in 0..n {
        let (rv, gv, bv) = (r.data[i], g.data[i], b.data[i]);
        y.push((KR * rv + KG * gv + KB * bv).clamp(0.0, 255.0));
        cb.push((128.0 - 0.168_736 * rv - 0.331_264 * gv + 0.5 * bv).clamp(0.0, 255.0));
        cr.push((128.0 + 0.5 * rv - 0.418_688 * gv - 0.081_312 * bv).clamp(0.0, 255.0));
    }
    let plane = |data| Plane {
        width: img.width,
        height: img.height,
        data,
    };
    ImagePlanes::new(Colorspace::YCbCr, [plane(y), plane(cb), plane(cr)])
}

/// Inverse transform; 4:2:0 input is upsampled first.
pub fn ycbcr_to_rgb(img: &ImagePlanes) -> Result<ImagePlanes> {
    if img.colorspace != Colorspace::YCbCr {
        return Err(Error::Invalid("ycbcr_to_rgb expects a YCbCr image".into()));
    }
    let img = if img.chroma_layout == ChromaLayout::Full {
        img.clone()
    } else {
        img.upsample_chroma()?
    };
    let n = img.width * img.height;
    let [y, cb, cr] = &img.planes;
    let mut r = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut b = Vec::with_capacity(n);
    for i in 0..n {
        let (yv, cbv, crv) = (y.data[i], cb.data[i] - 128.0, cr.data[i] - 128.0);
        r.push((yv + 1.402 * crv).clamp(0.0, 255.0));
        g.push((yv - 0.344_136 * cbv - 0.714_136 * crv).clamp(0.0, 255.0));
        b.push((yv + 1.772 * cbv).clamp(0.0, 255.0));
    }
    let plane = |data| Plane {
        width: img.width,
        height: img.height,
        data,
    };
    ImagePlanes::new(Colorspace::Rgb, [plane(r), plane(g), plane(b)])
}
