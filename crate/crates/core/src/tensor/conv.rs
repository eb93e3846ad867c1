//! Convolution by patch gathering (im2col) and a matrix product. The same
//! gather/scatter pair serves the forward pass and both backward directions.

use super::{Element, Shape, Tensor};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeometry {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeometry {
    pub fn new(input: Shape, weight: Shape, bias: Option<Shape>, stride: usize) -> Result<Self> {
        let [_, in_ch, h, w] = input.0;
        let [out_ch, w_in, kh, kw] = weight.0;
        if stride == 0 {
            return Err(Error::Shape("conv2d stride must be at least 1".into()));
        }
        if w_in != in_ch {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {in_ch} channels (dim 1) but weight expects {w_in}"
            )));
        }
        if kh == 0 || kw == 0 {
            return Err(Error::Shape("conv2d kernel extents must be positive".into()));
        }
        if kh > h {
            return Err(Error::Shape(format!("conv2d kernel height {kh} exceeds input height {h} (dim 2)")));
        }
        if kw > w {
            return Err(Error::Shape(format!("conv2d kernel width {kw} exceeds input width {w} (dim 3)")));
        }
        if let Some(b) = bias {
            if b != Shape::new(1, out_ch, 1, 1) {
                return Err(Error::Shape(format!(
                    "conv2d bias shape {b} does not match {out_ch} output channels"
                )));
            }
        }
        Ok(ConvGeometry {
            in_ch,
            out_ch,
            kh,
            kw,
            stride,
            h,
            w,
            oh: (h - kh) / stride + 1,
            ow: (w - kw) / stride + 1,
        })
    }

    fn k(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.oh * self.ow
    }

    fn im2col<T: Element>(&self, x: &[T], cols: &mut [T]) {
        let p = self.p();
        for ci in 0..self.in_ch {
            let plane = &x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let row = (ci * self.kh + dy) * self.kw + dx;
                    let dst = &mut cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let src = &plane[(oy * self.stride + dy) * self.w..];
                        let out = &mut dst[oy * self.ow..(oy + 1) * self.ow];
                        if self.stride == 1 {
                            out.copy_from_slice(&src[dx..dx + self.ow]);
                        } else {
                            for (ox, o) in out.iter_mut().enumerate() {
                                *o = src[ox * self.stride + dx];
                            }
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Element>(&self, cols: &[T], x: &mut [T]) {
        let p = self.p();
        for ci in 0..self.in_ch {
            let plane = &mut x[ci * self.h * self.w..(ci + 1) * self.h * self.w];
            for dy in 0..self.kh {
                for dx in 0..self.kw {
                    let row = (ci * self.kh + dy) * self.kw + dx;
                    let src = &cols[row * p..(row + 1) * p];
                    for oy in 0..self.oh {
                        let base = (oy * self.stride + dy) * self.w + dx;
                        let line = &src[oy * self.ow..(oy + 1) * self.ow];
                        for (ox, &v) in line.iter().enumerate() {
                            plane[base + ox * self.stride] = plane[base + ox * self.stride] + v;
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> Result<Tensor<T>> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), bias.map(|b| b.shape()), stride)?;
    let n = x.shape().batch();
    let (k, p) = (g.k(), g.p());
    let mut out = Tensor::zeros(Shape::new(n, g.out_ch, g.oh, g.ow));
    let mut cols = vec![T::zero(); k * p];
    let in_len = g.in_ch * g.h * g.w;
    let out_len = g.out_ch * p;
    for s in 0..n {
        g.im2col(&x.data()[s * in_len..(s + 1) * in_len], &mut cols);
        let dst = &mut out.data_mut()[s * out_len..(s + 1) * out_len];
        T::gemm(g.out_ch, k, p, weight.data(), false, &cols, false, T::zero(), dst);
        if let Some(b) = bias {
            for (row, &bv) in dst.chunks_exact_mut(p).zip(b.data()) {
                row.iter_mut().for_each(|v| *v = *v + bv);
            }
        }
    }
    Ok(out)
}

pub(crate) struct ConvGrads<T> {
    pub input: Option<Tensor<T>>,
    pub weight: Option<Tensor<T>>,
    pub bias: Option<Tensor<T>>,
}

pub(crate) fn backward<T: Element>(
    x: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    grad_out: &Tensor<T>,
    need: (bool, bool, bool),
) -> ConvGrads<T> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), None, stride)
        .expect("geometry validated in forward");
    let n = x.shape().batch();
    let (k, p) = (g.k(), g.p());
    let in_len = g.in_ch * g.h * g.w;
    let out_len = g.out_ch * p;
    let (need_x, need_w, need_b) = need;

    let mut gx = need_x.then(|| Tensor::zeros(x.shape()));
    let mut gw = need_w.then(|| Tensor::zeros(weight.shape()));
    let mut gb = need_b.then(|| Tensor::zeros(Shape::new(1, g.out_ch, 1, 1)));
    let mut cols = vec![T::zero(); k * p];

    for s in 0..n {
        let go = &grad_out.data()[s * out_len..(s + 1) * out_len];
        if let Some(gw) = gw.as_mut() {
            g.im2col(&x.data()[s * in_len..(s + 1) * in_len], &mut cols);
            T::gemm(g.out_ch, p, k, go, false, &cols, true, T::one(), gw.data_mut());
        }
        if let Some(gb) = gb.as_mut() {
            for (acc, row) in gb.data_mut().iter_mut().zip(go.chunks_exact(p)) {
                *acc = *acc + row.iter().copied().sum::<T>();
            }
        }
        if let Some(gx) = gx.as_mut() {
            T::gemm(k, g.out_ch, p, weight.data(), true, go, false, T::zero(), &mut cols);
            g.col2im(&cols, &mut gx.data_mut()[s * in_len..(s + 1) * in_len]);
        }
    }
    ConvGrads {
        input: gx,
        weight: gw,
        bias: gb,
    }
}
