use super::conv;
use super::graph::{Node, Op};
use super::{Element, Graph, Shape, Tensor, Var};
use crate::error::{Error, Result};

fn same_shape(op: &str, a: Shape, b: Shape) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!("{op}: operand shapes differ ({a} vs {b})")));
    }
    Ok(())
}

fn zip_map<T: Element>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("shapes checked")
}

fn sum_f64<T: Element>(t: &Tensor<T>) -> f64 {
    t.data().iter().map(|v| v.as_f64()).sum()
}

/// Logistic function, split by sign so that `exp` never overflows, and kept
/// inside the open interval: results that round to 0 or 1 are pinned to the
/// nearest representable value strictly inside.
#[inline]
fn sigmoid<T: Element>(x: T) -> T {
    let y = if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    };
    let below_one = T::one() - T::epsilon() / (T::one() + T::one());
    y.max(T::min_positive_value()).min(below_one)
}

fn replicate_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

impl<T: Element> Graph<T> {
    fn binary(&self, op: &str, a: Var, b: Var, f: impl Fn(T, T) -> T, make: fn(Var, Var) -> Op<T>) -> Result<Var> {
        let value = {
            let (va, vb) = (self.value(a), self.value(b));
            same_shape(op, va.shape(), vb.shape())?;
            zip_map(&va, &vb, f)
        };
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(value, rg, make(a, b)))
    }

    fn unary(&self, a: Var, f: impl Fn(T) -> T, op: Op<T>) -> Var {
        let value = self.value(a).map(f);
        let rg = self.requires_grad(a);
        self.push(value, rg, op)
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub)
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    pub fn div(&self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, |x, y| x / y, Op::Div)
    }

    pub fn square(&self, a: Var) -> Var {
        self.mul(a, a).expect("same operand")
    }

    pub fn scale(&self, a: Var, factor: T) -> Var {
        self.unary(a, |x| x * factor, Op::Scale(a, factor))
    }

    pub fn add_scalar(&self, a: Var, c: T) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a))
    }

    /// `1 - a`
    pub fn one_minus(&self, a: Var) -> Var {
        let neg = self.scale(a, -T::one());
        self.add_scalar(neg, T::one())
    }

    pub fn abs(&self, a: Var) -> Var {
        self.unary(a, |x| x.abs(), Op::Abs(a))
    }

    pub fn leaky_relu(&self, a: Var, slope: T) -> Var {
        self.unary(a, |x| if x >= T::zero() { x } else { slope * x }, Op::LeakyRelu(a, slope))
    }

    pub fn tanh(&self, a: Var) -> Var {
        self.unary(a, |x| x.tanh(), Op::Tanh(a))
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    /// `ln(clamp(a, eps, 1 - eps))`; zero gradient where the clamp is active.
    pub fn log_clamped(&self, a: Var, eps: T) -> Var {
        let hi = T::one() - eps;
        self.unary(a, |x| x.max(eps).min(hi).ln(), Op::LogClamped(a, eps))
    }

    pub fn sum(&self, a: Var) -> Var {
        let s = sum_f64(&self.value(a));
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(T::cast_f64(s)), rg, Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let m = {
            let v = self.value(a);
            sum_f64(&v) / v.len() as f64
        };
        let rg = self.requires_grad(a);
        self.push(Tensor::scalar(T::cast_f64(m)), rg, Op::Mean(a))
    }

    pub fn reshape(&self, a: Var, shape: Shape) -> Result<Var> {
        let value = self.value(a).clone().reshaped(shape)?;
        let rg = self.requires_grad(a);
        Ok(self.push(value, rg, Op::Reshape(a)))
    }

    /// Border replication by `pad` pixels on every side of each plane.
    pub fn pad_replicate(&self, a: Var, pad: usize) -> Var {
        if pad == 0 {
            return a;
        }
        let value = {
            let x = self.value(a);
            let [n, c, h, w] = x.shape().0;
            let (oh, ow) = (h + 2 * pad, w + 2 * pad);
            let mut out = Tensor::zeros(Shape::new(n, c, oh, ow));
            for s in 0..n {
                for ch in 0..c {
                    let src = x.plane(s, ch);
                    let dst = out.plane_mut(s, ch);
                    for y in 0..oh {
                        let sy = replicate_index(y as isize - pad as isize, h);
                        for xx in 0..ow {
                            let sx = replicate_index(xx as isize - pad as isize, w);
                            dst[y * ow + xx] = src[sy * w + sx];
                        }
                    }
                }
            }
            out
        };
        let rg = self.requires_grad(a);
        self.push(value, rg, Op::PadReplicate(a, pad))
    }

    /// Valid (unpadded) cross-correlation. `weight` is `out x in x kh x kw`,
    /// `bias` is `1 x out x 1 x 1`.
    pub fn conv2d(&self, input: Var, weight: Var, bias: Option<Var>, stride: usize) -> Result<Var> {
        let value = {
            let x = self.value(input);
            let w = self.value(weight);
            let b = bias.map(|b| self.value(b));
            conv::forward(&x, &w, b.as_deref(), stride)?
        };
        let mut deps = vec![input, weight];
        deps.extend(bias);
        let rg = self.any_requires_grad(&deps);
        Ok(self.push(
            value,
            rg,
            Op::Conv2d {
                input,
                weight,
                bias,
                stride,
            },
        ))
    }

    pub fn upsample_nearest(&self, a: Var, factor: usize) -> Result<Var> {
        if factor == 0 {
            return Err(Error::Shape("upsample factor must be at least 1".into()));
        }
        if factor == 1 {
            return Ok(a);
        }
        let value = {
            let x = self.value(a);
            let [n, c, h, w] = x.shape().0;
            let (oh, ow) = (h * factor, w * factor);
            let mut out = Tensor::zeros(Shape::new(n, c, oh, ow));
            for s in 0..n {
                for ch in 0..c {
                    let src = x.plane(s, ch);
                    let dst = out.plane_mut(s, ch);
                    for y in 0..oh {
                        let row = &src[(y / factor) * w..(y / factor + 1) * w];
                        for (xx, d) in dst[y * ow..(y + 1) * ow].iter_mut().enumerate() {
                            *d = row[xx / factor];
                        }
                    }
                }
            }
            out
        };
        let rg = self.requires_grad(a);
        Ok(self.push(value, rg, Op::UpsampleNearest(a, factor)))
    }

    /// Non-overlapping `size x size` mean pooling.
    pub fn avg_pool(&self, a: Var, size: usize) -> Result<Var> {
        let value = {
            let x = self.value(a);
            let [n, c, h, w] = x.shape().0;
            if size == 0 || h % size != 0 || w % size != 0 {
                return Err(Error::Shape(format!("avg_pool({size}) needs extents divisible by {size}, got {h}x{w}")));
            }
            let (oh, ow) = (h / size, w / size);
            let inv = T::cast_f64(1.0 / (size * size) as f64);
            let mut out = Tensor::zeros(Shape::new(n, c, oh, ow));
            for s in 0..n {
                for ch in 0..c {
                    let src = x.plane(s, ch);
                    let dst = out.plane_mut(s, ch);
                    for y in 0..h {
                        for xx in 0..w {
                            let o = (y / size) * ow + xx / size;
                            dst[o] = dst[o] + src[y * w + xx];
                        }
                    }
                    dst.iter_mut().for_each(|v| *v = *v * inv);
                }
            }
            out
        };
        let rg = self.requires_grad(a);
        Ok(self.push(value, rg, Op::AvgPool(a, size)))
    }

    /// Stacks `b`'s channels after `a`'s.
    pub fn concat_channels(&self, a: Var, b: Var) -> Result<Var> {
        let value = {
            let (x, y) = (self.value(a), self.value(b));
            let [n, ca, h, w] = x.shape().0;
            let [nb, cb, hb, wb] = y.shape().0;
            if n != nb || h != hb || w != wb {
                return Err(Error::Shape(format!(
                    "concat_channels: extents differ ({} vs {})",
                    x.shape(),
                    y.shape()
                )));
            }
            let mut data = Vec::with_capacity(n * (ca + cb) * h * w);
            let (la, lb) = (ca * h * w, cb * h * w);
            for s in 0..n {
                data.extend_from_slice(&x.data()[s * la..(s + 1) * la]);
                data.extend_from_slice(&y.data()[s * lb..(s + 1) * lb]);
            }
            Tensor::from_vec(Shape::new(n, ca + cb, h, w), data)?
        };
        let rg = self.any_requires_grad(&[a, b]);
        Ok(self.push(value, rg, Op::ConcatChannels(a, b)))
    }

    /// Splits every plane into a grid of `size x size` tiles, stacked along the
    /// batch dimension (sample-major, then row-major over the grid).
    pub fn subpatches(&self, a: Var, size: usize) -> Result<Var> {
        let value = partition_subpatches(&self.value(a), size)?;
        let rg = self.requires_grad(a);
        Ok(self.push(value, rg, Op::SubPatches(a)))
    }
}

/// Tensor-level sub-patch partition (see [`Graph::subpatches`]).
pub fn partition_subpatches<T: Element>(x: &Tensor<T>, size: usize) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.shape().0;
    if size == 0 || h % size != 0 || w % size != 0 {
        return Err(Error::Shape(format!(
            "sub-patch size {size} does not divide extents {h}x{w}"
        )));
    }
    let (gh, gw) = (h / size, w / size);
    let p = gh * gw;
    let mut out = Tensor::zeros(Shape::new(n * p, c, size, size));
    for s in 0..n {
        for gy in 0..gh {
            for gx in 0..gw {
                let dst_n = s * p + gy * gw + gx;
                for ch in 0..c {
                    let src = x.plane(s, ch);
                    let dst = out.plane_mut(dst_n, ch);
                    for y in 0..size {
                        let off = (gy * size + y) * w + gx * size;
                        dst[y * size..(y + 1) * size].copy_from_slice(&src[off..off + size]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`partition_subpatches`] for a source of `height x width`.
pub fn reassemble_subpatches<T: Element>(tiles: &Tensor<T>, height: usize, width: usize) -> Result<Tensor<T>> {
    let [np, c, size, sw] = tiles.shape().0;
    if size != sw || size == 0 || !height.is_multiple_of(size) || !width.is_multiple_of(size) {
        return Err(Error::Shape(format!(
            "tiles {} cannot reassemble into {height}x{width}",
            tiles.shape()
        )));
    }
    let (gh, gw) = (height / size, width / size);
    let p = gh * gw;
    if np % p != 0 {
        return Err(Error::Shape(format!("{np} tiles is not a multiple of the {p}-tile grid")));
    }
    let n = np / p;
    let mut out = Tensor::zeros(Shape::new(n, c, height, width));
    for s in 0..n {
        for gy in 0..gh {
            for gx in 0..gw {
                let src_n = s * p + gy * gw + gx;
                for ch in 0..c {
                    let src = tiles.plane(src_n, ch).to_vec();
                    let dst = out.plane_mut(s, ch);
                    for y in 0..size {
                        let off = (gy * size + y) * width + gx * size;
                        dst[off..off + size].copy_from_slice(&src[y * size..(y + 1) * size]);
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Vector-Jacobian products for one recorded node.
pub(crate) fn backward_rule<T: Element>(nodes: &[Node<T>], node: &Node<T>, g: &Tensor<T>) -> Vec<(Var, Tensor<T>)> {
    let val = |v: Var| &nodes[v.0].value;
    let needs = |v: Var| nodes[v.0].requires_grad;
    let mut out = Vec::new();
    match &node.op {
        Op::Leaf => {}
        Op::Add(a, b) => {
            if needs(*a) {
                out.push((*a, g.clone()));
            }
            if needs(*b) {
                out.push((*b, g.clone()));
            }
        }
        Op::Sub(a, b) => {
            if needs(*a) {
                out.push((*a, g.clone()));
            }
            if needs(*b) {
                out.push((*b, g.map(|v| -v)));
            }
        }
        Op::Mul(a, b) => {
            if needs(*a) {
                out.push((*a, zip_map(g, val(*b), |gv, bv| gv * bv)));
            }
            if needs(*b) {
                out.push((*b, zip_map(g, val(*a), |gv, av| gv * av)));
            }
        }
        Op::Div(a, b) => {
            let bv = val(*b);
            if needs(*a) {
                out.push((*a, zip_map(g, bv, |gv, d| gv / d)));
            }
            if needs(*b) {
                let q = &node.value;
                let t = zip_map(g, q, |gv, qv| gv * qv);
                out.push((*b, zip_map(&t, bv, |tv, d| -tv / d)));
            }
        }
        Op::Scale(a, f) => out.push((*a, g.map(|v| v * *f))),
        Op::AddScalar(a) | Op::Reshape(a) => {
            let shape = val(*a).shape();
            out.push((*a, g.clone().reshaped(shape).expect("element count preserved")));
        }
        Op::Abs(a) => {
            let x = val(*a);
            out.push((
                *a,
                zip_map(g, x, |gv, xv| {
                    if xv > T::zero() {
                        gv
                    } else if xv < T::zero() {
                        -gv
                    } else {
                        T::zero()
                    }
                }),
            ));
        }
        Op::LeakyRelu(a, slope) => {
            out.push((*a, zip_map(g, val(*a), |gv, xv| if xv >= T::zero() { gv } else { gv * *slope })));
        }
        Op::Tanh(a) => out.push((*a, zip_map(g, &node.value, |gv, y| gv * (T::one() - y * y)))),
        Op::Sigmoid(a) => out.push((*a, zip_map(g, &node.value, |gv, y| gv * y * (T::one() - y)))),
        Op::LogClamped(a, eps) => {
            let hi = T::one() - *eps;
            out.push((
                *a,
                zip_map(g, val(*a), |gv, xv| if xv >= *eps && xv <= hi { gv / xv } else { T::zero() }),
            ));
        }
        Op::Sum(a) => out.push((*a, Tensor::full(val(*a).shape(), g.item()))),
        Op::Mean(a) => {
            let x = val(*a);
            let gv = T::cast_f64(g.item().as_f64() / x.len() as f64);
            out.push((*a, Tensor::full(x.shape(), gv)));
        }
        Op::PadReplicate(a, pad) => {
            let pad = *pad;
            let shape = val(*a).shape();
            let [n, c, h, w] = shape.0;
            let ow = w + 2 * pad;
            let oh = h + 2 * pad;
            let mut gx = Tensor::zeros(shape);
            for s in 0..n {
                for ch in 0..c {
                    let src = g.plane(s, ch);
                    let dst = gx.plane_mut(s, ch);
                    for y in 0..oh {
                        let sy = replicate_index(y as isize - pad as isize, h);
                        for xx in 0..ow {
                            let sx = replicate_index(xx as isize - pad as isize, w);
                            dst[sy * w + sx] = dst[sy * w + sx] + src[y * ow + xx];
                        }
                    }
                }
            }
            out.push((*a, gx));
        }
        Op::Conv2d {
            input,
            weight,
            bias,
            stride,
        } => {
            let need = (needs(*input), needs(*weight), bias.is_some_and(needs));
            let grads = conv::backward(val(*input), val(*weight), *stride, g, need);
            if let Some(gx) = grads.input {
                out.push((*input, gx));
            }
            if let Some(gw) = grads.weight {
                out.push((*weight, gw));
            }
            if let (Some(b), Some(gb)) = (bias, grads.bias) {
                out.push((*b, gb));
            }
        }
        Op::UpsampleNearest(a, factor) => {
            let f = *factor;
            let shape = val(*a).shape();
            let [n, c, h, w] = shape.0;
            let ow = w * f;
            let mut gx = Tensor::zeros(shape);
            for s in 0..n {
                for ch in 0..c {
                    let src = g.plane(s, ch);
                    let dst = gx.plane_mut(s, ch);
                    for y in 0..h * f {
                        for xx in 0..ow {
                            let o = (y / f) * w + xx / f;
                            dst[o] = dst[o] + src[y * ow + xx];
                        }
                    }
                }
            }
            out.push((*a, gx));
        }
        Op::AvgPool(a, size) => {
            let k = *size;
            let shape = val(*a).shape();
            let [n, c, h, w] = shape.0;
            let ow = w / k;
            let inv = T::cast_f64(1.0 / (k * k) as f64);
            let mut gx = Tensor::zeros(shape);
            for s in 0..n {
                for ch in 0..c {
                    let src = g.plane(s, ch);
                    let dst = gx.plane_mut(s, ch);
                    for y in 0..h {
                        for xx in 0..w {
                            dst[y * w + xx] = src[(y / k) * ow + xx / k] * inv;
                        }
                    }
                }
            }
            out.push((*a, gx));
        }
        Op::ConcatChannels(a, b) => {
            let sa = val(*a).shape();
            let sb = val(*b).shape();
            let (la, lb) = (sa.channels() * sa.plane(), sb.channels() * sb.plane());
            let n = sa.batch();
            let mut ga = Vec::with_capacity(n * la);
            let mut gb = Vec::with_capacity(n * lb);
            for s in 0..n {
                let base = s * (la + lb);
                ga.extend_from_slice(&g.data()[base..base + la]);
                gb.extend_from_slice(&g.data()[base + la..base + la + lb]);
            }
            if needs(*a) {
                out.push((*a, Tensor::from_vec(sa, ga).expect("split")));
            }
            if needs(*b) {
                out.push((*b, Tensor::from_vec(sb, gb).expect("split")));
            }
        }
        Op::SubPatches(a) => {
            let shape = val(*a).shape();
            let gx = reassemble_subpatches(g, shape.height(), shape.width()).expect("grid validated in forward");
            out.push((*a, gx));
        }
        Op::Custom(inputs, op) => {
            let ins: Vec<&Tensor<T>> = inputs.iter().map(|v| val(*v)).collect();
            let grads = op.backward(&ins, &node.value, g);
            for (v, gv) in inputs.iter().zip(grads) {
                if needs(*v) {
                    out.push((*v, gv));
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Shape, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(shape, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::from_fn(Shape::new(1, 1, 4, 4), |i| i as f64));
        let w = g.constant(Tensor::full(Shape::new(1, 1, 1, 1), 1.0));
        let b = g.constant(Tensor::zeros(Shape::new(1, 1, 1, 1)));
        let y = g.conv2d(x, w, Some(b), 1).unwrap();
        assert_eq!(g.value(y).data(), g.value(x).data());
    }

    #[test]
    fn strided_padded_conv_extent() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(Shape::new(1, 1, 4, 4)));
        let p = g.pad_replicate(x, 1);
        let w = g.constant(Tensor::zeros(Shape::new(1, 1, 3, 3)));
        let y = g.conv2d(p, w, None, 2).unwrap();
        assert_eq!(g.shape(y), Shape::new(1, 1, 2, 2));
    }

    #[test]
    fn replicate_padded_conv_matches_sliding_window_oracle() {
        let g = Graph::<f64>::new();
        let x = g.constant(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]));
        let p = g.pad_replicate(x, 1);
        let w = g.constant(Tensor::full(Shape::new(1, 1, 3, 3), 1.0));
        let y = g.conv2d(p, w, None, 1).unwrap();
        // brute force: each output sums the 3x3 neighbourhood with clamped indices
        let src = [[1.0, 2.0], [3.0, 4.0]];
        let mut want = [0.0; 4];
        for oy in 0..2i32 {
            for ox in 0..2i32 {
                let mut s = 0.0;
                for dy in -1..=1 {
                    for dx in -1..=1 {
                        s += src[(oy + dy).clamp(0, 1) as usize][(ox + dx).clamp(0, 1) as usize];
                    }
                }
                want[(oy * 2 + ox) as usize] = s;
            }
        }
        assert_eq!(want[0], 18.0);
        assert_eq!(g.value(y).data(), &want);
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let g = Graph::<f64>::new();
        let x = g.constant(Tensor::zeros(Shape::new(1, 2, 4, 4)));
        let w = g.constant(Tensor::zeros(Shape::new(1, 3, 3, 3)));
        let err = g.conv2d(x, w, None, 1).unwrap_err().to_string();
        assert!(err.contains("channel"), "{err}");
    }

    #[test]
    fn activations_follow_definitions() {
        let g = Graph::<f64>::new();
        let x = g.constant(t(Shape::new(1, 1, 1, 3), &[-1.0, 0.0, 2.0]));
        let y = g.leaky_relu(x, 0.2);
        assert_eq!(g.value(y).data(), &[-0.2, 0.0, 2.0]);
        let z = g.constant(Tensor::scalar(0.0));
        assert_eq!(g.value(g.tanh(z)).item(), 0.0);
        assert_eq!(g.value(g.sigmoid(z)).item(), 0.5);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let g = Graph::<f32>::new();
        let x = g.constant(Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![-40.0f32, 40.0]).unwrap());
        let y = g.sigmoid(x);
        let v = g.value(y);
        // reference: 1 / (1 + exp(-x)) evaluated in f64, then rounded
        let lo = (1.0 / (1.0 + 40f64.exp())) as f32;
        assert!(v.data()[0] > 0.0 && v.data()[0] < 1.0);
        assert!((v.data()[0] - lo).abs() <= lo * 1e-6);
        assert!(v.data()[1] < 1.0 && v.data()[1].is_finite());
        let g64 = Graph::<f64>::new();
        let x = g64.constant(t(Shape::new(1, 1, 1, 2), &[-40.0, 40.0]));
        let y = g64.sigmoid(x);
        let v = g64.value(y);
        let lo = 1.0 / (1.0 + 40f64.exp());
        assert!((v.data()[0] - lo).abs() <= lo * 1e-14);
        assert!(v.data()[0] > 0.0 && v.data()[1] < 1.0);
        assert_eq!(v.data()[1], 1.0 - f64::EPSILON / 2.0);
    }

    #[test]
    fn upsample_replicates_blocks() {
        let g = Graph::<f64>::new();
        let x = g.leaf(t(Shape::new(1, 1, 2, 2), &[1.0, 2.0, 3.0, 4.0]), true);
        assert_eq!(g.upsample_nearest(x, 1).unwrap(), x);
        let y = g.upsample_nearest(x, 2).unwrap();
        assert_eq!(
            g.value(y).data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let s = g.sum(y);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[4.0; 4]);
    }

    #[test]
    fn backward_of_simple_sums() {
        let g = Graph::<f64>::new();
        let x = g.leaf(t(Shape::new(1, 1, 1, 3), &[1.0, 2.0, 3.0]), true);
        let s = g.sum(x);
        assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[1.0; 3]);
        let sq = g.square(x);
        let s = g.sum(sq);
        assert_eq!(g.backward(s).unwrap().get(x).unwrap().data(), &[2.0, 4.0, 6.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let g = Graph::<f64>::new();
        let x = g.leaf(Tensor::zeros(Shape::new(1, 1, 2, 2)), true);
        assert!(g.backward(x).is_err());
    }

    #[test]
    fn two_consumers_accumulate() {
        let g = Graph::<f64>::new();
        let x = g.leaf(t(Shape::new(1, 1, 1, 2), &[0.5, -1.5]), true);
        let a = g.tanh(x);
        let b = g.scale(x, 3.0);
        let s = g.add(a, b).unwrap();
        let loss = g.sum(s);
        let both = g.backward(loss).unwrap().get(x).unwrap().clone();

        let single = |f: &dyn Fn(&Graph<f64>, Var) -> Var| {
            let g = Graph::<f64>::new();
            let x = g.leaf(t(Shape::new(1, 1, 1, 2), &[0.5, -1.5]), true);
            let y = f(&g, x);
            let l = g.sum(y);
            g.backward(l).unwrap().get(x).unwrap().clone()
        };
        let ga = single(&|g, x| g.tanh(x));
        let gb = single(&|g, x| g.scale(x, 3.0));
        for i in 0..2 {
            assert!((both.data()[i] - ga.data()[i] - gb.data()[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn subpatch_partition_round_trips() {
        let x = Tensor::<f32>::from_fn(Shape::new(2, 3, 32, 48), |i| i as f32);
        let tiles = partition_subpatches(&x, 16).unwrap();
        assert_eq!(tiles.shape(), Shape::new(12, 3, 16, 16));
        assert_eq!(reassemble_subpatches(&tiles, 32, 48).unwrap(), x);
        assert!(partition_subpatches(&x, 5).is_err());
    }
}
