use crate::error::{Error, Result};
use crate::tensor::{Element, Graph, Shape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Window {
    Gaussian { size: usize, sigma: f64 },
    Uniform { size: usize },
}

impl Window {
    pub fn size(&self) -> usize {
        match *self {
            Window::Gaussian { size, .. } | Window::Uniform { size } => size,
        }
    }

    /// Normalized 1-D taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let raw: Vec<f64> = match *self {
            Window::Gaussian { size, sigma } => {
                let c = (size as f64 - 1.0) / 2.0;
                (0..size)
                    .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
                    .collect()
            }
            Window::Uniform { size } => vec![1.0; size],
        };
        let s: f64 = raw.iter().sum();
        raw.into_iter().map(|v| v / s).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SsimParams {
    pub window: Window,
    pub k1: f64,
    pub k2: f64,
    /// Dynamic range of the inputs.
    pub range: f64,
}

impl SsimParams {
    /// 11-tap gaussian, sigma 1.5, on 8-bit values.
    pub fn evaluation() -> Self {
        SsimParams {
            window: Window::Gaussian { size: 11, sigma: 1.5 },
            k1: 0.01,
            k2: 0.03,
            range: 255.0,
        }
    }

    /// As [`SsimParams::evaluation`] but for inputs in `[0, 1]`.
    pub fn loss() -> Self {
        SsimParams {
            range: 1.0,
            ..Self::evaluation()
        }
    }

    pub fn c1(&self) -> f64 {
        (self.k1 * self.range).powi(2)
    }

    pub fn c2(&self) -> f64 {
        (self.k2 * self.range).powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.window.size() == 0 {
            return Err(Error::Invalid("SSIM window of size 0".into()));
        }
        if let Window::Gaussian { sigma, .. } = self.window {
            if sigma.is_nan() || sigma <= 0.0 {
                return Err(Error::Invalid(format!("SSIM gaussian sigma {sigma} must be positive")));
            }
        }
        if !(self.c1() > 0.0 && self.c2() > 0.0) {
            return Err(Error::Invalid("SSIM stabilizers must be positive".into()));
        }
        Ok(())
    }
}

/// Windowed mean of every plane: `(N*C) x 1 x (H-k+1) x (W-k+1)`.
fn window_mean<T: Element>(g: &Graph<T>, x: Var, taps: &[T]) -> Result<Var> {
    let k = taps.len();
    let row = g.constant(Tensor::from_vec(Shape::new(1, 1, 1, k), taps.to_vec())?);
    let col = g.constant(Tensor::from_vec(Shape::new(1, 1, k, 1), taps.to_vec())?);
    let h = g.conv2d(x, row, None, 1)?;
    g.conv2d(h, col, None, 1)
}

/// Local SSIM between `i` and `j`, per plane. Multi-channel inputs are
/// treated as independent planes; the map has shape
/// `(N*C) x 1 x (H-k+1) x (W-k+1)`.
pub fn ssim_map<T: Element>(g: &Graph<T>, i: Var, j: Var, p: &SsimParams) -> Result<Var> {
    p.validate()?;
    let (si, sj) = (g.shape(i), g.shape(j));
    if si != sj {
        return Err(Error::Shape(format!("ssim: operand shapes differ ({si} vs {sj})")));
    }
    let [n, c, h, w] = si.0;
    let k = p.window.size();
    if k > h || k > w {
        return Err(Error::Shape(format!("SSIM window {k} exceeds {h}x{w} image")));
    }
    let planes = Shape::new(n * c, 1, h, w);
    let (i, j) = (g.reshape(i, planes)?, g.reshape(j, planes)?);
    let taps: Vec<T> = p.window.taps().into_iter().map(T::cast_f64).collect();
    let (c1, c2) = (T::cast_f64(p.c1()), T::cast_f64(p.c2()));
    let two = T::cast_f64(2.0);

    let mu_i = window_mean(g, i, &taps)?;
    let mu_j = window_mean(g, j, &taps)?;
    let ii = g.mul(i, i)?;
    let jj = g.mul(j, j)?;
    let ij = g.mul(i, j)?;
    let e_ii = window_mean(g, ii, &taps)?;
    let e_jj = window_mean(g, jj, &taps)?;
    let e_ij = window_mean(g, ij, &taps)?;
    let mu_ii = g.mul(mu_i, mu_i)?;
    let mu_jj = g.mul(mu_j, mu_j)?;
    let mu_ij = g.mul(mu_i, mu_j)?;
    let var_i = g.sub(e_ii, mu_ii)?;
    let var_j = g.sub(e_jj, mu_jj)?;
    let cov = g.sub(e_ij, mu_ij)?;

    let lum_num = g.add_scalar(g.scale(mu_ij, two), c1);
    let con_num = g.add_scalar(g.scale(cov, two), c2);
    let mu_sq = g.add(mu_ii, mu_jj)?;
    let lum_den = g.add_scalar(mu_sq, c1);
    let var_sum = g.add(var_i, var_j)?;
    let con_den = g.add_scalar(var_sum, c2);
    let num = g.mul(lum_num, con_num)?;
    let den = g.mul(lum_den, con_den)?;
    g.div(num, den)
}

/// Negative mean SSIM; `-1` for identical inputs.
pub fn ssim_loss<T: Element>(g: &Graph<T>, hq: Var, rq: Var, p: &SsimParams) -> Result<Var> {
    let map = ssim_map(g, hq, rq, p)?;
    let m = g.mean(map);
    Ok(g.scale(m, -T::one()))
}

/// Maps `[-1, 1]` network values onto `[0, 1]`.
pub fn to_unit_range<T: Element>(g: &Graph<T>, x: Var) -> Var {
    let half = T::cast_f64(0.5);
    g.add_scalar(g.scale(x, half), half)
}

/// SSIM loss on `[-1, 1]` tensors, evaluated with [`SsimParams::loss`].
pub fn ssim_loss_normalized<T: Element>(g: &Graph<T>, hq: Var, rq: Var) -> Result<Var> {
    let (a, b) = (to_unit_range(g, hq), to_unit_range(g, rq));
    ssim_loss(g, a, b, &SsimParams::loss())
}

/// Local SSIM computed without the graph, one window at a time.
pub fn ssim_map_direct(i: &[f64], j: &[f64], width: usize, height: usize, p: &SsimParams) -> Result<Vec<f64>> {
    p.validate()?;
    let k = p.window.size();
    if i.len() != width * height || j.len() != i.len() {
        return Err(Error::Shape("ssim_map_direct: buffers do not match extents".into()));
    }
    if k > width || k > height {
        return Err(Error::Shape(format!("SSIM window {k} exceeds {height}x{width} image")));
    }
    let taps = p.window.taps();
    let (c1, c2) = (p.c1(), p.c2());
    let mut out = Vec::with_capacity((width - k + 1) * (height - k + 1));
    for y0 in 0..=height - k {
        for x0 in 0..=width - k {
            let (mut mi, mut mj, mut sii, mut sjj, mut sij) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for dy in 0..k {
                for dx in 0..k {
                    let wgt = taps[dy] * taps[dx];
                    let (a, b) = (i[(y0 + dy) * width + x0 + dx], j[(y0 + dy) * width + x0 + dx]);
                    mi += wgt * a;
                    mj += wgt * b;
                    sii += wgt * a * a;
                    sjj += wgt * b * b;
                    sij += wgt * a * b;
                }
            }
            let (vi, vj, cov) = (sii - mi * mi, sjj - mj * mj, sij - mi * mj);
            out.push(((2.0 * mi * mj + c1) * (2.0 * cov + c2)) / ((mi * mi + mj * mj + c1) * (vi + vj + c2)));
        }
    }
    Ok(out)
}
