//! PSNR, PSNR-B and SSIM on 8-bit luminance, and dataset-level reports.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::codec::{degrade, list_images, load_image, ImagePlanes, Plane};
use crate::error::{Error, Result};
use crate::losses::{ssim_map, SsimParams};
use crate::tensor::{Graph, Shape, Tensor};

const PEAK: f64 = 255.0;

fn check_extents(a: &Plane, b: &Plane) -> Result<()> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::Shape(format!(
            "reference is {}x{}, test is {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

fn mse(a: &Plane, b: &Plane) -> f64 {
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    s / a.data.len() as f64
}

fn db(err: f64) -> f64 {
    if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (PEAK * PEAK / err).log10()
    }
}

/// `10 log10(255^2 / MSE)`, or `+inf` for identical planes.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<f64> {
    check_extents(reference, test)?;
    Ok(db(mse(reference, test)))
}

/// Blocking statistics of one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlockingEffect {
    /// Mean squared difference across block boundaries.
    pub boundary: f64,
    /// Mean squared difference between other horizontally or vertically
    /// adjacent pixels.
    pub interior: f64,
    pub eta: f64,
    pub bef: f64,
}

pub fn blocking_effect(test: &Plane, block: usize) -> Result<BlockingEffect> {
    let (w, h) = (test.width, test.height);
    if block < 2 || w < 2 * block || h < 2 * block {
        return Err(Error::Shape(format!(
            "PSNR-B needs at least two {block}x{block} blocks per dimension, got {w}x{h}"
        )));
    }
    let (mut sb, mut nb, mut sc, mut nc) = (0.0, 0usize, 0.0, 0usize);
    let mut pair = |a: f32, b: f32, boundary: bool| {
        let d = (a as f64 - b as f64).powi(2);
        if boundary {
            sb += d;
            nb += 1;
        } else {
            sc += d;
            nc += 1;
        }
    };
    for y in 0..h {
        for x in 0..w - 1 {
            pair(test.get(x, y), test.get(x + 1, y), (x + 1) % block == 0);
        }
    }
    for y in 0..h - 1 {
        for x in 0..w {
            pair(test.get(x, y), test.get(x, y + 1), (y + 1) % block == 0);
        }
    }
    let boundary = sb / nb as f64;
    let interior = sc / nc as f64;
    let eta = if boundary > interior {
        (block as f64).log2() / (w.min(h) as f64).log2()
    } else {
        0.0
    };
    Ok(BlockingEffect {
        boundary,
        interior,
        eta,
        bef: eta * (boundary - interior),
    })
}

/// PSNR with the blocking effect factor of `test` added to the error.
pub fn psnr_b(reference: &Plane, test: &Plane, block: usize) -> Result<f64> {
    check_extents(reference, test)?;
    let b = blocking_effect(test, block)?;
    Ok(db(mse(reference, test) + b.bef))
}

fn plane_tensor(p: &Plane) -> Tensor<f64> {
    Tensor::from_fn(Shape::new(1, 1, p.height, p.width), |i| p.data[i] as f64)
}

/// Mean SSIM with the evaluation defaults.
pub fn ssim_eval(reference: &Plane, test: &Plane) -> Result<f64> {
    check_extents(reference, test)?;
    let g = Graph::new();
    let a = g.constant(plane_tensor(reference));
    let b = g.constant(plane_tensor(test));
    let map = ssim_map(&g, a, b, &SsimParams::evaluation())?;
    let m = g.mean(map);
    let v = g.value(m).item();
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub image: String,
    pub method: String,
    pub qf: Option<u32>,
    pub psnr: f64,
    pub psnr_b: f64,
    pub ssim: f64,
}

impl MetricRow {
    /// Scores the luminance of `test` against that of `reference`.
    pub fn measure(image: &str, method: &str, qf: Option<u32>, reference: &ImagePlanes, test: &ImagePlanes) -> Result<Self> {
        let (r, t) = (reference.luma8()?, test.luma8()?);
        Ok(MetricRow {
            image: image.to_string(),
            method: method.to_string(),
            qf,
            psnr: psnr(&r, &t)?,
            psnr_b: psnr_b(&r, &t, 8)?,
            ssim: ssim_eval(&r, &t)?,
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricReport {
    pub rows: Vec<MetricRow>,
    /// Reference images without a matching test image.
    pub missing: Vec<String>,
}

fn fmt_qf(qf: Option<u32>) -> String {
    qf.map_or_else(|| "-".to_string(), |q| q.to_string())
}

impl MetricReport {
    /// Averages per `(qf, method)` in first-appearance order.
    pub fn averages(&self) -> Vec<MetricRow> {
        let mut keys: Vec<(Option<u32>, String)> = Vec::new();
        for r in &self.rows {
            let k = (r.qf, r.method.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        keys.sort_by_key(|k| k.0);
        keys.into_iter()
            .map(|(qf, method)| {
                let group: Vec<&MetricRow> = self.rows.iter().filter(|r| r.qf == qf && r.method == method).collect();
                let n = group.len() as f64;
                MetricRow {
                    image: "average".into(),
                    qf,
                    psnr: group.iter().map(|r| r.psnr).sum::<f64>() / n,
                    psnr_b: group.iter().map(|r| r.psnr_b).sum::<f64>() / n,
                    ssim: group.iter().map(|r| r.ssim).sum::<f64>() / n,
                    method,
                }
            })
            .collect()
    }

    /// `image,method,qf,psnr,psnr_b,ssim`, per-image rows then averages.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,method,qf,psnr,psnr_b,ssim\n");
        for r in self.rows.iter().chain(&self.averages()) {
            let _ = writeln!(
                out,
                "{},{},{},{:.4},{:.4},{:.6}",
                r.image,
                r.method,
                fmt_qf(r.qf),
                r.psnr,
                r.psnr_b,
                r.ssim
            );
        }
        out
    }

    /// Averages laid out one row per quality factor and method.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| QF | Method | PSNR | PSNR-B | SSIM |\n|---:|:---|---:|---:|---:|\n");
        for r in self.averages() {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {:.2} | {:.3} |",
                fmt_qf(r.qf),
                r.method,
                r.psnr,
                r.psnr_b,
                r.ssim
            );
        }
        out
    }
}

pub type Restorer<'a> = &'a dyn Fn(&ImagePlanes) -> Result<ImagePlanes>;

pub const DEGRADED_LABEL: &str = "jpeg";

pub struct EvalOptions<'a> {
    /// Quality factors to simulate, or the subdirectory layout of `test_dir`.
    pub qfs: Vec<u32>,
    /// Pre-computed test images. When several QFs are given, images for QF
    /// `n` are looked up in `test_dir/qf{n}` if that directory exists.
    pub test_dir: Option<PathBuf>,
    /// Also score restored versions of every test image.
    pub restorer: Option<(&'a str, Restorer<'a>)>,
}

fn file_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Scores every reference image against its degraded (simulated or loaded)
/// counterpart and, optionally, its restoration. Rows are ordered by QF, then
/// file name.
pub fn evaluate_dataset(ref_dir: impl AsRef<Path>, opts: &EvalOptions<'_>) -> Result<MetricReport> {
    let refs = list_images(ref_dir.as_ref())?;
    if refs.is_empty() {
        return Err(Error::Invalid(format!("no images in {}", ref_dir.as_ref().display())));
    }
    let qfs: Vec<Option<u32>> = if opts.qfs.is_empty() {
        if opts.test_dir.is_none() {
            return Err(Error::Invalid("no quality factor given for simulated degradation".into()));
        }
        vec![None]
    } else {
        opts.qfs.iter().copied().map(Some).collect()
    };
    let mut report = MetricReport::default();
    for &qf in &qfs {
        let test_dir = opts.test_dir.as_ref().map(|d| match qf {
            Some(q) if d.join(format!("qf{q}")).is_dir() => d.join(format!("qf{q}")),
            _ => d.clone(),
        });
        for path in &refs {
            let name = file_name(path);
            let reference = load_image(path)?;
            let test = match &test_dir {
                Some(dir) => {
                    let candidate = dir.join(&name);
                    if !candidate.is_file() {
                        report.missing.push(match qf {
                            Some(q) => format!("{name} (qf {q})"),
                            None => name.clone(),
                        });
                        continue;
                    }
                    load_image(candidate)?
                }
                None => degrade(&reference, qf.expect("simulation has a qf"))?,
            };
            report.rows.push(MetricRow::measure(&name, DEGRADED_LABEL, qf, &reference, &test)?);
            if let Some((label, restore)) = &opts.restorer {
                let restored = restore(&test)?;
                report.rows.push(MetricRow::measure(&name, label, qf, &reference, &restored)?);
            }
        }
    }
    Ok(report)
}
