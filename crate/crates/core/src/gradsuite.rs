//! Named finite-difference checks covering every differentiable operation,
//! every loss and small instances of each network.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss, discriminator_loss, generator_gan_loss, mse_loss, perceptual_loss, pixel_l1_loss,
    ssim_loss, ssim_loss_normalized, IdentityFeatures, SsimParams, DEFAULT_REAL_LABEL,
};
use crate::networks::{
    build_discriminator, build_generator_with_blocks, default_feature_extractor, discriminate, Network,
};
use crate::tensor::gradcheck::{grad_check_many, GradCheckReport};
use crate::tensor::{Graph, Shape, Tensor, Var};

/// Relative error bound every case must stay under.
pub const TOLERANCE: f64 = 1e-5;

const STEP: f64 = 1e-5;
/// Smaller step where a path crosses many LeakyReLU kinks.
const NETWORK_STEP: f64 = 1e-6;

type CaseFn = fn() -> Result<GradCheckReport>;

pub struct GradCase {
    pub name: &'static str,
    run: CaseFn,
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub name: &'static str,
    pub report: GradCheckReport,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.report.passes(TOLERANCE)
    }
}

fn uniform(shape: Shape, seed: u64, lo: f64, hi: f64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// Values with magnitude in `[0.1, 1]`, away from the kinks at zero.
fn off_zero(shape: Shape, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape, |_| {
        let m = rng.random_range(0.1..1.0);
        if rng.random::<bool>() {
            m
        } else {
            -m
        }
    })
}

/// Reduces a tensor to a scalar through fixed random weights, so that the
/// check is sensitive to where each gradient entry lands.
fn weighted_sum(g: &Graph<f64>, x: Var, seed: u64) -> Result<Var> {
    let w = g.constant(uniform(g.shape(x), seed ^ 0x5157, -1.0, 1.0));
    let p = g.mul(x, w)?;
    Ok(g.sum(p))
}

fn unary(seed: u64, input: Tensor<f64>, op: fn(&Graph<f64>, Var) -> Result<Var>) -> Result<GradCheckReport> {
    grad_check_many(
        |g, v| {
            let y = op(g, v[0])?;
            weighted_sum(g, y, seed)
        },
        &[input],
        STEP,
    )
}

fn binary(seed: u64, a: Tensor<f64>, b: Tensor<f64>, op: fn(&Graph<f64>, Var, Var) -> Result<Var>) -> Result<GradCheckReport> {
    grad_check_many(
        |g, v| {
            let y = op(g, v[0], v[1])?;
            weighted_sum(g, y, seed)
        },
        &[a, b],
        STEP,
    )
}

const S: Shape = Shape::new(2, 2, 5, 6);

fn case_add() -> Result<GradCheckReport> {
    binary(1, uniform(S, 1, -1.0, 1.0), uniform(S, 2, -1.0, 1.0), |g, a, b| g.add(a, b))
}
fn case_sub() -> Result<GradCheckReport> {
    binary(2, uniform(S, 3, -1.0, 1.0), uniform(S, 4, -1.0, 1.0), |g, a, b| g.sub(a, b))
}
fn case_mul() -> Result<GradCheckReport> {
    binary(3, uniform(S, 5, -1.0, 1.0), uniform(S, 6, -1.0, 1.0), |g, a, b| g.mul(a, b))
}
fn case_div() -> Result<GradCheckReport> {
    binary(4, uniform(S, 7, -1.0, 1.0), uniform(S, 8, 0.5, 2.0), |g, a, b| g.div(a, b))
}
fn case_square() -> Result<GradCheckReport> {
    unary(5, uniform(S, 9, -1.0, 1.0), |g, a| Ok(g.square(a)))
}
fn case_scale() -> Result<GradCheckReport> {
    unary(6, uniform(S, 10, -1.0, 1.0), |g, a| Ok(g.scale(a, -2.5)))
}
fn case_add_scalar() -> Result<GradCheckReport> {
    unary(7, uniform(S, 11, -1.0, 1.0), |g, a| Ok(g.add_scalar(a, 0.75)))
}
fn case_one_minus() -> Result<GradCheckReport> {
    unary(8, uniform(S, 12, -1.0, 1.0), |g, a| Ok(g.one_minus(a)))
}
fn case_abs() -> Result<GradCheckReport> {
    unary(9, off_zero(S, 13), |g, a| Ok(g.abs(a)))
}
fn case_leaky_relu() -> Result<GradCheckReport> {
    unary(10, off_zero(S, 14), |g, a| Ok(g.leaky_relu(a, 0.2)))
}
fn case_tanh() -> Result<GradCheckReport> {
    unary(11, uniform(S, 15, -2.0, 2.0), |g, a| Ok(g.tanh(a)))
}
fn case_sigmoid() -> Result<GradCheckReport> {
    unary(12, uniform(S, 16, -4.0, 4.0), |g, a| Ok(g.sigmoid(a)))
}
fn case_log_clamped() -> Result<GradCheckReport> {
    unary(13, uniform(S, 17, 0.05, 0.95), |g, a| Ok(g.log_clamped(a, 1e-7)))
}
fn case_sum() -> Result<GradCheckReport> {
    unary(14, uniform(S, 18, -1.0, 1.0), |g, a| Ok(g.scale(g.sum(a), 1.5)))
}
fn case_mean() -> Result<GradCheckReport> {
    unary(15, uniform(S, 19, -1.0, 1.0), |g, a| Ok(g.scale(g.mean(a), 1.5)))
}
fn case_reshape() -> Result<GradCheckReport> {
    unary(16, uniform(S, 20, -1.0, 1.0), |g, a| g.reshape(a, Shape::new(4, 1, 6, 5)))
}
fn case_pad_replicate() -> Result<GradCheckReport> {
    unary(17, uniform(S, 21, -1.0, 1.0), |g, a| Ok(g.pad_replicate(a, 2)))
}
fn case_upsample_nearest() -> Result<GradCheckReport> {
    unary(18, uniform(S, 22, -1.0, 1.0), |g, a| g.upsample_nearest(a, 2))
}
fn case_avg_pool() -> Result<GradCheckReport> {
    unary(19, uniform(Shape::new(2, 2, 6, 8), 23, -1.0, 1.0), |g, a| g.avg_pool(a, 2))
}
fn case_concat_channels() -> Result<GradCheckReport> {
    binary(20, uniform(S, 24, -1.0, 1.0), uniform(Shape::new(2, 3, 5, 6), 25, -1.0, 1.0), |g, a, b| {
        g.concat_channels(a, b)
    })
}
fn case_subpatches() -> Result<GradCheckReport> {
    unary(21, uniform(Shape::new(2, 2, 16, 32), 26, -1.0, 1.0), |g, a| g.subpatches(a, 16))
}

fn conv_case(stride: usize, seed: u64) -> Result<GradCheckReport> {
    let x = uniform(Shape::new(2, 3, 9, 8), seed, -1.0, 1.0);
    let w = uniform(Shape::new(4, 3, 3, 3), seed + 1, -1.0, 1.0);
    let b = uniform(Shape::new(1, 4, 1, 1), seed + 2, -1.0, 1.0);
    grad_check_many(
        |g, v| {
            let y = g.conv2d(v[0], v[1], Some(v[2]), stride)?;
            weighted_sum(g, y, seed)
        },
        &[x, w, b],
        STEP,
    )
}
fn case_conv2d() -> Result<GradCheckReport> {
    conv_case(1, 30)
}
fn case_conv2d_stride2() -> Result<GradCheckReport> {
    conv_case(2, 40)
}

const P: Shape = Shape::new(2, 1, 16, 16);

fn loss_case(op: fn(&Graph<f64>, Var, Var) -> Result<Var>, seed: u64, step: f64) -> Result<GradCheckReport> {
    let hq = uniform(P, seed, -1.0, 1.0);
    let rq = uniform(P, seed + 1, -1.0, 1.0);
    grad_check_many(
        |g, v| {
            let h = g.constant(hq.clone());
            op(g, h, v[0])
        },
        &[rq],
        step,
    )
}
fn case_mse_loss() -> Result<GradCheckReport> {
    loss_case(mse_loss, 50, STEP)
}
fn case_l1_loss() -> Result<GradCheckReport> {
    loss_case(pixel_l1_loss, 52, STEP)
}
fn case_ssim_loss() -> Result<GradCheckReport> {
    loss_case(ssim_loss_normalized, 54, STEP)
}
fn case_ssim_loss_uniform() -> Result<GradCheckReport> {
    loss_case(
        |g, h, r| {
            let p = SsimParams {
                window: crate::losses::Window::Uniform { size: 7 },
                ..SsimParams::loss()
            };
            ssim_loss(g, h, r, &p)
        },
        56,
        STEP,
    )
}
fn case_perceptual_loss() -> Result<GradCheckReport> {
    let phi = default_feature_extractor::<f64>(1)?;
    let s = Shape::new(1, 1, 16, 16);
    let hq = uniform(s, 58, -1.0, 1.0);
    grad_check_many(
        |g, v| {
            let h = g.constant(hq.clone());
            perceptual_loss(g, h, v[0], &phi)
        },
        &[uniform(s, 59, -1.0, 1.0)],
        NETWORK_STEP,
    )
}
fn case_discriminator_loss() -> Result<GradCheckReport> {
    let real = uniform(Shape::new(8, 1, 1, 1), 60, 0.05, 0.95);
    let fake = uniform(Shape::new(8, 1, 1, 1), 61, 0.05, 0.95);
    grad_check_many(|g, v| discriminator_loss(g, v[0], v[1], DEFAULT_REAL_LABEL), &[real, fake], STEP)
}
fn case_adversarial_loss() -> Result<GradCheckReport> {
    let fake = uniform(Shape::new(8, 1, 1, 1), 62, 0.05, 0.95);
    grad_check_many(|g, v| adversarial_loss(g, v[0]), &[fake], STEP)
}

fn small_discriminator() -> Network<f64> {
    Network::init(build_discriminator(1).expect("valid spec"), 64)
}

/// Discriminator loss through the conditioned network, with respect to the
/// generated candidate.
fn case_discriminator_network_loss() -> Result<GradCheckReport> {
    let d = small_discriminator();
    let s = Shape::new(1, 1, 16, 16);
    let (hq, lq) = (uniform(s, 65, -1.0, 1.0), uniform(s, 67, -1.0, 1.0));
    grad_check_many(
        |g, v| {
            let bound = d.bind(g, false);
            let (h, l) = (g.constant(hq.clone()), g.constant(lq.clone()));
            let real = discriminate(&d, g, &bound, h, l)?;
            let fake = discriminate(&d, g, &bound, v[0], l)?;
            discriminator_loss(g, real, fake, DEFAULT_REAL_LABEL)
        },
        &[uniform(s, 66, -1.0, 1.0)],
        NETWORK_STEP,
    )
}
fn case_generator_gan_loss() -> Result<GradCheckReport> {
    let d = small_discriminator();
    let s = Shape::new(1, 1, 16, 16);
    let (hq, lq) = (uniform(s, 70, -1.0, 1.0), uniform(s, 71, -1.0, 1.0));
    let phi = default_feature_extractor::<f64>(1)?;
    grad_check_many(
        |g, v| {
            let bound = d.bind(g, false);
            let (h, l) = (g.constant(hq.clone()), g.constant(lq.clone()));
            // large weight so the adversarial path is visible in the check
            Ok(generator_gan_loss(g, h, v[0], l, &phi, &d, &bound, 0.5)?.total)
        },
        &[uniform(s, 72, -1.0, 1.0)],
        NETWORK_STEP,
    )
}
fn case_generator_gan_l1_loss() -> Result<GradCheckReport> {
    let d = small_discriminator();
    let s = Shape::new(1, 1, 16, 16);
    let (hq, lq) = (uniform(s, 73, -1.0, 1.0), uniform(s, 74, -1.0, 1.0));
    grad_check_many(
        |g, v| {
            let bound = d.bind(g, false);
            let (h, l) = (g.constant(hq.clone()), g.constant(lq.clone()));
            let gan = generator_gan_loss(g, h, v[0], l, &IdentityFeatures, &d, &bound, 0.5)?;
            let l1 = pixel_l1_loss(g, h, v[0])?;
            let adv = g.scale(gan.adversarial, 0.5);
            g.add(l1, adv)
        },
        &[uniform(s, 75, -1.0, 1.0)],
        NETWORK_STEP,
    )
}
fn case_generator_network() -> Result<GradCheckReport> {
    let gen = Network::<f64>::init(build_generator_with_blocks(1, 2)?, 80);
    grad_check_many(
        |g, v| {
            let bound = gen.bind(g, false);
            let y = gen.forward(g, &bound, v[0])?;
            weighted_sum(g, y, 81)
        },
        &[uniform(Shape::new(1, 1, 16, 16), 82, -1.0, 1.0)],
        NETWORK_STEP,
    )
}

pub fn cases() -> Vec<GradCase> {
    macro_rules! list {
        ($($name:literal => $f:ident),* $(,)?) => {
            vec![$(GradCase { name: $name, run: $f }),*]
        };
    }
    list![
        "add" => case_add,
        "sub" => case_sub,
        "mul" => case_mul,
        "div" => case_div,
        "square" => case_square,
        "scale" => case_scale,
        "add_scalar" => case_add_scalar,
        "one_minus" => case_one_minus,
        "abs" => case_abs,
        "leaky_relu" => case_leaky_relu,
        "tanh" => case_tanh,
        "sigmoid" => case_sigmoid,
        "log_clamped" => case_log_clamped,
        "sum" => case_sum,
        "mean" => case_mean,
        "reshape" => case_reshape,
        "pad_replicate" => case_pad_replicate,
        "conv2d" => case_conv2d,
        "conv2d_stride2" => case_conv2d_stride2,
        "upsample_nearest" => case_upsample_nearest,
        "avg_pool" => case_avg_pool,
        "concat_channels" => case_concat_channels,
        "subpatches" => case_subpatches,
        "mse_loss" => case_mse_loss,
        "l1_loss" => case_l1_loss,
        "ssim_loss" => case_ssim_loss,
        "ssim_loss_uniform" => case_ssim_loss_uniform,
        "perceptual_loss" => case_perceptual_loss,
        "discriminator_loss" => case_discriminator_loss,
        "discriminator_network_loss" => case_discriminator_network_loss,
        "adversarial_loss" => case_adversarial_loss,
        "generator_gan_loss" => case_generator_gan_loss,
        "generator_gan_l1_loss" => case_generator_gan_l1_loss,
        "generator_network" => case_generator_network,
    ]
}

/// Runs every case, or only the one called `only`.
pub fn run(only: Option<&str>) -> Result<Vec<CaseResult>> {
    let all = cases();
    let selected: Vec<&GradCase> = match only {
        None => all.iter().collect(),
        Some(name) => {
            let hit: Vec<_> = all.iter().filter(|c| c.name == name).collect();
            if hit.is_empty() {
                let names: Vec<_> = all.iter().map(|c| c.name).collect();
                return Err(Error::Invalid(format!("unknown op {name}; known: {}", names.join(", "))));
            }
            hit
        }
    };
    selected
        .into_iter()
        .map(|c| {
            Ok(CaseResult {
                name: c.name,
                report: (c.run)()?,
            })
        })
        .collect()
}
