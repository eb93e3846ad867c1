//! Training objectives: pixel losses, SSIM, perceptual distance and the
//! conditional adversarial terms.

mod ssim;

pub use ssim::{
    ssim_loss, ssim_loss_normalized, ssim_map, ssim_map_direct, to_unit_range, SsimParams, Window,
};

use crate::error::{Error, Result};
use crate::networks::{discriminate, Bound, Network};
use crate::tensor::{Element, Graph, Var};

/// Clamp applied to probabilities before taking logarithms.
pub const LOG_EPS: f64 = 1e-7;
pub const DEFAULT_LAMBDA: f64 = 1e-3;
pub const DEFAULT_REAL_LABEL: f64 = 0.9;

fn check_same(g: &Graph<impl Element>, what: &str, a: Var, b: Var) -> Result<()> {
    let (sa, sb) = (g.shape(a), g.shape(b));
    if sa != sb {
        return Err(Error::Shape(format!("{what}: shapes differ ({sa} vs {sb})")));
    }
    Ok(())
}

pub fn mse_loss<T: Element>(g: &Graph<T>, hq: Var, rq: Var) -> Result<Var> {
    check_same(g, "mse", hq, rq)?;
    let d = g.sub(rq, hq)?;
    Ok(g.mean(g.square(d)))
}

/// Mean absolute difference; subgradient 0 where the inputs agree.
pub fn pixel_l1_loss<T: Element>(g: &Graph<T>, hq: Var, rq: Var) -> Result<Var> {
    check_same(g, "l1", hq, rq)?;
    let d = g.sub(rq, hq)?;
    Ok(g.mean(g.abs(d)))
}

/// Maps image tensors to the representation compared by the perceptual loss.
pub trait FeatureProjector<T: Element> {
    fn project(&self, g: &Graph<T>, x: Var) -> Result<Var>;
}

/// Pixels as features: the perceptual loss degenerates to MSE.
pub struct IdentityFeatures;

impl<T: Element> FeatureProjector<T> for IdentityFeatures {
    fn project(&self, _g: &Graph<T>, x: Var) -> Result<Var> {
        Ok(x)
    }
}

/// A frozen network: parameters enter the graph as constants.
impl<T: Element> FeatureProjector<T> for Network<T> {
    fn project(&self, g: &Graph<T>, x: Var) -> Result<Var> {
        let bound = self.bind(g, false);
        self.forward(g, &bound, x)
    }
}

/// Mean squared feature difference, normalized by the full element count of
/// the feature maps.
pub fn perceptual_loss<T: Element>(g: &Graph<T>, hq: Var, rq: Var, phi: &dyn FeatureProjector<T>) -> Result<Var> {
    check_same(g, "perceptual", hq, rq)?;
    let fh = phi.project(g, hq)?;
    let fr = phi.project(g, rq)?;
    mse_loss(g, fh, fr)
}

/// `-s log D(real) - log(1 - D(fake))`, each term averaged over sub-patches
/// and batch.
pub fn discriminator_loss<T: Element>(g: &Graph<T>, d_real: Var, d_fake: Var, real_label: f64) -> Result<Var> {
    let eps = T::cast_f64(LOG_EPS);
    let lr = g.mean(g.log_clamped(d_real, eps));
    let lf = g.mean(g.log_clamped(g.one_minus(d_fake), eps));
    let real_term = g.scale(lr, T::cast_f64(-real_label));
    let fake_term = g.scale(lf, -T::one());
    g.add(real_term, fake_term)
}

/// `-log D(fake)` averaged over sub-patches and batch.
pub fn adversarial_loss<T: Element>(g: &Graph<T>, d_fake: Var) -> Result<Var> {
    let l = g.mean(g.log_clamped(d_fake, T::cast_f64(LOG_EPS)));
    Ok(g.scale(l, -T::one()))
}

#[derive(Clone, Copy, Debug)]
pub struct GanLoss {
    pub total: Var,
    pub perceptual: Var,
    pub adversarial: Var,
    pub d_fake: Var,
}

/// Perceptual distance plus `lambda` times the adversarial term, where the
/// discriminator scores the sub-patches of `rq` conditioned on `lq`.
#[allow(clippy::too_many_arguments)]
pub fn generator_gan_loss<T: Element>(
    g: &Graph<T>,
    hq: Var,
    rq: Var,
    lq: Var,
    phi: &dyn FeatureProjector<T>,
    d: &Network<T>,
    d_bound: &Bound,
    lambda: f64,
) -> Result<GanLoss> {
    let perceptual = perceptual_loss(g, hq, rq, phi)?;
    let d_fake = discriminate(d, g, d_bound, rq, lq)?;
    let adversarial = adversarial_loss(g, d_fake)?;
    let weighted = g.scale(adversarial, T::cast_f64(lambda));
    let total = g.add(perceptual, weighted)?;
    Ok(GanLoss {
        total,
        perceptual,
        adversarial,
        d_fake,
    })
}

#[cfg(test)]
mod tests;
