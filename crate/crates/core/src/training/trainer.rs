use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::checkpoint::{discriminator_path, save_checkpoint, CheckpointMeta};
use super::{sample_batch, Adam, AdamState, Batch, Dataset, LossKind, TrainConfig};
use crate::error::{Error, Result};
use crate::losses::{
    adversarial_loss, discriminator_loss, generator_gan_loss, mse_loss, pixel_l1_loss, ssim_loss_normalized,
};
use crate::networks::{
    build_discriminator, build_generator_with_blocks, default_feature_extractor, discriminate, Network,
};
use crate::tensor::{Graph, Tensor, Var};

/// Distance from 0 or 1 under which a discriminator output counts as saturated.
pub const SATURATION_EPS: f64 = 1e-3;
/// Consecutive fully saturated iterations before a stability warning.
pub const SATURATION_PATIENCE: u64 = 100;

const DISCRIMINATOR_SEED_OFFSET: u64 = 0xD15C;

/// One line of the loss log.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u64,
    pub d_loss: Option<f64>,
    pub g_loss: f64,
    /// MSE, SSIM, perceptual or L1 term, by loss kind.
    pub content: f64,
    pub adversarial: Option<f64>,
    pub d_real: Option<f64>,
    pub d_fake: Option<f64>,
}

pub const LOG_HEADER: &str = "iteration,d_loss,g_loss,content,adversarial,d_real,d_fake";

impl LogRow {
    pub fn empty(iteration: u64) -> Self {
        LogRow {
            iteration,
            d_loss: None,
            g_loss: 0.0,
            content: 0.0,
            adversarial: None,
            d_real: None,
            d_fake: None,
        }
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.8}")).unwrap_or_default();
        format!(
            "{},{},{:.8},{:.8},{},{},{}",
            self.iteration,
            opt(self.d_loss),
            self.g_loss,
            self.content,
            opt(self.adversarial),
            opt(self.d_real),
            opt(self.d_fake)
        )
    }
}

struct Learner {
    net: Network<f32>,
    opt: Adam,
    state: AdamState,
}

impl Learner {
    fn new(net: Network<f32>, lr: f64, cfg: &TrainConfig) -> Self {
        let state = AdamState::new(net.params());
        Learner {
            net,
            opt: Adam {
                lr,
                beta1: cfg.beta1,
                beta2: cfg.beta2,
                epsilon: cfg.epsilon,
            },
            state,
        }
    }

    /// Applies the gradients of `loss` to the parameters bound as `vars`.
    /// Returns false when the step was rejected for non-finite gradients.
    fn apply(&mut self, g: &Graph<f32>, loss: Var, vars: &[Var]) -> Result<bool> {
        let mut grads = g.backward(loss)?;
        let grads: Vec<Tensor<f32>> = vars
            .iter()
            .zip(self.net.params())
            .map(|(v, p)| grads.take_or_zeros(*v, p.shape()))
            .collect();
        match self.opt.step(self.net.params_mut(), &grads, &mut self.state) {
            Ok(()) => Ok(true),
            Err(Error::NonFinite(what)) => {
                log::warn!("rejected optimizer step: non-finite {what}");
                Ok(false)
            }
            Err(e) => Err(e),
        }
    }
}

/// Training state; one call to [`Trainer::step`] is one iteration.
pub struct Trainer {
    cfg: TrainConfig,
    rng: ChaCha8Rng,
    gen: Learner,
    disc: Option<Learner>,
    phi: Option<Network<f32>>,
    iteration: u64,
    saturated_for: u64,
    pub warnings: Vec<String>,
    pub rejected_steps: u64,
}

fn value(g: &Graph<f32>, v: Var) -> f64 {
    g.value(v).item() as f64
}

fn mean_of(t: &Tensor<f32>) -> f64 {
    t.data().iter().map(|&x| x as f64).sum::<f64>() / t.len() as f64
}

fn saturated(t: &Tensor<f32>) -> bool {
    t.data()
        .iter()
        .all(|&x| (x as f64) < SATURATION_EPS || (x as f64) > 1.0 - SATURATION_EPS)
}

impl Trainer {
    pub fn new(cfg: &TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let gspec = build_generator_with_blocks(cfg.channels, cfg.residual_blocks)?;
        let gen = Learner::new(Network::init(gspec, cfg.seed), cfg.learning_rate, cfg);
        let (disc, phi) = if cfg.loss.is_adversarial() {
            let dspec = build_discriminator(cfg.channels)?;
            let d = Network::init(dspec, cfg.seed.wrapping_add(DISCRIMINATOR_SEED_OFFSET));
            let phi = (cfg.loss == LossKind::Gan).then(|| default_feature_extractor(cfg.channels)).transpose()?;
            (Some(Learner::new(d, cfg.d_learning_rate(), cfg)), phi)
        } else {
            (None, None)
        };
        Ok(Trainer {
            cfg: cfg.clone(),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            gen,
            disc,
            phi,
            iteration: 0,
            saturated_for: 0,
            warnings: Vec::new(),
            rejected_steps: 0,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn iteration(&self) -> u64 {
        self.iteration
    }

    pub fn generator(&self) -> &Network<f32> {
        &self.gen.net
    }

    pub fn discriminator(&self) -> Option<&Network<f32>> {
        self.disc.as_ref().map(|d| &d.net)
    }

    pub fn into_networks(self) -> (Network<f32>, Option<Network<f32>>) {
        (self.gen.net, self.disc.map(|d| d.net))
    }

    fn abort(&self, reason: String) -> Error {
        Error::TrainingAborted {
            iteration: self.iteration + 1,
            reason,
        }
    }

    fn check_finite(&self, what: &str, v: f64) -> Result<()> {
        if v.is_finite() {
            Ok(())
        } else {
            Err(self.abort(format!("{what} is {v}")))
        }
    }

    /// Samples a batch and runs one iteration on it.
    pub fn step(&mut self, data: &Dataset) -> Result<LogRow> {
        let batch = sample_batch(data, &self.cfg, &mut self.rng)?;
        self.step_on(&batch)
    }

    /// One iteration on a given batch: `d_steps` discriminator updates
    /// followed by one generator update for adversarial losses, a single
    /// generator update otherwise.
    pub fn step_on(&mut self, batch: &Batch) -> Result<LogRow> {
        let mut row = LogRow::empty(self.iteration + 1);
        if self.disc.is_some() {
            for _ in 0..self.cfg.d_steps {
                self.discriminator_step(batch, &mut row)?;
            }
        }
        self.generator_step(batch, &mut row)?;
        for p in self.gen.net.params().iter().chain(self.disc.iter().flat_map(|d| d.net.params())) {
            if !p.all_finite() {
                return Err(self.abort("parameters became non-finite".into()));
            }
        }
        self.iteration += 1;
        Ok(row)
    }

    pub(super) fn discriminator_step(&mut self, batch: &Batch, row: &mut LogRow) -> Result<()> {
        let restored = self.gen.net.infer(&batch.lq)?;
        let disc = self.disc.as_mut().expect("adversarial run has a discriminator");
        let g = Graph::new();
        let bound = disc.net.bind(&g, true);
        let (hq, lq, rq) = (g.constant(batch.hq.clone()), g.constant(batch.lq.clone()), g.constant(restored));
        let d_real = discriminate(&disc.net, &g, &bound, hq, lq)?;
        let d_fake = discriminate(&disc.net, &g, &bound, rq, lq)?;
        let loss = discriminator_loss(&g, d_real, d_fake, self.cfg.real_label)?;
        let l = value(&g, loss);
        {
            let (real, fake) = (g.value(d_real), g.value(d_fake));
            row.d_real = Some(mean_of(&real));
            row.d_fake = Some(mean_of(&fake));
            if saturated(&real) && saturated(&fake) {
                self.saturated_for += 1;
            } else {
                self.saturated_for = 0;
            }
        }
        if self.saturated_for == SATURATION_PATIENCE {
            let msg = format!(
                "discriminator outputs saturated for {SATURATION_PATIENCE} consecutive iterations (at {})",
                self.iteration + 1
            );
            log::warn!("{msg}");
            self.warnings.push(msg);
        }
        row.d_loss = Some(l);
        if !l.is_finite() {
            return Err(self.abort(format!("discriminator loss is {l}")));
        }
        if !disc.apply(&g, loss, &bound.vars)? {
            self.rejected_steps += 1;
        }
        Ok(())
    }

    pub(super) fn generator_step(&mut self, batch: &Batch, row: &mut LogRow) -> Result<()> {
        let g = Graph::new();
        let bound = self.gen.net.bind(&g, true);
        let (hq, lq) = (g.constant(batch.hq.clone()), g.constant(batch.lq.clone()));
        let rq = self.gen.net.forward(&g, &bound, lq)?;
        let (total, content, adversarial) = match (self.cfg.loss, &self.disc) {
            (LossKind::Mse, _) => {
                let l = mse_loss(&g, hq, rq)?;
                (l, l, None)
            }
            (LossKind::Ssim, _) => {
                let l = ssim_loss_normalized(&g, hq, rq)?;
                (l, l, None)
            }
            (LossKind::Gan, Some(d)) => {
                let d_bound = d.net.bind(&g, false);
                let phi = self.phi.as_ref().expect("gan run has a feature extractor");
                let parts = generator_gan_loss(&g, hq, rq, lq, phi, &d.net, &d_bound, self.cfg.lambda)?;
                (parts.total, parts.perceptual, Some(parts.adversarial))
            }
            (LossKind::GanL1, Some(d)) => {
                let d_bound = d.net.bind(&g, false);
                let l1 = pixel_l1_loss(&g, hq, rq)?;
                let d_fake = discriminate(&d.net, &g, &d_bound, rq, lq)?;
                let adv = adversarial_loss(&g, d_fake)?;
                let total = g.add(l1, g.scale(adv, self.cfg.lambda as f32))?;
                (total, l1, Some(adv))
            }
            (kind, None) => return Err(Error::Invalid(format!("{kind} needs a discriminator"))),
        };
        row.g_loss = value(&g, total);
        row.content = value(&g, content);
        row.adversarial = adversarial.map(|a| value(&g, a));
        self.check_finite("generator loss", row.g_loss)?;
        if !self.gen.apply(&g, total, &bound.vars)? {
            self.rejected_steps += 1;
        }
        Ok(())
    }

    /// Writes the generator to `path` and, for adversarial runs, the
    /// discriminator next to it.
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta::for_network(&self.gen.net, self.iteration, Some(&self.cfg));
        save_checkpoint(path, &self.gen.net, &meta)?;
        if let Some(d) = &self.disc {
            let meta = CheckpointMeta::for_network(&d.net, self.iteration, Some(&self.cfg));
            save_checkpoint(discriminator_path(path), &d.net, &meta)?;
        }
        Ok(())
    }
}

/// Output locations of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainOutput {
    pub checkpoint: Option<PathBuf>,
    pub loss_log: Option<PathBuf>,
}

pub struct TrainResult {
    pub generator: Network<f32>,
    pub discriminator: Option<Network<f32>>,
    pub history: Vec<LogRow>,
    pub warnings: Vec<String>,
    pub rejected_steps: u64,
}

fn run(cfg: &TrainConfig, data: &Dataset, out: &TrainOutput) -> Result<TrainResult> {
    let mut trainer = Trainer::new(cfg)?;
    let mut log = match &out.loss_log {
        Some(p) => {
            let f = File::create(p).map_err(|e| Error::io(p, e))?;
            let mut w = BufWriter::new(f);
            writeln!(w, "{LOG_HEADER}").map_err(|e| Error::io(p, e))?;
            Some((p.clone(), w))
        }
        None => None,
    };
    let mut history = Vec::with_capacity(cfg.iterations as usize);
    while trainer.iteration() < cfg.iterations {
        let row = match trainer.step(data) {
            Ok(row) => row,
            Err(e @ Error::TrainingAborted { .. }) => {
                if let Some(p) = &out.checkpoint {
                    trainer.save(p)?;
                    log::error!("{e}; last good state written to {}", p.display());
                }
                if let Some((p, w)) = &mut log {
                    w.flush().map_err(|err| Error::io(p.as_path(), err))?;
                }
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        if let Some((p, w)) = &mut log {
            writeln!(w, "{}", row.to_csv()).map_err(|e| Error::io(p.as_path(), e))?;
        }
        let it = row.iteration;
        if it % 100 == 0 || it == cfg.iterations {
            log::info!("iteration {it}: g_loss {:.6} d_loss {:?}", row.g_loss, row.d_loss);
        }
        history.push(row);
        if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 {
            if let Some(p) = &out.checkpoint {
                trainer.save(p)?;
            }
            if let Some((p, w)) = &mut log {
                w.flush().map_err(|e| Error::io(p.as_path(), e))?;
            }
        }
    }
    if let Some(p) = &out.checkpoint {
        trainer.save(p)?;
    }
    if let Some((p, w)) = &mut log {
        w.flush().map_err(|e| Error::io(p.as_path(), e))?;
    }
    let warnings = std::mem::take(&mut trainer.warnings);
    let rejected_steps = trainer.rejected_steps;
    let (generator, discriminator) = trainer.into_networks();
    Ok(TrainResult {
        generator,
        discriminator,
        history,
        warnings,
        rejected_steps,
    })
}

/// Direct supervision with MSE or SSIM.
pub fn train_direct(cfg: &TrainConfig, data: &Dataset, out: &TrainOutput) -> Result<TrainResult> {
    if cfg.loss.is_adversarial() {
        return Err(Error::Config(format!("train_direct needs loss mse or ssim, got {}", cfg.loss)));
    }
    run(cfg, data, out)
}

/// Alternating discriminator and generator updates.
pub fn train_gan(cfg: &TrainConfig, data: &Dataset, out: &TrainOutput) -> Result<TrainResult> {
    if !cfg.loss.is_adversarial() {
        return Err(Error::Config(format!("train_gan needs loss gan or gan_l1, got {}", cfg.loss)));
    }
    run(cfg, data, out)
}

pub fn train(cfg: &TrainConfig, data: &Dataset, out: &TrainOutput) -> Result<TrainResult> {
    if cfg.loss.is_adversarial() {
        train_gan(cfg, data, out)
    } else {
        train_direct(cfg, data, out)
    }
}
