use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{DEFAULT_LAMBDA, DEFAULT_REAL_LABEL};
use crate::networks::{DEFAULT_RESIDUAL_BLOCKS, SUBPATCH};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Mse,
    Ssim,
    Gan,
    GanL1,
}

impl LossKind {
    pub fn is_adversarial(self) -> bool {
        matches!(self, LossKind::Gan | LossKind::GanL1)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::Mse => "mse",
            LossKind::Ssim => "ssim",
            LossKind::Gan => "gan",
            LossKind::GanL1 => "gan_l1",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mse" => Ok(LossKind::Mse),
            "ssim" => Ok(LossKind::Ssim),
            "gan" => Ok(LossKind::Gan),
            "gan_l1" => Ok(LossKind::GanL1),
            other => Err(Error::Config(format!(
                "unknown loss `{other}`; expected mse, ssim, gan or gan_l1"
            ))),
        }
    }
}

/// Training hyperparameters. Every key is optional in the TOML form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub patch_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Discriminator learning rate; the generator's when unset.
    pub d_learning_rate: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub iterations: u64,
    pub qfs: Vec<u32>,
    pub lambda: f64,
    pub real_label: f64,
    /// Discriminator updates per generator update.
    pub d_steps: usize,
    pub loss: LossKind,
    pub seed: u64,
    /// Iterations between checkpoint writes; 0 writes only the final one.
    pub checkpoint_interval: u64,
    pub channels: usize,
    pub residual_blocks: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            patch_size: 128,
            batch_size: 16,
            learning_rate: 1e-4,
            d_learning_rate: None,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            iterations: 70_000,
            qfs: vec![10, 20, 30, 40],
            lambda: DEFAULT_LAMBDA,
            real_label: DEFAULT_REAL_LABEL,
            d_steps: 1,
            loss: LossKind::Gan,
            seed: 0,
            checkpoint_interval: 1000,
            channels: 3,
            residual_blocks: DEFAULT_RESIDUAL_BLOCKS,
        }
    }
}

impl TrainConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: TrainConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn d_learning_rate(&self) -> f64 {
        self.d_learning_rate.unwrap_or(self.learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.patch_size == 0 || !self.patch_size.is_multiple_of(SUBPATCH) {
            return bad(format!("patch_size {} must be a positive multiple of {SUBPATCH}", self.patch_size));
        }
        if self.batch_size == 0 || self.iterations == 0 || self.d_steps == 0 {
            return bad("batch_size, iterations and d_steps must be positive".into());
        }
        let positive = [
            ("learning_rate", self.learning_rate),
            ("d_learning_rate", self.d_learning_rate()),
            ("epsilon", self.epsilon),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&v) {
                return bad(format!("{name} must lie in [0, 1), got {v}"));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if !(self.real_label > 0.0 && self.real_label <= 1.0) {
            return bad(format!("real_label must lie in (0, 1], got {}", self.real_label));
        }
        if self.qfs.is_empty() || self.qfs.iter().any(|q| !(1..=100).contains(q)) {
            return bad(format!("qfs must be a non-empty list within 1..=100, got {:?}", self.qfs));
        }
        if self.channels != 1 && self.channels != 3 {
            return bad(format!("channels must be 1 or 3, got {}", self.channels));
        }
        Ok(())
    }
}
