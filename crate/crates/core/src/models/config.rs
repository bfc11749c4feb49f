use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Ae,
    Vae,
    Paae,
    Pavae,
}

impl ModelKind {
    pub fn is_variational(self) -> bool {
        matches!(self, ModelKind::Vae | ModelKind::Pavae)
    }

    pub fn uses_pathways(self) -> bool {
        matches!(self, ModelKind::Paae | ModelKind::Pavae)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Ae => "AE",
            ModelKind::Vae => "VAE",
            ModelKind::Paae => "PAAE",
            ModelKind::Pavae => "PAVAE",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "AE" => Ok(ModelKind::Ae),
            "VAE" => Ok(ModelKind::Vae),
            "PAAE" => Ok(ModelKind::Paae),
            "PAVAE" => Ok(ModelKind::Pavae),
            other => Err(Error::Config(format!("unknown model kind `{other}`"))),
        }
    }
}

/// KL warm-up schedule.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    #[default]
    None,
    Step,
    Smooth,
}

impl ScheduleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ScheduleKind::None => "none",
            ScheduleKind::Step => "step",
            ScheduleKind::Smooth => "smooth",
        }
    }
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScheduleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "" => Ok(ScheduleKind::None),
            "step" => Ok(ScheduleKind::Step),
            "smooth" => Ok(ScheduleKind::Smooth),
            other => Err(Error::Config(format!("unknown schedule `{other}`"))),
        }
    }
}

fn default_dropout() -> f64 {
    0.5
}

fn default_ts() -> usize {
    32
}

fn default_te() -> usize {
    160
}

/// Structure and regularization of one autoencoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub kind: ModelKind,
    /// Hidden widths inside every pathway encoder; empty means one linear layer `|p_j| -> 1`.
    #[serde(default)]
    pub pathway_hidden_sizes: Vec<usize>,
    /// Latent encoder widths; the last entry is the latent dimension.
    pub encoder_layer_sizes: Vec<usize>,
    /// Decoder hidden widths; the output width is always the gene count.
    /// `None` mirrors the encoder's hidden widths.
    #[serde(default)]
    pub decoder_hidden_sizes: Option<Vec<usize>>,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub schedule: ScheduleKind,
    #[serde(default = "default_ts")]
    pub ts: usize,
    #[serde(default = "default_te")]
    pub te: usize,
}

impl ArchitectureConfig {
    pub fn new(kind: ModelKind, encoder_layer_sizes: Vec<usize>) -> Self {
        Self {
            kind,
            pathway_hidden_sizes: Vec::new(),
            encoder_layer_sizes,
            decoder_hidden_sizes: None,
            dropout_rate: default_dropout(),
            beta: if kind.is_variational() { 1.0 } else { 0.0 },
            schedule: ScheduleKind::None,
            ts: default_ts(),
            te: default_te(),
        }
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder_layer_sizes.last().copied().unwrap_or(0)
    }

    pub fn decoder_hidden(&self) -> Vec<usize> {
        match &self.decoder_hidden_sizes {
            Some(sizes) => sizes.clone(),
            None => {
                let n = self.encoder_layer_sizes.len();
                self.encoder_layer_sizes[..n.saturating_sub(1)].iter().rev().copied().collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim() == 0 {
            return Err(Error::Config("latent dimension must be at least 1".into()));
        }
        let zero_width = self
            .encoder_layer_sizes
            .iter()
            .chain(&self.pathway_hidden_sizes)
            .chain(self.decoder_hidden_sizes.iter().flatten())
            .any(|&w| w == 0);
        if zero_width {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {}", self.dropout_rate)));
        }
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be a nonnegative real, got {}", self.beta)));
        }
        if self.schedule == ScheduleKind::Smooth && self.te <= self.ts {
            return Err(Error::Config(format!("smooth schedule needs te > ts, got ts={} te={}", self.ts, self.te)));
        }
        Ok(())
    }
}

/// Optimization settings for [`fit`](super::fit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "TrainConfig::default_epochs")]
    pub epochs: usize,
    #[serde(default = "TrainConfig::default_lr")]
    pub learning_rate: f64,
    #[serde(default = "TrainConfig::default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    fn default_epochs() -> usize {
        1024
    }

    fn default_lr() -> f64 {
        1e-4
    }

    fn default_batch() -> usize {
        128
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: Self::default_epochs(),
            learning_rate: Self::default_lr(),
            batch_size: Self::default_batch(),
            seed: 0,
        }
    }
}

/// A pathway resolved to column indices of one gene axis.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathwayMask {
    pub name: String,
    pub indices: Vec<usize>,
}

impl PathwayMask {
    pub fn new(name: impl Into<String>, indices: Vec<usize>, gene_count: usize) -> Result<Self> {
        let mask = Self { name: name.into(), indices };
        mask.check(gene_count)?;
        Ok(mask)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn check(&self, gene_count: usize) -> Result<()> {
        if self.indices.is_empty() {
            return Err(Error::Config(format!("pathway `{}` has no genes", self.name)));
        }
        let mut seen = HashSet::with_capacity(self.indices.len());
        for &i in &self.indices {
            if i >= gene_count {
                return Err(Error::shape(
                    "PathwayMask",
                    format!("pathway `{}` index {i} outside {gene_count} genes", self.name),
                ));
            }
            if !seen.insert(i) {
                return Err(Error::Config(format!("pathway `{}` repeats gene index {i}", self.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mirrored_decoder() {
        let arch = ArchitectureConfig::new(ModelKind::Ae, vec![256, 128, 64]);
        assert_eq!(arch.decoder_hidden(), vec![128, 256]);
        assert_eq!(arch.latent_dim(), 64);
        let arch = ArchitectureConfig::new(ModelKind::Paae, vec![64]);
        assert!(arch.decoder_hidden().is_empty());
    }

    #[test]
    fn validation_rules() {
        let mut arch = ArchitectureConfig::new(ModelKind::Vae, vec![]);
        assert!(arch.validate().is_err());
        arch.encoder_layer_sizes = vec![4];
        arch.schedule = ScheduleKind::Smooth;
        arch.ts = 10;
        arch.te = 10;
        assert!(arch.validate().is_err());
        arch.te = 11;
        arch.validate().unwrap();
        arch.dropout_rate = 1.0;
        assert!(arch.validate().is_err());
    }

    #[test]
    fn mask_checks() {
        assert!(PathwayMask::new("p", vec![0, 2], 3).is_ok());
        assert!(PathwayMask::new("p", vec![0, 3], 3).is_err());
        assert!(PathwayMask::new("p", vec![1, 1], 3).is_err());
        assert!(PathwayMask::new("p", vec![], 3).is_err());
    }

    #[test]
    fn kind_round_trip() {
        for k in [ModelKind::Ae, ModelKind::Vae, ModelKind::Paae, ModelKind::Pavae] {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
        }
    }
}
