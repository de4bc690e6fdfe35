//! Configuration of the generator, critic and training loop.

use serde::{Deserialize, Serialize};

use comets_core::ChannelKind;

use crate::error::{GanError, Result};

/// Number of temporal convolutional blocks in the generator (fixed).
pub const GENERATOR_BLOCKS: usize = 7;
/// Number of 10-minute bins in a 390-minute trading session.
pub const TIME_BINS: usize = 39;

/// Ten-minute time-of-day bin of a minute offset from the session open.
pub fn minute_bin(minute_of_day: u32) -> usize {
    comets_nn::minute_to_bin(minute_of_day)
}

/// Bins for a whole window of minute offsets.
pub fn minute_bins(minutes: &[u32]) -> Vec<usize> {
    minutes.iter().map(|m| minute_bin(*m)).collect()
}

/// Generator architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    /// Conditioning window length `P`.
    pub past_len: usize,
    /// Generated window length `F`.
    pub future_len: usize,
    /// Channel count `C` (`2n` for `n` assets).
    pub channels: usize,
    /// Kind of each channel; volume channels get a tanh output bound.
    pub channel_kinds: Vec<ChannelKind>,
    /// Hidden width of every temporal block.
    pub hidden: usize,
    /// Convolution kernel size.
    pub kernel: usize,
    /// Dilation of each temporal block, strictly increasing, exactly 7.
    pub dilations: Vec<usize>,
    /// Width of the injected noise; must equal `channels`.
    pub noise_width: usize,
    /// Sinusoidal time-embedding width (even).
    pub time_embed_dim: usize,
    /// Dropout rate inside temporal blocks.
    pub dropout: f64,
}

impl GeneratorConfig {
    /// Defaults for stock data: 150-step windows.
    pub fn stock(channels: usize, channel_kinds: Vec<ChannelKind>) -> Self {
        Self::with_windows(150, 150, channels, channel_kinds)
    }

    /// Defaults for synthetic benchmarks: 24-step windows.
    pub fn synthetic(channels: usize) -> Self {
        Self::with_windows(24, 24, channels, vec![ChannelKind::Raw; channels])
    }

    pub fn with_windows(
        past_len: usize,
        future_len: usize,
        channels: usize,
        channel_kinds: Vec<ChannelKind>,
    ) -> Self {
        Self {
            past_len,
            future_len,
            channels,
            channel_kinds,
            hidden: 64,
            kernel: 3,
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
            noise_width: channels,
            time_embed_dim: 32,
            dropout: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.past_len < 1 || self.future_len < 2 {
            return Err(GanError::Config(format!(
                "window lengths must satisfy P >= 1 and F >= 2, got P={} F={}",
                self.past_len, self.future_len
            )));
        }
        if self.channels < 2 {
            return Err(GanError::Config(
                "at least 2 channels are needed for pairwise correlations".into(),
            ));
        }
        if self.channel_kinds.len() != self.channels {
            return Err(GanError::Config(format!(
                "{} channel kinds for {} channels",
                self.channel_kinds.len(),
                self.channels
            )));
        }
        if self.dilations.len() != GENERATOR_BLOCKS {
            return Err(GanError::Config(format!(
                "generator must have exactly {GENERATOR_BLOCKS} temporal blocks, got {}",
                self.dilations.len()
            )));
        }
        if !self.dilations.windows(2).all(|w| w[0] < w[1]) {
            return Err(GanError::Config(
                "dilations must be strictly increasing".into(),
            ));
        }
        if self.noise_width != self.channels {
            return Err(GanError::Config(format!(
                "noise width {} must equal the channel count {}",
                self.noise_width, self.channels
            )));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(GanError::Config(
                "time embedding width must be even and >= 2".into(),
            ));
        }
        if self.hidden == 0 || self.kernel == 0 {
            return Err(GanError::Config(
                "hidden width and kernel size must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(GanError::Config(format!(
                "dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }
}

/// Critic architecture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub past_len: usize,
    pub future_len: usize,
    pub channels: usize,
    /// Filter counts of the strided convolution stack, increasing.
    pub conv_channels: Vec<usize>,
    pub conv_kernel: usize,
    pub conv_stride: usize,
    /// Widths of the position-wise linear stack; starts at the last conv
    /// width and ends at 1.
    pub linear: Vec<usize>,
    /// Weight of the correlation head in the critic score.
    pub alpha: f64,
    pub time_embed_dim: usize,
    /// Power-iteration steps per spectral normalization.
    pub power_iters: usize,
}

impl CriticConfig {
    pub fn with_windows(past_len: usize, future_len: usize, channels: usize) -> Self {
        Self {
            past_len,
            future_len,
            channels,
            conv_channels: vec![32, 64, 128, 256],
            conv_kernel: 5,
            conv_stride: 2,
            linear: vec![256, 128, 1],
            alpha: 1.0,
            time_embed_dim: 32,
            power_iters: 1,
        }
    }

    /// Length of the pairwise-correlation feature vector, `C(C-1)/2`.
    pub fn correlation_features(&self) -> usize {
        self.channels * (self.channels - 1) / 2
    }

    pub fn validate(&self) -> Result<()> {
        if self.past_len < 1 || self.future_len < 2 {
            return Err(GanError::Config(format!(
                "window lengths must satisfy P >= 1 and F >= 2, got P={} F={}",
                self.past_len, self.future_len
            )));
        }
        if self.channels < 2 {
            return Err(GanError::Config(
                "at least 2 channels are needed for pairwise correlations".into(),
            ));
        }
        if self.conv_channels.is_empty() {
            return Err(GanError::Config("empty critic conv stack".into()));
        }
        if !self.conv_channels.windows(2).all(|w| w[0] < w[1]) {
            return Err(GanError::Config(
                "critic conv filter counts must increase".into(),
            ));
        }
        if self.linear.len() < 2 {
            return Err(GanError::Config(
                "critic linear stack needs at least input and output widths".into(),
            ));
        }
        if self.linear.first() != self.conv_channels.last() {
            return Err(GanError::Config(format!(
                "linear stack must start at the last conv width {}, got {}",
                self.conv_channels.last().unwrap(),
                self.linear.first().unwrap()
            )));
        }
        if *self.linear.last().unwrap() != 1 {
            return Err(GanError::Config("linear stack must end at width 1".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(GanError::Config(format!(
                "alpha must be in [0, 1], got {}",
                self.alpha
            )));
        }
        if self.time_embed_dim < 2 || self.time_embed_dim % 2 != 0 {
            return Err(GanError::Config(
                "time embedding width must be even and >= 2".into(),
            ));
        }
        if self.conv_kernel == 0 || self.conv_stride == 0 {
            return Err(GanError::Config(
                "conv kernel and stride must be positive".into(),
            ));
        }
        if self.power_iters == 0 {
            return Err(GanError::Config("power_iters must be >= 1".into()));
        }
        Ok(())
    }
}

/// Training-loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanTrainConfig {
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    /// Total generator updates.
    pub gen_steps: usize,
    pub seed: u64,
    /// Generator steps between held-out evaluations.
    pub eval_every: usize,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        Self {
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            batch_size: 64,
            critic_steps: 5,
            gen_steps: 100,
            seed: 0,
            eval_every: 10,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_g > 0.0 && self.lr_d > 0.0) {
            return Err(GanError::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(GanError::Config("Adam betas must be in [0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(GanError::Config("batch size must be positive".into()));
        }
        if self.critic_steps == 0 {
            return Err(GanError::Config("critic steps must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(GanError::Config("eval cadence must be >= 1".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_generator_config_is_valid() {
        GeneratorConfig::synthetic(5).validate().unwrap();
        GeneratorConfig::stock(8, vec![ChannelKind::Price, ChannelKind::Volume].repeat(4))
            .validate()
            .unwrap();
    }

    #[test]
    fn block_count_is_enforced() {
        let mut cfg = GeneratorConfig::synthetic(3);
        cfg.dilations.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn dilations_must_increase() {
        let mut cfg = GeneratorConfig::synthetic(3);
        cfg.dilations = vec![1, 2, 4, 4, 16, 32, 64];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn noise_width_is_tied_to_channels() {
        let mut cfg = GeneratorConfig::synthetic(3);
        cfg.noise_width = 4;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn critic_alpha_range_is_enforced() {
        let mut cfg = CriticConfig::with_windows(24, 24, 4);
        cfg.validate().unwrap();
        cfg.alpha = 1.5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn correlation_feature_count_is_binomial() {
        let cfg = CriticConfig::with_windows(24, 24, 8);
        assert_eq!(cfg.correlation_features(), 28);
    }

    #[test]
    fn linear_stack_must_match_conv_output() {
        let mut cfg = CriticConfig::with_windows(24, 24, 4);
        cfg.linear = vec![128, 1];
        assert!(cfg.validate().is_err());
        cfg.linear = vec![256, 128, 2];
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn train_config_validation() {
        GanTrainConfig::default().validate().unwrap();
        let mut cfg = GanTrainConfig::default();
        cfg.critic_steps = 0;
        assert!(cfg.validate().is_err());
    }
}
