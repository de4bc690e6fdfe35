//! The noise-prediction network: configuration, initialization and
//! checkpointing.

use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use comets_nn::{
    pack_adam, pack_param_set, unpack_adam, unpack_param_set, Adam, AdamConfig, Checkpoint,
    ParamSet, Scalar, TensorData,
};

use crate::error::{DiffusionError, Result};
use crate::schedule::NoiseSchedule;

/// Initialization gain, matching the leaky-ReLU(0.2) temporal stacks used
/// across the workspace.
const INIT_GAIN: f64 = 1.3867504905630728; // sqrt(2 / 1.04)

/// Architecture of the noise predictor: a stack of dilated causal
/// convolution blocks over the window, with the diffusion step embedded
/// sinusoidally and added to the hidden state after the first block. Output
/// shape always equals input shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpsNetConfig {
    /// Window length `F`.
    pub future_len: usize,
    /// Channel count `C`.
    pub channels: usize,
    /// Hidden width of every block.
    pub hidden: usize,
    /// Convolution kernel width.
    pub kernel: usize,
    /// Dilation of each block, strictly increasing.
    pub dilations: Vec<usize>,
    /// Width of the sinusoidal diffusion-step embedding.
    pub step_embed_dim: usize,
}

impl EpsNetConfig {
    pub fn new(future_len: usize, channels: usize) -> Self {
        Self {
            future_len,
            channels,
            hidden: 64,
            kernel: 3,
            dilations: vec![1, 2, 4, 8, 16, 32, 64],
            step_embed_dim: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.future_len < 1 || self.channels < 1 {
            return Err(DiffusionError::Config(format!(
                "window must be at least 1x1, got {}x{}",
                self.future_len, self.channels
            )));
        }
        if self.hidden < 1 || self.kernel < 1 {
            return Err(DiffusionError::Config(
                "hidden width and kernel must be positive".into(),
            ));
        }
        if self.dilations.is_empty() {
            return Err(DiffusionError::Config("at least one block is needed".into()));
        }
        if !self.dilations.windows(2).all(|w| w[0] < w[1]) {
            return Err(DiffusionError::Config(
                "dilations must be strictly increasing".into(),
            ));
        }
        if self.step_embed_dim < 2 || self.step_embed_dim % 2 != 0 {
            return Err(DiffusionError::Config(
                "step embedding width must be even and >= 2".into(),
            ));
        }
        Ok(())
    }
}

/// Training-loop settings for the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    /// Total optimization steps.
    pub steps: usize,
    pub seed: u64,
    /// Steps between log entries; the final step is always logged.
    pub log_every: usize,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            steps: 400,
            seed: 0,
            log_every: 10,
        }
    }
}

impl DiffusionTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(DiffusionError::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(DiffusionError::Config("batch size must be positive".into()));
        }
        if self.log_every == 0 {
            return Err(DiffusionError::Config("log cadence must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained (or freshly initialized) denoiser with its schedule.
#[derive(Debug, Clone)]
pub struct DiffusionModel {
    pub config: EpsNetConfig,
    pub schedule: NoiseSchedule,
    pub params: ParamSet<f32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest {
    config: EpsNetConfig,
    schedule: NoiseSchedule,
}

impl DiffusionModel {
    /// Initialize the network from a seed.
    pub fn init(config: EpsNetConfig, schedule: NoiseSchedule, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params: ParamSet<f32> = ParamSet::new();
        let mut rng = comets_core::rng::substream(seed, "diffusion.init");
        init_eps_net(&mut params, &config, &mut rng)?;
        Ok(Self {
            config,
            schedule,
            params,
        })
    }

    /// Write config, schedule, parameters and optional optimizer state.
    pub fn save(&self, path: &Path, optimizer: Option<&Adam>) -> Result<()> {
        let mut ck = Checkpoint::new();
        let manifest = ModelManifest {
            config: self.config.clone(),
            schedule: self.schedule.clone(),
        };
        ck.insert(
            "meta.config",
            TensorData::Bytes(serde_json::to_vec_pretty(&manifest)?),
        )?;
        pack_param_set(&mut ck, &self.params)?;
        if let Some(adam) = optimizer {
            pack_adam(&mut ck, "adam", adam)?;
        }
        ck.save(path)?;
        Ok(())
    }

    /// Load a checkpoint; optimizer state is restored when present.
    pub fn load(path: &Path, train: &DiffusionTrainConfig) -> Result<(Self, Option<Adam>)> {
        let ck = Checkpoint::load(path)?;
        let manifest: ModelManifest = serde_json::from_slice(ck.bytes_entry("meta.config")?)?;
        let mut model = DiffusionModel::init(manifest.config, manifest.schedule, 0)?;
        unpack_param_set(&ck, &mut model.params)?;
        let opt = if ck.get("adam.step").is_some() {
            Some(unpack_adam(&ck, "adam", adam_config(train))?)
        } else {
            None
        };
        Ok((model, opt))
    }
}

/// Adam settings for the denoiser.
pub fn adam_config(train: &DiffusionTrainConfig) -> AdamConfig {
    AdamConfig {
        lr: train.lr,
        ..AdamConfig::default()
    }
}

fn insert_matrix<S: Scalar>(
    params: &mut ParamSet<S>,
    rng: &mut impl Rng,
    name: &str,
    rows: usize,
    cols: usize,
) -> Result<()> {
    let limit = INIT_GAIN * (3.0 / rows as f64).sqrt();
    let w = Array2::from_shape_fn((rows, cols), |_| S::from_f64(rng.random_range(-limit..limit)));
    params.insert(name, w, true)?;
    let base = name.strip_suffix(".w").unwrap_or(name);
    params.insert(&format!("{base}.b"), Array2::from_elem((1, cols), S::zero()), true)?;
    Ok(())
}

/// Denoiser parameters (`eps.` prefix), in a fixed draw order.
pub fn init_eps_net<S: Scalar>(
    params: &mut ParamSet<S>,
    cfg: &EpsNetConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let (c, h, sed) = (cfg.channels, cfg.hidden, cfg.step_embed_dim);
    insert_matrix(params, rng, "eps.step_mlp.0.w", sed, sed)?;
    insert_matrix(params, rng, "eps.step_mlp.1.w", sed, h)?;
    for (k, _) in cfg.dilations.iter().enumerate() {
        let c_in = if k == 0 { c } else { h };
        insert_matrix(params, rng, &format!("eps.block{k}.w"), cfg.kernel * c_in, h)?;
    }
    insert_matrix(params, rng, "eps.head.w", h, c)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small() -> DiffusionModel {
        let mut cfg = EpsNetConfig::new(8, 3);
        cfg.hidden = 6;
        cfg.dilations = vec![1, 2];
        cfg.step_embed_dim = 4;
        DiffusionModel::init(cfg, NoiseSchedule::default_linear(), 7).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = small();
        let b = small();
        assert_eq!(a.params.names(), b.params.names());
        for name in a.params.names() {
            assert_eq!(
                a.params.get(&name).unwrap().values,
                b.params.get(&name).unwrap().values
            );
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = EpsNetConfig::new(8, 3);
        cfg.dilations = vec![2, 2];
        assert!(cfg.validate().is_err());
        cfg.dilations = vec![];
        assert!(cfg.validate().is_err());
        let mut cfg = EpsNetConfig::new(8, 3);
        cfg.step_embed_dim = 5;
        assert!(cfg.validate().is_err());
        let cfg = EpsNetConfig::new(0, 3);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn checkpoint_roundtrips_bitwise() {
        let model = small();
        let dir = tempdir().unwrap();
        let path = dir.path().join("diff.ck");
        model.save(&path, None).unwrap();
        let (loaded, opt) = DiffusionModel::load(&path, &DiffusionTrainConfig::default()).unwrap();
        assert!(opt.is_none());
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.schedule, model.schedule);
        for name in model.params.names() {
            let a = &model.params.get(&name).unwrap().values;
            let b = &loaded.params.get(&name).unwrap().values;
            assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }
}
