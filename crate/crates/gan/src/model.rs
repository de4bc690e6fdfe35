//! Parameter initialization and checkpointing of the full GAN.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use comets_nn::{
    pack_adam, pack_param_set, unpack_adam, unpack_param_set, Adam, AdamConfig, Checkpoint,
    ParamSet, Scalar, TensorData,
};

use crate::config::{CriticConfig, GanTrainConfig, GeneratorConfig};
use crate::error::{GanError, Result};

/// Initialization gain, tuned for leaky-ReLU(0.2) stacks.
const INIT_GAIN: f64 = 1.3867504905630728; // sqrt(2 / 1.04)

/// A trained (or freshly initialized) GAN: both networks share one
/// parameter set, split by the `gen.` / `critic.` name prefixes.
#[derive(Debug, Clone)]
pub struct GanModel {
    pub generator: GeneratorConfig,
    pub critic: CriticConfig,
    pub params: ParamSet<f32>,
}

/// Configs stored inside a checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModelManifest {
    generator: GeneratorConfig,
    critic: CriticConfig,
}

impl GanModel {
    /// Initialize both networks from a seed.
    pub fn init(generator: GeneratorConfig, critic: CriticConfig, seed: u64) -> Result<Self> {
        generator.validate()?;
        critic.validate()?;
        if generator.past_len != critic.past_len
            || generator.future_len != critic.future_len
            || generator.channels != critic.channels
        {
            return Err(GanError::Config(
                "generator and critic disagree on window lengths or channels".into(),
            ));
        }
        let mut rng = comets_core::rng::substream(seed, "gan.init");
        let mut params: ParamSet<f32> = ParamSet::new();
        init_generator(&mut params, &generator, &mut rng)?;
        init_critic(&mut params, &critic, &mut rng)?;
        Ok(Self {
            generator,
            critic,
            params,
        })
    }

    /// Write configs, parameters and (optionally) optimizer state.
    pub fn save(&self, path: &Path, optimizers: Option<(&Adam, &Adam)>) -> Result<()> {
        let mut ck = Checkpoint::new();
        let manifest = ModelManifest {
            generator: self.generator.clone(),
            critic: self.critic.clone(),
        };
        ck.insert(
            "meta.config",
            TensorData::Bytes(serde_json::to_vec_pretty(&manifest)?),
        )?;
        pack_param_set(&mut ck, &self.params)?;
        if let Some((adam_g, adam_d)) = optimizers {
            pack_adam(&mut ck, "adam_g", adam_g)?;
            pack_adam(&mut ck, "adam_d", adam_d)?;
        }
        ck.save(path)?;
        Ok(())
    }

    /// Load a checkpoint; optimizer state is restored when present.
    pub fn load(path: &Path, train: &GanTrainConfig) -> Result<(Self, Option<(Adam, Adam)>)> {
        let ck = Checkpoint::load(path)?;
        let manifest: ModelManifest = serde_json::from_slice(ck.bytes_entry("meta.config")?)?;
        // Rebuild the parameter skeleton so that shapes are validated
        // entry-by-entry during unpacking.
        let mut model = GanModel::init(manifest.generator, manifest.critic, 0)?;
        unpack_param_set(&ck, &mut model.params)?;
        let opt = if ck.get("adam_g.step").is_some() {
            let adam_g = unpack_adam(&ck, "adam_g", adam_config(train.lr_g, train))?;
            let adam_d = unpack_adam(&ck, "adam_d", adam_config(train.lr_d, train))?;
            Some((adam_g, adam_d))
        } else {
            None
        };
        Ok((model, opt))
    }
}

/// Adam settings for one of the two networks.
pub fn adam_config(lr: f64, train: &GanTrainConfig) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: train.beta1,
        beta2: train.beta2,
        ..AdamConfig::default()
    }
}

fn uniform<S: Scalar>(
    rng: &mut impl Rng,
    rows: usize,
    cols: usize,
    fan_in: usize,
) -> Array2<S> {
    let limit = INIT_GAIN * (3.0 / fan_in as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| {
        S::from_f64(rng.random_range(-limit..limit))
    })
}

fn zeros<S: Scalar>(rows: usize, cols: usize) -> Array2<S> {
    Array2::from_elem((rows, cols), S::zero())
}

/// Insert a weight matrix `name` (conventionally `<layer>.w`), its bias
/// `<layer>.b`, and, when `spectral` is set, a normalized `name.u`
/// power-iteration vector.
fn insert_matrix<S: Scalar>(
    params: &mut ParamSet<S>,
    rng: &mut impl Rng,
    name: &str,
    rows: usize,
    cols: usize,
    fan_in: usize,
    bias: bool,
    spectral: bool,
) -> Result<()> {
    params.insert(name, uniform(rng, rows, cols, fan_in), true)?;
    if bias {
        let base = name.strip_suffix(".w").unwrap_or(name);
        params.insert(&format!("{base}.b"), zeros(1, cols), true)?;
    }
    if spectral {
        let mut u: Array1<f64> = Array1::from_shape_fn(cols, |_| rng.random_range(-1.0..1.0));
        normalize(&mut u);
        // Warm the power iteration so the spectral estimate is already
        // converged at the first forward pass; training then only needs the
        // usual one tracking step per update.
        let w: Array2<f64> = params.get(name)?.values.mapv(Scalar::as_f64);
        for _ in 0..WARMUP_POWER_ITERS {
            let mut v = w.dot(&u);
            normalize(&mut v);
            u = w.t().dot(&v);
            normalize(&mut u);
        }
        let u_row = Array2::from_shape_fn((1, cols), |(_, j)| S::from_f64(u[j]));
        params.insert(&format!("{name}.u"), u_row, false)?;
    }
    Ok(())
}

/// Power iterations run once per spectral weight at initialization.
const WARMUP_POWER_ITERS: usize = 50;

fn normalize(v: &mut Array1<f64>) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
    v.mapv_inplace(|x| x / n);
}

/// Generator parameters (`gen.` prefix), in a fixed draw order.
pub fn init_generator<S: Scalar>(
    params: &mut ParamSet<S>,
    cfg: &GeneratorConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let (c, h, ted) = (cfg.channels, cfg.hidden, cfg.time_embed_dim);
    insert_matrix(params, rng, "gen.time_mlp.0.w", ted, ted, ted, true, false)?;
    insert_matrix(params, rng, "gen.time_mlp.1.w", ted, c, ted, true, false)?;
    for (k, _) in cfg.dilations.iter().enumerate() {
        let c_in = if k == 0 { 2 * c } else { h + c };
        insert_matrix(
            params,
            rng,
            &format!("gen.block{k}.w"),
            cfg.kernel * c_in,
            h,
            cfg.kernel * c_in,
            true,
            false,
        )?;
    }
    // Factored output head: a shared time projection (F x P) followed by a
    // position-wise feature map (H -> C).
    insert_matrix(
        params,
        rng,
        "gen.head_time",
        cfg.future_len,
        cfg.past_len,
        cfg.past_len,
        false,
        false,
    )?;
    insert_matrix(params, rng, "gen.head_out.w", h, c, h, true, false)?;
    Ok(())
}

/// Critic parameters (`critic.` prefix); every weight matrix carries a
/// spectral-normalization vector.
pub fn init_critic<S: Scalar>(
    params: &mut ParamSet<S>,
    cfg: &CriticConfig,
    rng: &mut impl Rng,
) -> Result<()> {
    let ted = cfg.time_embed_dim;
    insert_matrix(params, rng, "critic.time_mlp.0.w", ted, ted, ted, true, true)?;
    insert_matrix(params, rng, "critic.time_mlp.1.w", ted, 1, ted, true, true)?;
    let mut c_in = cfg.channels + 1;
    for (k, &c_out) in cfg.conv_channels.iter().enumerate() {
        insert_matrix(
            params,
            rng,
            &format!("critic.conv{k}.w"),
            cfg.conv_kernel * c_in,
            c_out,
            cfg.conv_kernel * c_in,
            true,
            true,
        )?;
        c_in = c_out;
    }
    for (k, pair) in cfg.linear.windows(2).enumerate() {
        insert_matrix(
            params,
            rng,
            &format!("critic.lin{k}.w"),
            pair[0],
            pair[1],
            pair[0],
            true,
            true,
        )?;
    }
    insert_matrix(
        params,
        rng,
        "critic.corr.w",
        cfg.correlation_features(),
        1,
        cfg.correlation_features(),
        true,
        true,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use comets_core::ChannelKind;

    fn small_model() -> GanModel {
        let gen = GeneratorConfig::with_windows(
            8,
            6,
            3,
            vec![ChannelKind::Raw, ChannelKind::Raw, ChannelKind::Raw],
        );
        let critic = CriticConfig::with_windows(8, 6, 3);
        GanModel::init(gen, critic, 42).unwrap()
    }

    #[test]
    fn init_is_deterministic() {
        let a = small_model();
        let b = small_model();
        assert_eq!(a.params.names(), b.params.names());
        for name in a.params.names() {
            assert_eq!(
                a.params.get(&name).unwrap().values,
                b.params.get(&name).unwrap().values,
                "{name} differs between same-seed inits"
            );
        }
    }

    #[test]
    fn every_critic_matrix_has_a_power_iteration_vector() {
        let m = small_model();
        for name in m.params.names() {
            if name.starts_with("critic.")
                && name.ends_with(".w")
                && !name.ends_with(".u")
            {
                assert!(
                    m.params.contains(&format!("{name}.u")),
                    "{name} lacks a spectral-normalization vector"
                );
            }
        }
    }

    #[test]
    fn checkpoint_roundtrips_bitwise() {
        let m = small_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        m.save(&path, None).unwrap();
        let (loaded, opt) = GanModel::load(&path, &GanTrainConfig::default()).unwrap();
        assert!(opt.is_none());
        assert_eq!(loaded.generator, m.generator);
        assert_eq!(loaded.critic, m.critic);
        for name in m.params.names() {
            assert_eq!(
                loaded.params.get(&name).unwrap().values,
                m.params.get(&name).unwrap().values,
                "{name} changed across save/load"
            );
        }
    }

    #[test]
    fn optimizer_state_roundtrips() {
        let m = small_model();
        let train = GanTrainConfig::default();
        let adam_g = Adam::new(adam_config(train.lr_g, &train));
        let adam_d = Adam::new(adam_config(train.lr_d, &train));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ck");
        m.save(&path, Some((&adam_g, &adam_d))).unwrap();
        let (_, opt) = GanModel::load(&path, &train).unwrap();
        let (g, d) = opt.unwrap();
        assert_eq!(g.step_count(), 0);
        assert_eq!(d.step_count(), 0);
    }

    #[test]
    fn mismatched_windows_are_rejected() {
        let gen = GeneratorConfig::synthetic(3);
        let critic = CriticConfig::with_windows(10, 24, 3);
        assert!(GanModel::init(gen, critic, 0).is_err());
    }
}
