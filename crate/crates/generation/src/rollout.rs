//! Long-horizon autoregressive generation.
//!
//! The generator produces `F` steps from a `P`-step past; feeding the last
//! `P` generated steps back in extends the series indefinitely. Perturbed
//! rollouts share the unperturbed twin's noise stream draw for draw, so the
//! two runs are bitwise identical until the first perturbed row is fed
//! back — the comparison baseline of the reactivity experiment.

use ndarray::{s, Array2};

use comets_core::preprocess::{invert_preprocess, PreprocessState, PriceAnchor};
use comets_core::rng::substream;
use comets_core::series::{ChannelMeta, MultivariateSeries};
use comets_gan::{generate, minute_bin, sample_noise, GanModel};

use crate::error::{GenerationError, Result};
use crate::perturb::{apply_perturbation, PerturbationSpec};

/// One trading day in minutes; minute-of-day wraps at this count.
pub const MINUTES_PER_DAY: u32 = 390;

/// Settings for one autoregressive rollout.
#[derive(Debug, Clone)]
pub struct RolloutConfig {
    /// Number of generated rows to emit.
    pub total_steps: usize,
    /// Seed of the rollout's noise stream.
    pub seed: u64,
    /// Real `P x C` starting window, in the model's (preprocessed) space.
    pub past: Array2<f64>,
    /// Minute of day of the first row of `past`; advances by one per row
    /// and wraps every [`MINUTES_PER_DAY`] minutes.
    pub start_minute_of_day: u32,
    /// Channel names/kinds for the emitted series. `None` derives
    /// anonymous metadata from the generator's channel kinds.
    pub channel_meta: Option<Vec<ChannelMeta>>,
}

impl RolloutConfig {
    pub fn new(total_steps: usize, seed: u64, past: Array2<f64>) -> Self {
        Self {
            total_steps,
            seed,
            past,
            start_minute_of_day: 0,
            channel_meta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.total_steps == 0 {
            return Err(GenerationError::Config("total_steps must be >= 1".into()));
        }
        if self.start_minute_of_day >= MINUTES_PER_DAY {
            return Err(GenerationError::Config(format!(
                "start minute {} outside the {MINUTES_PER_DAY}-minute session",
                self.start_minute_of_day
            )));
        }
        if let Some(bad) = self.past.iter().find(|v| !v.is_finite()) {
            return Err(GenerationError::Input(format!(
                "starting window contains a non-finite value {bad}"
            )));
        }
        Ok(())
    }
}

/// A finished rollout: the generated series in model space plus how many
/// generator calls it took.
#[derive(Debug, Clone)]
pub struct RolloutResult {
    /// Exactly `total_steps` generated rows, in preprocessed space.
    pub series: MultivariateSeries,
    /// Number of `F`-step generator invocations.
    pub model_calls: usize,
}

impl RolloutResult {
    /// Map the generated series back to raw prices/volumes, continuing from
    /// the last price the preprocessing state observed.
    pub fn raw_space(&self, state: &PreprocessState) -> Result<MultivariateSeries> {
        Ok(invert_preprocess(
            &self.series,
            state,
            PriceAnchor::Continuation,
        )?)
    }
}

/// Generate `total_steps` rows by repeated `F`-block generation.
pub fn rollout(model: &GanModel, config: &RolloutConfig) -> Result<RolloutResult> {
    rollout_inner(model, config, None)
}

/// A rollout with a shock injected into `[t_start, t_end)`.
///
/// Perturbed rows replace the generator's output both in the emitted series
/// and in the fed-back past, so later blocks condition on the shock.
pub fn rollout_perturbed(
    model: &GanModel,
    config: &RolloutConfig,
    spec: &PerturbationSpec,
) -> Result<RolloutResult> {
    spec.validate()?;
    if spec.t_end > config.total_steps {
        return Err(GenerationError::Config(format!(
            "perturbation window [{}, {}) exceeds the rollout extent {}",
            spec.t_start, spec.t_end, config.total_steps
        )));
    }
    for &ch in &spec.channels {
        if ch >= model.generator.channels {
            return Err(GenerationError::Input(format!(
                "target channel {ch} out of range for {} channels",
                model.generator.channels
            )));
        }
    }
    rollout_inner(model, config, Some(spec))
}

fn rollout_inner(
    model: &GanModel,
    config: &RolloutConfig,
    spec: Option<&PerturbationSpec>,
) -> Result<RolloutResult> {
    config.validate()?;
    let gen = &model.generator;
    let (p, f, c) = (gen.past_len, gen.future_len, gen.channels);
    if f < p {
        return Err(GenerationError::Config(format!(
            "rollout feedback needs F >= P, generator has F = {f}, P = {p}"
        )));
    }
    if config.past.dim() != (p, c) {
        return Err(GenerationError::Input(format!(
            "starting window is {:?}, generator expects ({p}, {c})",
            config.past.dim()
        )));
    }
    let meta = match &config.channel_meta {
        Some(meta) => {
            if meta.len() != c {
                return Err(GenerationError::Config(format!(
                    "{} channel metadata entries for {c} channels",
                    meta.len()
                )));
            }
            for (i, (m, k)) in meta.iter().zip(&gen.channel_kinds).enumerate() {
                if m.kind != *k {
                    return Err(GenerationError::Config(format!(
                        "channel {i} metadata kind {:?} does not match the generator's {k:?}",
                        m.kind
                    )));
                }
            }
            meta.clone()
        }
        None => gen
            .channel_kinds
            .iter()
            .enumerate()
            .map(|(i, k)| ChannelMeta::new(format!("ch{i}"), *k))
            .collect(),
    };

    let mut rng = substream(config.seed, "rollout.noise");
    let mut past: Array2<f32> = config.past.mapv(|v| v as f32);
    let mut series = Array2::<f64>::zeros((0, c));
    let mut model_calls = 0usize;
    let start = u64::from(config.start_minute_of_day);

    while series.nrows() < config.total_steps {
        let produced = series.nrows();
        // Minute of past row i: the starting window begins at `start`, and
        // every fed-back window starts `produced` steps later.
        let bins: Vec<usize> = (0..p)
            .map(|i| minute_bin(((start + (produced + i) as u64) % u64::from(MINUTES_PER_DAY)) as u32))
            .collect();
        let noise = sample_noise::<f32>(gen, 1, &mut rng);
        let out = generate(gen, &model.params, &past, &noise, &bins, 1)?;
        model_calls += 1;
        let mut block: Array2<f64> = out.mapv(f64::from);

        if let Some(spec) = spec {
            let lo = spec.t_start.max(produced);
            let hi = spec.t_end.min(produced + f);
            if lo < hi {
                let local = lo - produced..hi - produced;
                let perturbed =
                    apply_perturbation(&block.slice(s![local.clone(), ..]).to_owned(), spec)?;
                block.slice_mut(s![local, ..]).assign(&perturbed);
            }
        }

        if let Some(((r, _), bad)) = block.indexed_iter().find(|(_, v)| !v.is_finite()) {
            return Err(GenerationError::Rollout {
                step: produced + r,
                message: format!("generator emitted {bad}"),
            });
        }

        series.append(ndarray::Axis(0), block.view()).map_err(|e| {
            GenerationError::Input(format!("could not extend the rollout series: {e}"))
        })?;
        past = series
            .slice(s![series.nrows() - p.., ..])
            .mapv(|v| v as f32);
    }

    series = series.slice(s![..config.total_steps, ..]).to_owned();
    Ok(RolloutResult {
        series: MultivariateSeries::new(series, None, meta)?,
        model_calls,
    })
}
