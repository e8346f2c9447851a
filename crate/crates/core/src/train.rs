//! MSE training with scheduled sampling, checkpointing and vocabulary
//! adaptation.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use acgn_sim::{Dataset, Vocabulary};
use acgn_tensor::{clip_grad_norm, Adam, Float, Graph, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::baseline::matched_concat_config;
use crate::checkpoint::{self, CheckpointInfo};
use crate::config::{ModelConfig, ModelKind};
use crate::data::{load_split, sample_windows, Batch, EpisodeData};
use crate::error::{CoreError, Result};
use crate::model::{HiddenState, Model};

/// Linear decay of the ground-truth feeding probability.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingSchedule {
    pub start: f64,
    pub end: f64,
    /// Fraction of the step budget over which `start` decays to `end`.
    pub horizon: f64,
}

impl Default for SamplingSchedule {
    fn default() -> Self {
        Self {
            start: 1.0,
            end: 0.0,
            horizon: 0.6,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 32/64/128 encoder, K = 16, C_h = 64.
    #[default]
    Standard,
    /// 16/32/64 encoder, K = 8, C_h = 32.
    Compact,
}

fn default_batch() -> usize {
    8
}
fn default_lr() -> f64 {
    2e-4
}
fn default_window() -> usize {
    24
}
fn default_clip() -> f64 {
    5.0
}
fn default_split() -> String {
    "train".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: PathBuf,
    #[serde(default = "default_split")]
    pub split: String,
    #[serde(default = "default_model")]
    pub model: ModelKind,
    #[serde(default)]
    pub preset: Preset,
    /// Overrides the preset when present.
    #[serde(default)]
    pub architecture: Option<ModelConfig>,
    pub steps: u64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub sampling: SamplingSchedule,
    /// Predicted frames per training window.
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_clip")]
    pub clip_norm: f64,
    /// Steps between periodic checkpoints; 0 disables them.
    #[serde(default)]
    pub checkpoint_every: u64,
    #[serde(default)]
    pub seed: u64,
}

fn default_model() -> ModelKind {
    ModelKind::Acgn
}

impl TrainConfig {
    pub fn new(dataset: impl Into<PathBuf>, steps: u64) -> Self {
        Self {
            dataset: dataset.into(),
            split: default_split(),
            model: default_model(),
            preset: Preset::default(),
            architecture: None,
            steps,
            batch_size: default_batch(),
            lr: default_lr(),
            sampling: SamplingSchedule::default(),
            window: default_window(),
            clip_norm: default_clip(),
            checkpoint_every: 0,
            seed: 0,
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(CoreError::io(path))?;
        serde_json::from_str(&text).map_err(CoreError::json(path))
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.sampling;
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if !(s.horizon > 0.0 && s.horizon <= 1.0) {
            return bad("sampling horizon must lie in (0, 1]");
        }
        if !(0.0..=1.0).contains(&s.start) || !(0.0..=1.0).contains(&s.end) || s.end > s.start {
            return bad("sampling schedule must be non-increasing within [0, 1]");
        }
        if self.batch_size == 0 || self.window == 0 {
            return bad("batch size and window must be positive");
        }
        if !(self.lr > 0.0) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }

    /// Architecture for `vocab` honouring model kind, preset and override.
    pub fn model_config(&self, vocab: &Vocabulary) -> Result<ModelConfig> {
        let acgn = match &self.architecture {
            Some(a) => ModelConfig {
                kind: ModelKind::Acgn,
                ..a.clone()
            },
            None => match self.preset {
                Preset::Standard => ModelConfig::for_vocab(vocab),
                Preset::Compact => ModelConfig::compact(vocab),
            },
        };
        match self.model {
            ModelKind::Acgn => Ok(acgn),
            ModelKind::Concat => match &self.architecture {
                Some(a) if a.kind == ModelKind::Concat => Ok(a.clone()),
                _ => matched_concat_config(&acgn),
            },
        }
    }
}

/// Ground-truth feeding probability at `step`.
pub fn sampling_probability(step: u64, config: &TrainConfig) -> f64 {
    let s = &config.sampling;
    let horizon = s.horizon * config.steps as f64;
    if horizon <= 0.0 {
        return s.end;
    }
    let frac = (step as f64 / horizon).min(1.0);
    (s.start + (s.end - s.start) * frac).clamp(0.0, 1.0)
}

/// Mean squared error over frames, pixels and channels.
pub fn mse_loss<T: Float>(predictions: &[Tensor<T>], targets: &[Tensor<T>]) -> Result<f64> {
    if predictions.len() != targets.len() || predictions.is_empty() {
        return Err(CoreError::Shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in predictions.iter().zip(targets) {
        if p.shape() != t.shape() {
            return Err(CoreError::Shape(format!(
                "{:?} vs {:?}",
                p.shape(),
                t.shape()
            )));
        }
        sum += p
            .data()
            .iter()
            .zip(t.data())
            .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
            .sum::<f64>();
        count += p.numel();
    }
    Ok(sum / count as f64)
}

/// Builds the unrolled loss of `batch` on `g`. After the first step each
/// batch element is fed its ground-truth frame with probability `p`, else the
/// model's own (detached) previous prediction.
pub fn rollout_loss_graph<T: Float, R: Rng + ?Sized>(
    model: &Model<T>,
    g: &Graph<T>,
    batch: &Batch<T>,
    p: f64,
    rng: &mut R,
) -> Result<(Var, Vec<Var>)> {
    let window = batch.window();
    if window == 0 {
        return Err(CoreError::Dataset("episode shorter than 2 frames".into()));
    }
    let b = batch.frames[0].shape()[0];
    let mut hidden = model.graph_hidden(g, &HiddenState::zeros(&model.config, b, 1));
    let mut preds = Vec::with_capacity(window);
    let mut losses = Vec::with_capacity(window);
    let mut input = g.constant(batch.frames[0].clone());
    for t in 1..=window {
        let (pred, next) =
            model.step_g(g, input, std::slice::from_ref(&batch.labels[t]), &hidden)?;
        hidden = next;
        let target = g.constant(batch.frames[t].clone());
        losses.push(g.mse(pred, target));
        preds.push(pred);
        if t < window {
            input = mix_input(g, &batch.frames[t], pred, p, rng);
        }
    }
    let loss = g.scale(g.sum(&losses), T::from_f64_lossy(1.0 / window as f64));
    Ok((loss, preds))
}

fn mix_input<T: Float, R: Rng + ?Sized>(
    g: &Graph<T>,
    truth: &Tensor<T>,
    pred: Var,
    p: f64,
    rng: &mut R,
) -> Var {
    let b = truth.shape()[0];
    let use_truth: Vec<bool> = (0..b).map(|_| rng.random::<f64>() < p).collect();
    if use_truth.iter().all(|&u| u) {
        return g.constant(truth.clone());
    }
    let predicted = g.value(pred);
    let per = truth.numel() / b;
    let mut mixed = truth.clone();
    for (i, &u) in use_truth.iter().enumerate() {
        if !u {
            mixed.data_mut()[i * per..(i + 1) * per]
                .copy_from_slice(&predicted.data()[i * per..(i + 1) * per]);
        }
    }
    g.constant(mixed)
}

/// Scheduled-sampling loss of one whole episode.
pub fn train_rollout_loss<T: Float, R: Rng + ?Sized>(
    model: &Model<T>,
    episode: &EpisodeData,
    p: f64,
    rng: &mut R,
) -> Result<f64> {
    if episode.len() < 2 {
        return Err(CoreError::Dataset("episode shorter than 2 frames".into()));
    }
    let g = Graph::new();
    let (loss, _) = rollout_loss_graph(model, &g, &Batch::from_episode(episode), p, rng)?;
    Ok(g.value(loss).data()[0].as_f64())
}

/// One line of the metrics file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub step: u64,
    pub loss: f64,
    pub p: f64,
    #[serde(default)]
    pub grad_norm: f64,
    #[serde(default)]
    pub seconds: f64,
}

#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub checkpoint: PathBuf,
    pub records: Vec<MetricRecord>,
}

/// Optimises `model` in place on `episodes`, writing metrics and checkpoints
/// under `out`.
pub fn fit_model(
    model: &mut Model<f32>,
    episodes: &[EpisodeData],
    config: &TrainConfig,
    out: &Path,
) -> Result<FitOutcome> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(CoreError::io(out))?;
    let metrics_path = out.join("metrics.jsonl");
    let mut metrics =
        BufWriter::new(File::create(&metrics_path).map_err(CoreError::io(&metrics_path))?);
    let mut rng = ChaCha8Rng::seed_from_u64(acgn_sim::derive_seed(config.seed, 0x7a1));
    let mut opt = Adam::new(config.lr);
    let mut records = Vec::with_capacity(config.steps as usize);
    let clock = Instant::now();
    for step in 0..config.steps {
        let p = sampling_probability(step, config);
        let picks = sample_windows(episodes, config.batch_size, config.window, &mut rng)?;
        let batch = Batch::from_windows(episodes, &picks, config.window);
        let g = Graph::new();
        let (loss, _) = rollout_loss_graph(model, &g, &batch, p, &mut rng)?;
        let value = g.value(loss).data()[0] as f64;
        if !value.is_finite() {
            return Err(CoreError::NonFinite { step, loss: value });
        }
        let mut grads = g.backward(loss).params(&model.params);
        let grad_norm = clip_grad_norm(&mut grads, config.clip_norm);
        drop(g);
        opt.step(&mut model.params, &grads);
        let rec = MetricRecord {
            step,
            loss: value,
            p,
            grad_norm,
            seconds: clock.elapsed().as_secs_f64(),
        };
        writeln!(
            metrics,
            "{}",
            serde_json::to_string(&rec).expect("record serializes")
        )
        .map_err(CoreError::io(&metrics_path))?;
        metrics.flush().map_err(CoreError::io(&metrics_path))?;
        if step % 50 == 0 {
            tracing::info!(step, loss = value, p, "train");
        }
        records.push(rec);
        let done = step + 1;
        if config.checkpoint_every > 0 && done % config.checkpoint_every == 0 && done < config.steps
        {
            let info = CheckpointInfo {
                step: done,
                note: format!("periodic {}", model.kind()),
            };
            checkpoint::save(
                model,
                &info,
                &out.join(format!("step_{done:06}.safetensors")),
            )?;
        }
    }
    let path = out.join("final.safetensors");
    let info = CheckpointInfo {
        step: config.steps,
        note: format!("final {}", model.kind()),
    };
    checkpoint::save(model, &info, &path)?;
    Ok(FitOutcome {
        checkpoint: path,
        records,
    })
}

/// Trains a fresh model as described by `config`.
pub fn fit(config: &TrainConfig, out: &Path) -> Result<FitOutcome> {
    config.validate()?;
    let ds = Dataset::open(&config.dataset).map_err(|e| CoreError::Dataset(e.to_string()))?;
    let vocab = ds.manifest.vocabulary.clone();
    let arch = config.model_config(&vocab)?;
    let mut init = ChaCha8Rng::seed_from_u64(acgn_sim::derive_seed(config.seed, 0x1417));
    let mut model = Model::<f32>::new(arch, vocab, &mut init)?;
    let episodes = load_split(&config.dataset, &config.split, &model.vocab)?;
    tracing::info!(params = model.parameter_count(), episodes = episodes.len(), kind = %model.kind(), "fit");
    std::fs::create_dir_all(out).map_err(CoreError::io(out))?;
    let cfg_path = out.join("train_config.json");
    std::fs::write(
        &cfg_path,
        serde_json::to_string_pretty(config).expect("config serializes"),
    )
    .map_err(CoreError::io(&cfg_path))?;
    fit_model(&mut model, &episodes, config, out)
}

/// Settings for vocabulary adaptation on a small dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptConfig {
    pub train: TrainConfig,
    /// Step budget of the run that produced the base checkpoint.
    pub base_steps: u64,
    #[serde(default = "default_lr_scale")]
    pub lr_scale: f64,
}

fn default_lr_scale() -> f64 {
    0.5
}

/// Largest adaptation budget relative to the base run.
pub const ADAPT_BUDGET_FRACTION: f64 = 0.1;

/// Extends the checkpoint's vocabulary with `new_words` and finetunes every
/// parameter on the small dataset at a reduced learning rate.
pub fn finetune_adaptation(
    ckpt: &Path,
    new_words: &BTreeMap<String, Vec<String>>,
    config: &AdaptConfig,
    out: &Path,
) -> Result<FitOutcome> {
    if config.train.steps as f64 > ADAPT_BUDGET_FRACTION * config.base_steps as f64 {
        return Err(CoreError::Config(format!(
            "{} adaptation steps exceed {} of the {}-step base budget",
            config.train.steps, ADAPT_BUDGET_FRACTION, config.base_steps
        )));
    }
    let (mut model, _) = checkpoint::load::<f32>(ckpt)?;
    let mut rng = ChaCha8Rng::seed_from_u64(acgn_sim::derive_seed(config.train.seed, 0xada));
    model.extend_vocabulary(new_words, &mut rng)?;
    let ds = Dataset::open(&config.train.dataset).map_err(|e| CoreError::Dataset(e.to_string()))?;
    for clause in &ds.manifest.vocabulary.clauses {
        let mine = model.vocab.clause(&clause.name)?;
        if let Some(w) = clause.words.iter().find(|w| mine.index_of(w).is_none()) {
            return Err(CoreError::Config(format!(
                "dataset word `{w}` of clause `{}` is not covered by the new words",
                clause.name
            )));
        }
    }
    let episodes = load_split(&config.train.dataset, &config.train.split, &model.vocab)?;
    let train = TrainConfig {
        lr: config.train.lr * config.lr_scale,
        ..config.train.clone()
    };
    fit_model(&mut model, &episodes, &train, out)
}
