//! In-memory episode storage and window batching for training.

use std::path::Path;

use acgn_sim::{ClauseEncoding, Dataset, Episode, Frame, Vocabulary};
use acgn_tensor::{Float, Tensor};
use rand::Rng;

use crate::error::{CoreError, Result};

/// One episode with its labels encoded against a model vocabulary. Frames
/// stay 8-bit until batched.
#[derive(Clone, Debug)]
pub struct EpisodeData {
    pub index: usize,
    pub frames: Vec<Frame>,
    /// `labels[t][s]`: command of slot `s` driving the transition into frame `t`.
    pub labels: Vec<Vec<ClauseEncoding>>,
    pub t_act: usize,
}

impl EpisodeData {
    pub fn from_episode(index: usize, ep: &Episode, vocab: &Vocabulary) -> Result<Self> {
        let labels = ep
            .labels
            .iter()
            .map(|cmds| {
                cmds.iter()
                    .map(|c| vocab.encode(c))
                    .collect::<acgn_sim::Result<Vec<_>>>()
            })
            .collect::<acgn_sim::Result<Vec<_>>>()?;
        Ok(Self {
            index,
            frames: ep.frames.clone(),
            labels,
            t_act: ep.env_kind.t_act(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Window starts (segment boundaries) leaving room for `window` predictions.
    pub fn window_starts(&self, window: usize) -> Vec<usize> {
        (0..self.len())
            .step_by(self.t_act.max(1))
            .filter(|s| s + window < self.len())
            .collect()
    }
}

/// Loads and encodes every episode of `split`.
pub fn load_split(root: &Path, split: &str, vocab: &Vocabulary) -> Result<Vec<EpisodeData>> {
    let ds = Dataset::open(root).map_err(|e| CoreError::Dataset(e.to_string()))?;
    if ds.manifest.env != vocab.env {
        return Err(CoreError::Dataset(format!(
            "dataset env {} does not match model env {}",
            ds.manifest.env, vocab.env
        )));
    }
    ds.split(split)?
        .iter()
        .map(|&i| EpisodeData::from_episode(i, &ds.load_episode(i)?, vocab))
        .collect()
}

/// A batch of aligned windows: `frames[t]` is `(B, 3, H, W)` for
/// `t = 0..=window` and `labels[t]` holds the single-slot commands driving
/// `frames[t]` (entry 0 is unused).
#[derive(Clone, Debug)]
pub struct Batch<T: Float> {
    pub frames: Vec<Tensor<T>>,
    pub labels: Vec<Vec<ClauseEncoding>>,
}

impl<T: Float> Batch<T> {
    pub fn window(&self) -> usize {
        self.frames.len() - 1
    }

    /// Builds a batch from `(episode, start)` picks. Only slot 0 is used.
    pub fn from_windows(episodes: &[EpisodeData], picks: &[(usize, usize)], window: usize) -> Self {
        let frames = (0..=window)
            .map(|t| {
                let fs: Vec<&Frame> = picks
                    .iter()
                    .map(|&(e, s)| &episodes[e].frames[s + t])
                    .collect();
                crate::model::frames_tensor(&fs)
            })
            .collect();
        let labels = (0..=window)
            .map(|t| {
                picks
                    .iter()
                    .map(|&(e, s)| episodes[e].labels[s + t][0].clone())
                    .collect()
            })
            .collect();
        Self { frames, labels }
    }

    /// Whole episode as a batch of one.
    pub fn from_episode(ep: &EpisodeData) -> Self {
        Self::from_windows(std::slice::from_ref(ep), &[(0, 0)], ep.len() - 1)
    }
}

/// Draws `batch` random windows.
pub fn sample_windows<R: Rng + ?Sized>(
    episodes: &[EpisodeData],
    batch: usize,
    window: usize,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    let pool: Vec<(usize, usize)> = episodes
        .iter()
        .enumerate()
        .flat_map(|(e, ep)| ep.window_starts(window).into_iter().map(move |s| (e, s)))
        .collect();
    if pool.is_empty() {
        return Err(CoreError::Dataset(format!(
            "no episode is longer than {window} frames"
        )));
    }
    Ok((0..batch)
        .map(|_| pool[rng.random_range(0..pool.len())])
        .collect())
}
