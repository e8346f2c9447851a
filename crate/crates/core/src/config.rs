use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use acgn_sim::Vocabulary;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Word capsules, label-routed action capsules and per-slot predictors.
    Acgn,
    /// Encoder features concatenated with a tiled action vector.
    Concat,
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::Acgn => "acgn",
            ModelKind::Concat => "concat",
        })
    }
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "acgn" => Ok(ModelKind::Acgn),
            "concat" => Ok(ModelKind::Concat),
            other => Err(format!("unknown model kind `{other}`")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// `(H, W)`; both divisible by 8.
    pub resolution: (usize, usize),
    /// Channels of the three encoder stages.
    pub encoder_channels: [usize; 3],
    /// Capsule dimension K.
    pub capsule_dim: usize,
    /// Total word count N across all clauses.
    pub n_words: usize,
    pub n_clauses: usize,
    /// Maximum concurrent action slots.
    pub a_max: usize,
    /// Residual ConvLSTM layers L.
    pub layers: usize,
    /// Predictor channels C_h.
    pub hidden: usize,
    /// One transform per (word, clause) instead of one per clause.
    #[serde(default)]
    pub per_word_transform: bool,
    #[serde(default = "default_eps")]
    pub squash_eps: f64,
    /// Width of the first decoder stage; the encoder's last width when unset.
    #[serde(default)]
    pub decoder_width: Option<usize>,
}

fn default_eps() -> f64 {
    1e-8
}

impl ModelConfig {
    /// Default architecture sized for `vocab`.
    pub fn for_vocab(vocab: &Vocabulary) -> Self {
        Self {
            kind: ModelKind::Acgn,
            resolution: (64, 64),
            encoder_channels: [32, 64, 128],
            capsule_dim: 16,
            n_words: vocab.total_words(),
            n_clauses: vocab.clause_count(),
            a_max: 2,
            layers: 2,
            hidden: 64,
            per_word_transform: false,
            squash_eps: default_eps(),
            decoder_width: None,
        }
    }

    /// A narrower variant that trains in hours on one CPU core.
    pub fn compact(vocab: &Vocabulary) -> Self {
        Self {
            encoder_channels: [16, 32, 64],
            capsule_dim: 8,
            hidden: 32,
            ..Self::for_vocab(vocab)
        }
    }

    pub fn latent_size(&self) -> (usize, usize) {
        (self.resolution.0 / 8, self.resolution.1 / 8)
    }

    pub fn decoder_width(&self) -> usize {
        self.decoder_width.unwrap_or(self.encoder_channels[2])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CoreError::Config(m.to_string()));
        if self.capsule_dim == 0 {
            return bad("capsule dimension must be at least 1");
        }
        if self.a_max == 0 {
            return bad("a_max must be at least 1");
        }
        if !self.resolution.0.is_multiple_of(8)
            || !self.resolution.1.is_multiple_of(8)
            || self.resolution.0 == 0
            || self.resolution.1 == 0
        {
            return bad("resolution must be a positive multiple of 8");
        }
        if self.layers == 0 || self.hidden == 0 || self.encoder_channels.contains(&0) {
            return bad("layer counts and widths must be positive");
        }
        if self.n_clauses == 0 || self.n_words < self.n_clauses {
            return bad("vocabulary must have at least one word per clause");
        }
        Ok(())
    }

    /// Checks that `vocab` matches the word and clause counts.
    pub fn check_vocab(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.total_words() != self.n_words || vocab.clause_count() != self.n_clauses {
            return Err(CoreError::Config(format!(
                "vocabulary has {} words in {} clauses, model expects {} in {}",
                vocab.total_words(),
                vocab.clause_count(),
                self.n_words,
                self.n_clauses
            )));
        }
        Ok(())
    }
}
