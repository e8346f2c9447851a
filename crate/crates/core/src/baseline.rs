//! Parameter accounting and the width search that sizes the concatenation
//! baseline to the capsule model.

use acgn_sim::Vocabulary;
use acgn_tensor::{Float, ParamStore};

use crate::config::{ModelConfig, ModelKind};
use crate::error::{CoreError, Result};

/// Relative tolerance on the parameter match.
pub const MATCH_TOLERANCE: f64 = 0.01;

/// Exact trainable scalar count of a parameter set.
pub fn parameter_count<T: Float>(params: &ParamStore<T>) -> usize {
    params.parameter_count()
}

fn conv(o: usize, c: usize, k: usize) -> usize {
    o * c * k * k + o
}

/// Parameter count implied by a configuration, without allocating weights.
pub fn config_parameter_count(config: &ModelConfig) -> usize {
    let [c1, c2, c3] = config.encoder_channels;
    let (k, n, nc, ch) = (
        config.capsule_dim,
        config.n_words,
        config.n_clauses,
        config.hidden,
    );
    let d0 = config.decoder_width();
    let encoder = conv(c1, 3, 3)
        + conv(c1, c1, 3)
        + conv(c2, c1, 3)
        + conv(c2, c2, 3)
        + conv(c3, c2, 3)
        + conv(c3, c3, 3);
    let action = match config.kind {
        ModelKind::Acgn => {
            let transforms = if config.per_word_transform { n } else { nc };
            conv(n * k, c3, 3)
                + transforms * conv(k, k, 3)
                + conv(ch, nc * k, 1)
                + conv(ch, n * k, 1)
        }
        ModelKind::Concat => conv(ch, c3 + n, 1),
    };
    let lstm = config.layers * conv(4 * ch, 2 * ch, 3);
    let decoder = conv(d0, ch, 3) + conv(c2, d0 + c2, 3) + conv(c1, c2 + c1, 3) + conv(3, c1, 3);
    encoder + action + lstm + decoder
}

/// Length of the tiled action vector: one channel per dictionary word.
pub fn action_vector_len(vocab: &Vocabulary) -> usize {
    vocab.total_words()
}

fn relative_gap(a: usize, b: usize) -> f64 {
    (a as f64 - b as f64).abs() / b as f64
}

/// Concatenation-baseline configuration whose parameter count is closest to
/// `acgn`'s. Only the predictor width is searched first; when no width lands
/// inside the tolerance the first decoder width is searched as well.
pub fn matched_concat_config(acgn: &ModelConfig) -> Result<ModelConfig> {
    let target = config_parameter_count(acgn);
    let base = ModelConfig {
        kind: ModelKind::Concat,
        per_word_transform: false,
        decoder_width: None,
        ..acgn.clone()
    };
    let closest = |d0s: &[Option<usize>]| {
        let mut best: Option<(f64, ModelConfig)> = None;
        for hidden in 1..=8 * acgn.hidden.max(8) {
            for &d0 in d0s {
                let cand = ModelConfig {
                    hidden,
                    decoder_width: d0,
                    ..base.clone()
                };
                let gap = relative_gap(config_parameter_count(&cand), target);
                if best.as_ref().is_none_or(|(g, _)| gap < *g) {
                    best = Some((gap, cand));
                }
            }
        }
        best.expect("non-empty search")
    };
    let (gap, cfg) = closest(&[None]);
    if gap < MATCH_TOLERANCE {
        return Ok(cfg);
    }
    let widths: Vec<Option<usize>> = (1..=2 * acgn.encoder_channels[2]).map(Some).collect();
    let (gap, cfg) = closest(&widths);
    if gap >= MATCH_TOLERANCE {
        return Err(CoreError::Config(format!(
            "no concat widths within {MATCH_TOLERANCE} of {target} parameters"
        )));
    }
    Ok(cfg)
}

/// Verifies that two configurations are parameter-matched.
pub fn check_match(a: &ModelConfig, b: &ModelConfig) -> Result<f64> {
    let gap = relative_gap(config_parameter_count(a), config_parameter_count(b));
    if gap >= MATCH_TOLERANCE {
        return Err(CoreError::Config(format!(
            "parameter counts differ by {:.2}%",
            gap * 100.0
        )));
    }
    Ok(gap)
}
