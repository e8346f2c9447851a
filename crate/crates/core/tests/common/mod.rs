#![allow(dead_code)]

use acgn_core::{Model, ModelConfig, ModelKind};
use acgn_sim::{ClauseEncoding, EnvKind, Vocabulary};
use acgn_tensor::{Float, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Small architecture for property checks.
pub fn micro_config(env: EnvKind, kind: ModelKind, res: usize) -> (ModelConfig, Vocabulary) {
    let vocab = Vocabulary::for_env(env);
    let config = ModelConfig {
        kind,
        resolution: (res, res),
        encoder_channels: [3, 4, 5],
        capsule_dim: 3,
        hidden: 3,
        ..ModelConfig::for_vocab(&vocab)
    };
    (config, vocab)
}

pub fn micro<T: Float>(env: EnvKind, kind: ModelKind, res: usize, seed: u64) -> Model<T> {
    let (config, vocab) = micro_config(env, kind, res);
    Model::new(config, vocab, &mut rng(seed)).unwrap()
}

/// Uniform random local index per clause.
pub fn random_encoding<R: Rng>(vocab: &Vocabulary, rng: &mut R) -> ClauseEncoding {
    ClauseEncoding {
        indices: vocab
            .clauses
            .iter()
            .map(|c| rng.random_range(0..c.words.len()))
            .collect(),
    }
}

pub fn uniform<T: Float, R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.random_range(lo..hi)))
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}
