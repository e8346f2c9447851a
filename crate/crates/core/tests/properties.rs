mod common;

use acgn_core::eval::{frame_mse, ssim};
use acgn_core::train::{mse_loss, sampling_probability, SamplingSchedule, TrainConfig};
use acgn_core::{Model, ModelKind};
use acgn_sim::{ClauseEncoding, EnvKind, Frame, Vocabulary};
use acgn_tensor::{kernels, Tensor};
use common::{micro, micro_config, rng, uniform};
use proptest::prelude::*;

fn env() -> impl Strategy<Value = EnvKind> {
    prop_oneof![Just(EnvKind::Blocks), Just(EnvKind::Kitchen)]
}

fn encoding(vocab: &Vocabulary, picks: &[usize]) -> ClauseEncoding {
    ClauseEncoding {
        indices: vocab
            .clauses
            .iter()
            .zip(picks)
            .map(|(c, p)| p % c.words.len())
            .collect(),
    }
}

fn frame(seed: u64, h: u32, w: u32) -> Frame {
    let mut f = Frame::filled(h, w, [0, 0, 0]);
    let mut s = seed;
    for v in &mut f.data {
        s = s
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        *v = (s >> 56) as u8;
    }
    f
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn routing_ignores_unselected_words(e in env(), seed in any::<u64>(), picks in prop::collection::vec(0usize..64, 8), per_word in any::<bool>()) {
        let (mut config, vocab) = micro_config(e, ModelKind::Acgn, 16);
        config.per_word_transform = per_word;
        let model: Model<f64> = Model::new(config, vocab, &mut rng(seed)).unwrap();
        let (n, k) = (model.config.n_words, model.config.capsule_dim);
        let enc = encoding(&model.vocab, &picks);
        let keep: Vec<usize> = model.vocab.clauses.iter().zip(&enc.indices).map(|(c, &i)| c.ids[i]).collect();
        let mut r = rng(seed ^ 1);
        let words: Tensor<f64> = uniform(&[1, n * k, 2, 2], -2.0, 2.0, &mut r);
        let noise: Tensor<f64> = uniform(&[1, n * k, 2, 2], -50.0, 50.0, &mut r);
        let mut moved = words.clone();
        for i in (0..n).filter(|i| !keep.contains(i)) {
            for j in i * k * 4..(i + 1) * k * 4 {
                moved.data_mut()[j] += noise.data()[j];
            }
        }
        let a = model.route(&words, std::slice::from_ref(&enc)).unwrap();
        let b = model.route(&moved, std::slice::from_ref(&enc)).unwrap();
        prop_assert_eq!(a.max_abs_diff(&b), 0.0);
    }

    #[test]
    fn routing_is_adjacency_product(e in env(), seed in any::<u64>(), picks in prop::collection::vec(0usize..64, 8)) {
        let model = micro::<f64>(e, ModelKind::Acgn, 16, seed);
        let (n, k, c) = (model.config.n_words, model.config.capsule_dim, model.config.n_clauses);
        let enc = encoding(&model.vocab, &picks);
        let words: Tensor<f64> = uniform(&[1, n * k, 2, 2], -1.0, 1.0, &mut rng(seed));
        let got = model.route_pre_transform(&words, std::slice::from_ref(&enc)).unwrap();
        prop_assert_eq!(got.shape(), &[1, c * k, 2, 2][..]);
        for (j, (clause, &i)) in model.vocab.clauses.iter().zip(&enc.indices).enumerate() {
            let id = clause.ids[i];
            prop_assert_eq!(&got.data()[j * k * 4..(j + 1) * k * 4], &words.data()[id * k * 4..(id + 1) * k * 4]);
        }
    }

    #[test]
    fn squash_keeps_direction_and_bounds_norm(seed in any::<u64>(), k in 1usize..6, scale in 1e-3f64..1e3) {
        let s: Tensor<f64> = uniform(&[2, 3 * k, 2, 2], -scale, scale, &mut rng(seed));
        let v = kernels::squash(&s, k, 1e-12);
        for b in 0..2 {
            for g in 0..3 {
                for p in 0..4 {
                    let idx = |c: usize| ((b * 3 + g) * k + c) * 4 + p;
                    let (mut dot, mut ns, mut nv) = (0.0, 0.0, 0.0);
                    for c in 0..k {
                        let (x, y) = (s.data()[idx(c)], v.data()[idx(c)]);
                        dot += x * y;
                        ns += x * x;
                        nv += y * y;
                    }
                    let (ns, nv) = (ns.sqrt(), nv.sqrt());
                    prop_assert!(nv < 1.0);
                    prop_assert!((nv - ns * ns / (1.0 + ns * ns)).abs() < 1e-9);
                    if nv > 0.0 {
                        prop_assert!((dot / (ns * nv) - 1.0).abs() < 1e-9);
                    }
                }
            }
        }
    }

    #[test]
    fn schedule_never_increases(start in 0.0f64..1.0, drop in 0.0f64..1.0, horizon in 0.0f64..1.5, steps in 1u64..5000) {
        let mut config = TrainConfig::new("unused", steps);
        config.sampling = SamplingSchedule { start, end: start * (1.0 - drop), horizon };
        let mut prev = f64::INFINITY;
        for step in (0..=steps).step_by((steps as usize / 50).max(1)) {
            let p = sampling_probability(step, &config);
            prop_assert!((0.0..=1.0).contains(&p));
            prop_assert!(p <= prev + 1e-12);
            prev = p;
        }
    }

    #[test]
    fn loss_is_zero_only_on_equal_inputs(seed in any::<u64>(), frames in 1usize..4, bump in 1e-6f64..1.0) {
        let mut r = rng(seed);
        let a: Vec<Tensor<f64>> = (0..frames).map(|_| uniform(&[1, 3, 4, 4], 0.0, 1.0, &mut r)).collect();
        prop_assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        let mut b = a.clone();
        b[frames - 1].data_mut()[seed as usize % 48] += bump;
        let l = mse_loss(&a, &b).unwrap();
        prop_assert!(l > 0.0);
        prop_assert!((l - bump * bump / (48 * frames) as f64).abs() < 1e-12);
    }

    #[test]
    fn ssim_is_symmetric_and_bounded(sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (frame(sa, 16, 16), frame(sb, 16, 16));
        let ab = ssim(&a, &b).unwrap();
        prop_assert!((ab - ssim(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((-1.0..=1.0).contains(&ab));
        prop_assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn frame_mse_is_a_nonnegative_symmetric_gap(sa in any::<u64>(), sb in any::<u64>()) {
        let (a, b) = (frame(sa, 8, 8), frame(sb, 8, 8));
        let m = frame_mse(&a, &b).unwrap();
        prop_assert!(m >= 0.0);
        prop_assert_eq!(m, frame_mse(&b, &a).unwrap());
        prop_assert_eq!(frame_mse(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn fuse_ignores_slot_order(seed in any::<u64>(), slots in 1usize..4, rot in 0usize..3) {
        let model = micro::<f64>(EnvKind::Blocks, ModelKind::Acgn, 16, seed);
        let (n, k, h) = (model.config.n_words, model.config.capsule_dim, model.config.hidden);
        let mut r = rng(seed);
        let words: Tensor<f64> = uniform(&[1, n * k, 2, 2], -1.0, 1.0, &mut r);
        let states: Vec<Tensor<f64>> = (0..slots).map(|_| uniform(&[1, h, 2, 2], -1.0, 1.0, &mut r)).collect();
        let mut rotated = states.clone();
        rotated.rotate_left(rot % slots);
        let a = model.fuse(&states, &words).unwrap();
        let b = model.fuse(&rotated, &words).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }
}
