//! Frame metrics, the copy-first-frame reference and the simulator oracle.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use acgn_sim::{Episode, Frame, PixelBox, Vocabulary};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::model::{frames_tensor, tensor_frames, HiddenState, Model};

/// Default oracle threshold on mean absolute error in `[0, 1]` units.
pub const ORACLE_TAU: f64 = 0.10;

const WINDOW: usize = 11;
const SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn gaussian_kernel() -> [f64; WINDOW] {
    let mut k = [0.0; WINDOW];
    let c = (WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SIGMA * SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian filter with "valid" borders.
fn filter(img: &[f64], h: usize, w: usize, k: &[f64; WINDOW]) -> (Vec<f64>, usize, usize) {
    let (oh, ow) = (h + 1 - WINDOW, w + 1 - WINDOW);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..WINDOW).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..WINDOW).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM of one channel plane; values on a unit dynamic range.
pub fn ssim_plane(a: &[f64], b: &[f64], h: usize, w: usize) -> f64 {
    assert!(
        h >= WINDOW && w >= WINDOW,
        "image smaller than the SSIM window"
    );
    let k = gaussian_kernel();
    let (c1, c2) = (K1 * K1, K2 * K2);
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let aa: Vec<f64> = a.iter().map(|x| x * x).collect();
    let bb: Vec<f64> = b.iter().map(|x| x * x).collect();
    let (mu_a, oh, ow) = filter(a, h, w, &k);
    let (mu_b, ..) = filter(b, h, w, &k);
    let (e_ab, ..) = filter(&ab, h, w, &k);
    let (e_aa, ..) = filter(&aa, h, w, &k);
    let (e_bb, ..) = filter(&bb, h, w, &k);
    let mut total = 0.0;
    for i in 0..oh * ow {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        total += num / den;
    }
    total / (oh * ow) as f64
}

fn check_same(a: &Frame, b: &Frame) -> Result<()> {
    if a.height != b.height || a.width != b.width {
        return Err(CoreError::Shape(format!(
            "{}x{} vs {}x{}",
            a.height, a.width, b.height, b.width
        )));
    }
    Ok(())
}

/// SSIM averaged over the three channels.
pub fn ssim(a: &Frame, b: &Frame) -> Result<f64> {
    check_same(a, b)?;
    let (h, w) = (a.height as usize, a.width as usize);
    let plane = |f: &Frame, c: usize| -> Vec<f64> {
        f.data
            .iter()
            .skip(c)
            .step_by(3)
            .map(|&v| v as f64 / 255.0)
            .collect()
    };
    Ok((0..3)
        .map(|c| ssim_plane(&plane(a, c), &plane(b, c), h, w))
        .sum::<f64>()
        / 3.0)
}

/// Per-pixel, per-channel squared error on the 0–255 scale.
pub fn frame_mse(a: &Frame, b: &Frame) -> Result<f64> {
    check_same(a, b)?;
    let s: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(s / a.data.len() as f64)
}

/// Frame-averaged MSE on the 0–255 scale.
pub fn mse_metric(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::Shape(format!(
            "sequences of {} and {} frames",
            a.len(),
            b.len()
        )));
    }
    let total = a
        .iter()
        .zip(b)
        .map(|(x, y)| frame_mse(x, y))
        .sum::<Result<f64>>()?;
    Ok(total / a.len() as f64)
}

/// Frame-averaged SSIM.
pub fn ssim_metric(a: &[Frame], b: &[Frame]) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(CoreError::Shape(format!(
            "sequences of {} and {} frames",
            a.len(),
            b.len()
        )));
    }
    let total = a
        .iter()
        .zip(b)
        .map(|(x, y)| ssim(x, y))
        .sum::<Result<f64>>()?;
    Ok(total / a.len() as f64)
}

/// Every frame replaced by the first.
pub fn copy_first_frame(frames: &[Frame]) -> Vec<Frame> {
    frames
        .first()
        .map(|f| vec![f.clone(); frames.len()])
        .unwrap_or_default()
}

/// Mean absolute error (unit scale) of `a` against `b` inside `bx`.
pub fn region_mae(a: &Frame, b: &Frame, bx: &PixelBox) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for y in bx.y_min..=bx.y_max.min(a.height - 1) {
        for x in bx.x_min..=bx.x_max.min(a.width - 1) {
            let (p, q) = (a.pixel(x, y), b.pixel(x, y));
            s += (0..3)
                .map(|c| (p[c] as f64 - q[c] as f64).abs())
                .sum::<f64>();
            n += 3;
        }
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64 / 255.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccuracyJudgment {
    pub identified: bool,
    pub performed: bool,
    pub consistent: bool,
    pub correct: bool,
}

impl AccuracyJudgment {
    fn new(identified: bool, performed: bool, consistent: bool) -> Self {
        Self {
            identified,
            performed,
            consistent,
            correct: identified && performed && consistent,
        }
    }
}

/// Per-segment oracle detail: for each acted subject whether it was
/// identified and performed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentJudgment {
    pub frame: usize,
    pub subjects: Vec<(u32, bool, bool)>,
    pub consistent: bool,
}

/// Judges each segment's final frame of `predicted` (aligned with the
/// episode's frames) against the ground truth.
pub fn judge_segments(predicted: &[Frame], ep: &Episode, tau: f64) -> Result<Vec<SegmentJudgment>> {
    if predicted.len() != ep.frames.len() {
        return Err(CoreError::Shape(format!(
            "{} predicted frames for {}",
            predicted.len(),
            ep.frames.len()
        )));
    }
    if ep.boxes.len() != ep.frames.len() || ep.scenes.len() != ep.frames.len() {
        return Err(CoreError::Dataset(
            "episode lacks ground-truth scenes or boxes".into(),
        ));
    }
    let mut out = Vec::with_capacity(ep.segments.len());
    for seg in &ep.segments {
        let (s, e) = (seg.start, seg.start + seg.len - 1);
        let start_scene = &ep.scenes[s];
        let subjects: Vec<u32> = seg
            .commands
            .iter()
            .filter_map(|c| start_scene.find(c.subject?).map(|o| o.id))
            .collect();
        let (pred, truth) = (&predicted[e], &ep.frames[e]);
        let ok = |b: Option<&PixelBox>| b.is_none_or(|b| region_mae(pred, truth, b) < tau);
        let judged = subjects
            .iter()
            .map(|id| {
                let (sb, eb) = (ep.boxes[s].get(id), ep.boxes[e].get(id));
                (*id, ok(sb.or(eb)), ok(eb.or(sb)))
            })
            .collect();
        let consistent = ep.boxes[e]
            .iter()
            .filter(|(id, _)| !subjects.contains(id))
            .all(|(_, b)| ok(Some(b)));
        out.push(SegmentJudgment {
            frame: e,
            subjects: judged,
            consistent,
        });
    }
    Ok(out)
}

/// Episode-level judgment: a criterion holds when it holds on every segment.
pub fn oracle_accuracy(predicted: &[Frame], ep: &Episode, tau: f64) -> Result<AccuracyJudgment> {
    let segs = judge_segments(predicted, ep, tau)?;
    Ok(AccuracyJudgment::new(
        segs.iter().all(|s| s.subjects.iter().all(|t| t.1)),
        segs.iter().all(|s| s.subjects.iter().all(|t| t.2)),
        segs.iter().all(|s| s.consistent),
    ))
}

/// Closed-loop predictions for whole episodes, aligned with their frames
/// (index 0 is the given first frame). Episodes with equal length and slot
/// layout are rolled out together in batches of at most `batch`.
pub fn predict_episodes(
    model: &Model<f32>,
    episodes: &[&Episode],
    batch: usize,
) -> Result<Vec<Vec<Frame>>> {
    let mut out: Vec<Option<Vec<Frame>>> = vec![None; episodes.len()];
    let mut groups: BTreeMap<(usize, Vec<usize>), Vec<usize>> = BTreeMap::new();
    for (i, ep) in episodes.iter().enumerate() {
        let layout = ep.labels.iter().map(|l| l.len()).collect();
        groups.entry((ep.frames.len(), layout)).or_default().push(i);
    }
    for members in groups.values() {
        for chunk in members.chunks(batch.max(1)) {
            let eps: Vec<&Episode> = chunk.iter().map(|&i| episodes[i]).collect();
            let firsts: Vec<&Frame> = eps.iter().map(|e| &e.frames[0]).collect();
            let x0 = frames_tensor::<f32>(&firsts);
            let labels = (1..eps[0].frames.len())
                .map(|t| {
                    (0..eps[0].labels[t].len())
                        .map(|s| {
                            eps.iter()
                                .map(|e| model.vocab.encode(&e.labels[t][s]))
                                .collect::<acgn_sim::Result<Vec<_>>>()
                        })
                        .collect::<acgn_sim::Result<Vec<_>>>()
                })
                .collect::<acgn_sim::Result<Vec<_>>>()?;
            let hidden = HiddenState::zeros(
                &model.config,
                eps.len(),
                labels.first().map_or(1, |l| l.len()),
            );
            let (preds, _) = model.rollout_from(&x0, &labels, hidden)?;
            let per_step: Vec<Vec<Frame>> = preds.iter().map(tensor_frames).collect();
            for (b, &i) in chunk.iter().enumerate() {
                let mut seq = vec![episodes[i].frames[0].clone()];
                seq.extend(per_step.iter().map(|fs| fs[b].clone()));
                out[i] = Some(seq);
            }
        }
    }
    Ok(out
        .into_iter()
        .map(|o| o.expect("every episode predicted"))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRow {
    pub name: String,
    pub ssim: f64,
    /// 0–255 scale.
    pub mse: f64,
    pub accuracy: f64,
    pub identified: f64,
    pub performed: f64,
    pub consistent: f64,
    pub episodes: usize,
    pub config_digest: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: String,
    pub tau: f64,
    pub rows: Vec<ModelRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "split: {}  tau: {}", self.split, self.tau);
        let _ = writeln!(
            s,
            "{:<24} {:>8} {:>10} {:>9} {:>10} {:>10} {:>11} {:>9}",
            "model", "SSIM", "MSE", "accuracy", "identified", "performed", "consistent", "episodes"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<24} {:>8.4} {:>10.2} {:>9.3} {:>10.3} {:>10.3} {:>11.3} {:>9}",
                r.name,
                r.ssim,
                r.mse,
                r.accuracy,
                r.identified,
                r.performed,
                r.consistent,
                r.episodes
            );
        }
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, json).map_err(CoreError::io(path))?;
        let table = path.with_extension("txt");
        std::fs::write(&table, self.to_table()).map_err(CoreError::io(&table))
    }
}

/// Scores aligned prediction sequences. Metrics skip frame 0, which every
/// rollout receives as input.
pub fn score(
    name: &str,
    digest: &str,
    predictions: &[Vec<Frame>],
    episodes: &[&Episode],
    tau: f64,
) -> Result<ModelRow> {
    let n = episodes.len();
    if n == 0 || predictions.len() != n {
        return Err(CoreError::Dataset(format!(
            "{} predictions for {n} episodes",
            predictions.len()
        )));
    }
    let (mut ssim_sum, mut mse_sum) = (0.0, 0.0);
    let mut counts = [0usize; 4];
    for (pred, ep) in predictions.iter().zip(episodes) {
        ssim_sum += ssim_metric(&pred[1..], &ep.frames[1..])?;
        mse_sum += mse_metric(&pred[1..], &ep.frames[1..])?;
        let j = oracle_accuracy(pred, ep, tau)?;
        for (c, v) in counts
            .iter_mut()
            .zip([j.correct, j.identified, j.performed, j.consistent])
        {
            *c += v as usize;
        }
    }
    let frac = |c: usize| c as f64 / n as f64;
    Ok(ModelRow {
        name: name.to_string(),
        ssim: ssim_sum / n as f64,
        mse: mse_sum / n as f64,
        accuracy: frac(counts[0]),
        identified: frac(counts[1]),
        performed: frac(counts[2]),
        consistent: frac(counts[3]),
        episodes: n,
        config_digest: digest.to_string(),
    })
}

/// Digest of a model's configuration and vocabulary.
pub fn config_digest(model: &Model<f32>) -> String {
    let json = serde_json::to_string(&(&model.config, &model.vocab)).expect("config serializes");
    hex::encode(Sha256::digest(json.as_bytes()))
}

fn check_vocab(model: &Model<f32>, vocab: &Vocabulary) -> Result<()> {
    if model.vocab.env != vocab.env {
        return Err(CoreError::Config(format!(
            "model env {} vs dataset env {}",
            model.vocab.env, vocab.env
        )));
    }
    for clause in &vocab.clauses {
        let mine = model.vocab.clause(&clause.name)?;
        if let Some(w) = clause.words.iter().find(|w| mine.index_of(w).is_none()) {
            return Err(CoreError::Config(format!(
                "dataset word `{w}` of clause `{}` unknown to the model",
                clause.name
            )));
        }
    }
    Ok(())
}

/// Rolls out every model on `episodes` and scores them together with the
/// copy-first-frame reference.
pub fn evaluate(
    models: &[(String, &Model<f32>)],
    episodes: &[Episode],
    dataset_vocab: &Vocabulary,
    split: &str,
    tau: f64,
) -> Result<EvalReport> {
    let refs: Vec<&Episode> = episodes.iter().collect();
    let copies: Vec<Vec<Frame>> = episodes
        .iter()
        .map(|e| copy_first_frame(&e.frames))
        .collect();
    let mut rows = vec![score("copy-first-frame", "-", &copies, &refs, tau)?];
    for (name, model) in models {
        check_vocab(model, dataset_vocab)?;
        let preds = predict_episodes(model, &refs, 8)?;
        rows.push(score(name, &config_digest(model), &preds, &refs, tau)?);
    }
    Ok(EvalReport {
        split: split.to_string(),
        tau,
        rows,
    })
}

/// Loads the episodes of one split with full ground truth.
pub fn load_episodes(root: &Path, split: &str) -> Result<(Vec<Episode>, Vocabulary)> {
    let ds = acgn_sim::Dataset::open(root).map_err(|e| CoreError::Dataset(e.to_string()))?;
    let eps = ds
        .split(split)?
        .iter()
        .map(|&i| ds.load_episode(i))
        .collect::<acgn_sim::Result<Vec<_>>>()?;
    Ok((eps, ds.manifest.vocabulary.clone()))
}
