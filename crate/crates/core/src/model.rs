//! The capsule network and its concatenation baseline.
//!
//! Both kinds share the encoder, the residual ConvLSTM predictor and the
//! decoder; they differ only in how the action enters the predictor.

use std::collections::BTreeMap;
use std::sync::Arc;

use acgn_sim::{ClauseEncoding, Vocabulary};
use acgn_tensor::{he_init, lecun_init, Float, Graph, ParamStore, Tensor, Var};
use rand::Rng;

use crate::config::{ModelConfig, ModelKind};
use crate::error::{CoreError, Result};

/// Per-layer `(h, c)` of one action slot.
pub type SlotState<T> = Vec<(Arc<Tensor<T>>, Arc<Tensor<T>>)>;

/// Recurrent state: one entry per action slot.
#[derive(Clone, Debug, PartialEq)]
pub struct HiddenState<T> {
    pub slots: Vec<SlotState<T>>,
}

impl<T: Float> HiddenState<T> {
    pub fn zeros(config: &ModelConfig, batch: usize, slots: usize) -> Self {
        let (h, w) = config.latent_size();
        let z = Arc::new(Tensor::zeros([batch, config.hidden, h, w]));
        let slot: SlotState<T> = (0..config.layers)
            .map(|_| (Arc::clone(&z), Arc::clone(&z)))
            .collect();
        Self {
            slots: vec![slot; slots],
        }
    }

    pub fn slot_count(&self) -> usize {
        self.slots.len()
    }

    /// Grows by copying slot 0 or shrinks by dropping trailing slots.
    pub fn resized(&self, slots: usize) -> Self {
        let mut out = self.slots.clone();
        out.truncate(slots);
        while out.len() < slots {
            out.push(self.slots[0].clone());
        }
        Self { slots: out }
    }

    pub fn cast<U: Float>(&self) -> HiddenState<U> {
        HiddenState {
            slots: self
                .slots
                .iter()
                .map(|s| {
                    s.iter()
                        .map(|(h, c)| (Arc::new(h.cast()), Arc::new(c.cast())))
                        .collect()
                })
                .collect(),
        }
    }
}

type GraphSlot = Vec<(Var, Var)>;

#[derive(Clone, Debug)]
pub struct Model<T: Float> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: ParamStore<T>,
}

fn conv_param<T: Float, R: Rng + ?Sized>(
    p: &mut ParamStore<T>,
    name: &str,
    o: usize,
    c: usize,
    k: usize,
    rng: &mut R,
) {
    p.insert(format!("{name}.w"), he_init([o, c, k, k], rng));
    p.insert(format!("{name}.b"), Tensor::zeros([o]));
}

impl<T: Float> Model<T> {
    /// Freshly initialised model for `vocab`.
    pub fn new<R: Rng + ?Sized>(
        config: ModelConfig,
        vocab: Vocabulary,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        config.check_vocab(&vocab)?;
        let [c1, c2, c3] = config.encoder_channels;
        let (k, n, nc, ch) = (
            config.capsule_dim,
            config.n_words,
            config.n_clauses,
            config.hidden,
        );
        let mut p = ParamStore::new();
        conv_param(&mut p, "enc.0.a", c1, 3, 3, rng);
        conv_param(&mut p, "enc.0.b", c1, c1, 3, rng);
        conv_param(&mut p, "enc.1.a", c2, c1, 3, rng);
        conv_param(&mut p, "enc.1.b", c2, c2, 3, rng);
        conv_param(&mut p, "enc.2.a", c3, c2, 3, rng);
        conv_param(&mut p, "enc.2.b", c3, c3, 3, rng);
        match config.kind {
            ModelKind::Acgn => {
                p.insert("words.w", lecun_init([n * k, c3, 3, 3], rng));
                p.insert("words.b", Tensor::zeros([n * k]));
                if config.per_word_transform {
                    for (j, clause) in vocab.clauses.iter().enumerate() {
                        for &id in &clause.ids {
                            p.insert(
                                format!("transform.{j}.{id}.w"),
                                lecun_init([k, k, 3, 3], rng),
                            );
                            p.insert(format!("transform.{j}.{id}.b"), Tensor::zeros([k]));
                        }
                    }
                } else {
                    for j in 0..nc {
                        p.insert(format!("transform.{j}.w"), lecun_init([k, k, 3, 3], rng));
                        p.insert(format!("transform.{j}.b"), Tensor::zeros([k]));
                    }
                }
                p.insert("pred.in.w", lecun_init([ch, nc * k, 1, 1], rng));
                p.insert("pred.in.b", Tensor::zeros([ch]));
                p.insert("fuse.w", lecun_init([ch, n * k, 1, 1], rng));
                p.insert("fuse.b", Tensor::zeros([ch]));
            }
            ModelKind::Concat => {
                p.insert("pred.in.w", lecun_init([ch, c3 + n, 1, 1], rng));
                p.insert("pred.in.b", Tensor::zeros([ch]));
            }
        }
        for l in 0..config.layers {
            p.insert(
                format!("lstm.{l}.w"),
                lecun_init([4 * ch, 2 * ch, 3, 3], rng),
            );
            // Forget gate starts open.
            let b = Tensor::from_fn([4 * ch], |i| {
                if (ch..2 * ch).contains(&i) {
                    T::one()
                } else {
                    T::zero()
                }
            });
            p.insert(format!("lstm.{l}.b"), b);
        }
        let d0 = config.decoder_width();
        conv_param(&mut p, "dec.0", d0, ch, 3, rng);
        conv_param(&mut p, "dec.1", c2, d0 + c2, 3, rng);
        conv_param(&mut p, "dec.2", c1, c2 + c1, 3, rng);
        p.insert("dec.out.w", lecun_init([3, c1, 3, 3], rng));
        p.insert("dec.out.b", Tensor::zeros([3]));
        Ok(Self {
            config,
            vocab,
            params: p,
        })
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }

    pub fn cast<U: Float>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
        }
    }

    fn conv(&self, g: &Graph<T>, x: Var, name: &str, stride: usize, pad: usize) -> Var {
        let w = g.param(&self.params, &format!("{name}.w"));
        let b = g.param(&self.params, &format!("{name}.b"));
        g.conv2d(x, w, Some(b), stride, pad)
    }

    fn check_frame(&self, shape: &[usize]) -> Result<()> {
        let (h, w) = self.config.resolution;
        if shape.len() != 4 || shape[1] != 3 || shape[2] != h || shape[3] != w {
            return Err(CoreError::Shape(format!(
                "frame {shape:?}, expected (B, 3, {h}, {w})"
            )));
        }
        Ok(())
    }

    // ---- graph-level building blocks ----

    /// Latent at H/8 plus skips at H/2 and H/4.
    pub fn encode_g(&self, g: &Graph<T>, x: Var) -> (Var, [Var; 2]) {
        let h = g.relu(self.conv(g, x, "enc.0.a", 2, 1));
        let s1 = g.relu(self.conv(g, h, "enc.0.b", 1, 1));
        let h = g.relu(self.conv(g, s1, "enc.1.a", 2, 1));
        let s2 = g.relu(self.conv(g, h, "enc.1.b", 1, 1));
        let h = g.relu(self.conv(g, s2, "enc.2.a", 2, 1));
        let latent = g.relu(self.conv(g, h, "enc.2.b", 1, 1));
        (latent, [s1, s2])
    }

    pub fn word_capsules_g(&self, g: &Graph<T>, latent: Var) -> Var {
        self.conv(g, latent, "words", 1, 1)
    }

    /// Selection matrix `(B, C, N)` with one 1 per (batch, clause).
    pub fn selection(&self, batch: &[ClauseEncoding]) -> Result<Tensor<T>> {
        let (nc, n) = (self.config.n_clauses, self.config.n_words);
        let mut sel = Tensor::zeros([batch.len(), nc, n]);
        for (b, enc) in batch.iter().enumerate() {
            let ids = self.vocab.global_ids(enc)?;
            if ids.len() != nc {
                return Err(CoreError::Shape(format!(
                    "{} clause indices, expected {nc}",
                    ids.len()
                )));
            }
            for (j, id) in ids.into_iter().enumerate() {
                sel.data_mut()[(b * nc + j) * n + id] = T::one();
            }
        }
        Ok(sel)
    }

    /// Pre-transform routing: each clause capsule is the selected word map.
    pub fn route_pre_g(&self, g: &Graph<T>, words: Var, batch: &[ClauseEncoding]) -> Result<Var> {
        let sel = Arc::new(self.selection(batch)?);
        Ok(g.route(words, sel, self.config.capsule_dim))
    }

    /// Action capsules `(B, C*K, H', W')` for one slot.
    pub fn action_capsules_g(
        &self,
        g: &Graph<T>,
        words: Var,
        batch: &[ClauseEncoding],
    ) -> Result<Var> {
        let k = self.config.capsule_dim;
        let routed = self.route_pre_g(g, words, batch)?;
        let mut clauses = Vec::with_capacity(self.config.n_clauses);
        for j in 0..self.config.n_clauses {
            let u = g.narrow(routed, 1, j * k, k);
            let s = if self.config.per_word_transform {
                let per_b = batch
                    .iter()
                    .enumerate()
                    .map(|(b, enc)| {
                        let id = self.vocab.global_ids(enc)?[j];
                        let ub = g.narrow(u, 0, b, 1);
                        Ok(self.conv(g, ub, &format!("transform.{j}.{id}"), 1, 1))
                    })
                    .collect::<Result<Vec<_>>>()?;
                g.concat(&per_b, 0)
            } else {
                self.conv(g, u, &format!("transform.{j}"), 1, 1)
            };
            clauses.push(g.squash(s, k, T::from_f64_lossy(self.config.squash_eps)));
        }
        Ok(g.concat(&clauses, 1))
    }

    /// Input projection then the residual ConvLSTM stack.
    pub fn predict_g(&self, g: &Graph<T>, input: Var, slot: &GraphSlot) -> (Var, GraphSlot) {
        let mut x = self.conv(g, input, "pred.in", 1, 0);
        let mut next = Vec::with_capacity(slot.len());
        for (l, &(h, c)) in slot.iter().enumerate() {
            let gates = self.conv(g, g.concat(&[x, h], 1), &format!("lstm.{l}"), 1, 1);
            let parts = g.chunk(gates, 4, 1);
            let i = g.sigmoid(parts[0]);
            let f = g.sigmoid(parts[1]);
            let o = g.sigmoid(parts[2]);
            let cand = g.tanh(parts[3]);
            let c2 = g.add(g.mul(f, c), g.mul(i, cand));
            let h2 = g.mul(o, g.tanh(c2));
            x = g.add(x, h2);
            next.push((h2, c2));
        }
        (x, next)
    }

    pub fn fuse_g(&self, g: &Graph<T>, slots: &[Var], words: Var) -> Var {
        let sum = if slots.len() == 1 {
            slots[0]
        } else {
            g.sum(slots)
        };
        g.add(sum, self.conv(g, words, "fuse", 1, 0))
    }

    pub fn decode_g(&self, g: &Graph<T>, fused: Var, skips: [Var; 2]) -> Var {
        let h = g.relu(self.conv(g, fused, "dec.0", 1, 1));
        let h = g.concat(&[g.upsample_nearest(h, 2), skips[1]], 1);
        let h = g.relu(self.conv(g, h, "dec.1", 1, 1));
        let h = g.concat(&[g.upsample_nearest(h, 2), skips[0]], 1);
        let h = g.relu(self.conv(g, h, "dec.2", 1, 1));
        let h = g.upsample_nearest(h, 2);
        g.sigmoid(self.conv(g, h, "dec.out", 1, 1))
    }

    /// Tiled action vector `(B, N, H', W')`: the concatenated clause one-hots
    /// laid out by word id, repeated over every latent position.
    pub fn tiled_actions(&self, batch: &[ClauseEncoding]) -> Result<Tensor<T>> {
        let n = self.config.n_words;
        let (h, w) = self.config.latent_size();
        let mut t = Tensor::zeros([batch.len(), n, h, w]);
        for (b, enc) in batch.iter().enumerate() {
            for id in self.vocab.global_ids(enc)? {
                let base = (b * n + id) * h * w;
                t.data_mut()[base..base + h * w].fill(T::one());
            }
        }
        Ok(t)
    }

    pub fn graph_hidden(&self, g: &Graph<T>, hidden: &HiddenState<T>) -> Vec<GraphSlot> {
        hidden
            .slots
            .iter()
            .map(|s| {
                s.iter()
                    .map(|(h, c)| (g.constant_arc(Arc::clone(h)), g.constant_arc(Arc::clone(c))))
                    .collect()
            })
            .collect()
    }

    pub fn read_hidden(&self, g: &Graph<T>, slots: &[GraphSlot]) -> HiddenState<T> {
        HiddenState {
            slots: slots
                .iter()
                .map(|s| s.iter().map(|&(h, c)| (g.value(h), g.value(c))).collect())
                .collect(),
        }
    }

    fn check_slots(
        &self,
        actions: &[Vec<ClauseEncoding>],
        hidden: usize,
        batch: usize,
    ) -> Result<()> {
        let max = match self.kind() {
            ModelKind::Acgn => self.config.a_max,
            ModelKind::Concat => 1,
        };
        if actions.is_empty() || actions.len() > max {
            return Err(CoreError::Slots {
                expected: format!("1 to {max}"),
                got: actions.len(),
            });
        }
        if hidden != actions.len() {
            return Err(CoreError::Slots {
                expected: format!("{hidden} (hidden state)"),
                got: actions.len(),
            });
        }
        if let Some(a) = actions.iter().find(|a| a.len() != batch) {
            return Err(CoreError::Shape(format!(
                "{} commands for batch of {batch}",
                a.len()
            )));
        }
        Ok(())
    }

    /// One prediction step on the graph. `actions[s][b]` is the command of
    /// slot `s` for batch element `b`.
    pub fn step_g(
        &self,
        g: &Graph<T>,
        frame: Var,
        actions: &[Vec<ClauseEncoding>],
        hidden: &[GraphSlot],
    ) -> Result<(Var, Vec<GraphSlot>)> {
        let shape = g.shape(frame);
        self.check_frame(&shape)?;
        self.check_slots(actions, hidden.len(), shape[0])?;
        let (latent, skips) = self.encode_g(g, frame);
        match self.kind() {
            ModelKind::Acgn => {
                let words = self.word_capsules_g(g, latent);
                let mut outs = Vec::with_capacity(actions.len());
                let mut next = Vec::with_capacity(actions.len());
                for (batch, slot) in actions.iter().zip(hidden) {
                    let caps = self.action_capsules_g(g, words, batch)?;
                    let (o, s) = self.predict_g(g, caps, slot);
                    outs.push(o);
                    next.push(s);
                }
                let fused = self.fuse_g(g, &outs, words);
                Ok((self.decode_g(g, fused, skips), next))
            }
            ModelKind::Concat => {
                let tiled = g.constant(self.tiled_actions(&actions[0])?);
                let input = g.concat(&[latent, tiled], 1);
                let (o, s) = self.predict_g(g, input, &hidden[0]);
                Ok((self.decode_g(g, o, skips), vec![s]))
            }
        }
    }

    // ---- eager operations ----

    pub fn encode(&self, frame: &Tensor<T>) -> Result<(Tensor<T>, Vec<Tensor<T>>)> {
        self.check_frame(frame.shape())?;
        let g = Graph::new();
        let (latent, skips) = self.encode_g(&g, g.constant(frame.clone()));
        Ok((
            (*g.value(latent)).clone(),
            skips.iter().map(|&s| (*g.value(s)).clone()).collect(),
        ))
    }

    fn check_latent(&self, latent: &Tensor<T>) -> Result<()> {
        let (h, w) = self.config.latent_size();
        let s = latent.shape();
        if s.len() != 4 || s[1] != self.config.encoder_channels[2] || s[2] != h || s[3] != w {
            return Err(CoreError::Shape(format!("latent {s:?}")));
        }
        Ok(())
    }

    /// Word capsule stack `(B, N*K, H', W')`.
    pub fn word_capsules(&self, latent: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_latent(latent)?;
        if self.kind() != ModelKind::Acgn {
            return Err(CoreError::Config(
                "the concatenation baseline has no word capsules".into(),
            ));
        }
        let g = Graph::new();
        let v = self.word_capsules_g(&g, g.constant(latent.clone()));
        Ok((*g.value(v)).clone())
    }

    fn check_words(&self, words: &Tensor<T>) -> Result<()> {
        let (h, w) = self.config.latent_size();
        let s = words.shape();
        if s.len() != 4
            || s[1] != self.config.n_words * self.config.capsule_dim
            || s[2] != h
            || s[3] != w
        {
            return Err(CoreError::Shape(format!("word capsules {s:?}")));
        }
        Ok(())
    }

    /// Routed capsules before the clause transforms.
    pub fn route_pre_transform(
        &self,
        words: &Tensor<T>,
        batch: &[ClauseEncoding],
    ) -> Result<Tensor<T>> {
        self.check_words(words)?;
        let g = Graph::new();
        let v = self.route_pre_g(&g, g.constant(words.clone()), batch)?;
        Ok((*g.value(v)).clone())
    }

    /// Action capsules of one slot.
    pub fn route(&self, words: &Tensor<T>, batch: &[ClauseEncoding]) -> Result<Tensor<T>> {
        self.check_words(words)?;
        let g = Graph::new();
        let v = self.action_capsules_g(&g, g.constant(words.clone()), batch)?;
        Ok((*g.value(v)).clone())
    }

    pub fn predict_step(
        &self,
        input: &Tensor<T>,
        slot: &SlotState<T>,
    ) -> Result<(Tensor<T>, SlotState<T>)> {
        if slot.len() != self.config.layers {
            return Err(CoreError::Shape(format!(
                "{} layers in slot, expected {}",
                slot.len(),
                self.config.layers
            )));
        }
        let g = Graph::new();
        let gs: GraphSlot = slot
            .iter()
            .map(|(h, c)| (g.constant_arc(Arc::clone(h)), g.constant_arc(Arc::clone(c))))
            .collect();
        let (o, s) = self.predict_g(&g, g.constant(input.clone()), &gs);
        Ok((
            (*g.value(o)).clone(),
            s.iter().map(|&(h, c)| (g.value(h), g.value(c))).collect(),
        ))
    }

    /// Gate activations `[i, f, o, g]` of layer `l` for input `x` and hidden `h`.
    pub fn lstm_gates(&self, l: usize, x: &Tensor<T>, h: &Tensor<T>) -> Vec<Tensor<T>> {
        let g = Graph::new();
        let gates = self.conv(
            &g,
            g.concat(&[g.constant(x.clone()), g.constant(h.clone())], 1),
            &format!("lstm.{l}"),
            1,
            1,
        );
        let p = g.chunk(gates, 4, 1);
        [
            g.sigmoid(p[0]),
            g.sigmoid(p[1]),
            g.sigmoid(p[2]),
            g.tanh(p[3]),
        ]
        .iter()
        .map(|&v| (*g.value(v)).clone())
        .collect()
    }

    pub fn fuse(&self, slots: &[Tensor<T>], words: &Tensor<T>) -> Result<Tensor<T>> {
        if slots.is_empty() {
            return Err(CoreError::Slots {
                expected: "at least 1".into(),
                got: 0,
            });
        }
        self.check_words(words)?;
        if let Some(s) = slots
            .iter()
            .find(|s| s.shape().get(1) != Some(&self.config.hidden))
        {
            return Err(CoreError::Shape(format!("slot latent {:?}", s.shape())));
        }
        let g = Graph::new();
        let vs: Vec<Var> = slots.iter().map(|s| g.constant(s.clone())).collect();
        let v = self.fuse_g(&g, &vs, g.constant(words.clone()));
        Ok((*g.value(v)).clone())
    }

    pub fn decode(&self, fused: &Tensor<T>, skips: &[Tensor<T>]) -> Result<Tensor<T>> {
        if skips.len() != 2 {
            return Err(CoreError::Shape(format!(
                "{} skips, expected 2",
                skips.len()
            )));
        }
        let g = Graph::new();
        let v = self.decode_g(
            &g,
            g.constant(fused.clone()),
            [g.constant(skips[0].clone()), g.constant(skips[1].clone())],
        );
        Ok((*g.value(v)).clone())
    }

    /// One step: prediction of the next frame and the updated hidden state.
    pub fn forward(
        &self,
        frame: &Tensor<T>,
        actions: &[Vec<ClauseEncoding>],
        hidden: &HiddenState<T>,
    ) -> Result<(Tensor<T>, HiddenState<T>)> {
        let g = Graph::new();
        let gh = self.graph_hidden(&g, hidden);
        let (pred, next) = self.step_g(&g, g.constant(frame.clone()), actions, &gh)?;
        Ok(((*g.value(pred)).clone(), self.read_hidden(&g, &next)))
    }

    /// Closed-loop rollout from `x0` with fresh hidden state. `labels[t][s]`
    /// holds the slot-`s` commands (one per batch element) of step `t`.
    pub fn rollout(
        &self,
        x0: &Tensor<T>,
        labels: &[Vec<Vec<ClauseEncoding>>],
        steps: usize,
    ) -> Result<Vec<Tensor<T>>> {
        if labels.is_empty() {
            return Err(CoreError::Config("empty label sequence".into()));
        }
        if steps != labels.len() {
            return Err(CoreError::Config(format!(
                "{steps} steps for {} labels",
                labels.len()
            )));
        }
        let hidden = HiddenState::zeros(&self.config, x0.shape()[0], labels[0].len());
        Ok(self.rollout_from(x0, labels, hidden)?.0)
    }

    /// Rollout continuing from `hidden`. The slot count follows each step's
    /// command count (see [`HiddenState::resized`]).
    pub fn rollout_from(
        &self,
        x0: &Tensor<T>,
        labels: &[Vec<Vec<ClauseEncoding>>],
        mut hidden: HiddenState<T>,
    ) -> Result<(Vec<Tensor<T>>, HiddenState<T>)> {
        let mut frames = Vec::with_capacity(labels.len());
        let mut x = x0.clone();
        for step in labels {
            if step.len() != hidden.slot_count() {
                hidden = hidden.resized(step.len());
            }
            let (pred, h) = self.forward(&x, step, &hidden)?;
            hidden = h;
            frames.push(pred.clone());
            x = pred;
        }
        Ok((frames, hidden))
    }

    /// Adds words to clauses. New word filters are freshly initialised and
    /// new fusion columns are zero, so existing outputs are unchanged.
    pub fn extend_vocabulary<R: Rng + ?Sized>(
        &mut self,
        new_words: &BTreeMap<String, Vec<String>>,
        rng: &mut R,
    ) -> Result<Vec<usize>> {
        let added = self.vocab.extend(new_words)?;
        let k = self.config.capsule_dim;
        let n_old = self.config.n_words;
        let n_new = n_old + added.len();
        self.config.n_words = n_new;
        match self.kind() {
            ModelKind::Acgn => {
                let c3 = self.config.encoder_channels[2];
                let fresh: Tensor<T> = lecun_init([added.len() * k, c3, 3, 3], rng);
                let w = self.params.require("words.w")?;
                let w = Tensor::concat(&[w, &fresh], 0);
                let b = Tensor::concat(
                    &[
                        self.params.require("words.b")?,
                        &Tensor::zeros([added.len() * k]),
                    ],
                    0,
                );
                self.params.insert("words.w", w);
                self.params.insert("words.b", b);
                let fw = self.params.require("fuse.w")?;
                let ch = self.config.hidden;
                let fw = Tensor::concat(&[fw, &Tensor::zeros([ch, added.len() * k, 1, 1])], 1);
                self.params.insert("fuse.w", fw);
                if self.config.per_word_transform {
                    for (j, clause) in self.vocab.clauses.iter().enumerate() {
                        for &id in clause.ids.iter().filter(|id| **id >= n_old) {
                            self.params.insert(
                                format!("transform.{j}.{id}.w"),
                                lecun_init([k, k, 3, 3], rng),
                            );
                            self.params
                                .insert(format!("transform.{j}.{id}.b"), Tensor::zeros([k]));
                        }
                    }
                }
            }
            ModelKind::Concat => {
                let ch = self.config.hidden;
                let c3 = self.config.encoder_channels[2];
                let w = self.params.require("pred.in.w")?;
                debug_assert_eq!(w.shape()[1], c3 + n_old);
                let w = Tensor::concat(&[w, &Tensor::zeros([ch, added.len(), 1, 1])], 1);
                self.params.insert("pred.in.w", w);
            }
        }
        Ok(added)
    }
}

/// Encodes a batch of frames in CHW `[0,1]` layout into a `(B, 3, H, W)` tensor.
pub fn frames_tensor<T: Float>(frames: &[&acgn_sim::Frame]) -> Tensor<T> {
    let (h, w) = (frames[0].height as usize, frames[0].width as usize);
    let mut data = Vec::with_capacity(frames.len() * 3 * h * w);
    for f in frames {
        data.extend(f.to_chw().into_iter().map(|v| T::from_f64_lossy(v as f64)));
    }
    Tensor::new([frames.len(), 3, h, w], data).expect("frame batch shape")
}

/// Splits a `(B, 3, H, W)` prediction into quantized frames.
pub fn tensor_frames<T: Float>(t: &Tensor<T>) -> Vec<acgn_sim::Frame> {
    let (b, _, h, w) = t.dims4();
    let per = 3 * h * w;
    (0..b)
        .map(|i| {
            let chw: Vec<f32> = t.data()[i * per..(i + 1) * per]
                .iter()
                .map(|v| v.as_f64() as f32)
                .collect();
            acgn_sim::Frame::from_chw(h as u32, w as u32, &chw)
        })
        .collect()
}
