use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SimError};
use crate::render::{Frame, PixelBox};
use crate::types::{ActionCommand, EnvKind, ObjectKind, Relation, Scene, Verb};
use crate::world::Simulator;

/// Re-initialisation budget when a sampled scene admits no template.
const MAX_REINITS: u64 = 100;

/// SplitMix64 step; used to derive independent child seeds.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    let mut z = base.wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One atomic-action segment: `len` frames starting at `start`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub len: usize,
    pub commands: Vec<ActionCommand>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Episode {
    pub env_kind: EnvKind,
    pub seed: u64,
    /// Seed actually used for the initial scene after any re-initialisation.
    pub scene_seed: u64,
    pub initial: Scene,
    pub scenes: Vec<Scene>,
    pub frames: Vec<Frame>,
    /// Commands active at each frame; one entry except in concurrent episodes.
    pub labels: Vec<Vec<ActionCommand>>,
    pub boxes: Vec<BTreeMap<u32, PixelBox>>,
    pub segments: Vec<Segment>,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// The first command of each frame.
    pub fn primary_labels(&self) -> Vec<ActionCommand> {
        self.labels.iter().map(|l| l[0]).collect()
    }

    pub fn is_concurrent(&self) -> bool {
        self.labels.iter().any(|l| l.len() > 1)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Pattern(Verb, Option<Relation>);

const KITCHEN_TEMPLATES: [&[Pattern]; 3] = [
    &[
        Pattern(Verb::Take, Some(Relation::On)),
        Pattern(Verb::Put, Some(Relation::On)),
    ],
    &[
        Pattern(Verb::Take, Some(Relation::On)),
        Pattern(Verb::Open, None),
        Pattern(Verb::Put, Some(Relation::In)),
        Pattern(Verb::Close, None),
    ],
    &[
        Pattern(Verb::Open, None),
        Pattern(Verb::Take, Some(Relation::In)),
        Pattern(Verb::Close, None),
    ],
];

impl Simulator {
    /// Draws the object count for a scene from the seed's stream.
    pub fn object_count(&self, seed: u64) -> usize {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x0b7e));
        let lim = self.object_limits();
        rng.random_range(lim)
    }

    /// Initial scene used for episodes of `seed`.
    pub fn episode_scene(&self, seed: u64) -> Result<Scene> {
        self.init_scene(seed, self.object_count(seed))
    }

    /// Plays `steps` (each a set of concurrent commands) from `scene`.
    pub fn play(&self, seed: u64, scene: &Scene, steps: &[Vec<ActionCommand>]) -> Result<Episode> {
        let mut scenes = Vec::new();
        let mut labels = Vec::new();
        let mut segments = Vec::new();
        let mut cur = scene.clone();
        for cmds in steps {
            if cmds.is_empty() {
                return Err(SimError::Dataset("empty concurrent step".into()));
            }
            let seg = self.step_concurrent(&cur, cmds)?;
            segments.push(Segment {
                start: scenes.len(),
                len: seg.len(),
                commands: cmds.clone(),
            });
            labels.extend(std::iter::repeat_n(cmds.clone(), seg.len()));
            cur = seg.last().expect("non-empty").clone();
            scenes.extend(seg);
        }
        let (frames, boxes) = scenes
            .iter()
            .map(|s| {
                let r = self.render(s);
                (r.frame, r.boxes)
            })
            .unzip();
        Ok(Episode {
            env_kind: self.kind(),
            seed,
            scene_seed: seed,
            initial: scene.clone(),
            scenes,
            frames,
            labels,
            boxes,
            segments,
        })
    }

    /// Generates an episode, sampling the default template when `script` is
    /// absent. A scene that admits no template is re-drawn from a derived seed.
    pub fn generate_episode(&self, seed: u64, script: Option<&[ActionCommand]>) -> Result<Episode> {
        if let Some(script) = script {
            let scene = self.episode_scene(seed)?;
            let steps: Vec<_> = script.iter().map(|c| vec![*c]).collect();
            return self.play(seed, &scene, &steps);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for attempt in 0..MAX_REINITS {
            let scene_seed = if attempt == 0 {
                seed
            } else {
                derive_seed(seed, attempt)
            };
            let scene = self.episode_scene(scene_seed)?;
            if let Some(script) = self.sample_script(&scene, &mut rng) {
                let steps: Vec<_> = script.into_iter().map(|c| vec![c]).collect();
                let mut ep = self.play(seed, &scene, &steps)?;
                ep.scene_seed = scene_seed;
                return Ok(ep);
            }
        }
        Err(SimError::Placement {
            seed,
            what: "a scene admitting the episode template".into(),
            attempts: MAX_REINITS as usize,
        })
    }

    /// One concurrent step of `cmds` from the seed's initial scene.
    pub fn generate_concurrent_episode(
        &self,
        seed: u64,
        cmds: &[ActionCommand],
    ) -> Result<Episode> {
        let scene = self.episode_scene(seed)?;
        self.play(seed, &scene, &[cmds.to_vec()])
    }

    /// Samples a template-following script, or `None` if the scene admits none.
    pub fn sample_script(&self, scene: &Scene, rng: &mut ChaCha8Rng) -> Option<Vec<ActionCommand>> {
        match self.kind() {
            EnvKind::Blocks => self.sample_blocks(scene, rng),
            EnvKind::Kitchen => self.sample_kitchen(scene, rng),
        }
    }

    fn focus_id(&self, scene: &Scene) -> Option<u32> {
        let k = self.spec.focus?;
        scene.objects.iter().find(|o| o.kind == k).map(|o| o.id)
    }

    fn sample_blocks(&self, scene: &Scene, rng: &mut ChaCha8Rng) -> Option<Vec<ActionCommand>> {
        let focus = self.focus_id(scene);
        let mut cur = scene.clone();
        let mut script = Vec::new();
        for pair in 0..3 {
            let picks: Vec<(ActionCommand, Scene)> = self
                .enumerate_valid_actions(&cur)
                .into_iter()
                .filter(|c| matches!(c.verb, Verb::Pick | Verb::PickRotate))
                .filter(|c| {
                    pair > 0
                        || focus.is_none()
                        || c.subject.and_then(|s| cur.find(s)).map(|o| o.id) == focus
                })
                .filter_map(|c| {
                    let after = self.step_concurrent(&cur, &[c]).ok()?.pop()?;
                    let can_put = self
                        .enumerate_valid_actions(&after)
                        .iter()
                        .any(|p| p.verb == Verb::Put);
                    can_put.then_some((c, after))
                })
                .collect();
            let (pick, after) = picks.choose(rng)?.clone();
            let puts: Vec<ActionCommand> = self
                .enumerate_valid_actions(&after)
                .into_iter()
                .filter(|c| c.verb == Verb::Put)
                .collect();
            let put = *puts.choose(rng)?;
            cur = self.step_concurrent(&after, &[put]).ok()?.pop()?;
            script.push(pick);
            script.push(put);
        }
        Some(script)
    }

    fn sample_kitchen(&self, scene: &Scene, rng: &mut ChaCha8Rng) -> Option<Vec<ActionCommand>> {
        let focus = self.spec.focus;
        let mentions = |seq: &[ActionCommand], k: ObjectKind| {
            seq.iter().any(|c| {
                c.subject.map(|s| s.kind) == Some(k) || c.reference.map(|s| s.kind) == Some(k)
            })
        };
        let per_template: Vec<Vec<Vec<ActionCommand>>> = KITCHEN_TEMPLATES
            .iter()
            .map(|t| {
                let mut all = Vec::new();
                self.complete(scene, t, &mut Vec::new(), &mut all);
                all.retain(|seq| focus.is_none_or(|k| mentions(seq, k)));
                // Moving an object back onto the appliance it came from is not a move.
                all.retain(|seq| !(seq.len() == 2 && seq[0].reference == seq[1].reference));
                all
            })
            .collect();
        let feasible: Vec<&Vec<Vec<ActionCommand>>> =
            per_template.iter().filter(|s| !s.is_empty()).collect();
        let chosen = feasible.choose(rng)?;
        chosen.choose(rng).cloned()
    }

    fn complete(
        &self,
        scene: &Scene,
        rest: &[Pattern],
        prefix: &mut Vec<ActionCommand>,
        out: &mut Vec<Vec<ActionCommand>>,
    ) {
        let Some((p, tail)) = rest.split_first() else {
            out.push(prefix.clone());
            return;
        };
        for c in self.enumerate_valid_actions(scene) {
            if c.verb != p.0 || c.relation != p.1 {
                continue;
            }
            if let Ok(mut seg) = self.step_concurrent(scene, &[c]) {
                let next = seg.pop().expect("non-empty");
                prefix.push(c);
                self.complete(&next, tail, prefix, out);
                prefix.pop();
            }
        }
    }

    /// Samples a concurrent evaluation script on disjoint objects.
    ///
    /// Blocks: two simultaneous picks followed by two simultaneous puts.
    /// Kitchen: an open or close together with a take, then nothing else.
    pub fn sample_concurrent_script(
        &self,
        scene: &Scene,
        rng: &mut ChaCha8Rng,
    ) -> Option<Vec<Vec<ActionCommand>>> {
        let valid = self.enumerate_valid_actions(scene);
        let pairs = |a: &[ActionCommand],
                     b: &[ActionCommand],
                     s: &Scene|
         -> Vec<(Vec<ActionCommand>, Scene)> {
            let mut out = Vec::new();
            for x in a {
                for y in b {
                    if x >= y && std::ptr::eq(a, b) {
                        continue;
                    }
                    if let Ok(mut seg) = self.step_concurrent(s, &[*x, *y]) {
                        out.push((vec![*x, *y], seg.pop().expect("non-empty")));
                    }
                }
            }
            out
        };
        match self.kind() {
            EnvKind::Blocks => {
                let picks: Vec<_> = valid
                    .iter()
                    .copied()
                    .filter(|c| c.verb == Verb::Pick)
                    .collect();
                let mut options = Vec::new();
                for (step1, after) in pairs(&picks, &picks, scene) {
                    let puts: Vec<_> = self
                        .enumerate_valid_actions(&after)
                        .into_iter()
                        .filter(|c| c.verb == Verb::Put)
                        .collect();
                    let (a, b): (Vec<_>, Vec<_>) = puts
                        .into_iter()
                        .partition(|c| c.subject == step1[0].subject);
                    let second = pairs(&a, &b, &after);
                    if !second.is_empty() {
                        options.push((step1, second));
                    }
                }
                let (step1, second) = options.choose(rng)?;
                let (step2, _) = second.choose(rng)?;
                Some(vec![step1.clone(), step2.clone()])
            }
            EnvKind::Kitchen => {
                let doors: Vec<_> = valid
                    .iter()
                    .copied()
                    .filter(|c| matches!(c.verb, Verb::Open | Verb::Close))
                    .collect();
                let takes: Vec<_> = valid
                    .iter()
                    .copied()
                    .filter(|c| c.verb == Verb::Take)
                    .collect();
                let options = pairs(&doors, &takes, scene);
                let (step, _) = options.choose(rng)?;
                Some(vec![step.clone()])
            }
        }
    }

    /// Concurrent evaluation episode for `seed`.
    pub fn generate_sampled_concurrent(&self, seed: u64) -> Result<Episode> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for attempt in 0..MAX_REINITS {
            let scene_seed = if attempt == 0 {
                seed
            } else {
                derive_seed(seed, attempt)
            };
            let scene = self.episode_scene(scene_seed)?;
            if let Some(steps) = self.sample_concurrent_script(&scene, &mut rng) {
                let mut ep = self.play(seed, &scene, &steps)?;
                ep.scene_seed = scene_seed;
                return Ok(ep);
            }
        }
        Err(SimError::Placement {
            seed,
            what: "a scene admitting concurrent actions".into(),
            attempts: MAX_REINITS as usize,
        })
    }
}
