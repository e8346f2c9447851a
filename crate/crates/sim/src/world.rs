use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::render::{render, Rendered};
use crate::types::{ActionCommand, EnvKind, EnvSpec, ObjectRef, Scene, Verb};
use crate::{blocks, kitchen};

/// Rejection-sampling budget for every placement.
pub const MAX_ATTEMPTS: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Raise {
    Keep,
    Always,
    /// Raise only if currently below this object.
    Above(u32),
}

/// Linear motion of one object over a segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Motion {
    pub from: (f64, f64),
    pub to: (f64, f64),
    pub rot_from: f64,
    pub rot_to: f64,
}

/// What one command does to a scene. Link, z and grasp changes happen at the
/// first frame of the segment; releases happen at the last.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Plan {
    pub subject: u32,
    pub touched: Vec<u32>,
    pub raise: Raise,
    pub resting_on: Option<Option<u32>>,
    pub contained_in: Option<Option<u32>>,
    pub grasp: bool,
    pub release: bool,
    pub motion: Option<Motion>,
    pub open: Option<(f64, f64)>,
}

impl Plan {
    pub fn new(subject: u32) -> Self {
        Self {
            subject,
            touched: vec![subject],
            raise: Raise::Keep,
            resting_on: None,
            contained_in: None,
            grasp: false,
            release: false,
            motion: None,
            open: None,
        }
    }

    fn apply_start(&self, scene: &mut Scene) {
        let top = scene.max_z();
        let below = match self.raise {
            Raise::Keep => None,
            Raise::Always => Some(i32::MAX),
            Raise::Above(id) => scene.object(id).map(|o| o.z),
        };
        let o = scene
            .object_mut(self.subject)
            .expect("planned subject exists");
        if let Some(limit) = below {
            if o.z < limit {
                o.z = top + 1;
            }
        }
        if let Some(r) = self.resting_on {
            o.resting_on = r;
        }
        if let Some(c) = self.contained_in {
            o.contained_in = c;
        }
        if let Some(m) = self.motion {
            o.position = m.from;
            o.rotation = m.rot_from;
        }
        if let Some((a, _)) = self.open {
            o.open_fraction = a;
        }
        if self.grasp && !scene.held.contains(&self.subject) {
            scene.held.push(self.subject);
        }
    }

    fn apply_at(&self, scene: &mut Scene, f: f64) {
        let o = scene
            .object_mut(self.subject)
            .expect("planned subject exists");
        let lerp = |a: f64, b: f64| if f >= 1.0 { b } else { a + (b - a) * f };
        if let Some(m) = self.motion {
            o.position = (lerp(m.from.0, m.to.0), lerp(m.from.1, m.to.1));
            o.rotation = lerp(m.rot_from, m.rot_to);
        }
        if let Some((a, b)) = self.open {
            o.open_fraction = lerp(a, b);
        }
        if f >= 1.0 && self.release {
            scene.held.retain(|&h| h != self.subject);
        }
    }
}

/// Resolves an object reference to the unique matching object id.
pub(crate) fn resolve(
    scene: &Scene,
    cmd: &ActionCommand,
    r: Option<ObjectRef>,
    what: &str,
) -> Result<u32> {
    let r = r.ok_or_else(|| SimError::precondition(cmd, format!("{what} is required")))?;
    scene
        .find(r)
        .map(|o| o.id)
        .ok_or_else(|| SimError::precondition(cmd, format!("{what} {r} is not in the scene")))
}

/// A configured environment: object vocabulary plus render resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct Simulator {
    pub spec: EnvSpec,
    pub resolution: u32,
}

impl Simulator {
    pub fn new(spec: EnvSpec, resolution: u32) -> Self {
        Self { spec, resolution }
    }

    pub fn for_env(kind: EnvKind, resolution: u32) -> Self {
        Self::new(EnvSpec::default_for(kind), resolution)
    }

    pub fn kind(&self) -> EnvKind {
        self.spec.kind
    }

    /// Frames per atomic action.
    pub fn t_act(&self) -> usize {
        self.spec.kind.t_act()
    }

    /// Permitted total object counts.
    pub fn object_limits(&self) -> RangeInclusive<usize> {
        match self.spec.kind {
            EnvKind::Blocks => 4..=6,
            EnvKind::Kitchen => 3..=5,
        }
    }

    pub fn init_scene(&self, seed: u64, n_objects: usize) -> Result<Scene> {
        if !self.object_limits().contains(&n_objects) {
            let rule = match self.spec.kind {
                EnvKind::Blocks => "blocks scenes hold 4 to 6 objects",
                EnvKind::Kitchen => "kitchen scenes hold 2 appliances and 1 to 3 small objects",
            };
            return Err(SimError::ObjectCount {
                env: self.spec.kind.to_string(),
                n: n_objects,
                rule: rule.into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scene = match self.spec.kind {
            EnvKind::Blocks => blocks::init(&self.spec, &mut rng, n_objects, seed)?,
            EnvKind::Kitchen => kitchen::init(&self.spec, &mut rng, n_objects, seed)?,
        };
        debug_assert_eq!(scene.validate(), Ok(()));
        Ok(scene)
    }

    pub(crate) fn plan(&self, scene: &Scene, cmd: &ActionCommand) -> Result<Option<Plan>> {
        if cmd.is_noop() {
            return Ok(None);
        }
        let plan = match self.spec.kind {
            EnvKind::Blocks => blocks::plan(scene, cmd)?,
            EnvKind::Kitchen => kitchen::plan(scene, cmd)?,
        };
        Ok(Some(plan))
    }

    /// Commands executable from `scene`, excluding noop.
    pub fn enumerate_valid_actions(&self, scene: &Scene) -> Vec<ActionCommand> {
        let candidates = match self.spec.kind {
            EnvKind::Blocks => blocks::candidates(scene),
            EnvKind::Kitchen => kitchen::candidates(scene),
        };
        candidates
            .into_iter()
            .filter(|c| self.plan(scene, c).is_ok())
            .collect()
    }

    /// `T_act` scenes for one command together with the per-frame labels.
    pub fn step_action(
        &self,
        scene: &Scene,
        cmd: &ActionCommand,
    ) -> Result<(Vec<Scene>, Vec<ActionCommand>)> {
        let scenes = self.step_concurrent(scene, std::slice::from_ref(cmd))?;
        let labels = vec![*cmd; scenes.len()];
        Ok((scenes, labels))
    }

    /// Advances several commands on disjoint objects in lock step.
    pub fn step_concurrent(&self, scene: &Scene, cmds: &[ActionCommand]) -> Result<Vec<Scene>> {
        let mut plans = Vec::new();
        let mut seen = BTreeSet::new();
        for cmd in cmds {
            if let Some(p) = self.plan(scene, cmd)? {
                for &id in &p.touched {
                    if !seen.insert(id) {
                        return Err(SimError::Conflict { object: id });
                    }
                }
                plans.push(p);
            }
        }
        let mut start = scene.clone();
        for p in &plans {
            p.apply_start(&mut start);
        }
        let t = self.t_act();
        let scenes: Vec<Scene> = (0..t)
            .map(|k| {
                let f = k as f64 / (t - 1) as f64;
                let mut s = start.clone();
                for p in &plans {
                    p.apply_at(&mut s, f);
                }
                s
            })
            .collect();
        let last = scenes.last().expect("t_act >= 2");
        if plans.len() > 1 {
            let moved: Vec<u32> = plans.iter().map(|p| p.subject).collect();
            if let Some(id) = colliding(last, &moved) {
                return Err(SimError::Conflict { object: id });
            }
        }
        debug_assert_eq!(last.validate(), Ok(()));
        Ok(scenes)
    }

    pub fn render(&self, scene: &Scene) -> Rendered {
        render(scene, self.resolution)
    }
}

/// First moved object that overlaps another resting object without a support
/// or containment link between them.
fn colliding(scene: &Scene, moved: &[u32]) -> Option<u32> {
    for &id in moved {
        let a = scene.object(id)?;
        if scene.is_held(id) || a.contained_in.is_some() {
            continue;
        }
        for b in &scene.objects {
            if b.id == id || scene.is_held(b.id) || b.contained_in.is_some() {
                continue;
            }
            let linked = a.resting_on == Some(b.id) || b.resting_on == Some(a.id);
            if !linked && a.overlaps(b, 0.0) {
                return Some(id);
            }
        }
    }
    None
}

/// Verb check shared by both environments.
pub(crate) fn expect_verb(cmd: &ActionCommand, allowed: &[Verb]) -> Result<()> {
    if allowed.contains(&cmd.verb) {
        Ok(())
    } else {
        Err(SimError::precondition(
            cmd,
            format!("verb `{}` does not exist in this environment", cmd.verb),
        ))
    }
}
