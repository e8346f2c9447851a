use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::types::{ActionCommand, EnvKind, EnvSpec, ObjectSpec, Relation, Scene, Verb, CANVAS};
use crate::world::{expect_verb, resolve, Motion, Plan, Raise, MAX_ATTEMPTS};

const MARGIN: f64 = 2.0;
const RELATIONS: [Relation; 5] = [
    Relation::OnTop,
    Relation::LeftOf,
    Relation::RightOf,
    Relation::Front,
    Relation::Behind,
];

pub(crate) fn init(spec: &EnvSpec, rng: &mut ChaCha8Rng, n: usize, seed: u64) -> Result<Scene> {
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..MAX_ATTEMPTS {
            let kind = match spec.focus {
                Some(k) if i == 0 => k,
                _ => spec.movable[rng.random_range(0..spec.movable.len())],
            };
            let color = spec.colors[rng.random_range(0..spec.colors.len())];
            if objects.iter().any(|o| o.kind == kind && o.color == color) {
                continue;
            }
            let (w, h) = kind.size();
            let x = rng.random_range((w / 2.0) as i32..=(CANVAS - w / 2.0) as i32) as f64;
            let y = rng.random_range((h / 2.0) as i32..=(CANVAS - h / 2.0) as i32) as f64;
            let cand = ObjectSpec {
                id: i as u32,
                kind,
                color,
                position: (x, y),
                size: (w, h),
                z: i as i32,
                rotation: 0.0,
                openable: false,
                open_fraction: 0.0,
                contained_in: None,
                resting_on: None,
            };
            if objects.iter().any(|o| o.overlaps(&cand, MARGIN)) {
                continue;
            }
            objects.push(cand);
            placed = true;
            break;
        }
        if !placed {
            return Err(SimError::Placement {
                seed,
                what: format!("block {i}"),
                attempts: MAX_ATTEMPTS,
            });
        }
    }
    Ok(Scene {
        env_kind: EnvKind::Blocks,
        canvas: (CANVAS as u32, CANVAS as u32),
        objects,
        held: vec![],
    })
}

pub(crate) fn candidates(scene: &Scene) -> Vec<ActionCommand> {
    let mut out = Vec::new();
    for a in &scene.objects {
        out.push(ActionCommand::unary(Verb::Pick, a.reference()));
        out.push(ActionCommand::unary(Verb::PickRotate, a.reference()));
    }
    for a in &scene.objects {
        for b in &scene.objects {
            if a.id != b.id {
                for r in RELATIONS {
                    out.push(ActionCommand::relational(
                        Verb::Put,
                        a.reference(),
                        r,
                        b.reference(),
                    ));
                }
            }
        }
    }
    out
}

/// Resting centre of `a` placed relative to `b`.
pub fn placement(a: &ObjectSpec, b: &ObjectSpec, rel: Relation) -> (f64, f64) {
    let (bx, by) = b.position;
    let dx = (b.size.0 + a.size.0) / 2.0 + MARGIN;
    let dy = (b.size.1 + a.size.1) / 2.0 + MARGIN;
    match rel {
        Relation::LeftOf => (bx - dx, by),
        Relation::RightOf => (bx + dx, by),
        Relation::Front => (bx, by + dy),
        Relation::Behind => (bx, by - dy),
        Relation::OnTop => (bx, by - b.size.1 / 2.0),
        Relation::On | Relation::In => unreachable!("kitchen relation in blocks"),
    }
}

/// Off-canvas height an object is lifted to (and lowered from).
pub(crate) fn lifted_y(o: &ObjectSpec) -> f64 {
    -o.size.1 / 2.0 - 1.0
}

pub(crate) fn plan(scene: &Scene, cmd: &ActionCommand) -> Result<Plan> {
    expect_verb(cmd, &[Verb::Pick, Verb::PickRotate, Verb::Put])?;
    let sid = resolve(scene, cmd, cmd.subject, "subject")?;
    let subject = scene.object(sid).expect("resolved");
    let mut plan = Plan::new(sid);
    match cmd.verb {
        Verb::Pick | Verb::PickRotate => {
            if cmd.relation.is_some() || cmd.reference.is_some() {
                return Err(SimError::precondition(
                    cmd,
                    "pick takes no relation or reference",
                ));
            }
            if !scene.held.is_empty() {
                return Err(SimError::precondition(
                    cmd,
                    "pick requires an empty gripper",
                ));
            }
            if scene.supported_by(sid).next().is_some() {
                return Err(SimError::precondition(
                    cmd,
                    "pick requires nothing stacked on the subject",
                ));
            }
            let turn = if cmd.verb == Verb::PickRotate {
                90.0
            } else {
                0.0
            };
            plan.raise = Raise::Always;
            plan.resting_on = Some(None);
            plan.grasp = true;
            plan.motion = Some(Motion {
                from: subject.position,
                to: (subject.position.0, lifted_y(subject)),
                rot_from: subject.rotation,
                rot_to: subject.rotation + turn,
            });
        }
        Verb::Put => {
            let rel = cmd
                .relation
                .ok_or_else(|| SimError::precondition(cmd, "put requires a relation"))?;
            if !scene.is_held(sid) {
                return Err(SimError::precondition(
                    cmd,
                    "put requires the subject to be held",
                ));
            }
            let rid = resolve(scene, cmd, cmd.reference, "reference")?;
            if rid == sid || scene.is_held(rid) {
                return Err(SimError::precondition(
                    cmd,
                    "reference must be a different resting object",
                ));
            }
            let reference = scene.object(rid).expect("resolved");
            if rel == Relation::OnTop && scene.supported_by(rid).next().is_some() {
                return Err(SimError::precondition(cmd, "on_top requires a free top"));
            }
            if !RELATIONS.contains(&rel) {
                return Err(SimError::precondition(
                    cmd,
                    format!("relation `{rel}` does not exist in blocks"),
                ));
            }
            let target = placement(subject, reference, rel);
            let mut placed = subject.clone();
            placed.position = target;
            if !placed.inside_canvas() {
                return Err(SimError::precondition(
                    cmd,
                    "target lies outside the canvas",
                ));
            }
            let blocked = scene.objects.iter().any(|o| {
                o.id != sid
                    && !scene.is_held(o.id)
                    && !(rel == Relation::OnTop && o.id == rid)
                    && o.overlaps(&placed, 0.0)
            });
            if blocked {
                return Err(SimError::precondition(cmd, "target is occupied"));
            }
            plan.touched.push(rid);
            plan.raise = Raise::Above(rid);
            plan.resting_on = Some((rel == Relation::OnTop).then_some(rid));
            plan.release = true;
            plan.motion = Some(Motion {
                from: (target.0, lifted_y(subject)),
                to: target,
                rot_from: subject.rotation,
                rot_to: subject.rotation,
            });
        }
        _ => unreachable!(),
    }
    Ok(plan)
}
