use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::blocks::lifted_y;
use crate::error::{Result, SimError};
use crate::types::{
    ActionCommand, EnvKind, EnvSpec, ObjectKind, ObjectSpec, Relation, Scene, Verb, CANVAS,
};
use crate::world::{expect_verb, resolve, Motion, Plan, Raise, MAX_ATTEMPTS};

/// Bottom edge of every appliance.
pub const WALL_LINE: f64 = 40.0;
/// Bottom edge of objects standing on the floor.
pub const FLOOR_LINE: f64 = 58.0;
const APPLIANCES: usize = 2;

fn interior_rest(container: &ObjectSpec, item: &ObjectSpec) -> (f64, f64) {
    let (_, _, _, y1) = container.extent();
    (container.position.0, y1 - 2.0 - item.size.1 / 2.0)
}

fn top_rest(container: &ObjectSpec, item: &ObjectSpec) -> (f64, f64) {
    (container.position.0, container.top() - item.size.1 / 2.0)
}

fn blank(id: u32, kind: ObjectKind, color: crate::types::Color) -> ObjectSpec {
    ObjectSpec {
        id,
        kind,
        color,
        position: (0.0, 0.0),
        size: kind.size(),
        z: id as i32,
        rotation: 0.0,
        openable: kind.is_openable(),
        open_fraction: 0.0,
        contained_in: None,
        resting_on: None,
    }
}

pub(crate) fn init(spec: &EnvSpec, rng: &mut ChaCha8Rng, n: usize, seed: u64) -> Result<Scene> {
    let mut objects: Vec<ObjectSpec> = Vec::with_capacity(n);
    let fail = |what: String| SimError::Placement {
        seed,
        what,
        attempts: MAX_ATTEMPTS,
    };
    let focus_large = spec.focus.filter(|k| k.is_openable());
    let focus_small = spec.focus.filter(|k| !k.is_openable());
    for i in 0..APPLIANCES {
        let placed = (0..MAX_ATTEMPTS).find_map(|_| {
            let kind = match focus_large {
                Some(k) if i == 0 => k,
                _ => spec.openable[rng.random_range(0..spec.openable.len())],
            };
            let color = spec.colors[rng.random_range(0..spec.colors.len())];
            let mut o = blank(i as u32, kind, color);
            let (w, h) = o.size;
            let x =
                rng.random_range((w / 2.0 + 1.0) as i32..=(CANVAS - w / 2.0 - 1.0) as i32) as f64;
            o.position = (x, WALL_LINE - h / 2.0);
            let clash = objects
                .iter()
                .any(|p| (p.kind == kind && p.color == color) || p.overlaps(&o, 4.0));
            (!clash).then_some(o)
        });
        objects.push(placed.ok_or_else(|| fail(format!("appliance {i}")))?);
    }
    for i in APPLIANCES..n {
        let placed = (0..MAX_ATTEMPTS).find_map(|_| {
            let kind = match focus_small {
                Some(k) if i == APPLIANCES => k,
                _ => spec.movable[rng.random_range(0..spec.movable.len())],
            };
            let color = spec.colors[rng.random_range(0..spec.colors.len())];
            if objects.iter().any(|p| p.kind == kind && p.color == color) {
                return None;
            }
            let mut o = blank(i as u32, kind, color);
            let spot = rng.random_range(0..2 * APPLIANCES + 1);
            if spot < 2 * APPLIANCES {
                let host = &objects[spot / 2];
                if spot % 2 == 0 {
                    if objects.iter().any(|p| p.resting_on == Some(host.id)) {
                        return None;
                    }
                    o.position = top_rest(host, &o);
                    o.resting_on = Some(host.id);
                } else {
                    if objects.iter().any(|p| p.contained_in == Some(host.id)) {
                        return None;
                    }
                    o.position = interior_rest(host, &o);
                    o.contained_in = Some(host.id);
                }
            } else {
                let (w, h) = o.size;
                let x = rng.random_range((w / 2.0 + 1.0) as i32..=(CANVAS - w / 2.0 - 1.0) as i32)
                    as f64;
                o.position = (x, FLOOR_LINE - h / 2.0);
                let busy = objects
                    .iter()
                    .any(|p| p.contained_in.is_none() && p.overlaps(&o, 2.0));
                if busy {
                    return None;
                }
            }
            if !o.inside_canvas() {
                return None;
            }
            Some(o)
        });
        objects.push(placed.ok_or_else(|| fail(format!("small object {i}")))?);
    }
    Ok(Scene {
        env_kind: EnvKind::Kitchen,
        canvas: (CANVAS as u32, CANVAS as u32),
        objects,
        held: vec![],
    })
}

pub(crate) fn candidates(scene: &Scene) -> Vec<ActionCommand> {
    let mut out = Vec::new();
    let (large, small): (Vec<_>, Vec<_>) = scene.objects.iter().partition(|o| o.openable);
    for s in &small {
        out.push(ActionCommand::unary(Verb::Take, s.reference()));
        for a in &large {
            for r in [Relation::On, Relation::In] {
                out.push(ActionCommand::relational(
                    Verb::Take,
                    s.reference(),
                    r,
                    a.reference(),
                ));
            }
        }
    }
    for s in &small {
        for a in &large {
            for r in [Relation::On, Relation::In] {
                out.push(ActionCommand::relational(
                    Verb::Put,
                    s.reference(),
                    r,
                    a.reference(),
                ));
            }
        }
    }
    for a in &large {
        out.push(ActionCommand::unary(Verb::Open, a.reference()));
        out.push(ActionCommand::unary(Verb::Close, a.reference()));
    }
    out
}

pub(crate) fn plan(scene: &Scene, cmd: &ActionCommand) -> Result<Plan> {
    expect_verb(cmd, &[Verb::Take, Verb::Put, Verb::Open, Verb::Close])?;
    let sid = resolve(scene, cmd, cmd.subject, "subject")?;
    let subject = scene.object(sid).expect("resolved");
    let mut plan = Plan::new(sid);
    let reference = match cmd.relation {
        Some(_) => {
            let rid = resolve(scene, cmd, cmd.reference, "reference")?;
            let r = scene.object(rid).expect("resolved");
            if !r.openable {
                return Err(SimError::precondition(
                    cmd,
                    "reference must be an appliance",
                ));
            }
            plan.touched.push(rid);
            Some(r)
        }
        None if cmd.reference.is_some() => {
            return Err(SimError::precondition(
                cmd,
                "a reference needs a preposition",
            ));
        }
        None => None,
    };
    match cmd.verb {
        Verb::Open | Verb::Close => {
            if reference.is_some() {
                return Err(SimError::precondition(
                    cmd,
                    "open and close take no reference",
                ));
            }
            if !subject.openable {
                return Err(SimError::precondition(cmd, "subject is not openable"));
            }
            let (from, to) = if cmd.verb == Verb::Open {
                (0.0, 1.0)
            } else {
                (1.0, 0.0)
            };
            if subject.open_fraction != from {
                return Err(SimError::precondition(
                    cmd,
                    if from == 0.0 {
                        "appliance is already open"
                    } else {
                        "appliance is already closed"
                    },
                ));
            }
            plan.open = Some((from, to));
        }
        Verb::Take => {
            if subject.openable {
                return Err(SimError::precondition(cmd, "appliances cannot be taken"));
            }
            if !scene.held.is_empty() {
                return Err(SimError::precondition(
                    cmd,
                    "take requires an empty gripper",
                ));
            }
            let located = match (cmd.relation, reference) {
                (Some(Relation::On), Some(r)) => subject.resting_on == Some(r.id),
                (Some(Relation::In), Some(r)) => {
                    if r.open_fraction != 1.0 {
                        return Err(SimError::precondition(cmd, "container must be open"));
                    }
                    subject.contained_in == Some(r.id)
                }
                (None, None) => subject.resting_on.is_none() && subject.contained_in.is_none(),
                _ => false,
            };
            if !located {
                return Err(SimError::precondition(
                    cmd,
                    "subject is not at the named location",
                ));
            }
            plan.raise = Raise::Always;
            plan.resting_on = Some(None);
            plan.contained_in = Some(None);
            plan.grasp = true;
            plan.motion = Some(Motion {
                from: subject.position,
                to: (subject.position.0, lifted_y(subject)),
                rot_from: subject.rotation,
                rot_to: subject.rotation,
            });
        }
        Verb::Put => {
            if !scene.is_held(sid) {
                return Err(SimError::precondition(
                    cmd,
                    "put requires the subject to be held",
                ));
            }
            let r = reference.ok_or_else(|| {
                SimError::precondition(cmd, "put requires a preposition and reference")
            })?;
            let target = match cmd.relation {
                Some(Relation::On) => {
                    if scene.supported_by(r.id).any(|o| o.id != sid) {
                        return Err(SimError::precondition(cmd, "appliance top is occupied"));
                    }
                    plan.resting_on = Some(Some(r.id));
                    plan.raise = Raise::Above(r.id);
                    top_rest(r, subject)
                }
                Some(Relation::In) => {
                    if r.open_fraction != 1.0 {
                        return Err(SimError::precondition(cmd, "container must be open"));
                    }
                    if scene.contents_of(r.id).any(|o| o.id != sid) {
                        return Err(SimError::precondition(cmd, "container is occupied"));
                    }
                    plan.contained_in = Some(Some(r.id));
                    interior_rest(r, subject)
                }
                _ => return Err(SimError::precondition(cmd, "preposition must be on or in")),
            };
            let mut placed = subject.clone();
            placed.position = target;
            if !placed.inside_canvas() {
                return Err(SimError::precondition(
                    cmd,
                    "target lies outside the canvas",
                ));
            }
            if cmd.relation == Some(Relation::On) {
                let blocked = scene.objects.iter().any(|o| {
                    o.id != sid
                        && o.id != r.id
                        && !scene.is_held(o.id)
                        && o.contained_in.is_none()
                        && o.overlaps(&placed, 0.0)
                });
                if blocked {
                    return Err(SimError::precondition(cmd, "target is occupied"));
                }
            }
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
