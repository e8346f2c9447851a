use std::fmt;

use serde::{Deserialize, Serialize};

/// Logical canvas side in scene units; rendering rescales to any resolution.
pub const CANVAS: f64 = 64.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvKind {
    Blocks,
    Kitchen,
}

impl EnvKind {
    pub fn name(self) -> &'static str {
        match self {
            EnvKind::Blocks => "blocks",
            EnvKind::Kitchen => "kitchen",
        }
    }

    /// Frames per atomic action.
    pub fn t_act(self) -> usize {
        match self {
            EnvKind::Blocks => 12,
            EnvKind::Kitchen => 10,
        }
    }
}

impl fmt::Display for EnvKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for EnvKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "blocks" => Ok(EnvKind::Blocks),
            "kitchen" => Ok(EnvKind::Kitchen),
            other => Err(format!("unknown environment `{other}`")),
        }
    }
}

macro_rules! word_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $word:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $word)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn word(self) -> &'static str {
                match self { $($name::$variant => $word),+ }
            }

            pub fn from_word(w: &str) -> Option<Self> {
                match w { $($word => Some($name::$variant),)+ _ => None }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.word())
            }
        }
    };
}

word_enum!(
    Verb {
        Noop => "noop",
        Pick => "pick",
        PickRotate => "pick_rotate",
        Put => "put",
        Take => "take",
        Open => "open",
        Close => "close",
    }
);

word_enum!(
    /// Spatial relation (blocks) or preposition (kitchen).
    Relation {
        OnTop => "on_top",
        LeftOf => "left_of",
        RightOf => "right_of",
        Front => "front",
        Behind => "behind",
        On => "on",
        In => "in",
    }
);

word_enum!(
    /// Shape (blocks) or category (kitchen) of an object.
    ObjectKind {
        Square => "square",
        Circle => "circle",
        Triangle => "triangle",
        Diamond => "diamond",
        Bottle => "bottle",
        Kettle => "kettle",
        Pot => "pot",
        Dispenser => "dispenser",
        Oven => "oven",
        Fridge => "fridge",
        Dishwasher => "dishwasher",
        Safe => "safe",
    }
);

word_enum!(
    Color {
        Red => "red",
        Green => "green",
        Blue => "blue",
        Yellow => "yellow",
        Cyan => "cyan",
        Magenta => "magenta",
        Orange => "orange",
    }
);

impl ObjectKind {
    pub fn is_openable(self) -> bool {
        matches!(
            self,
            ObjectKind::Oven | ObjectKind::Fridge | ObjectKind::Dishwasher | ObjectKind::Safe
        )
    }

    /// Footprint `(w, h)` in scene units.
    pub fn size(self) -> (f64, f64) {
        match self {
            ObjectKind::Square
            | ObjectKind::Circle
            | ObjectKind::Triangle
            | ObjectKind::Diamond => (10.0, 10.0),
            ObjectKind::Bottle => (6.0, 10.0),
            ObjectKind::Kettle => (10.0, 9.0),
            ObjectKind::Pot => (10.0, 7.0),
            ObjectKind::Dispenser => (8.0, 10.0),
            ObjectKind::Oven => (20.0, 20.0),
            ObjectKind::Fridge => (16.0, 28.0),
            ObjectKind::Dishwasher => (20.0, 18.0),
            ObjectKind::Safe => (18.0, 20.0),
        }
    }
}

impl Color {
    pub fn rgb(self) -> [u8; 3] {
        match self {
            Color::Red => [230, 50, 50],
            Color::Green => [50, 210, 70],
            Color::Blue => [60, 100, 240],
            Color::Yellow => [240, 220, 50],
            Color::Cyan => [50, 210, 220],
            Color::Magenta => [220, 60, 220],
            Color::Orange => [250, 150, 40],
        }
    }
}

/// A `(shape_or_category, color)` pair naming at most one object in a scene.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ObjectRef {
    pub kind: ObjectKind,
    pub color: Color,
}

impl ObjectRef {
    pub fn new(kind: ObjectKind, color: Color) -> Self {
        Self { kind, color }
    }
}

impl fmt::Display for ObjectRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.color, self.kind)
    }
}

/// A semantic action label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ActionCommand {
    pub verb: Verb,
    pub subject: Option<ObjectRef>,
    pub relation: Option<Relation>,
    pub reference: Option<ObjectRef>,
}

impl ActionCommand {
    pub fn noop() -> Self {
        Self {
            verb: Verb::Noop,
            subject: None,
            relation: None,
            reference: None,
        }
    }

    pub fn unary(verb: Verb, subject: ObjectRef) -> Self {
        Self {
            verb,
            subject: Some(subject),
            relation: None,
            reference: None,
        }
    }

    pub fn relational(
        verb: Verb,
        subject: ObjectRef,
        relation: Relation,
        reference: ObjectRef,
    ) -> Self {
        Self {
            verb,
            subject: Some(subject),
            relation: Some(relation),
            reference: Some(reference),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.verb == Verb::Noop
    }
}

impl fmt::Display for ActionCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.verb)?;
        if let Some(s) = self.subject {
            write!(f, " {s}")?;
        }
        if let Some(r) = self.relation {
            write!(f, " {r}")?;
        }
        if let Some(r) = self.reference {
            write!(f, " {r}")?;
        }
        Ok(())
    }
}

/// Ground-truth state of one object.
///
/// Resting objects keep their extent inside the canvas; held and in-flight
/// objects may leave it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: u32,
    pub kind: ObjectKind,
    pub color: Color,
    /// Centre in scene units.
    pub position: (f64, f64),
    pub size: (f64, f64),
    pub z: i32,
    /// In-plane rotation in degrees.
    pub rotation: f64,
    pub openable: bool,
    pub open_fraction: f64,
    pub contained_in: Option<u32>,
    /// Support object when stacked or standing on an appliance.
    pub resting_on: Option<u32>,
}

impl ObjectSpec {
    pub fn reference(&self) -> ObjectRef {
        ObjectRef::new(self.kind, self.color)
    }

    /// Axis-aligned extent `(x0, y0, x1, y1)` of the unrotated footprint.
    pub fn extent(&self) -> (f64, f64, f64, f64) {
        let (x, y) = self.position;
        let (w, h) = self.size;
        (x - w / 2.0, y - h / 2.0, x + w / 2.0, y + h / 2.0)
    }

    pub fn top(&self) -> f64 {
        self.position.1 - self.size.1 / 2.0
    }

    pub fn inside_canvas(&self) -> bool {
        let (x0, y0, x1, y1) = self.extent();
        x0 >= 0.0 && y0 >= 0.0 && x1 <= CANVAS && y1 <= CANVAS
    }

    /// Whether the extents, grown by `gap`, intersect.
    pub fn overlaps(&self, other: &ObjectSpec, gap: f64) -> bool {
        extents_overlap(self.extent(), other.extent(), gap)
    }
}

pub(crate) fn extents_overlap(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64), gap: f64) -> bool {
    a.0 < b.2 + gap && b.0 < a.2 + gap && a.1 < b.3 + gap && b.1 < a.3 + gap
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub env_kind: EnvKind,
    /// `(H, W)` of the logical canvas.
    pub canvas: (u32, u32),
    pub objects: Vec<ObjectSpec>,
    /// Objects currently held by the agent. At most one outside concurrent episodes.
    pub held: Vec<u32>,
}

impl Scene {
    pub fn object(&self, id: u32) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn object_mut(&mut self, id: u32) -> Option<&mut ObjectSpec> {
        self.objects.iter_mut().find(|o| o.id == id)
    }

    pub fn find(&self, r: ObjectRef) -> Option<&ObjectSpec> {
        self.objects
            .iter()
            .find(|o| o.kind == r.kind && o.color == r.color)
    }

    pub fn is_held(&self, id: u32) -> bool {
        self.held.contains(&id)
    }

    pub fn max_z(&self) -> i32 {
        self.objects.iter().map(|o| o.z).max().unwrap_or(0)
    }

    /// Objects supported by `id` (stacked on it or standing on it).
    pub fn supported_by(&self, id: u32) -> impl Iterator<Item = &ObjectSpec> {
        self.objects
            .iter()
            .filter(move |o| o.resting_on == Some(id))
    }

    pub fn contents_of(&self, id: u32) -> impl Iterator<Item = &ObjectSpec> {
        self.objects
            .iter()
            .filter(move |o| o.contained_in == Some(id))
    }

    /// Checks the structural scene invariants.
    pub fn validate(&self) -> Result<(), String> {
        let mut ids: Vec<_> = self.objects.iter().map(|o| o.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate object id".into());
        }
        let mut zs: Vec<_> = self.objects.iter().map(|o| o.z).collect();
        zs.sort_unstable();
        if zs.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate z value".into());
        }
        let mut refs: Vec<_> = self.objects.iter().map(|o| o.reference()).collect();
        refs.sort_unstable();
        if refs.windows(2).any(|w| w[0] == w[1]) {
            return Err("duplicate (kind, color) combination".into());
        }
        for h in &self.held {
            if self.object(*h).is_none() {
                return Err(format!("held object {h} does not exist"));
            }
        }
        for o in &self.objects {
            if !o.openable && o.open_fraction != 0.0 {
                return Err(format!(
                    "object {} is not openable but has open_fraction",
                    o.id
                ));
            }
            if !(0.0..=1.0).contains(&o.open_fraction) {
                return Err(format!("object {} open_fraction out of range", o.id));
            }
            if let Some(c) = o.contained_in {
                match self.object(c) {
                    Some(container) if container.openable => {}
                    _ => return Err(format!("object {} contained in a non-container", o.id)),
                }
            }
            if !self.is_held(o.id) && !o.inside_canvas() {
                return Err(format!("object {} extends outside the canvas", o.id));
            }
        }
        Ok(())
    }
}

/// The object vocabulary an environment instance draws from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub kind: EnvKind,
    /// Movable kinds (blocks shapes, kitchen small objects).
    pub movable: Vec<ObjectKind>,
    /// Openable appliance kinds (kitchen only).
    pub openable: Vec<ObjectKind>,
    pub colors: Vec<Color>,
    /// When set, every scene contains an object of this kind and the first
    /// action of each generated episode acts on it.
    pub focus: Option<ObjectKind>,
}

impl EnvSpec {
    pub fn blocks() -> Self {
        Self {
            kind: EnvKind::Blocks,
            movable: vec![ObjectKind::Square, ObjectKind::Circle, ObjectKind::Triangle],
            openable: vec![],
            colors: vec![
                Color::Red,
                Color::Green,
                Color::Blue,
                Color::Yellow,
                Color::Cyan,
                Color::Magenta,
                Color::Orange,
            ],
            focus: None,
        }
    }

    pub fn kitchen() -> Self {
        Self {
            kind: EnvKind::Kitchen,
            movable: vec![ObjectKind::Bottle, ObjectKind::Kettle, ObjectKind::Pot],
            openable: vec![ObjectKind::Oven, ObjectKind::Fridge, ObjectKind::Dishwasher],
            colors: vec![Color::Red, Color::Green, Color::Blue, Color::Yellow],
            focus: None,
        }
    }

    pub fn default_for(kind: EnvKind) -> Self {
        match kind {
            EnvKind::Blocks => Self::blocks(),
            EnvKind::Kitchen => Self::kitchen(),
        }
    }

    /// Adds `kind` to the appropriate list and focuses episodes on it.
    pub fn with_new_kind(mut self, kind: ObjectKind) -> Self {
        let list = if kind.is_openable() {
            &mut self.openable
        } else {
            &mut self.movable
        };
        if !list.contains(&kind) {
            list.push(kind);
        }
        self.focus = Some(kind);
        self
    }

    pub fn all_kinds(&self) -> impl Iterator<Item = ObjectKind> + '_ {
        self.movable.iter().chain(&self.openable).copied()
    }
}
