//! Deterministic 2-D procedural environments that produce labelled action
//! videos.
//!
//! Two environments are provided. `blocks` is a table of coloured shapes that
//! are picked (optionally rotating) and put relative to one another.
//! `kitchen` has appliances along a wall with doors that open and close, and
//! small objects that are taken from and put on or into them.
//!
//! Everything is a pure function of its seed: scenes, episodes, renders and
//! dataset directories regenerate byte for byte.

mod blocks;
pub mod dataset;
pub mod episode;
pub mod error;
mod kitchen;
pub mod render;
pub mod types;
pub mod vocab;
pub mod world;

pub use blocks::placement;
pub use dataset::{
    generate_dataset, manifest_digest, Dataset, DatasetConfig, DatasetManifest, Splits,
};
pub use episode::{derive_seed, Episode, Segment};
pub use error::{Result, SimError};
pub use kitchen::{FLOOR_LINE, WALL_LINE};
pub use render::{render, Frame, PixelBox, Rendered, BACKGROUND};
pub use types::{
    ActionCommand, Color, EnvKind, EnvSpec, ObjectKind, ObjectRef, ObjectSpec, Relation, Scene,
    Verb, CANVAS,
};
pub use vocab::{ClauseEncoding, ClauseRole, Vocabulary, NONE};
pub use world::{Simulator, MAX_ATTEMPTS};
