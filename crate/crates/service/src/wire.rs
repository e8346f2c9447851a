//! JSON shapes exchanged over HTTP.

use acgn_core::session::TreeSummary;
use acgn_sim::{ActionCommand, Color, Frame, ObjectKind, ObjectRef, Relation, Verb};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

/// An action as words: objects are written `"<color> <kind>"`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireAction {
    pub verb: String,
    #[serde(default)]
    pub subject: Option<String>,
    #[serde(default)]
    pub relation: Option<String>,
    #[serde(default)]
    pub reference: Option<String>,
}

fn object_words(o: ObjectRef) -> String {
    format!("{} {}", o.color.word(), o.kind.word())
}

fn parse_object(s: &str) -> Result<ObjectRef, String> {
    let mut it = s.split_whitespace();
    match (it.next(), it.next(), it.next()) {
        (Some(c), Some(k), None) => {
            let color = Color::from_word(c).ok_or_else(|| format!("unknown color `{c}`"))?;
            let kind =
                ObjectKind::from_word(k).ok_or_else(|| format!("unknown object kind `{k}`"))?;
            Ok(ObjectRef::new(kind, color))
        }
        _ => Err(format!("object `{s}` is not of the form `<color> <kind>`")),
    }
}

impl From<&ActionCommand> for WireAction {
    fn from(c: &ActionCommand) -> Self {
        Self {
            verb: c.verb.word().to_string(),
            subject: c.subject.map(object_words),
            relation: c.relation.map(|r| r.word().to_string()),
            reference: c.reference.map(object_words),
        }
    }
}

impl WireAction {
    pub fn to_command(&self) -> Result<ActionCommand, String> {
        Ok(ActionCommand {
            verb: Verb::from_word(&self.verb)
                .ok_or_else(|| format!("unknown verb `{}`", self.verb))?,
            subject: self.subject.as_deref().map(parse_object).transpose()?,
            relation: self
                .relation
                .as_deref()
                .map(|r| Relation::from_word(r).ok_or_else(|| format!("unknown relation `{r}`")))
                .transpose()?,
            reference: self.reference.as_deref().map(parse_object).transpose()?,
        })
    }
}

pub fn wire_actions(cmds: &[ActionCommand]) -> Vec<WireAction> {
    cmds.iter().map(WireAction::from).collect()
}

pub fn frame_b64(f: &Frame) -> String {
    STANDARD.encode(f.to_png_bytes().expect("in-memory PNG encoding"))
}

pub fn frame_from_b64(s: &str) -> Result<Frame, String> {
    let bytes = STANDARD
        .decode(s.trim())
        .map_err(|e| format!("invalid base64: {e}"))?;
    Frame::from_png_bytes(&bytes).map_err(|e| e.to_string())
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model: String,
    pub env: String,
    pub checkpoint: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreateSession {
    pub env: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub frame_b64: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub root_node: u32,
    pub frame_b64: String,
    pub valid_actions: Vec<WireAction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActRequest {
    pub actions: Vec<WireAction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ActResponse {
    pub node_id: u32,
    pub frames_b64: Vec<String>,
    pub valid_actions: Vec<WireAction>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NodeView {
    pub node_id: u32,
    pub parent: Option<u32>,
    pub actions: Vec<WireAction>,
    pub frames_b64: Vec<String>,
    pub valid_actions: Vec<WireAction>,
}

pub type Tree = TreeSummary;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: String,
    pub message: String,
}
