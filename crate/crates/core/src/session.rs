//! Branching counterfactual rollout sessions.
//!
//! Each node stores the frames produced by the action on its incoming edge
//! and a snapshot of the recurrent state after them, so acting from any node
//! never replays its ancestors.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use acgn_sim::{ActionCommand, EnvKind, Frame, Scene, Simulator};
use acgn_tensor::Tensor;
use safetensors::{Dtype, SafeTensors};
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{frames_tensor, tensor_frames, HiddenState, Model};

pub const MAX_NODES: usize = 64;
pub const MAX_SESSIONS: usize = 128;

#[derive(Clone, Debug, PartialEq)]
pub struct SessionNode {
    pub id: u32,
    pub parent: Option<u32>,
    /// Commands on the incoming edge; empty for the root.
    pub actions: Vec<ActionCommand>,
    /// The root holds the initial frame; other nodes their predicted frames.
    pub frames: Vec<Frame>,
    pub hidden: HiddenState<f32>,
    /// Ground-truth scene after the edge, for simulator-seeded sessions.
    pub scene: Option<Scene>,
}

impl SessionNode {
    pub fn last_frame(&self) -> &Frame {
        self.frames.last().expect("nodes hold at least one frame")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Session {
    pub id: String,
    pub env: EnvKind,
    pub seed: Option<u64>,
    pub checkpoint_digest: String,
    pub created_unix: u64,
    pub nodes: BTreeMap<u32, SessionNode>,
}

/// Tree view without frame or hidden-state payloads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSummary {
    pub session_id: String,
    pub env: EnvKind,
    pub checkpoint_digest: String,
    pub root: u32,
    pub nodes: Vec<NodeSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub node_id: u32,
    pub parent: Option<u32>,
    pub actions: Vec<ActionCommand>,
    pub children: Vec<u32>,
    /// Paths of the node's frames relative to the API root.
    pub frames: Vec<String>,
}

impl Session {
    pub fn node(&self, id: u32) -> Result<&SessionNode> {
        self.nodes.get(&id).ok_or_else(|| CoreError::UnknownNode {
            session: self.id.clone(),
            node: id,
        })
    }

    pub fn tree(&self) -> TreeSummary {
        let mut children: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
        for n in self.nodes.values() {
            if let Some(p) = n.parent {
                children.entry(p).or_default().push(n.id);
            }
        }
        TreeSummary {
            session_id: self.id.clone(),
            env: self.env,
            checkpoint_digest: self.checkpoint_digest.clone(),
            root: 0,
            nodes: self
                .nodes
                .values()
                .map(|n| NodeSummary {
                    node_id: n.id,
                    parent: n.parent,
                    actions: n.actions.clone(),
                    children: children.remove(&n.id).unwrap_or_default(),
                    frames: (0..n.frames.len())
                        .map(|k| format!("/v1/sessions/{}/nodes/{}/frames/{k}", self.id, n.id))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Valid actions at a node; empty when the scene is unknown.
    pub fn valid_actions(&self, sim: &Simulator, node: u32) -> Result<Vec<ActionCommand>> {
        Ok(self
            .node(node)?
            .scene
            .as_ref()
            .map(|s| sim.enumerate_valid_actions(s))
            .unwrap_or_default())
    }
}

/// Shared model, simulator and the set of live sessions.
pub struct SessionStore {
    model: Arc<Model<f32>>,
    digest: String,
    sim: Simulator,
    sessions: Mutex<HashMap<String, Arc<Mutex<Session>>>>,
    next_id: Mutex<u64>,
    pub max_sessions: usize,
    dir: Option<PathBuf>,
}

fn now_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl SessionStore {
    /// A store for `model`. With `dir`, sessions are written after every
    /// change and sessions already under it are loaded.
    pub fn new(model: Arc<Model<f32>>, digest: String, dir: Option<PathBuf>) -> Result<Self> {
        let (h, w) = model.config.resolution;
        if h != w {
            return Err(CoreError::Config(
                "sessions need a square model resolution".into(),
            ));
        }
        let sim = Simulator::for_env(model.vocab.env, h as u32);
        let store = Self {
            model,
            digest,
            sim,
            sessions: Mutex::new(HashMap::new()),
            next_id: Mutex::new(0),
            max_sessions: MAX_SESSIONS,
            dir,
        };
        if let Some(dir) = &store.dir {
            std::fs::create_dir_all(dir).map_err(CoreError::io(dir))?;
            let mut max_seen = 0;
            for entry in std::fs::read_dir(dir).map_err(CoreError::io(dir))? {
                let path = entry.map_err(CoreError::io(dir))?.path();
                if path.join("session.json").exists() {
                    let s = load_session(&path)?;
                    if s.checkpoint_digest != store.digest {
                        tracing::warn!(session = %s.id, "skipping session recorded with another checkpoint");
                        continue;
                    }
                    if let Some(n) = s.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
                        max_seen = max_seen.max(n + 1);
                    }
                    store
                        .sessions
                        .lock()
                        .expect("lock")
                        .insert(s.id.clone(), Arc::new(Mutex::new(s)));
                }
            }
            *store.next_id.lock().expect("lock") = max_seen;
        }
        Ok(store)
    }

    pub fn model(&self) -> &Model<f32> {
        &self.model
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Starts a session from a simulator seed or a raw frame.
    pub fn create(
        &self,
        env: EnvKind,
        seed: Option<u64>,
        frame: Option<Frame>,
    ) -> Result<Arc<Mutex<Session>>> {
        if env != self.model.vocab.env {
            return Err(CoreError::InvalidAction(format!(
                "model serves {}, not {env}",
                self.model.vocab.env
            )));
        }
        let (frame, scene) = match (seed, frame) {
            (Some(seed), None) => {
                let scene = self.sim.episode_scene(seed)?;
                (self.sim.render(&scene).frame, Some(scene))
            }
            (None, Some(f)) => {
                let (h, w) = self.model.config.resolution;
                if f.height as usize != h || f.width as usize != w {
                    return Err(CoreError::MalformedFrame(format!(
                        "{}x{} frame, model expects {h}x{w}",
                        f.width, f.height
                    )));
                }
                (f, None)
            }
            _ => {
                return Err(CoreError::InvalidAction(
                    "give exactly one of seed and frame".into(),
                ))
            }
        };
        let mut sessions = self.sessions.lock().expect("lock");
        if sessions.len() >= self.max_sessions {
            return Err(CoreError::Capacity(self.max_sessions));
        }
        let id = {
            let mut n = self.next_id.lock().expect("lock");
            *n += 1;
            format!("s{:06}", *n - 1)
        };
        let root = SessionNode {
            id: 0,
            parent: None,
            actions: Vec::new(),
            frames: vec![frame],
            hidden: HiddenState::zeros(&self.model.config, 1, 1),
            scene,
        };
        let session = Session {
            id: id.clone(),
            env,
            seed,
            checkpoint_digest: self.digest.clone(),
            created_unix: now_unix(),
            nodes: BTreeMap::from([(0, root)]),
        };
        self.persist(&session)?;
        let handle = Arc::new(Mutex::new(session));
        sessions.insert(id, Arc::clone(&handle));
        Ok(handle)
    }

    pub fn get(&self, id: &str) -> Result<Arc<Mutex<Session>>> {
        self.sessions
            .lock()
            .expect("lock")
            .get(id)
            .cloned()
            .ok_or_else(|| CoreError::UnknownSession(id.to_string()))
    }

    /// Runs `actions` for one segment from `node` and appends the child.
    pub fn act(&self, session: &mut Session, node: u32, actions: &[ActionCommand]) -> Result<u32> {
        let child = expand(&self.model, &self.sim, session, node, actions)?;
        self.persist(session)?;
        Ok(child)
    }

    fn persist(&self, session: &Session) -> Result<()> {
        match &self.dir {
            Some(dir) => save_session(session, &dir.join(&session.id)),
            None => Ok(()),
        }
    }
}

/// Computes the child of `node` under `actions` without touching the parent.
pub fn expand(
    model: &Model<f32>,
    sim: &Simulator,
    session: &mut Session,
    node: u32,
    actions: &[ActionCommand],
) -> Result<u32> {
    if session.nodes.len() >= MAX_NODES {
        return Err(CoreError::NodeLimit(session.id.clone()));
    }
    let parent = session.node(node)?;
    let max = match model.kind() {
        crate::config::ModelKind::Acgn => model.config.a_max,
        crate::config::ModelKind::Concat => 1,
    };
    if actions.is_empty() || actions.len() > max {
        return Err(CoreError::Slots {
            expected: format!("1 to {max}"),
            got: actions.len(),
        });
    }
    let encodings = actions
        .iter()
        .map(|a| {
            model
                .vocab
                .encode(a)
                .map_err(|e| CoreError::InvalidAction(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    let scene = match &parent.scene {
        Some(scene) => {
            let valid = sim.enumerate_valid_actions(scene);
            if let Some(a) = actions.iter().find(|a| !valid.contains(a)) {
                return Err(CoreError::InvalidAction(format!(
                    "`{a}` is not valid in this scene"
                )));
            }
            let scenes = sim
                .step_concurrent(scene, actions)
                .map_err(|e| CoreError::InvalidAction(e.to_string()))?;
            Some(scenes.last().expect("non-empty segment").clone())
        }
        None => None,
    };
    let steps = sim.t_act();
    let labels: Vec<Vec<Vec<_>>> = vec![encodings.iter().map(|e| vec![e.clone()]).collect(); steps];
    let x0 = frames_tensor::<f32>(&[parent.last_frame()]);
    let hidden = parent.hidden.resized(actions.len());
    let (preds, hidden) = model.rollout_from(&x0, &labels, hidden)?;
    let frames = preds.iter().map(|p| tensor_frames(p).remove(0)).collect();
    let id = session.nodes.keys().next_back().map_or(0, |k| k + 1);
    session.nodes.insert(
        id,
        SessionNode {
            id,
            parent: Some(node),
            actions: actions.to_vec(),
            frames,
            hidden,
            scene,
        },
    );
    Ok(id)
}

#[derive(Serialize, Deserialize)]
struct StoredNode {
    id: u32,
    parent: Option<u32>,
    actions: Vec<ActionCommand>,
    frames: Vec<String>,
    hidden: String,
    scene: Option<Scene>,
}

#[derive(Serialize, Deserialize)]
struct StoredSession {
    id: String,
    env: EnvKind,
    seed: Option<u64>,
    checkpoint_digest: String,
    created_unix: u64,
    nodes: Vec<StoredNode>,
}

fn hidden_bytes(h: &HiddenState<f32>) -> Result<Vec<u8>> {
    let mut arrays = Vec::new();
    for (s, slot) in h.slots.iter().enumerate() {
        for (l, (hh, cc)) in slot.iter().enumerate() {
            for (tag, t) in [("h", hh), ("c", cc)] {
                let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                arrays.push((
                    format!("slot{s:02}.layer{l:02}.{tag}"),
                    t.shape().to_vec(),
                    bytes,
                ));
            }
        }
    }
    let views = arrays
        .iter()
        .map(|(n, shape, b)| {
            safetensors::tensor::TensorView::new(Dtype::F32, shape.clone(), b)
                .map(|v| (n.clone(), v))
                .map_err(|e| CoreError::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    safetensors::serialize(views, None).map_err(|e| CoreError::Checkpoint(e.to_string()))
}

fn hidden_from_bytes(bytes: &[u8]) -> Result<HiddenState<f32>> {
    let st = SafeTensors::deserialize(bytes).map_err(|e| CoreError::Checkpoint(e.to_string()))?;
    let mut names: Vec<String> = st.names().into_iter().map(String::from).collect();
    names.sort();
    let mut slots: BTreeMap<usize, BTreeMap<usize, [Option<Arc<Tensor<f32>>>; 2]>> =
        BTreeMap::new();
    for name in names {
        let view = st
            .tensor(&name)
            .map_err(|e| CoreError::Checkpoint(e.to_string()))?;
        let parse = || -> Option<(usize, usize, usize)> {
            let mut it = name.split('.');
            let s = it.next()?.strip_prefix("slot")?.parse().ok()?;
            let l = it.next()?.strip_prefix("layer")?.parse().ok()?;
            let k = match it.next()? {
                "h" => 0,
                "c" => 1,
                _ => return None,
            };
            Some((s, l, k))
        };
        let (s, l, k) = parse()
            .ok_or_else(|| CoreError::Checkpoint(format!("unexpected hidden array `{name}`")))?;
        let data = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        slots.entry(s).or_default().entry(l).or_default()[k] =
            Some(Arc::new(Tensor::new(view.shape().to_vec(), data)?));
    }
    let slots = slots
        .into_values()
        .map(|layers| {
            layers
                .into_values()
                .map(|[h, c]| match (h, c) {
                    (Some(h), Some(c)) => Ok((h, c)),
                    _ => Err(CoreError::Checkpoint("hidden layer missing h or c".into())),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HiddenState { slots })
}

/// Writes `session` as `session.json` plus PNG frames and hidden snapshots.
pub fn save_session(session: &Session, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(CoreError::io(dir))?;
    let mut nodes = Vec::with_capacity(session.nodes.len());
    for n in session.nodes.values() {
        let mut frames = Vec::with_capacity(n.frames.len());
        for (k, f) in n.frames.iter().enumerate() {
            let name = format!("node{:03}_frame{k:03}.png", n.id);
            let path = dir.join(&name);
            if !path.exists() {
                f.save_png(&path)?;
            }
            frames.push(name);
        }
        let hidden = format!("node{:03}_hidden.safetensors", n.id);
        let path = dir.join(&hidden);
        if !path.exists() {
            std::fs::write(&path, hidden_bytes(&n.hidden)?).map_err(CoreError::io(&path))?;
        }
        nodes.push(StoredNode {
            id: n.id,
            parent: n.parent,
            actions: n.actions.clone(),
            frames,
            hidden,
            scene: n.scene.clone(),
        });
    }
    let stored = StoredSession {
        id: session.id.clone(),
        env: session.env,
        seed: session.seed,
        checkpoint_digest: session.checkpoint_digest.clone(),
        created_unix: session.created_unix,
        nodes,
    };
    let path = dir.join("session.json");
    let tmp = dir.join("session.json.tmp");
    std::fs::write(
        &tmp,
        serde_json::to_string_pretty(&stored).expect("session serializes"),
    )
    .map_err(CoreError::io(&tmp))?;
    std::fs::rename(&tmp, &path).map_err(CoreError::io(&path))
}

pub fn load_session(dir: &Path) -> Result<Session> {
    let path = dir.join("session.json");
    let text = std::fs::read_to_string(&path).map_err(CoreError::io(&path))?;
    let stored: StoredSession = serde_json::from_str(&text).map_err(CoreError::json(&path))?;
    let mut nodes = BTreeMap::new();
    for n in stored.nodes {
        let frames = n
            .frames
            .iter()
            .map(|f| Frame::load_png(&dir.join(f)))
            .collect::<acgn_sim::Result<Vec<_>>>()?;
        let hp = dir.join(&n.hidden);
        let hidden = hidden_from_bytes(&std::fs::read(&hp).map_err(CoreError::io(&hp))?)?;
        nodes.insert(
            n.id,
            SessionNode {
                id: n.id,
                parent: n.parent,
                actions: n.actions,
                frames,
                hidden,
                scene: n.scene,
            },
        );
    }
    Ok(Session {
        id: stored.id,
        env: stored.env,
        seed: stored.seed,
        checkpoint_digest: stored.checkpoint_digest,
        created_unix: stored.created_unix,
        nodes,
    })
}
