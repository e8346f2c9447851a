use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::episode::{derive_seed, Episode, Segment};
use crate::error::{Result, SimError};
use crate::render::{Frame, PixelBox};
use crate::types::{ActionCommand, EnvKind, EnvSpec, Scene};
use crate::vocab::Vocabulary;
use crate::world::Simulator;

pub const DATASET_FORMAT: &str = "acgn-dataset/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub spec: EnvSpec,
    pub episodes: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub resolution: u32,
    #[serde(default)]
    pub concurrent: bool,
    #[serde(default)]
    pub overwrite: bool,
}

impl DatasetConfig {
    pub fn new(env: EnvKind, episodes: usize, seed: u64, out: impl Into<PathBuf>) -> Self {
        Self {
            spec: EnvSpec::default_for(env),
            episodes,
            seed,
            out: out.into(),
            resolution: 64,
            concurrent: false,
            overwrite: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Splits {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl Splits {
    /// 80/10/10 by episode index.
    pub fn by_index(n: usize) -> Self {
        let train = n * 8 / 10;
        let validation = n / 10;
        Self {
            train: (0..train).collect(),
            validation: (train..train + validation).collect(),
            test: (train + validation..n).collect(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&[usize]> {
        match name {
            "train" => Some(&self.train),
            "validation" | "val" => Some(&self.validation),
            "test" => Some(&self.test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeEntry {
    pub index: usize,
    pub dir: String,
    pub seed: u64,
    pub frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub env: EnvKind,
    pub seed: u64,
    pub resolution: u32,
    pub concurrent: bool,
    pub spec: EnvSpec,
    pub vocabulary: Vocabulary,
    pub episodes: Vec<EpisodeEntry>,
    pub splits: Splits,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameLabel {
    pub command: ActionCommand,
    /// Word per clause name.
    pub words: BTreeMap<String, String>,
    /// Local index per clause, in clause order.
    pub indices: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub file: String,
    pub labels: Vec<FrameLabel>,
    /// Object id to `[x_min, y_min, x_max, y_max]`.
    pub boxes: BTreeMap<u32, [u32; 4]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeManifest {
    pub env: EnvKind,
    pub seed: u64,
    pub scene_seed: u64,
    pub resolution: u32,
    pub objects: Scene,
    pub segments: Vec<Segment>,
    pub frames: Vec<FrameRecord>,
    /// Ground-truth scene per frame.
    pub scenes: Vec<Scene>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SimError + '_ {
    move |source| SimError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|source| SimError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(io_err(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    serde_json::from_slice(&bytes).map_err(|source| SimError::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn episode_dir_name(index: usize) -> String {
    format!("ep_{index:06}")
}

/// Writes one episode below `dir`.
pub fn write_episode(dir: &Path, ep: &Episode, vocab: &Vocabulary, resolution: u32) -> Result<()> {
    let frames_dir = dir.join("frames");
    std::fs::create_dir_all(&frames_dir).map_err(io_err(&frames_dir))?;
    let mut records = Vec::with_capacity(ep.len());
    for (t, frame) in ep.frames.iter().enumerate() {
        let file = format!("frames/{t:03}.png");
        frame.save_png(&dir.join(&file))?;
        let labels = ep.labels[t]
            .iter()
            .map(|cmd| {
                let enc = vocab.encode(cmd)?;
                let words = vocab
                    .clauses
                    .iter()
                    .zip(&enc.indices)
                    .map(|(c, &i)| (c.name.clone(), c.words[i].clone()))
                    .collect();
                Ok(FrameLabel {
                    command: *cmd,
                    words,
                    indices: enc.indices,
                })
            })
            .collect::<Result<_>>()?;
        let boxes = ep.boxes[t]
            .iter()
            .map(|(&id, b)| (id, [b.x_min, b.y_min, b.x_max, b.y_max]))
            .collect();
        records.push(FrameRecord {
            index: t,
            file,
            labels,
            boxes,
        });
    }
    let manifest = EpisodeManifest {
        env: ep.env_kind,
        seed: ep.seed,
        scene_seed: ep.scene_seed,
        resolution,
        objects: ep.initial.clone(),
        segments: ep.segments.clone(),
        frames: records,
        scenes: ep.scenes.clone(),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

/// Generates and writes a full dataset. Returns the root manifest.
pub fn generate_dataset(config: &DatasetConfig) -> Result<DatasetManifest> {
    let out = &config.out;
    if out.exists() {
        if !config.overwrite {
            return Err(SimError::OutputExists(out.clone()));
        }
        std::fs::remove_dir_all(out).map_err(io_err(out))?;
    }
    std::fs::create_dir_all(out.join("episodes")).map_err(io_err(out))?;
    let sim = Simulator::new(config.spec.clone(), config.resolution);
    let vocab = Vocabulary::for_spec(&config.spec);
    let mut entries = Vec::with_capacity(config.episodes);
    for index in 0..config.episodes {
        let seed = derive_seed(config.seed, index as u64);
        let ep = if config.concurrent {
            sim.generate_sampled_concurrent(seed)?
        } else {
            sim.generate_episode(seed, None)?
        };
        let dir = episode_dir_name(index);
        write_episode(
            &out.join("episodes").join(&dir),
            &ep,
            &vocab,
            config.resolution,
        )?;
        entries.push(EpisodeEntry {
            index,
            dir,
            seed,
            frames: ep.len(),
        });
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.to_string(),
        env: config.spec.kind,
        seed: config.seed,
        resolution: config.resolution,
        concurrent: config.concurrent,
        spec: config.spec.clone(),
        vocabulary: vocab,
        episodes: entries,
        splits: Splits::by_index(config.episodes),
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// SHA-256 of the root manifest file, hex encoded.
pub fn manifest_digest(root: &Path) -> Result<String> {
    let path = root.join("manifest.json");
    let bytes = std::fs::read(&path).map_err(io_err(&path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// A dataset opened from disk.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        let path = root.join("manifest.json");
        if !path.exists() {
            return Err(SimError::Dataset(format!(
                "no manifest.json under {}",
                root.display()
            )));
        }
        let manifest: DatasetManifest = read_json(&path)?;
        if manifest.format != DATASET_FORMAT {
            return Err(SimError::Dataset(format!(
                "unsupported format `{}`",
                manifest.format
            )));
        }
        Ok(Self { root, manifest })
    }

    pub fn len(&self) -> usize {
        self.manifest.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.episodes.is_empty()
    }

    pub fn split(&self, name: &str) -> Result<&[usize]> {
        self.manifest
            .splits
            .get(name)
            .ok_or_else(|| SimError::Dataset(format!("unknown split `{name}`")))
    }

    pub fn episode_manifest(&self, index: usize) -> Result<EpisodeManifest> {
        let entry = self
            .manifest
            .episodes
            .get(index)
            .ok_or_else(|| SimError::Dataset(format!("episode {index} out of range")))?;
        read_json(
            &self
                .root
                .join("episodes")
                .join(&entry.dir)
                .join("manifest.json"),
        )
    }

    pub fn load_episode(&self, index: usize) -> Result<Episode> {
        let m = self.episode_manifest(index)?;
        let dir = self
            .root
            .join("episodes")
            .join(&self.manifest.episodes[index].dir);
        let frames = m
            .frames
            .iter()
            .map(|r| Frame::load_png(&dir.join(&r.file)))
            .collect::<Result<Vec<_>>>()?;
        let labels = m
            .frames
            .iter()
            .map(|r| r.labels.iter().map(|l| l.command).collect())
            .collect();
        let boxes = m
            .frames
            .iter()
            .map(|r| {
                r.boxes
                    .iter()
                    .map(|(&id, b)| {
                        (
                            id,
                            PixelBox {
                                x_min: b[0],
                                y_min: b[1],
                                x_max: b[2],
                                y_max: b[3],
                            },
                        )
                    })
                    .collect()
            })
            .collect();
        Ok(Episode {
            env_kind: m.env,
            seed: m.seed,
            scene_seed: m.scene_seed,
            initial: m.objects,
            scenes: m.scenes,
            frames,
            labels,
            boxes,
            segments: m.segments,
        })
    }
}
