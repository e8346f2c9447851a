use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use acgn_core::eval::{self, ORACLE_TAU};
use acgn_core::session::SessionStore;
use acgn_core::train::{self, AdaptConfig, TrainConfig};
use acgn_core::{checkpoint, frames_tensor, tensor_frames, HiddenState, Model};
use acgn_service::wire::WireAction;
use acgn_sim::{
    generate_dataset, ActionCommand, Dataset, DatasetConfig, EnvKind, EnvSpec, Frame, ObjectKind,
    Simulator,
};
use anyhow::{ensure, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Parser)]
#[command(
    name = "acgn",
    version,
    about = "Action-conditional capsule video prediction"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulator dataset.
    GenData(GenData),
    /// Train a model from a JSON config.
    Train(Train),
    /// Extend a checkpoint's vocabulary and finetune it on a small dataset.
    Adapt(Adapt),
    /// Score checkpoints on a dataset split.
    Eval(Eval),
    /// Roll out a checkpoint from a simulator scene.
    Rollout(Rollout),
    /// Serve rollout sessions over HTTP.
    Serve(Serve),
}

#[derive(Args)]
struct GenData {
    #[arg(long, default_value = "blocks")]
    env: EnvKind,
    #[arg(long, default_value_t = 500)]
    episodes: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 64)]
    resolution: u32,
    /// Two-action concurrent episodes (evaluation only).
    #[arg(long)]
    concurrent: bool,
    /// Add an object kind to the environment and focus episodes on it.
    #[arg(long)]
    new_kind: Option<String>,
    #[arg(long)]
    overwrite: bool,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Adapt {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON `AdaptConfig`; its dataset supplies the new words.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Eval {
    #[arg(long = "ckpt", required = true)]
    ckpts: Vec<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "test")]
    split: String,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = ORACLE_TAU)]
    tau: f64,
}

#[derive(Args)]
struct Rollout {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value = "blocks")]
    env: EnvKind,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// JSON array of steps; each step is an action or an array of concurrent
    /// actions. Defaults to the seed's sampled episode script.
    #[arg(long)]
    actions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Also write a prediction-over-ground-truth comparison strip.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct Serve {
    #[arg(long)]
    ckpt: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory for persisted sessions.
    #[arg(long)]
    store: Option<PathBuf>,
}

fn gen_data(a: GenData) -> Result<()> {
    let mut spec = EnvSpec::default_for(a.env);
    if let Some(kind) = &a.new_kind {
        let kind =
            ObjectKind::from_word(kind).with_context(|| format!("unknown object kind `{kind}`"))?;
        spec = spec.with_new_kind(kind);
    }
    let config = DatasetConfig {
        spec,
        episodes: a.episodes,
        seed: a.seed,
        out: a.out.clone(),
        resolution: a.resolution,
        concurrent: a.concurrent,
        overwrite: a.overwrite,
    };
    let m = generate_dataset(&config)?;
    println!("wrote {} episodes to {}", m.episodes.len(), a.out.display());
    Ok(())
}

fn run_train(a: Train) -> Result<()> {
    let config = TrainConfig::from_file(&a.config)?;
    let outcome = train::fit(&config, &a.out)?;
    let last = outcome.records.last().map(|r| r.loss).unwrap_or(f64::NAN);
    println!(
        "final loss {last:.6}; checkpoint {}",
        outcome.checkpoint.display()
    );
    Ok(())
}

fn adapt(a: Adapt) -> Result<()> {
    let text = std::fs::read_to_string(&a.config)
        .with_context(|| format!("reading {}", a.config.display()))?;
    let config: AdaptConfig =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", a.config.display()))?;
    let (model, _) = checkpoint::load::<f32>(&a.ckpt)?;
    let ds = Dataset::open(&config.train.dataset)?;
    let new_words = model.vocab.missing_words(&ds.manifest.spec);
    ensure!(!new_words.is_empty(), "dataset introduces no new words");
    println!("new words: {}", serde_json::to_string(&new_words)?);
    let outcome = train::finetune_adaptation(&a.ckpt, &new_words, &config, &a.out)?;
    println!("checkpoint {}", outcome.checkpoint.display());
    Ok(())
}

fn run_eval(a: Eval) -> Result<()> {
    let (episodes, vocab) = eval::load_episodes(&a.data, &a.split)?;
    let mut models = Vec::new();
    for path in &a.ckpts {
        let (m, _) = checkpoint::load::<f32>(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        models.push((format!("{name} ({})", m.kind()), m));
    }
    let refs: Vec<(String, &Model<f32>)> = models.iter().map(|(n, m)| (n.clone(), m)).collect();
    let report = eval::evaluate(&refs, &episodes, &vocab, &a.split, a.tau)?;
    report.write(&a.out)?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Step {
    One(WireAction),
    Many(Vec<WireAction>),
}

fn read_script(path: &Path) -> Result<Vec<Vec<ActionCommand>>> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let steps: Vec<Step> =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    steps
        .into_iter()
        .map(|s| {
            let ws = match s {
                Step::One(w) => vec![w],
                Step::Many(ws) => ws,
            };
            ws.iter()
                .map(|w| w.to_command().map_err(anyhow::Error::msg))
                .collect()
        })
        .collect()
}

fn strip(rows: &[&[Frame]]) -> Frame {
    let (h, w) = (rows[0][0].height, rows[0][0].width);
    let cols = rows.iter().map(|r| r.len()).max().unwrap_or(0) as u32;
    let mut out = Frame::filled(h * rows.len() as u32, w * cols, [0, 0, 0]);
    for (r, row) in rows.iter().enumerate() {
        for (c, f) in row.iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    let dst = (((r as u32 * h + y) * out.width + c as u32 * w + x) * 3) as usize;
                    let src = ((y * w + x) * 3) as usize;
                    out.data[dst..dst + 3].copy_from_slice(&f.data[src..src + 3]);
                }
            }
        }
    }
    out
}

fn rollout(a: Rollout) -> Result<()> {
    let (model, _) = checkpoint::load::<f32>(&a.ckpt)?;
    ensure!(
        model.vocab.env == a.env,
        "checkpoint serves {}, not {}",
        model.vocab.env,
        a.env
    );
    let sim = Simulator::for_env(a.env, model.config.resolution.0 as u32);
    let script = match &a.actions {
        Some(p) => read_script(p)?,
        None => {
            let ep = sim.generate_episode(a.seed, None)?;
            ep.segments.iter().map(|s| s.commands.clone()).collect()
        }
    };
    let scene = sim.episode_scene(a.seed)?;
    let truth = sim
        .play(a.seed, &scene, &script)
        .context("actions are not valid in the seeded scene")?;
    let mut labels = Vec::new();
    for t in 1..truth.frames.len() {
        let slots = truth.labels[t]
            .iter()
            .map(|c| Ok(vec![model.vocab.encode(c)?]))
            .collect::<Result<Vec<_>>>()?;
        labels.push(slots);
    }
    let x0 = frames_tensor::<f32>(&[&truth.frames[0]]);
    let hidden = HiddenState::zeros(&model.config, 1, labels.first().map_or(1, |l| l.len()));
    let (preds, _) = model.rollout_from(&x0, &labels, hidden)?;
    let mut frames = vec![truth.frames[0].clone()];
    frames.extend(preds.iter().map(|p| tensor_frames(p).remove(0)));
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (k, f) in frames.iter().enumerate() {
        f.save_png(&a.out.join(format!("frame_{k:03}.png")))?;
    }
    if a.compare {
        strip(&[&frames, &truth.frames]).save_png(&a.out.join("comparison.png"))?;
    }
    println!(
        "{} frames to {}; mse {:.2}, ssim {:.4} against the simulator",
        frames.len(),
        a.out.display(),
        eval::mse_metric(&frames[1..], &truth.frames[1..])?,
        eval::ssim_metric(&frames[1..], &truth.frames[1..])?
    );
    Ok(())
}

fn serve(a: Serve) -> Result<()> {
    let (model, _) = checkpoint::load::<f32>(&a.ckpt)?;
    let digest = checkpoint::digest(&a.ckpt)?;
    let store = Arc::new(SessionStore::new(Arc::new(model), digest, a.store)?);
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .context("bad host or port")?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(acgn_service::serve(store, addr))?;
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => run_train(a),
        Command::Adapt(a) => adapt(a),
        Command::Eval(a) => run_eval(a),
        Command::Rollout(a) => rollout(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
