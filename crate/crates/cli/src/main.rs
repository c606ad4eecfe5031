//! `cadmatch`: generate synthetic scenes, train the region/view encoders,
//! build the CAD view index, retrieve and pose objects, evaluate with
//! ground-truth substitution ablations and export embeddings.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cadmatch", version, about = "Image-region to CAD retrieval and pose estimation on synthetic scenes")]
struct Cli {
    /// Optional key=value config file (must contain `config_version = 1`).
    /// Keys are the long flag names of the chosen command; flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic dataset (meshes, renders, scenes, annotations).
    GenData(GenDataArgs),
    /// Train the encoders and pose heads; writes checkpoint, bins and trace.
    Train(TrainArgs),
    /// Embed the canonical views of every CAD model into an index file.
    BuildIndex(IndexArgs),
    /// Retrieve and pose every region of one image.
    Retrieve(RetrieveArgs),
    /// Evaluate a split, optionally substituting ground-truth components.
    Eval(EvalArgs),
    /// Dump region and view embeddings in the binary export format.
    ExportEmbeddings(ExportArgs),
}

#[derive(Args)]
pub struct GenDataArgs {
    /// Output directory for the dataset.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub classes: Option<usize>,
    #[arg(long)]
    pub objects_per_class: Option<usize>,
    #[arg(long)]
    pub heldout_per_class: Option<usize>,
    #[arg(long)]
    pub train_images: Option<usize>,
    #[arg(long)]
    pub val_images: Option<usize>,
    #[arg(long)]
    pub unseen_images: Option<usize>,
    #[arg(long)]
    pub image_size: Option<usize>,
    #[arg(long)]
    pub max_objects: Option<usize>,
}

#[derive(Args)]
pub struct TrainArgs {
    /// Starting point for every other setting: `default` or `tuned`.
    #[arg(long)]
    pub recipe: Option<String>,
    /// Dataset directory written by `gen-data`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory for checkpoint.bin, bins.json, trace.csv and train_config.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Base learning rate.
    #[arg(long)]
    pub lr: Option<f64>,
    /// `sgd` or `adam`.
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub momentum: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub grad_clip: Option<f64>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub pool_grid: Option<usize>,
    /// Contrastive temperature.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Noise constant of the contrastive loss.
    #[arg(long)]
    pub c: Option<f64>,
    #[arg(long)]
    pub huber_delta: Option<f64>,
    #[arg(long)]
    pub rotation_bins: Option<usize>,
    /// Rotation regression gate, radians.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Regions per step.
    #[arg(long)]
    pub q: Option<usize>,
    #[arg(long)]
    pub p_h: Option<usize>,
    #[arg(long)]
    pub n_h: Option<usize>,
    #[arg(long)]
    pub repeat_threshold: Option<f64>,
    #[arg(long)]
    pub weight_embed: Option<f64>,
    #[arg(long)]
    pub weight_pose_class: Option<f64>,
    #[arg(long)]
    pub weight_pose_reg: Option<f64>,
    #[arg(long)]
    pub roi_jitter: Option<f64>,
    #[arg(long)]
    pub negatives_per_region: Option<usize>,
    /// Extra regions per step that train only the pose heads.
    #[arg(long)]
    pub pose_regions: Option<usize>,
    #[arg(long)]
    pub brightness_jitter: Option<f64>,
    /// Disable horizontal flips.
    #[arg(long)]
    pub no_flip: bool,
    /// Freeze the image stream (zero its gradients).
    #[arg(long)]
    pub freeze_image: bool,
    /// Freeze the view stream.
    #[arg(long)]
    pub freeze_view: bool,
}

#[derive(Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory written by `train` (or a checkpoint.bin file).
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args)]
pub struct IndexArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also index the held-out CAD models.
    #[arg(long)]
    pub include_heldout: bool,
}

#[derive(Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Image id to process.
    #[arg(long)]
    pub sample: Option<u32>,
    /// Index file from `build-index`; built on the fly when omitted.
    #[arg(long)]
    pub index: Option<PathBuf>,
    #[arg(long)]
    pub include_heldout: bool,
    /// Write the posed retrieved mesh of every region as OBJ under `--out`.
    #[arg(long)]
    pub emit_obj: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// `train`, `val` or `unseen`.
    #[arg(long)]
    pub split: Option<String>,
    /// Comma-separated subset of shape,rotation,translation,boxes, or none/all.
    #[arg(long)]
    pub ablation: Option<String>,
    #[arg(long)]
    pub index: Option<PathBuf>,
    /// Rebuild the index with held-out CAD models added (no retraining).
    #[arg(long)]
    pub include_heldout: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surface samples per mesh for the 3D metrics.
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Split whose regions are exported, with the canonical views of the objects they show.
    #[arg(long)]
    pub split: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = config::RunConfig::load(cli.config.as_deref()).and_then(|cfg| match cli.command {
        Command::GenData(a) => commands::gen_data(a, &cfg),
        Command::Train(a) => commands::train(a, &cfg),
        Command::BuildIndex(a) => commands::build_index(a, &cfg),
        Command::Retrieve(a) => commands::retrieve(a, &cfg),
        Command::Eval(a) => commands::eval(a, &cfg),
        Command::ExportEmbeddings(a) => commands::export_embeddings(a, &cfg),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
