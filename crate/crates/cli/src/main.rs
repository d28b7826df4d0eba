//! `oscface`: data preparation, channel ranking, detection, and evaluation.
//!
//! Exit codes: 0 success, 1 failure or partial failure, 2 invalid config.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{ConfigError, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "oscface", version, about = "Face detection with object-specific channel heatmaps")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Seed for data preparation and dataset sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Build the masked and classifier training sets with a manifest.
    PrepareData {
        /// JSONL box annotations.
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// Directory the image ids resolve against.
        #[arg(long)]
        images: Option<PathBuf>,
    },
    /// Score every feature channel inside and outside annotated faces.
    RankChannels {
        #[arg(long)]
        annotations: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Images sampled from the dataset (all by default).
        #[arg(long)]
        sample_size: Option<usize>,
    },
    /// Run the detector and write FDDB-format detections.
    Detect {
        /// Image files; their file stems become the image ids.
        paths: Vec<PathBuf>,
        /// Alternatively, take image ids from a JSONL annotation file...
        #[arg(long)]
        annotations: Option<PathBuf>,
        /// ...resolved against this directory.
        #[arg(long)]
        images: Option<PathBuf>,
        /// Also write each merged heatmap as a PNG.
        #[arg(long)]
        emit_heatmaps: bool,
        /// Override the object-specific channel.
        #[arg(long)]
        osc_channel: Option<usize>,
    },
    /// Score detections against ground truth.
    Evaluate {
        /// FDDB-format detection file.
        #[arg(long)]
        detections: PathBuf,
        /// Ground truth: `.jsonl` boxes or an FDDB ellipse list.
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, value_enum)]
        protocol: ProtocolArg,
        /// Region detections are matched as. Defaults to ellipse for
        /// ellipse ground truth and box otherwise.
        #[arg(long, value_enum)]
        detection_shape: Option<ShapeArg>,
        /// FDDB fold lists; one curve is written per fold.
        #[arg(long, num_args = 1..)]
        folds: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProtocolArg {
    FddbDiscrete,
    FddbContinuous,
    Pascal,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ShapeArg {
    Box,
    Ellipse,
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(j) = common.jobs {
        cfg.jobs = Some(j);
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = Some(o.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<commands::Status> {
    let mut cfg = resolve(&cli.common)?;
    let set = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
        if v.is_some() {
            *slot = v;
        }
    };
    match cli.command {
        Command::PrepareData { annotations, images } => {
            set(&mut cfg.annotations, annotations);
            set(&mut cfg.images_dir, images);
            prepare_pool(&cfg)?;
            commands::prepare::run(&cfg)
        }
        Command::RankChannels { annotations, images, sample_size } => {
            set(&mut cfg.annotations, annotations);
            set(&mut cfg.images_dir, images);
            if sample_size.is_some() {
                cfg.ranking.sample_size = sample_size;
            }
            prepare_pool(&cfg)?;
            commands::rank::run(&cfg)
        }
        Command::Detect { paths, annotations, images, emit_heatmaps, osc_channel } => {
            set(&mut cfg.annotations, annotations);
            set(&mut cfg.images_dir, images);
            if let Some(c) = osc_channel {
                cfg.detect.osc_channel = c;
            }
            prepare_pool(&cfg)?;
            commands::detect::run(&cfg, &paths, emit_heatmaps)
        }
        Command::Evaluate { detections, annotations, protocol, detection_shape, folds } => {
            cfg.annotations = Some(annotations);
            prepare_pool(&cfg)?;
            let args = commands::evaluate::EvalArgs { detections, protocol, detection_shape, folds };
            commands::evaluate::run(&cfg, &args)
        }
    }
}

fn prepare_pool(cfg: &RunConfig) -> anyhow::Result<()> {
    cfg.validate()?;
    if let Some(jobs) = cfg.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(commands::Status::Complete) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(1),
        Err(e) => {
            log::error!("{e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
