use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "sdcs", version, about = "Ki67 nucleus detection, classification and scoring")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// TOML configuration; every section is optional.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Fixed detection threshold.
    #[arg(long, global = true)]
    pub threshold: Option<f32>,
    /// Side of the tiles large images are cut into.
    #[arg(long, global = true, default_value_t = 2000)]
    pub tile_size: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Replace existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Run every stage on the calling thread.
    #[arg(long, global = true)]
    pub sequential: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Hypercolumns {
    /// Every configured block feeds the head.
    All,
    /// Only the deepest block feeds the head.
    Deepest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Integrated,
    Conv5,
    Handcrafted,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate train, validation and test tiles with annotations.
    Synth,
    /// Train the detection network on `<data>/train`.
    TrainSdcs {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        hypercolumns: Hypercolumns,
    },
    /// Train the center classifier on `<data>/train`.
    TrainCenter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sdcs: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        hypercolumns: Hypercolumns,
    },
    /// Sweep detection thresholds on `<data>/validation`.
    Calibrate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        sdcs: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        hypercolumns: Hypercolumns,
    },
    /// Detect nuclei in an image or a directory of images.
    Detect {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sdcs: PathBuf,
        /// Operating point written by `calibrate`.
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "all")]
        hypercolumns: Hypercolumns,
    },
    /// Assign a class to every detection.
    Classify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        sdcs: PathBuf,
        #[arg(long)]
        center: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        hypercolumns: Hypercolumns,
    },
    /// Train the handcrafted-feature SVM on `<data>/train` and `<data>/validation`.
    TrainSvm {
        #[arg(long)]
        data: PathBuf,
    },
    /// Segment and classify nuclei with a trained SVM.
    PredictSvm {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        svm: PathBuf,
    },
    /// Compare classified detections with annotations.
    Evaluate {
        #[arg(long)]
        detections: PathBuf,
        #[arg(long)]
        truth: PathBuf,
    },
    /// Ki67 index of every detection file.
    Score {
        #[arg(long)]
        detections: PathBuf,
    },
    /// Draw class-colored markers over the images.
    Overlay {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        detections: PathBuf,
    },
    /// Cut an image into tiles with a manifest.
    Tile {
        #[arg(long)]
        input: PathBuf,
    },
    /// Run the synthetic benchmark end to end.
    Benchmark {
        #[arg(long, value_enum, value_delimiter = ',', default_value = "integrated,conv5,handcrafted")]
        variants: Vec<VariantArg>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::TrainSdcs { .. } => "train-sdcs",
            Command::TrainCenter { .. } => "train-center",
            Command::Calibrate { .. } => "calibrate",
            Command::Detect { .. } => "detect",
            Command::Classify { .. } => "classify",
            Command::TrainSvm { .. } => "train-svm",
            Command::PredictSvm { .. } => "predict-svm",
            Command::Evaluate { .. } => "evaluate",
            Command::Score { .. } => "score",
            Command::Overlay { .. } => "overlay",
            Command::Tile { .. } => "tile",
            Command::Benchmark { .. } => "benchmark",
        }
    }
}
