use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "trendcause", version, about = "Influence discovery and influence-aware forecasting for style popularity series")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed every random choice derives from.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for library calls; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// JSON run configuration; flags take precedence over it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Base directory for relative input and output paths.
    #[arg(long, global = true, env = "TRENDCAUSE_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StyleKind {
    Gmm,
    Nmf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AxisArg {
    Unit,
    Style,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GrangerAxis {
    Unit,
    Style,
    /// Every unit against each style's cross-unit mean trend.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WeightingArg {
    Lag,
    DeltaMse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ThresholdArg {
    AboveMean,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    WorldRank,
    Direction,
}

/// Split flags shared by commands that produce trajectory sets.
#[derive(Debug, Args)]
pub struct SplitArgs {
    /// Validation points before the test window.
    #[arg(long)]
    pub val: Option<usize>,
    /// Points held out for testing at the end of every series.
    #[arg(long)]
    pub test: Option<usize>,
    /// Leave the series unsplit.
    #[arg(long, conflicts_with_all = ["val", "test"])]
    pub no_split: bool,
}

/// Where a tensor's entity and context tables come from.
#[derive(Debug, Args)]
pub struct TensorArgs {
    /// Influence tensor (JSON edge array).
    #[arg(long)]
    pub tensor: PathBuf,
    #[arg(long, value_enum, default_value_t = AxisArg::Unit)]
    pub axis: AxisArg,
    /// Trajectories supplying the full entity tables; without them only
    /// entities appearing in edges are known.
    #[arg(long)]
    pub input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate an event log (CSV or JSON lines) and rewrite it as sorted JSON lines.
    Ingest {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a style model over event attribute vectors.
    Styles {
        #[arg(long)]
        events: PathBuf,
        #[arg(long, short)]
        k: usize,
        #[arg(long, value_enum, default_value_t = StyleKind::Gmm)]
        kind: StyleKind,
        #[arg(long)]
        out: PathBuf,
    },
    /// Aggregate events into per-(style, unit) popularity trajectories.
    Trajectories {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Raw time units per bucket (604800 turns unix seconds into weeks).
        #[arg(long, default_value_t = 1)]
        bucket_width: i64,
        #[arg(long, default_value_t = 0)]
        epoch: i64,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace every series by its difference to one period earlier.
    Deseasonalize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        period: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discover influence relations with lagged Granger tests.
    Granger {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = GrangerAxis::Unit)]
        axis: GrangerAxis,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit models on the pre-test region and forecast the test window.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated model names, or `all`.
        #[arg(long, default_value = "all")]
        models: String,
        #[arg(long)]
        horizon: Option<usize>,
        /// Use this unit tensor instead of discovering one.
        #[arg(long)]
        unit_tensor: Option<PathBuf>,
        /// Use this style tensor instead of discovering one.
        #[arg(long)]
        style_tensor: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score forecasts against the test window and write the comparison table.
    Evaluate {
        #[arg(long)]
        input: PathBuf,
        /// Forecast CSV written by `forecast`.
        #[arg(long, conflicts_with = "models")]
        forecasts: Option<PathBuf>,
        /// Fit and forecast these models directly (comma-separated or `all`).
        #[arg(long)]
        models: Option<String>,
        #[arg(long)]
        horizon: Option<usize>,
        /// Report JSON.
        #[arg(long)]
        out: PathBuf,
        /// Comparison table CSV (`model,mae,mape`).
        #[arg(long)]
        table: PathBuf,
    },
    /// Exerted / received / net influence per entity.
    Rank {
        #[command(flatten)]
        tensor: TensorArgs,
        #[arg(long, value_enum, default_value_t = WeightingArg::Lag)]
        weighting: WeightingArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exerted influence over sliding windows.
    Dynamics {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = AxisArg::Unit)]
        axis: AxisArg,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Correlate influence with unit metadata or with a reference ranking.
    Correlate {
        #[command(flatten)]
        tensor: TensorArgs,
        /// Metadata CSV `id,value`.
        #[arg(long, required_unless_present = "reference")]
        metadata: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ModeArg::WorldRank)]
        mode: ModeArg,
        /// Reference ranking, one id per line, best first.
        #[arg(long, conflicts_with = "metadata")]
        reference: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate synthetic trajectories with planted influence.
    Synth {
        /// SynthConfig JSON; defaults apply without one.
        #[arg(long)]
        synth_config: Option<PathBuf>,
        #[command(flatten)]
        split: SplitArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Write the aggregated influence graph in DOT format.
    ExportGraph {
        #[command(flatten)]
        tensor: TensorArgs,
        #[arg(long, value_enum, default_value_t = ThresholdArg::AboveMean)]
        threshold: ThresholdArg,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Ingest { .. } => "ingest",
            Command::Styles { .. } => "styles",
            Command::Trajectories { .. } => "trajectories",
            Command::Deseasonalize { .. } => "deseasonalize",
            Command::Granger { .. } => "granger",
            Command::Forecast { .. } => "forecast",
            Command::Evaluate { .. } => "evaluate",
            Command::Rank { .. } => "rank",
            Command::Dynamics { .. } => "dynamics",
            Command::Correlate { .. } => "correlate",
            Command::Synth { .. } => "synth",
            Command::ExportGraph { .. } => "export-graph",
        }
    }
}
