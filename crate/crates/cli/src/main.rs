//! `seistex` command-line tool.
//!
//! Exit codes: 0 on success, 2 for usage errors (bad flags or parameter
//! values), 1 for runtime failures (unreadable inputs, degenerate corpora).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use seistex::descriptor::{AggregateSpan, DistanceKind, Method, DEFAULT_BINS};
use seistex::lri::ThresholdMode;
use seistex::pipeline::PipelineConfig;
use seistex::retrieval::Metric;

#[derive(Debug, Parser)]
#[command(name = "seistex", version, about = "Seismic texture attributes and retrieval evaluation")]
pub struct Cli {
    /// Worker threads; 0 uses one per CPU.
    #[arg(long, global = true, env = "SEISTEX_WORKERS", default_value_t = 0)]
    pub workers: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labelled synthetic dataset of PNG images and a manifest.
    Synth(SynthArgs),
    /// Compute descriptors for every image of a manifest.
    Extract(ExtractArgs),
    /// Write leave-one-out rankings as CSV.
    Retrieve(RetrieveArgs),
    /// Evaluate retrieval metrics and write a JSON report.
    Evaluate(EvaluateArgs),
    /// Print the SeiSIM score of two images.
    Seisim(SeisimArgs),
    /// Time the comparison of one image pair per method.
    BenchTime(BenchArgs),
}

/// Shape and seed of a synthetic corpus.
#[derive(Debug, Clone, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 4)]
    pub classes: usize,
    #[arg(long, default_value_t = 25)]
    pub per_class: usize,
    /// Image size as HEIGHTxWIDTH.
    #[arg(long, default_value = "150x300", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// Descriptor parameters shared by the extraction commands.
#[derive(Debug, Clone, Args)]
pub struct Tuning {
    /// Bins per coefficient histogram (SP and CT).
    #[arg(long, default_value_t = DEFAULT_BINS)]
    pub bins: usize,
    /// Steerable pyramid scales.
    #[arg(long, default_value_t = 4)]
    pub sp_scales: usize,
    /// Steerable pyramid orientations.
    #[arg(long, default_value_t = 8)]
    pub sp_orientations: usize,
    /// Use an isotropic band for the finest curvelet scale.
    #[arg(long)]
    pub ct_finest_wavelet: bool,
    /// CLBP neighbour count P.
    #[arg(long, default_value_t = 20)]
    pub clbp_neighbors: usize,
    /// CLBP radius R.
    #[arg(long, default_value_t = 3.0)]
    pub clbp_radius: f64,
    /// LRI range K.
    #[arg(long, default_value_t = 3)]
    pub lri_range: usize,
    /// Estimate the LRI threshold from a window of this radius instead of the whole image.
    #[arg(long)]
    pub lri_local_sigma: Option<usize>,
    /// Leave the last histogram out of the overall distance.
    #[arg(long)]
    pub drop_last: bool,
    /// Leave the residual subbands out of STSIM-1.
    #[arg(long)]
    pub exclude_residuals: bool,
    /// Skip zero-mean, unit-variance normalization.
    #[arg(long)]
    pub no_normalize: bool,
}

impl Tuning {
    pub fn config(&self) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            bins: self.bins,
            normalize: !self.no_normalize,
            ..PipelineConfig::default()
        };
        if self.drop_last {
            cfg.span = AggregateSpan::DropLast;
        }
        cfg.steerable.scales = self.sp_scales;
        cfg.steerable.orientations = self.sp_orientations;
        cfg.curvelet.finest_as_wavelet = self.ct_finest_wavelet;
        cfg.clbp.neighbors = self.clbp_neighbors;
        cfg.clbp.radius = self.clbp_radius;
        cfg.lri.range = self.lri_range;
        if let Some(r) = self.lri_local_sigma {
            cfg.lri.threshold = ThresholdMode::LocalHalfSigma(r);
        }
        cfg.seisim.pyramid = cfg.steerable;
        cfg.seisim.include_residuals = !self.exclude_residuals;
        cfg
    }
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub method: Method,
    /// Reuse a bin layout instead of calibrating one.
    #[arg(long)]
    pub layout: Option<PathBuf>,
    /// Also write the calibrated layout here.
    #[arg(long)]
    pub layout_out: Option<PathBuf>,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Descriptor file to write.
    #[arg(long)]
    pub out: PathBuf,
}

/// Where a command gets its corpus from.
#[derive(Debug, Args)]
pub struct Source {
    /// Manifest CSV with a `path,label` header.
    #[arg(long, conflicts_with = "descriptors")]
    pub manifest: Option<PathBuf>,
    /// Descriptor file written by `extract`.
    #[arg(long)]
    pub descriptors: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long)]
    pub method: Option<Method>,
    #[arg(long, default_value = "scd")]
    pub distance: DistanceKind,
    /// Only write the ranking of this image id.
    #[arg(long)]
    pub query: Option<usize>,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Rankings CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Without a manifest or descriptor file a synthetic corpus is generated.
    #[command(flatten)]
    pub source: Source,
    #[command(flatten)]
    pub corpus: CorpusArgs,
    /// Methods to evaluate, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    pub method: Vec<Method>,
    #[arg(long, default_value = "scd")]
    pub distance: DistanceKind,
    /// Metrics to report, comma separated.
    #[arg(long, value_delimiter = ',', value_parser = parse_metric, default_value = "p_at_20,p_at_50,map,ra,auc")]
    pub metrics: Vec<Metric>,
    /// Also write per-query ROC vertices to this CSV.
    #[arg(long)]
    pub roc: Option<PathBuf>,
    /// Add `seconds_per_pair`, timed on the first two images over this many repetitions.
    #[arg(long)]
    pub time_reps: Option<usize>,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeisimArgs {
    pub first: PathBuf,
    pub second: PathBuf,
    #[command(flatten)]
    pub tuning: Tuning,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// First image of the pair; a synthetic pair is generated when omitted.
    #[arg(long, requires = "second")]
    pub first: Option<PathBuf>,
    #[arg(long, requires = "first")]
    pub second: Option<PathBuf>,
    #[arg(long, default_value = "150x300", value_parser = parse_size)]
    pub size: (usize, usize),
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', default_values_t = Method::ALL)]
    pub method: Vec<Method>,
    #[arg(long, default_value = "scd")]
    pub distance: DistanceKind,
    #[arg(long, default_value_t = 5)]
    pub reps: usize,
    #[command(flatten)]
    pub tuning: Tuning,
    /// Timing CSV; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HEIGHTxWIDTH, got {s:?}"))?;
    let h = h.trim().parse().map_err(|_| format!("bad height in {s:?}"))?;
    let w = w.trim().parse().map_err(|_| format!("bad width in {s:?}"))?;
    Ok((h, w))
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    s.parse().map_err(|e: seistex::Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            return ExitCode::from(1);
        }
    };
    match pool.install(|| commands::run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
