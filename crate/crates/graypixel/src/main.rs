use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use graypixel::cli::{
    cmd_correct, cmd_estimate, cmd_evaluate, cmd_sweep, cmd_synth, render_estimate_csv,
    render_evaluate_csv, render_json, render_sweep_csv, Method, ReportFormat, RunConfig,
    SweepGrid,
};
use graypixel::estimator::{ClusterKind, MsgpParams};
use graypixel::modeseek::DistanceKind;

/// Training-free color constancy: gray pixel detection with mean-shift
/// purification, batch evaluation and parameter sweeps.
#[derive(Parser)]
#[command(name = "graypixel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Msgp,
    GpTheta,
    GpSigma,
    GrayWorld,
    WhitePatch,
    ShadesOfGray,
    GrayEdge1,
    GrayEdge2,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Msgp => Method::Msgp,
            MethodArg::GpTheta => Method::GpTheta,
            MethodArg::GpSigma => Method::GpSigma,
            MethodArg::GrayWorld => Method::GrayWorld,
            MethodArg::WhitePatch => Method::WhitePatch,
            MethodArg::ShadesOfGray => Method::ShadesOfGray,
            MethodArg::GrayEdge1 => Method::GrayEdge1,
            MethodArg::GrayEdge2 => Method::GrayEdge2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum DistanceArg {
    Hybrid,
    Angle,
}

#[derive(Clone, Copy, ValueEnum)]
enum ClusterArg {
    Meanshift,
    Kmeans,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

#[derive(Args)]
struct CommonArgs {
    /// Dataset manifest (CSV or JSON).
    #[arg(long)]
    manifest: PathBuf,
    /// Estimation method.
    #[arg(long, value_enum, default_value = "msgp")]
    method: MethodArg,
    /// Percentage of valid pixels selected as gray candidates.
    #[arg(long, default_value_t = 0.1)]
    n_percent: f64,
    /// Mean-shift bandwidth.
    #[arg(long, default_value_t = 1e-3)]
    bandwidth: f64,
    /// Clustering distance.
    #[arg(long, value_enum, default_value = "hybrid")]
    distance: DistanceArg,
    /// Clustering algorithm.
    #[arg(long, value_enum, default_value = "meanshift")]
    cluster: ClusterArg,
    /// Cluster count for k-means.
    #[arg(long, default_value_t = 2)]
    k: usize,
    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Log-contrast kernel size (odd).
    #[arg(long, default_value_t = 5)]
    log_size: u32,
    /// Log-contrast kernel sigma.
    #[arg(long, default_value_t = 0.5)]
    log_sigma: f64,
    /// Log-transform guard.
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    /// Minimum contrast L2 norm for a pixel to be scored.
    #[arg(long, default_value_t = 1e-4)]
    contrast_floor: f64,
    /// Grayness local-averaging window (odd).
    #[arg(long, default_value_t = 7)]
    smooth_window: u32,
    /// Output directory (reports, corrected images).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report format.
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Worker count for batch processing.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Include per-image wall-clock timings in reports.
    #[arg(long)]
    timings: bool,
}

impl CommonArgs {
    fn into_config(self) -> RunConfig {
        RunConfig {
            manifest: self.manifest,
            method: self.method.into(),
            params: MsgpParams {
                n_percent: self.n_percent,
                bandwidth: self.bandwidth,
                log_size: self.log_size,
                log_sigma: self.log_sigma,
                epsilon: self.epsilon,
                contrast_floor: self.contrast_floor,
                smooth_window: self.smooth_window,
                distance: match self.distance {
                    DistanceArg::Hybrid => DistanceKind::Hybrid,
                    DistanceArg::Angle => DistanceKind::AngleOnly,
                },
                cluster: match self.cluster {
                    ClusterArg::Meanshift => ClusterKind::MeanShift,
                    ClusterArg::Kmeans => ClusterKind::KMeans,
                },
                k: self.k,
                seed: self.seed,
                ..MsgpParams::default()
            },
            out_dir: self.out,
            format: match self.format {
                FormatArg::Csv => ReportFormat::Csv,
                FormatArg::Json => ReportFormat::Json,
            },
            jobs: self.jobs,
            include_timings: self.timings,
            ..RunConfig::default()
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Estimate an illuminant per manifest image.
    Estimate(CommonArgs),
    /// Estimate and score against manifest ground truth.
    Evaluate(CommonArgs),
    /// Evaluate a grid of bandwidths / distances / k-means cluster counts.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Hybrid-distance bandwidths to sweep.
        #[arg(long = "sweep-bandwidth", value_delimiter = ',', default_values_t = vec![1e-4, 1e-3, 1e-2])]
        sweep_bandwidths: Vec<f64>,
        /// Angle-only bandwidths to sweep.
        #[arg(long = "sweep-angle-bandwidth", value_delimiter = ',', default_values_t = vec![1e-3])]
        sweep_angle_bandwidths: Vec<f64>,
        /// K-means cluster counts to sweep.
        #[arg(long = "sweep-k", value_delimiter = ',', default_values_t = vec![2, 5, 9])]
        sweep_ks: Vec<usize>,
    },
    /// White-balance manifest images; writes 16-bit PNGs plus a sidecar.
    Correct {
        #[command(flatten)]
        common: CommonArgs,
        /// Use this illuminant (three comma-separated values) instead of
        /// estimating one.
        #[arg(long, value_delimiter = ',', num_args = 3)]
        illuminant: Option<Vec<f64>>,
    },
    /// Emit deterministic synthetic scenes with exact ground truth.
    Synth {
        /// Output directory for PFM scenes and manifest.csv.
        #[arg(long)]
        out: PathBuf,
        /// Number of scenes.
        #[arg(long, default_value_t = 10)]
        count: usize,
        /// Base scene seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn write_or_print(out: &Option<PathBuf>, name: &str, contents: &str) -> graypixel::Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| graypixel::Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let path = dir.join(name);
            std::fs::write(&path, contents).map_err(|e| graypixel::Error::Io {
                path,
                source: e,
            })
        }
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn run() -> graypixel::Result<u8> {
    let cli = Cli::parse();
    match cli.command {
        Command::Estimate(common) => {
            let config = common.into_config();
            let report = cmd_estimate(&config)?;
            let (name, text) = match config.format {
                ReportFormat::Csv => ("estimate.csv", render_estimate_csv(&report)),
                ReportFormat::Json => ("estimate.json", render_json(&report)?),
            };
            write_or_print(&config.out_dir, name, &text)?;
            Ok(if report.failures() > 0 { 1 } else { 0 })
        }
        Command::Evaluate(common) => {
            let config = common.into_config();
            let report = cmd_evaluate(&config)?;
            let (name, text) = match config.format {
                ReportFormat::Csv => ("evaluate.csv", render_evaluate_csv(&report)),
                ReportFormat::Json => ("evaluate.json", render_json(&report)?),
            };
            write_or_print(&config.out_dir, name, &text)?;
            Ok(if report.failures() > 0 { 1 } else { 0 })
        }
        Command::Sweep {
            common,
            sweep_bandwidths,
            sweep_angle_bandwidths,
            sweep_ks,
        } => {
            let config = common.into_config();
            let grid = SweepGrid {
                bandwidths: sweep_bandwidths,
                angle_only_bandwidths: sweep_angle_bandwidths,
                kmeans_ks: sweep_ks,
            };
            let report = cmd_sweep(&config, &grid)?;
            let (name, text) = match config.format {
                ReportFormat::Csv => ("sweep.csv", render_sweep_csv(&report)),
                ReportFormat::Json => ("sweep.json", render_json(&report)?),
            };
            write_or_print(&config.out_dir, name, &text)?;
            let any_fail = report.rows.iter().any(|r| r.failures > 0);
            Ok(if any_fail { 1 } else { 0 })
        }
        Command::Correct { common, illuminant } => {
            let mut config = common.into_config();
            if let Some(l) = illuminant {
                config.explicit_l = Some([l[0], l[1], l[2]]);
            }
            let report = cmd_correct(&config)?;
            Ok(if report.failures() > 0 { 1 } else { 0 })
        }
        Command::Synth { out, count, seed } => {
            let manifest = cmd_synth(&out, count, seed)?;
            eprintln!("wrote {count} scenes; manifest at {}", manifest.display());
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
