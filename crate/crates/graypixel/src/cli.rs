//! Batch commands wiring ingestion, estimation, correction, evaluation and
//! parameter sweeps into reproducible runs with machine-readable reports.
//!
//! Reports carry a `schema: 1` marker. Results follow manifest order
//! regardless of worker count, and timings are omitted by default so that
//! a rerun with identical configuration is byte-stable.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::estimator::{
    correct_image, estimate_gp, estimate_gray_edge, estimate_msgp, estimate_shades_of_gray,
    ClusterKind, Diagnostics, IlluminantEstimate, MinkowskiOrder, MsgpParams,
};
use crate::grayness::Measure;
use crate::image_io::{
    apply_mask, load_linear_image, load_manifest, save_pfm, save_png16, DatasetManifest,
    ManifestEntry,
};
use crate::metrics::{angular_error, summarize, EvalStats};
use crate::modeseek::DistanceKind;
use crate::synth::{generate_scene, sample_illuminant_near_neutral, SceneSpec};
use crate::{Error, LinearImage, Result, Rgb};

pub const REPORT_SCHEMA: u32 = 1;

/// Environment variable optionally rooting relative manifest image paths.
pub const DATA_ENV: &str = "GRAYPIXEL_DATA";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Msgp,
    GpTheta,
    GpSigma,
    GrayWorld,
    WhitePatch,
    ShadesOfGray,
    GrayEdge1,
    GrayEdge2,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Msgp => "msgp",
            Method::GpTheta => "gp-theta",
            Method::GpSigma => "gp-sigma",
            Method::GrayWorld => "gray-world",
            Method::WhitePatch => "white-patch",
            Method::ShadesOfGray => "shades-of-gray",
            Method::GrayEdge1 => "gray-edge-1",
            Method::GrayEdge2 => "gray-edge-2",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "msgp" => Method::Msgp,
            "gp-theta" => Method::GpTheta,
            "gp-sigma" => Method::GpSigma,
            "gray-world" => Method::GrayWorld,
            "white-patch" => Method::WhitePatch,
            "shades-of-gray" => Method::ShadesOfGray,
            "gray-edge-1" => Method::GrayEdge1,
            "gray-edge-2" => Method::GrayEdge2,
            other => return Err(Error::InvalidParam(format!("unknown method '{other}'"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

/// A resolved batch-run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub manifest: PathBuf,
    pub method: Method,
    pub params: MsgpParams,
    pub out_dir: Option<PathBuf>,
    pub format: ReportFormat,
    pub jobs: usize,
    /// Root for relative image paths; falls back to the manifest's parent.
    pub data_root: Option<PathBuf>,
    /// Include per-image wall-clock timings in reports (breaks byte
    /// stability across reruns).
    pub include_timings: bool,
    /// Minkowski order for shades-of-gray.
    pub minkowski_p: f64,
    /// Gaussian sigma for the gray-edge baselines.
    pub edge_sigma: f64,
    /// Explicit illuminant for `correct` (overrides estimation).
    pub explicit_l: Option<Rgb>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: PathBuf::new(),
            method: Method::Msgp,
            params: MsgpParams::default(),
            out_dir: None,
            format: ReportFormat::Csv,
            jobs: 1,
            data_root: std::env::var_os(DATA_ENV).map(PathBuf::from),
            include_timings: false,
            minkowski_p: 6.0,
            edge_sigma: 6.0,
            explicit_l: None,
        }
    }
}

impl RunConfig {
    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            return p.to_path_buf();
        }
        let root = self
            .data_root
            .clone()
            .or_else(|| self.manifest.parent().map(|d| d.to_path_buf()))
            .unwrap_or_default();
        root.join(p)
    }

    fn load_entry(&self, entry: &ManifestEntry) -> Result<LinearImage> {
        let path = self.resolve(&entry.image_path);
        let img = load_linear_image(&path, &entry.decode_options())?;
        apply_mask(&img, &entry.mask_rects)
    }

    pub fn estimate_one(&self, img: &LinearImage) -> Result<IlluminantEstimate> {
        estimate_with(self.method, img, &self.params, self.minkowski_p, self.edge_sigma)
    }
}

pub fn estimate_with(
    method: Method,
    img: &LinearImage,
    params: &MsgpParams,
    minkowski_p: f64,
    edge_sigma: f64,
) -> Result<IlluminantEstimate> {
    match method {
        Method::Msgp => estimate_msgp(img, params),
        Method::GpTheta => estimate_gp(img, params, Measure::Theta),
        Method::GpSigma => estimate_gp(img, params, Measure::Sigma),
        Method::GrayWorld => estimate_shades_of_gray(img, MinkowskiOrder::P(1.0)),
        Method::WhitePatch => estimate_shades_of_gray(img, MinkowskiOrder::Inf),
        Method::ShadesOfGray => estimate_shades_of_gray(img, MinkowskiOrder::P(minkowski_p)),
        Method::GrayEdge1 => estimate_gray_edge(img, 1, MinkowskiOrder::P(1.0), edge_sigma),
        Method::GrayEdge2 => estimate_gray_edge(img, 2, MinkowskiOrder::P(1.0), edge_sigma),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageRecord {
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub illuminant: Option<Rgb>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub angular_error_deg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimateReport {
    pub schema: u32,
    pub method: String,
    pub records: Vec<ImageRecord>,
}

impl EstimateReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvaluateReport {
    pub schema: u32,
    pub method: String,
    pub stats: Option<EvalStats>,
    pub records: Vec<ImageRecord>,
}

impl EvaluateReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub label: String,
    pub stats: Option<EvalStats>,
    pub failures: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: u32,
    pub rows: Vec<SweepRow>,
}

/// The sweep grid: one evaluation row per mean-shift (distance, bandwidth)
/// pair plus one per k-means cluster count.
#[derive(Debug, Clone, Default)]
pub struct SweepGrid {
    pub bandwidths: Vec<f64>,
    pub angle_only_bandwidths: Vec<f64>,
    pub kmeans_ks: Vec<usize>,
}

fn run_batch<T: Send>(
    entries: &[ManifestEntry],
    jobs: usize,
    f: impl Fn(&ManifestEntry) -> T + Sync,
) -> Vec<T> {
    if jobs <= 1 {
        entries.iter().map(f).collect()
    } else {
        // Collection preserves manifest order regardless of completion order.
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("worker pool");
        pool.install(|| entries.par_iter().map(&f).collect())
    }
}

fn strip_timings(rec: &mut ImageRecord) {
    if let Some(d) = &mut rec.diagnostics {
        d.runtime_ms = 0.0;
    }
}

/// Estimate an illuminant for every manifest image.
pub fn cmd_estimate(config: &RunConfig) -> Result<EstimateReport> {
    config.params.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let records = run_batch(&manifest.entries, config.jobs, |entry| {
        let outcome = config
            .load_entry(entry)
            .and_then(|img| config.estimate_one(&img));
        match outcome {
            Ok(est) => ImageRecord {
                path: entry.image_path.clone(),
                illuminant: Some(est.l),
                angular_error_deg: None,
                diagnostics: Some(est.diagnostics),
                error: None,
            },
            Err(e) => ImageRecord {
                path: entry.image_path.clone(),
                illuminant: None,
                angular_error_deg: None,
                diagnostics: None,
                error: Some(e.to_string()),
            },
        }
    });
    let mut report = EstimateReport {
        schema: REPORT_SCHEMA,
        method: config.method.name().to_string(),
        records,
    };
    if !config.include_timings {
        report.records.iter_mut().for_each(strip_timings);
    }
    Ok(report)
}

/// Estimate and score against ground truth; masks are applied before
/// estimation.
pub fn cmd_evaluate(config: &RunConfig) -> Result<EvaluateReport> {
    config.params.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let report = evaluate_manifest(config, &manifest)?;
    Ok(report)
}

fn evaluate_manifest(config: &RunConfig, manifest: &DatasetManifest) -> Result<EvaluateReport> {
    let records = run_batch(&manifest.entries, config.jobs, |entry| {
        let outcome = config
            .load_entry(entry)
            .and_then(|img| config.estimate_one(&img))
            .and_then(|est| {
                let err = angular_error(&est.l, &entry.ground_truth)?;
                Ok((est, err))
            });
        match outcome {
            Ok((est, err)) => ImageRecord {
                path: entry.image_path.clone(),
                illuminant: Some(est.l),
                angular_error_deg: Some(err),
                diagnostics: Some(est.diagnostics),
                error: None,
            },
            Err(e) => ImageRecord {
                path: entry.image_path.clone(),
                illuminant: None,
                angular_error_deg: None,
                diagnostics: None,
                error: Some(e.to_string()),
            },
        }
    });
    let errors: Vec<f64> = records.iter().filter_map(|r| r.angular_error_deg).collect();
    let stats = if errors.is_empty() {
        None
    } else {
        Some(summarize(&errors)?)
    };
    let mut report = EvaluateReport {
        schema: REPORT_SCHEMA,
        method: config.method.name().to_string(),
        stats,
        records,
    };
    if !config.include_timings {
        report.records.iter_mut().for_each(strip_timings);
    }
    Ok(report)
}

/// One evaluation row per grid point over the same image set.
pub fn cmd_sweep(config: &RunConfig, grid: &SweepGrid) -> Result<SweepReport> {
    config.params.validate()?;
    let manifest = load_manifest(&config.manifest)?;
    let mut rows = Vec::new();
    let mut push = |label: String, cfg: RunConfig| -> Result<()> {
        let report = evaluate_manifest(&cfg, &manifest)?;
        rows.push(SweepRow {
            label,
            stats: report.stats.clone(),
            failures: report.failures(),
        });
        Ok(())
    };
    for &h in &grid.angle_only_bandwidths {
        let mut cfg = config.clone();
        cfg.method = Method::Msgp;
        cfg.params.cluster = ClusterKind::MeanShift;
        cfg.params.distance = DistanceKind::AngleOnly;
        cfg.params.bandwidth = h;
        push(format!("h={h:e} (angle)"), cfg)?;
    }
    for &h in &grid.bandwidths {
        let mut cfg = config.clone();
        cfg.method = Method::Msgp;
        cfg.params.cluster = ClusterKind::MeanShift;
        cfg.params.distance = DistanceKind::Hybrid;
        cfg.params.bandwidth = h;
        push(format!("h={h:e}"), cfg)?;
    }
    for &k in &grid.kmeans_ks {
        let mut cfg = config.clone();
        cfg.method = Method::Msgp;
        cfg.params.cluster = ClusterKind::KMeans;
        cfg.params.k = k;
        push(format!("K={k}"), cfg)?;
    }
    Ok(SweepReport {
        schema: REPORT_SCHEMA,
        rows,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectRecord {
    pub path: PathBuf,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub illuminant: Option<Rgb>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorrectReport {
    pub schema: u32,
    pub records: Vec<CorrectRecord>,
}

impl CorrectReport {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.error.is_some()).count()
    }
}

/// Correct every manifest image and write 16-bit PNGs plus a JSON sidecar
/// with the illuminant used.
pub fn cmd_correct(config: &RunConfig) -> Result<CorrectReport> {
    config.params.validate()?;
    let out_dir = config
        .out_dir
        .clone()
        .ok_or_else(|| Error::InvalidParam("correct requires an output directory".into()))?;
    ensure_out_dir(&out_dir)?;
    let manifest = load_manifest(&config.manifest)?;
    let records = run_batch(&manifest.entries, config.jobs, |entry| {
        let run = || -> Result<(PathBuf, Rgb)> {
            let img = config.load_entry(entry)?;
            let l = match config.explicit_l {
                Some(l) => crate::normalize(&l),
                None => config.estimate_one(&img)?.l,
            };
            let corrected = correct_image(&img, &l)?;
            let stem = entry
                .image_path
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("image");
            let out_path = out_dir.join(format!("{stem}_corrected.png"));
            save_png16(&corrected, &out_path)?;
            Ok((out_path, l))
        };
        match run() {
            Ok((output, l)) => CorrectRecord {
                path: entry.image_path.clone(),
                output: Some(output),
                illuminant: Some(l),
                error: None,
            },
            Err(e) => CorrectRecord {
                path: entry.image_path.clone(),
                output: None,
                illuminant: None,
                error: Some(e.to_string()),
            },
        }
    });
    let report = CorrectReport {
        schema: REPORT_SCHEMA,
        records,
    };
    let sidecar = out_dir.join("illuminants.json");
    std::fs::write(&sidecar, render_json(&report)?).map_err(|e| Error::Io {
        path: sidecar,
        source: e,
    })?;
    Ok(report)
}

fn ensure_out_dir(dir: &Path) -> Result<()> {
    if dir.is_dir() {
        return Ok(());
    }
    match dir.parent() {
        Some(parent) if parent.as_os_str().is_empty() || parent.is_dir() => {
            std::fs::create_dir(dir).map_err(|e| Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })
        }
        _ => Err(Error::InvalidParam(format!(
            "output directory {} has no existing parent",
            dir.display()
        ))),
    }
}

/// Emit `count` deterministic synthetic scenes as PFM files plus a CSV
/// manifest holding the exact illuminants.
pub fn cmd_synth(out_dir: &Path, count: usize, base_seed: u64) -> Result<PathBuf> {
    ensure_out_dir(out_dir)?;
    let mut manifest = String::from("image_path,gt_r,gt_g,gt_b\n");
    for i in 0..count {
        let seed = base_seed + i as u64;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5ce0_11ab);
        use rand::SeedableRng;
        let spec = SceneSpec {
            seed,
            illuminant: sample_illuminant_near_neutral(&mut rng, 30.0),
            ..Default::default()
        };
        let scene = generate_scene(&spec)?;
        let name = format!("scene_{seed:04}.pfm");
        save_pfm(&scene.biased, &out_dir.join(&name))?;
        let l = scene.illuminant;
        writeln!(manifest, "{name},{},{},{}", l[0], l[1], l[2])
            .expect("string write cannot fail");
    }
    let manifest_path = out_dir.join("manifest.csv");
    std::fs::write(&manifest_path, manifest).map_err(|e| Error::Io {
        path: manifest_path.clone(),
        source: e,
    })?;
    Ok(manifest_path)
}

pub fn render_json<T: Serialize>(report: &T) -> Result<String> {
    serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidParam(format!("report serialization failed: {e}")))
}

pub fn render_estimate_csv(report: &EstimateReport) -> String {
    let mut s = String::from("path,l_r,l_g,l_b,selected_pixels,modes,error\n");
    for r in &report.records {
        let l = r.illuminant.unwrap_or([f64::NAN; 3]);
        let (sel, modes) = r
            .diagnostics
            .as_ref()
            .map(|d| (d.selected_pixels, d.modes))
            .unwrap_or((0, 0));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.path.display(),
            l[0],
            l[1],
            l[2],
            sel,
            modes,
            r.error.clone().unwrap_or_default()
        );
    }
    s
}

pub fn render_evaluate_csv(report: &EvaluateReport) -> String {
    let mut s = String::from("method,mean,median,trimean,best25,worst25,count\n");
    if let Some(st) = &report.stats {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            report.method, st.mean, st.median, st.trimean, st.best25, st.worst25, st.count
        );
    }
    s.push_str("\npath,angular_error_deg,error\n");
    for r in &report.records {
        let _ = writeln!(
            s,
            "{},{},{}",
            r.path.display(),
            r.angular_error_deg.map(|e| e.to_string()).unwrap_or_default(),
            r.error.clone().unwrap_or_default()
        );
    }
    s
}

pub fn render_sweep_csv(report: &SweepReport) -> String {
    let mut s = String::from("label,mean,median,trimean,best25,worst25,count,failures\n");
    for row in &report.rows {
        match &row.stats {
            Some(st) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},{},{}",
                    row.label, st.mean, st.median, st.trimean, st.best25, st.worst25, st.count,
                    row.failures
                );
            }
            None => {
                let _ = writeln!(s, "{},,,,,,,{}", row.label, row.failures);
            }
        }
    }
    s
}
