//! Command-line front end. [`run`] parses arguments, dispatches one
//! subcommand and returns the process exit code.
//!
//! Exit codes: 0 success, 2 usage error, 3 data error, 4 I/O error. Failures
//! print one JSON object to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::chart::{render_chart, ChartSpec, EdgeProfile};
use crate::degrade::{degrade_dataset, Border, GaussianSpec};
use crate::error::Error;
use crate::harvest::{harvest_dataset, HarvestCriteria, LumaOptions, RegionRecord};
use crate::image::{encode_gray_png, BitDepth, LumaWeights};
use crate::pipeline::{
    measure_records, read_json, resolve_threads, run_pipeline, validate_sigmas, with_threads,
    write_json, RunConfig, THREADS_ENV,
};
use crate::report::{aggregate, load_detections, render_reports, Weighting};
use crate::sfr::RegionMeasurement;

const FIXED_SETTINGS: &str = "\
Fixed settings:
  kernel size      6*sigma+1 for integer sigma (7, 13, 19), else 2*ceil(3*sigma)+1
  blur             separable, point-sampled taps normalized to 1, clamped to [0, 1]
  luma             Rec.709 weights 0.2126, 0.7152, 0.0722 on decoded code values
  harvest          gradient threshold 0.02, flank margin 2 px, max ROI overlap 25%
  edge fit         per-line centroid of the (-0.5, 0, 0.5) derivative; needs 10 lines
  ESF              4x oversampled perpendicular-distance bins, <= 20% empty bins
  LSF window       Hamming, centered on the LSF centroid
  derivative fix   1/sinc correction capped at 10x
  SFR              reported to 1 cy/px; MTF50 by linear interpolation
  rejection        edge-fit r^2 < 0.9 or angle < 1 degree
Exit codes: 0 ok, 2 usage, 3 data, 4 I/O. Failures print a JSON summary to stderr.";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ss-sfr",
    version,
    about = "Slanted-edge MTF50 measurement of image datasets under Gaussian blur",
    propagate_version = true,
    after_help = FIXED_SETTINGS
)]
pub struct Cli {
    /// Worker threads (default: all CPUs).
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Blur every PNG/JPEG under a directory with a Gaussian kernel.
    Degrade(DegradeArgs),
    /// Render a synthetic slanted-edge chart as a 16-bit PNG.
    Chart(ChartArgs),
    /// Find slanted-edge regions in a dataset and write regions.json.
    Harvest(HarvestArgs),
    /// Measure the SFR and MTF50 of each harvested region.
    Measure(MeasureArgs),
    /// Aggregate measurements into table1.csv, summary.json and plots.
    Report(ReportArgs),
    /// Run degrade, harvest, measure and report for a baseline and each sigma.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct DegradeArgs {
    /// Blur standard deviation in pixels (> 0).
    #[arg(long, value_parser = parse_positive)]
    pub sigma: f64,
    /// Odd kernel size [default: 6*sigma+1 for integer sigma, else 2*ceil(3*sigma)+1].
    #[arg(long)]
    pub kernel: Option<usize>,
    /// Border handling: reflect101, replicate or constant:<v>.
    #[arg(long, default_value = "reflect101", value_parser = parse_border)]
    pub border: Border,
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub dst: PathBuf,
}

#[derive(Debug, Args)]
pub struct ChartArgs {
    /// Edge profile: `step` (area-sampled ideal edge) or `gauss:<sigma>`.
    #[arg(long, default_value = "step", value_parser = parse_profile)]
    pub profile: EdgeProfile,
    /// Edge angle in degrees from vertical.
    #[arg(long, default_value_t = 5.0, allow_negative_numbers = true)]
    pub angle: f64,
    /// Image size as WxH.
    #[arg(long, default_value = "200x200", value_parser = parse_dims)]
    pub size: (usize, usize),
    /// Dark-side level.
    #[arg(long, default_value_t = 0.15)]
    pub low: f64,
    /// Bright-side level.
    #[arg(long, default_value_t = 0.85)]
    pub high: f64,
    /// Per-axis supersampling for the step profile.
    #[arg(long, default_value_t = 16)]
    pub supersample: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CriteriaArgs {
    /// Minimum edge angle from the nearest axis, degrees.
    #[arg(long, default_value_t = 2.0)]
    pub min_angle: f64,
    /// Maximum edge angle from the nearest axis, degrees.
    #[arg(long, default_value_t = 43.0)]
    pub max_angle: f64,
    /// Minimum Michelson contrast between the flanks.
    #[arg(long, default_value_t = 0.20)]
    pub min_contrast: f64,
    /// Minimum r^2 of the edge-line fit.
    #[arg(long, default_value_t = 0.95)]
    pub min_r2: f64,
    /// ROI size as WxL: pixels across by pixels along the edge.
    #[arg(long, default_value = "32x64", value_parser = parse_dims)]
    pub roi: (usize, usize),
    /// Regions kept per image, highest contrast first.
    #[arg(long, default_value_t = 50)]
    pub max_regions: usize,
}

impl CriteriaArgs {
    fn criteria(&self) -> HarvestCriteria {
        HarvestCriteria {
            min_angle: self.min_angle,
            max_angle: self.max_angle,
            roi_width: self.roi.0,
            roi_length: self.roi.1,
            min_contrast: self.min_contrast,
            min_linefit_r2: self.min_r2,
            max_regions_per_image: self.max_regions,
        }
    }
}

#[derive(Debug, Args)]
pub struct LumaArgs {
    /// Luma weights as wr,wg,wb (sum 1).
    #[arg(long, default_value = "0.2126,0.7152,0.0722", value_parser = parse_weights)]
    pub luma: LumaWeights,
    /// Optional gamma applied after the luma conversion (v -> v^gamma).
    #[arg(long)]
    pub gamma: Option<f64>,
}

impl LumaArgs {
    fn options(&self) -> LumaOptions {
        LumaOptions {
            weights: self.luma,
            gamma: self.gamma,
        }
    }
}

#[derive(Debug, Args)]
pub struct HarvestArgs {
    #[arg(long)]
    pub src: PathBuf,
    /// Output regions.json.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub criteria: CriteriaArgs,
    #[command(flatten)]
    pub luma: LumaArgs,
    /// Also write each ROI as a 16-bit PNG into this directory.
    #[arg(long)]
    pub emit_rois: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MeasureArgs {
    /// regions.json from `harvest`.
    #[arg(long)]
    pub regions: PathBuf,
    /// Output measurements.json.
    #[arg(long)]
    pub out: PathBuf,
    /// ESF oversampling factor (4 or 8).
    #[arg(long, default_value_t = 4)]
    pub oversample: usize,
    /// Image directory the region sources are relative to [default: directory of regions.json].
    #[arg(long)]
    pub src: Option<PathBuf>,
    #[command(flatten)]
    pub luma: LumaArgs,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// measurements.json files, one per variant, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub measurements: Vec<PathBuf>,
    /// Variant labels in the same order (baseline, sigma1, ...) [default: parent directory names].
    #[arg(long, value_delimiter = ',')]
    pub labels: Vec<String>,
    /// Detection metrics JSON (array of model/variant/mAP records).
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Averaging weight: per-region or per-image.
    #[arg(long, default_value = "per-region", value_parser = parse_weighting)]
    pub weighting: Weighting,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub src: PathBuf,
    #[arg(long)]
    pub workdir: PathBuf,
    /// Blur sigmas, strictly increasing.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3", value_parser = parse_positive)]
    pub sigmas: Vec<f64>,
    /// Border handling: reflect101, replicate or constant:<v>.
    #[arg(long, default_value = "reflect101", value_parser = parse_border)]
    pub border: Border,
    /// ESF oversampling factor (4 or 8).
    #[arg(long, default_value_t = 4)]
    pub oversample: usize,
    /// Detection metrics JSON joined into the report.
    #[arg(long)]
    pub detections: Option<PathBuf>,
    /// Averaging weight: per-region or per-image.
    #[arg(long, default_value = "per-region", value_parser = parse_weighting)]
    pub weighting: Weighting,
    #[command(flatten)]
    pub criteria: CriteriaArgs,
    #[command(flatten)]
    pub luma: LumaArgs,
}

fn parse_positive(s: &str) -> Result<f64, String> {
    let v: f64 = s
        .trim()
        .parse()
        .map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(format!("sigma must be > 0, got {s}"))
    }
}

fn parse_border(s: &str) -> Result<Border, String> {
    s.parse()
}

fn parse_dims(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WxH, got `{s}`"))?;
    let parse = |v: &str| {
        v.trim()
            .parse::<usize>()
            .map_err(|_| format!("bad dimension `{v}`"))
    };
    Ok((parse(a)?, parse(b)?))
}

fn parse_profile(s: &str) -> Result<EdgeProfile, String> {
    if s == "step" {
        return Ok(EdgeProfile::IdealStep);
    }
    let v = s
        .strip_prefix("gauss:")
        .ok_or_else(|| format!("profile must be `step` or `gauss:<sigma>`, got `{s}`"))?;
    parse_positive(v).map(EdgeProfile::GaussianEdge)
}

fn parse_weights(s: &str) -> Result<LumaWeights, String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| format!("bad weight `{p}`"))
        })
        .collect::<Result<_, _>>()?;
    match v[..] {
        [r, g, b] => LumaWeights::new(r, g, b).map_err(|e| e.to_string()),
        _ => Err(format!("expected three weights, got `{s}`")),
    }
}

fn parse_weighting(s: &str) -> Result<Weighting, String> {
    match s {
        "per-region" => Ok(Weighting::PerRegion),
        "per-image" => Ok(Weighting::PerImage),
        _ => Err(format!(
            "weighting must be per-region or per-image, got `{s}`"
        )),
    }
}

/// Machine-readable failure record printed to stderr.
#[derive(Debug, Serialize)]
pub struct ErrorSummary {
    pub status: &'static str,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<String>,
    pub message: String,
    pub exit_code: i32,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl Failure {
    fn summary(&self) -> ErrorSummary {
        match self {
            Failure::Usage(m) => ErrorSummary {
                status: "error",
                kind: "UsageError".into(),
                stage: None,
                message: m.clone(),
                exit_code: EXIT_USAGE,
            },
            Failure::Run(e) => ErrorSummary {
                status: "error",
                kind: e.kind().into(),
                stage: e.stage().map(str::to_string),
                message: e.to_string(),
                exit_code: e.exit_code(),
            },
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return EXIT_OK;
            }
            return report_failure(&Failure::Usage(e.to_string().trim_end().to_string()));
        }
    };
    match execute(cli) {
        Ok(()) => EXIT_OK,
        Err(f) => report_failure(&f),
    }
}

fn report_failure(f: &Failure) -> i32 {
    let summary = f.summary();
    eprintln!(
        "{}",
        serde_json::to_string(&summary).unwrap_or_else(|_| format!(
            "{{\"status\":\"error\",\"message\":{:?}}}",
            summary.message
        ))
    );
    summary.exit_code
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn print_json<T: Serialize>(value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        what: "stdout".into(),
        message: e.to_string(),
    })?;
    println!("{text}");
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    if cli.threads == Some(0) {
        return Err(Failure::Usage("--threads must be at least 1".into()));
    }
    let threads = resolve_threads(cli.threads).map_err(usage)?;
    with_threads(threads, move || dispatch(cli.command))?
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Degrade(a) => cmd_degrade(a),
        Command::Chart(a) => cmd_chart(a),
        Command::Harvest(a) => cmd_harvest(a),
        Command::Measure(a) => cmd_measure(a),
        Command::Report(a) => cmd_report(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    }
}

fn cmd_degrade(a: DegradeArgs) -> Result<(), Failure> {
    let mut spec = GaussianSpec::new(a.sigma)
        .map_err(usage)?
        .with_border(a.border);
    if let Some(k) = a.kernel {
        spec = spec.with_kernel_size(k).map_err(usage)?;
    }
    let report = degrade_dataset(&a.src, &a.dst, &spec)?;
    print_json(&report)
}

fn cmd_chart(a: ChartArgs) -> Result<(), Failure> {
    let spec = ChartSpec {
        width: a.size.0,
        height: a.size.1,
        edge_angle: a.angle,
        edge_profile: a.profile,
        low: a.low,
        high: a.high,
        supersample: a.supersample,
    };
    spec.validate().map_err(usage)?;
    let img = render_chart(&spec)?;
    let png = encode_gray_png(&img, BitDepth::Sixteen)?;
    create_parent(&a.out)?;
    fs::write(&a.out, png).map_err(|e| Error::io(&a.out, e))?;
    Ok(())
}

fn create_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => fs::create_dir_all(p).map_err(|e| Error::io(p, e)),
        _ => Ok(()),
    }
}

fn cmd_harvest(a: HarvestArgs) -> Result<(), Failure> {
    let criteria = a.criteria.criteria();
    criteria.validate().map_err(usage)?;
    let out = harvest_dataset(&a.src, &criteria, &a.luma.options())?;
    let records: Vec<RegionRecord> = out.regions.iter().map(RegionRecord::from_region).collect();
    write_json(&a.out, &records)?;
    if let Some(dir) = &a.emit_rois {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for r in &out.regions {
            let name = format!(
                "{}_{}_{}_{}.png",
                r.source.replace(['/', '.'], "_"),
                r.origin.0,
                r.origin.1,
                r.orientation
            );
            let path = dir.join(name);
            fs::write(&path, encode_gray_png(&r.roi, BitDepth::Sixteen)?)
                .map_err(|e| Error::io(&path, e))?;
        }
    }
    print_json(&out.stats)
}

fn cmd_measure(a: MeasureArgs) -> Result<(), Failure> {
    if !matches!(a.oversample, 4 | 8) {
        return Err(Failure::Usage(format!(
            "--oversample must be 4 or 8, got {}",
            a.oversample
        )));
    }
    let records: Vec<RegionRecord> = read_json(&a.regions)?;
    let src = a.src.clone().unwrap_or_else(|| {
        a.regions
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
    });
    let measurements = measure_records(&src, &records, a.oversample, &a.luma.options());
    write_json(&a.out, &measurements)?;
    Ok(())
}

fn default_label(path: &Path) -> String {
    path.parent()
        .and_then(Path::file_name)
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn cmd_report(a: ReportArgs) -> Result<(), Failure> {
    let labels: Vec<String> = if a.labels.is_empty() {
        a.measurements.iter().map(|p| default_label(p)).collect()
    } else if a.labels.len() == a.measurements.len() {
        a.labels.clone()
    } else {
        return Err(Failure::Usage(format!(
            "{} labels given for {} measurement files",
            a.labels.len(),
            a.measurements.len()
        )));
    };
    let mut summaries = Vec::with_capacity(labels.len());
    for (path, label) in a.measurements.iter().zip(&labels) {
        let ms: Vec<RegionMeasurement> = read_json(path)?;
        summaries.push(aggregate(&ms, label, a.weighting).map_err(|e| e.in_stage("aggregate"))?);
    }
    let records = a.detections.as_deref().map(load_detections).transpose()?;
    let files =
        render_reports(&summaries, records.as_deref(), &a.out).map_err(|e| e.in_stage("report"))?;
    print_json(&serde_json::json!({
        "table1": files.table1_csv,
        "summary": files.summary_json,
        "plots": files.svgs,
    }))
}

fn cmd_pipeline(a: PipelineArgs) -> Result<(), Failure> {
    validate_sigmas(&a.sigmas).map_err(usage)?;
    let criteria = a.criteria.criteria();
    criteria.validate().map_err(usage)?;
    if !matches!(a.oversample, 4 | 8) {
        return Err(Failure::Usage(format!(
            "--oversample must be 4 or 8, got {}",
            a.oversample
        )));
    }
    let cfg = RunConfig {
        sigmas: a.sigmas,
        border: a.border,
        criteria,
        oversample: a.oversample,
        luma: a.luma.options(),
        detections: a.detections,
        weighting: a.weighting,
        ..RunConfig::new(a.src, a.workdir)
    };
    let out = run_pipeline(&cfg)?;
    print_json(&serde_json::json!({
        "variants": out.variants.iter().map(|v| serde_json::json!({
            "label": v.label,
            "dir": v.dir,
            "regions": v.regions,
            "measured": v.measurements.iter().filter(|m| m.mtf50.is_some()).count(),
        })).collect::<Vec<_>>(),
        "summaries": out.summaries,
        "report": out.report.summary_json.parent(),
    }))
}
