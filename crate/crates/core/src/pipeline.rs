//! End-to-end orchestration: degrade → harvest → measure → report, with every
//! intermediate artifact written to disk.
//!
//! Layout under the work directory:
//!
//! ```text
//! baseline/   copied source images, regions.json, harvest_stats.json, measurements.json
//! sigma<k>/   blurred images and the same three files
//! report/     table1.csv, summary.json, one SVG per detection model
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{list_images, relative_name};
use crate::degrade::{degrade_dataset, Border, DegradationReport, GaussianSpec};
use crate::error::{Error, Result};
use crate::harvest::{
    harvest_dataset, load_luma, HarvestCriteria, HarvestStats, LumaOptions, RegionRecord,
};
use crate::report::{
    aggregate, load_detections, render_reports, DatasetSummary, ReportFiles, Weighting,
};
use crate::sfr::{measure_region, RegionMeasurement, DEFAULT_OVERSAMPLE};

pub const THREADS_ENV: &str = "SS_SFR_THREADS";
pub const DEFAULT_SIGMAS: [f64; 3] = [1.0, 2.0, 3.0];

pub const REGIONS_FILE: &str = "regions.json";
pub const HARVEST_STATS_FILE: &str = "harvest_stats.json";
pub const MEASUREMENTS_FILE: &str = "measurements.json";
pub const DEGRADATION_FILE: &str = "degradation.json";

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub src: PathBuf,
    pub workdir: PathBuf,
    pub sigmas: Vec<f64>,
    pub border: Border,
    pub criteria: HarvestCriteria,
    pub oversample: usize,
    pub luma: LumaOptions,
    pub detections: Option<PathBuf>,
    /// Worker threads; `None` uses [`THREADS_ENV`] or all CPUs.
    pub threads: Option<usize>,
    pub weighting: Weighting,
}

impl RunConfig {
    pub fn new(src: impl Into<PathBuf>, workdir: impl Into<PathBuf>) -> Self {
        Self {
            src: src.into(),
            workdir: workdir.into(),
            sigmas: DEFAULT_SIGMAS.to_vec(),
            border: Border::default(),
            criteria: HarvestCriteria::default(),
            oversample: DEFAULT_OVERSAMPLE,
            luma: LumaOptions::default(),
            detections: None,
            threads: None,
            weighting: Weighting::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        validate_sigmas(&self.sigmas)?;
        self.criteria.validate()?;
        self.luma.weights.validate()?;
        if !matches!(self.oversample, 4 | 8) {
            return Err(Error::Domain(format!(
                "oversample must be 4 or 8, got {}",
                self.oversample
            )));
        }
        if self.threads == Some(0) {
            return Err(Error::Domain("threads must be at least 1".into()));
        }
        Ok(())
    }
}

pub fn validate_sigmas(sigmas: &[f64]) -> Result<()> {
    if sigmas.is_empty() {
        return Err(Error::Domain("at least one sigma is required".into()));
    }
    if let Some(s) = sigmas.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::Domain(format!("sigma must be > 0, got {s}")));
    }
    if sigmas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(format!(
            "sigmas must be strictly increasing, got {sigmas:?}"
        )));
    }
    Ok(())
}

/// `sigma1`, `sigma1.5`, ...
pub fn variant_label(sigma: f64) -> String {
    format!("sigma{sigma}")
}

/// Thread count from an explicit value, then [`THREADS_ENV`].
pub fn resolve_threads(explicit: Option<usize>) -> Result<Option<usize>> {
    if explicit.is_some() {
        return Ok(explicit);
    }
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Domain(format!(
                "{THREADS_ENV} must be a positive integer, got `{v}`"
            ))),
        },
        Err(_) => Ok(None),
    }
}

/// Runs `f` on a dedicated pool when a thread count is given.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Domain(format!("cannot build thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format {
        what: path.display().to_string(),
        message: e.to_string(),
    })?;
    text.push('\n');
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        what: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Measures every record against images under `src_dir`, keeping record order.
///
/// Each source image is decoded once. An image that cannot be loaded or a
/// region that no longer fits yields a failed measurement, not an error.
pub fn measure_records(
    src_dir: &Path,
    records: &[RegionRecord],
    oversample: usize,
    luma: &LumaOptions,
) -> Vec<RegionMeasurement> {
    let mut by_source: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        by_source.entry(&r.source).or_default().push(i);
    }
    let groups: Vec<(&str, Vec<usize>)> = by_source.into_iter().collect();
    let measured: Vec<Vec<(usize, RegionMeasurement)>> = groups
        .par_iter()
        .map(|(source, idx)| {
            let img = load_luma(&src_dir.join(source), luma);
            idx.iter()
                .map(|&i| {
                    let rec = &records[i];
                    let m = match img.as_ref().map(|g| rec.to_region(g)) {
                        Ok(Ok(region)) => measure_region(&region, oversample),
                        Ok(Err(e)) => failed_measurement(rec, &e),
                        Err(e) => failed_measurement(rec, e),
                    };
                    (i, m)
                })
                .collect()
        })
        .collect();
    let mut out: Vec<Option<RegionMeasurement>> = vec![None; records.len()];
    for (i, m) in measured.into_iter().flatten() {
        out[i] = Some(m);
    }
    out.into_iter().flatten().collect()
}

fn failed_measurement(rec: &RegionRecord, e: &Error) -> RegionMeasurement {
    RegionMeasurement {
        source: rec.source.clone(),
        origin: rec.origin,
        orientation: rec.orientation,
        angle_deg: rec.angle_deg,
        mtf50: None,
        sfr: Vec::new(),
        status: e.kind().to_string(),
        reason: Some(e.to_string()),
    }
}

#[derive(Serialize)]
struct HarvestStatsFile<'a> {
    criteria: &'a HarvestCriteria,
    #[serde(flatten)]
    stats: &'a HarvestStats,
}

/// Harvests `dir` and writes `regions.json` and `harvest_stats.json` into it.
pub fn harvest_variant(
    dir: &Path,
    criteria: &HarvestCriteria,
    luma: &LumaOptions,
) -> Result<Vec<RegionRecord>> {
    let out = harvest_dataset(dir, criteria, luma)?;
    let records: Vec<RegionRecord> = out.regions.iter().map(RegionRecord::from_region).collect();
    write_json(&dir.join(REGIONS_FILE), &records)?;
    write_json(
        &dir.join(HARVEST_STATS_FILE),
        &HarvestStatsFile {
            criteria,
            stats: &out.stats,
        },
    )?;
    Ok(records)
}

fn copy_dataset(src: &Path, dst: &Path) -> Result<usize> {
    let files = list_images(src)?;
    files.par_iter().try_for_each(|path| {
        let target = dst.join(relative_name(src, path));
        if let Some(parent) = target.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        fs::copy(path, &target)
            .map(|_| ())
            .map_err(|e| Error::io(&target, e))
    })?;
    Ok(files.len())
}

#[derive(Clone, Debug)]
pub struct VariantResult {
    pub label: String,
    pub dir: PathBuf,
    pub degradation: Option<DegradationReport>,
    pub regions: usize,
    pub measurements: Vec<RegionMeasurement>,
}

#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub variants: Vec<VariantResult>,
    pub summaries: Vec<DatasetSummary>,
    pub report: ReportFiles,
}

/// Runs all stages. Errors are wrapped with the failing stage name:
/// `degrade`, `harvest`, `measure`, `aggregate` or `report`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    let threads = resolve_threads(cfg.threads)?;
    with_threads(threads, || run_stages(cfg))?
}

fn run_stages(cfg: &RunConfig) -> Result<PipelineOutput> {
    let src_files = list_images(&cfg.src).map_err(|e| e.in_stage("degrade"))?;
    if src_files.is_empty() {
        return Err(
            Error::EmptyInput(format!("no images under {}", cfg.src.display())).in_stage("degrade"),
        );
    }
    fs::create_dir_all(&cfg.workdir).map_err(|e| Error::io(&cfg.workdir, e))?;

    let mut variants = Vec::with_capacity(cfg.sigmas.len() + 1);
    let baseline_dir = cfg.workdir.join("baseline");
    copy_dataset(&cfg.src, &baseline_dir).map_err(|e| e.in_stage("degrade"))?;
    variants.push(VariantResult {
        label: "baseline".into(),
        dir: baseline_dir,
        degradation: None,
        regions: 0,
        measurements: Vec::new(),
    });
    for &sigma in &cfg.sigmas {
        let label = variant_label(sigma);
        let dir = cfg.workdir.join(&label);
        let spec = GaussianSpec::new(sigma)
            .map(|s| s.with_border(cfg.border))
            .map_err(|e| e.in_stage("degrade"))?;
        let report = degrade_dataset(&cfg.src, &dir, &spec).map_err(|e| e.in_stage("degrade"))?;
        write_json(&dir.join(DEGRADATION_FILE), &report).map_err(|e| e.in_stage("degrade"))?;
        variants.push(VariantResult {
            label,
            dir,
            degradation: Some(report),
            regions: 0,
            measurements: Vec::new(),
        });
    }

    for v in &mut variants {
        let records =
            harvest_variant(&v.dir, &cfg.criteria, &cfg.luma).map_err(|e| e.in_stage("harvest"))?;
        v.regions = records.len();
        let measurements = measure_records(&v.dir, &records, cfg.oversample, &cfg.luma);
        write_json(&v.dir.join(MEASUREMENTS_FILE), &measurements)
            .map_err(|e| e.in_stage("measure"))?;
        v.measurements = measurements;
    }

    let summaries = variants
        .iter()
        .map(|v| aggregate(&v.measurements, &v.label, cfg.weighting))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| e.in_stage("aggregate"))?;

    let records = cfg
        .detections
        .as_deref()
        .map(load_detections)
        .transpose()
        .map_err(|e| e.in_stage("report"))?;
    let report = render_reports(&summaries, records.as_deref(), &cfg.workdir.join("report"))
        .map_err(|e| e.in_stage("report"))?;
    Ok(PipelineOutput {
        variants,
        summaries,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigma_validation() {
        assert!(validate_sigmas(&[1.0, 2.0, 3.0]).is_ok());
        assert!(validate_sigmas(&[2.0, 1.0]).is_err());
        assert!(validate_sigmas(&[1.0, 1.0]).is_err());
        assert!(validate_sigmas(&[0.0]).is_err());
        assert!(validate_sigmas(&[]).is_err());
    }

    #[test]
    fn labels() {
        assert_eq!(variant_label(1.0), "sigma1");
        assert_eq!(variant_label(1.5), "sigma1.5");
        assert_eq!(crate::report::variant_sigma(&variant_label(2.0)), Some(2.0));
    }

    #[test]
    fn defaults() {
        let cfg = RunConfig::new("a", "b");
        assert_eq!(cfg.sigmas, vec![1.0, 2.0, 3.0]);
        assert_eq!(cfg.oversample, 4);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn explicit_threads_win() {
        assert_eq!(resolve_threads(Some(3)).unwrap(), Some(3));
        assert_eq!(
            with_threads(Some(2), rayon::current_num_threads).unwrap(),
            2
        );
    }
}
